#include "mcsurv/metrics.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>

#include "mcsurv/calibration.hpp"
#include "mcsurv/error.hpp"
#include "text_util.hpp"

namespace mcsurv {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void add_flag(std::string& flags, const std::string& flag) {
  if (!flags.empty()) flags += ';';
  flags += flag;
}

}  // namespace

double c_index(const Matrix& survival, std::span<const Observation> records, const CIndexOptions& options) {
  if (survival.rows() != records.size()) throw Error(ErrorCode::DimensionMismatch, "survival rows != records");
  const std::size_t n = records.size();

  // Visit records by time so every j with t_j > t_i is a suffix.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return records[a].time < records[b].time; });

  double concordant = 0.0;
  double comparable = 0.0;
  std::size_t later = 0;  // first position in `order` with a strictly larger time
  for (std::size_t pos = 0; pos < n; ++pos) {
    const auto i = order[pos];
    if (later <= pos) later = pos + 1;
    while (later < n && records[order[later]].time <= records[i].time) ++later;
    if (!records[i].event) continue;
    const auto ti = static_cast<std::size_t>(records[i].time);
    const double fi = 1.0 - survival(i, ti);
    for (std::size_t q = later; q < n; ++q) {
      const double fj = 1.0 - survival(order[q], ti);
      comparable += 1.0;
      if (fi > fj) {
        concordant += 1.0;
      } else if (options.half_credit_ties && fi == fj) {
        concordant += 0.5;
      }
    }
  }
  if (comparable == 0.0) throw Error(ErrorCode::NoComparablePairs, "no event is followed by a later time");
  return concordant / comparable;
}

double c_index(const HazardModel& model, const DiscreteDataset& dataset, const CIndexOptions& options) {
  return c_index(predict_survival(model, design_matrix(dataset)), dataset.observations(), options);
}

double total_score(double c, double e) {
  const double a = 1.0 - e;
  if (c + a == 0.0) return 0.0;
  return 2.0 * c * a / (c + a);
}

EvaluationReport evaluate(const HazardModel& model, const DiscreteDataset& test,
                          const std::vector<SubgroupSpec>& subgroups, const EvaluationConfig& config) {
  EvaluationReport report;
  report.dataset_id = config.dataset_id;
  report.model_id = config.model_id;
  report.bins = config.bins;
  report.significance = config.significance;
  if (test.empty()) throw Error(ErrorCode::EmptyInput, "evaluation dataset is empty");

  const auto survival = predict_survival(model, design_matrix(test));

  std::vector<SubgroupSpec> specs{full_population()};
  for (const auto& s : subgroups) {
    if (s.kind != SubgroupKind::FullPopulation) specs.push_back(s);
  }

  for (const auto& spec : specs) {
    SubgroupRow row;
    row.name = spec.name;
    row.population = spec.kind == SubgroupKind::FullPopulation;
    const auto rows = members(spec, test);
    row.size = rows.size();
    if (rows.empty()) {
      row.skipped = true;
      add_flag(row.flags, "empty");
      row.logrank_statistic = row.ece = row.c_index = row.total_score = kNaN;
      row.l2_distance = row.variance_adjusted_distance = kNaN;
      report.rows.push_back(std::move(row));
      continue;
    }

    const auto obs = test.observations(rows);
    row.km = km_curve(obs, test.tau);
    row.marginal = marginal_survival(survival, rows);

    try {
      const auto lr = logrank_one_sample(obs, row.marginal, test.tau, config.significance);
      row.logrank_passed = lr.passed;
      row.logrank_statistic = lr.statistic;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ZeroReferenceSurvival) throw;
      row.logrank_passed = false;
      row.logrank_statistic = std::numeric_limits<double>::infinity();
      add_flag(row.flags, "zero_reference_survival");
    }

    row.ece = ece(row.marginal, row.km, config.bins);

    Matrix sub(rows.size(), survival.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      std::copy(survival.row(rows[k]).begin(), survival.row(rows[k]).end(), sub.row(k).begin());
    }
    try {
      row.c_index = c_index(sub, obs, config.c_index);
      row.total_score = total_score(row.c_index, row.ece);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoComparablePairs) throw;
      row.c_index = row.total_score = kNaN;
      add_flag(row.flags, "no_comparable_pairs");
    }

    row.l2_distance = l2_distance(row.marginal, row.km);
    try {
      row.variance_adjusted_distance = variance_adjusted_distance(row.marginal, row.km);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::AllTimestepsSkipped) throw;
      row.variance_adjusted_distance = kNaN;
      add_flag(row.flags, "no_valid_variance");
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

void write_report_csv(const EvaluationReport& report, std::ostream& out) {
  using detail::format_double;
  out << "# dataset=" << report.dataset_id << " model=" << report.model_id << " bins=" << report.bins
      << " significance=" << format_double(report.significance) << '\n';
  out << "subgroup,size,population,skipped,logrank_passed,logrank_statistic,ece,c_index,total_score,"
         "l2_distance,var_adjusted_distance,flags\n";
  for (const auto& r : report.rows) {
    out << r.name << ',' << r.size << ',' << (r.population ? 1 : 0) << ',' << (r.skipped ? 1 : 0) << ','
        << (r.logrank_passed ? 1 : 0) << ',' << format_double(r.logrank_statistic) << ',' << format_double(r.ece)
        << ',' << format_double(r.c_index) << ',' << format_double(r.total_score) << ','
        << format_double(r.l2_distance) << ',' << format_double(r.variance_adjusted_distance) << ',' << r.flags
        << '\n';
  }
}

void write_report_table(const EvaluationReport& report, std::ostream& out) {
  std::size_t name_width = 8;
  for (const auto& r : report.rows) name_width = std::max(name_width, r.name.size());
  const auto flags = out.flags();
  out << "dataset: " << report.dataset_id << "  model: " << report.model_id << "  bins: " << report.bins
      << "  significance: " << report.significance << "\n\n";
  out << std::left << std::setw(static_cast<int>(name_width)) << "subgroup" << std::right << std::setw(7) << "size"
      << std::setw(9) << "logrank" << std::setw(11) << "stat" << std::setw(9) << "ECE" << std::setw(9) << "C-index"
      << std::setw(9) << "total" << std::setw(11) << "L2" << std::setw(9) << "Z-max" << "  flags\n";
  out << std::fixed;
  for (const auto& r : report.rows) {
    out << std::left << std::setw(static_cast<int>(name_width)) << r.name << std::right << std::setw(7) << r.size;
    if (r.skipped) {
      out << std::setw(9) << "-" << std::setw(11) << "-" << std::setw(9) << "-" << std::setw(9) << "-"
          << std::setw(9) << "-" << std::setw(11) << "-" << std::setw(9) << "-";
    } else {
      out << std::setw(9) << (r.logrank_passed ? "pass" : "FAIL") << std::setw(11) << std::setprecision(3)
          << r.logrank_statistic << std::setw(9) << std::setprecision(4) << r.ece << std::setw(9) << r.c_index
          << std::setw(9) << r.total_score << std::setw(11) << std::setprecision(6) << r.l2_distance << std::setw(9)
          << std::setprecision(3) << r.variance_adjusted_distance;
    }
    out << "  " << r.flags << '\n';
  }
  out.flags(flags);
}

void write_report_curves(const EvaluationReport& report, const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);
  for (std::size_t k = 0; k < report.rows.size(); ++k) {
    const auto& r = report.rows[k];
    if (r.skipped) continue;
    // Subgroup names may contain characters unfit for file names.
    std::string stem = std::to_string(k) + "_";
    for (char ch : r.name) stem += std::isalnum(static_cast<unsigned char>(ch)) ? ch : '_';
    std::ofstream out(directory / (stem + ".csv"), std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write curve file in " + directory.string());
    out << "t,model,km,km_variance\n";
    for (std::size_t t = 0; t < r.km.values.size(); ++t) {
      out << t << ',' << detail::format_double(r.marginal.values[t]) << ','
          << detail::format_double(r.km.values[t]) << ',' << detail::format_double(r.km.variance[t]) << '\n';
    }
  }
}

PairedTest paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::MisalignedRuns, "paired samples differ in length");
  if (a.size() < 2) throw Error(ErrorCode::MisalignedRuns, "a paired t-test needs at least two pairs");
  PairedTest out;
  out.n = a.size();
  const double n = static_cast<double>(a.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
  mean /= n;
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  out.mean_difference = mean;
  const double se = std::sqrt(ss / (n - 1.0) / n);
  if (se == 0.0) {
    out.t_statistic = mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), mean);
    out.p_value = mean == 0.0 ? 1.0 : 0.0;
    return out;
  }
  out.t_statistic = mean / se;
  const boost::math::students_t dist(n - 1.0);
  out.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(out.t_statistic)));
  return out;
}

}  // namespace mcsurv
