#include "mcsurv/hazard_model.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "mcsurv/error.hpp"
#include "text_util.hpp"

namespace mcsurv {

std::string to_string(Architecture arch) {
  switch (arch) {
    case Architecture::LinearTime: return "linear_time";
    case Architecture::MlpTime: return "mlp_time";
    case Architecture::Recurrent: return "recurrent_gated";
  }
  return "unknown";
}

Architecture parse_architecture(const std::string& text) {
  if (text == "linear_time") return Architecture::LinearTime;
  if (text == "mlp_time") return Architecture::MlpTime;
  if (text == "recurrent" || text == "recurrent_gated") return Architecture::Recurrent;
  throw Error(ErrorCode::InvalidArgument, "unknown architecture '" + text + "'");
}

namespace {

// Offsets of each parameter block inside the flat vector.
struct Layout {
  std::size_t d = 0;   // feature dim
  std::size_t in = 0;  // d + 1 (timestep encoding appended)
  std::size_t h = 0;
  std::size_t tau = 0;
  // linear_time
  std::size_t w = 0, b = 0;
  // mlp_time
  std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0;
  // recurrent
  std::size_t wg = 0, ug = 0, bg = 0, wc = 0, uc = 0, bc = 0, wo = 0, bo = 0;
  std::size_t total = 0;

  explicit Layout(const ModelShape& s)
      : d(s.input_dim), in(s.input_dim + 1), h(s.hidden), tau(static_cast<std::size_t>(s.tau)) {
    std::size_t at = 0;
    auto take = [&at](std::size_t n) {
      const auto start = at;
      at += n;
      return start;
    };
    switch (s.architecture) {
      case Architecture::LinearTime:
        w = take(d);
        b = take(tau);
        break;
      case Architecture::MlpTime:
        w1 = take(h * in);
        b1 = take(h);
        w2 = take(h);
        b2 = take(1);
        break;
      case Architecture::Recurrent:
        wg = take(h * in);
        ug = take(h * h);
        bg = take(h);
        wc = take(h * in);
        uc = take(h * h);
        bc = take(h);
        wo = take(h);
        bo = take(1);
        break;
    }
    total = at;
  }
};

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double clamp_hazard(double s, double eps) { return s < eps ? eps : (s > 1.0 - eps ? 1.0 - eps : s); }

bool is_clamped(double s, double eps) { return s < eps || s > 1.0 - eps; }

double time_encoding(std::size_t t, std::size_t tau) { return static_cast<double>(t) / static_cast<double>(tau); }

// Forward pass for one example. `hidden`, `gate`, `candidate` receive the
// per-step activations (tau * width each) when non-empty.
void forward_one(const ModelShape& shape, const Layout& L, std::span<const double> theta, std::span<const double> x,
                 std::span<double> sig, std::span<double> hidden, std::span<double> gate,
                 std::span<double> candidate) {
  switch (shape.architecture) {
    case Architecture::LinearTime: {
      double wx = 0.0;
      for (std::size_t k = 0; k < L.d; ++k) wx += theta[L.w + k] * x[k];
      for (std::size_t t = 0; t < L.tau; ++t) sig[t] = sigmoid(wx + theta[L.b + t]);
      break;
    }
    case Architecture::MlpTime: {
      std::vector<double> base(L.h);
      for (std::size_t j = 0; j < L.h; ++j) {
        const double* row = &theta[L.w1 + j * L.in];
        double acc = theta[L.b1 + j];
        for (std::size_t k = 0; k < L.d; ++k) acc += row[k] * x[k];
        base[j] = acc;
      }
      for (std::size_t t = 0; t < L.tau; ++t) {
        const double enc = time_encoding(t + 1, L.tau);
        double z = theta[L.b2];
        double* a = &hidden[t * L.h];
        for (std::size_t j = 0; j < L.h; ++j) {
          a[j] = std::tanh(base[j] + theta[L.w1 + j * L.in + L.d] * enc);
          z += theta[L.w2 + j] * a[j];
        }
        sig[t] = sigmoid(z);
      }
      break;
    }
    case Architecture::Recurrent: {
      // Input projections without the time column are shared across steps.
      std::vector<double> gx(L.h), cx(L.h);
      for (std::size_t j = 0; j < L.h; ++j) {
        double ag = theta[L.bg + j];
        double ac = theta[L.bc + j];
        for (std::size_t k = 0; k < L.d; ++k) {
          ag += theta[L.wg + j * L.in + k] * x[k];
          ac += theta[L.wc + j * L.in + k] * x[k];
        }
        gx[j] = ag;
        cx[j] = ac;
      }
      std::vector<double> prev(L.h, 0.0);
      for (std::size_t t = 0; t < L.tau; ++t) {
        const double enc = time_encoding(t + 1, L.tau);
        double* g = &gate[t * L.h];
        double* c = &candidate[t * L.h];
        double* s = &hidden[t * L.h];
        for (std::size_t j = 0; j < L.h; ++j) {
          double ag = gx[j] + theta[L.wg + j * L.in + L.d] * enc;
          double ac = cx[j] + theta[L.wc + j * L.in + L.d] * enc;
          const double* ug = &theta[L.ug + j * L.h];
          const double* uc = &theta[L.uc + j * L.h];
          for (std::size_t k = 0; k < L.h; ++k) {
            ag += ug[k] * prev[k];
            ac += uc[k] * prev[k];
          }
          g[j] = sigmoid(ag);
          c[j] = std::tanh(ac);
        }
        double z = theta[L.bo];
        for (std::size_t j = 0; j < L.h; ++j) {
          s[j] = (1.0 - g[j]) * prev[j] + g[j] * c[j];
          z += theta[L.wo + j] * s[j];
        }
        sig[t] = sigmoid(z);
        std::copy(s, s + L.h, prev.begin());
      }
      break;
    }
  }
}

std::size_t activation_width(const ModelShape& shape) {
  return shape.architecture == Architecture::LinearTime ? 0 : shape.hidden * static_cast<std::size_t>(shape.tau);
}

}  // namespace

std::size_t ModelShape::parameter_count() const { return Layout(*this).total; }

void ModelShape::validate() const {
  if (input_dim < 1 || tau < 1) throw Error(ErrorCode::InvalidDims, "input_dim and tau must be >= 1");
  if (architecture != Architecture::LinearTime && hidden < 1) {
    throw Error(ErrorCode::InvalidDims, "hidden width must be >= 1");
  }
  if (!(epsilon > 0.0 && epsilon < 0.5)) throw Error(ErrorCode::InvalidDims, "clamp epsilon must lie in (0, 0.5)");
}

HazardModel::HazardModel(ModelShape shape, std::vector<double> parameters)
    : shape_(shape), params_(std::move(parameters)) {
  shape_.validate();
  if (params_.size() != shape_.parameter_count()) {
    throw Error(ErrorCode::InvalidDims, "expected " + std::to_string(shape_.parameter_count()) +
                                            " parameters, got " + std::to_string(params_.size()));
  }
}

std::vector<double> HazardModel::hazards(std::span<const double> x) const {
  if (x.size() != shape_.input_dim) {
    throw Error(ErrorCode::DimensionMismatch, "feature vector has " + std::to_string(x.size()) +
                                                  " entries, model expects " + std::to_string(shape_.input_dim));
  }
  const Layout L(shape_);
  const auto width = activation_width(shape_);
  std::vector<double> sig(L.tau), hidden(width), gate(width), cand(width);
  forward_one(shape_, L, params_, x, sig, hidden, gate, cand);
  for (auto& s : sig) s = clamp_hazard(s, shape_.epsilon);
  return sig;
}

SurvivalCurve HazardModel::survival_curve(std::span<const double> x) const {
  const auto h = hazards(x);
  SurvivalCurve curve;
  curve.values.resize(h.size() + 1);
  curve.values[0] = 1.0;
  for (std::size_t t = 0; t < h.size(); ++t) curve.values[t + 1] = curve.values[t] * (1.0 - h[t]);
  return curve;
}

HazardModel init_model(const ModelShape& shape, std::uint64_t seed) {
  shape.validate();
  const Layout L(shape);
  std::vector<double> theta(L.total, 0.0);
  std::mt19937_64 rng(seed);
  auto fill = [&](std::size_t offset, std::size_t count, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = 0; i < count; ++i) theta[offset + i] = dist(rng);
  };
  switch (shape.architecture) {
    case Architecture::LinearTime:
      fill(L.w, L.d, L.d);
      break;
    case Architecture::MlpTime:
      fill(L.w1, L.h * L.in, L.in);
      fill(L.w2, L.h, L.h);
      break;
    case Architecture::Recurrent:
      fill(L.wg, L.h * L.in, L.in + L.h);
      fill(L.ug, L.h * L.h, L.in + L.h);
      fill(L.wc, L.h * L.in, L.in + L.h);
      fill(L.uc, L.h * L.h, L.in + L.h);
      fill(L.wo, L.h, L.h);
      break;
  }
  return HazardModel(shape, std::move(theta));
}

GradientTape record(const HazardModel& model, const Matrix& inputs, std::span<const std::size_t> rows) {
  const auto& shape = model.shape();
  if (inputs.cols() != shape.input_dim) {
    throw Error(ErrorCode::DimensionMismatch, "input matrix has " + std::to_string(inputs.cols()) +
                                                  " columns, model expects " + std::to_string(shape.input_dim));
  }
  const Layout L(shape);
  const auto width = activation_width(shape);
  const bool gated = shape.architecture == Architecture::Recurrent;

  GradientTape tape;
  tape.inputs_ = Matrix(rows.size(), shape.input_dim);
  tape.hazards_ = Matrix(rows.size(), L.tau);
  tape.sigmoid_ = Matrix(rows.size(), L.tau);
  tape.hidden_ = Matrix(rows.size(), width);
  tape.gate_ = Matrix(gated ? rows.size() : 0, gated ? width : 0);
  tape.candidate_ = Matrix(gated ? rows.size() : 0, gated ? width : 0);

  for (std::size_t b = 0; b < rows.size(); ++b) {
    if (rows[b] >= inputs.rows()) throw Error(ErrorCode::DimensionMismatch, "row index out of range");
    auto x = inputs.row(rows[b]);
    std::copy(x.begin(), x.end(), tape.inputs_.row(b).begin());
    forward_one(shape, L, model.parameters(), x, tape.sigmoid_.row(b), tape.hidden_.row(b),
                gated ? tape.gate_.row(b) : std::span<double>{}, gated ? tape.candidate_.row(b) : std::span<double>{});
    for (std::size_t t = 0; t < L.tau; ++t) tape.hazards_(b, t) = clamp_hazard(tape.sigmoid_(b, t), shape.epsilon);
  }
  return tape;
}

std::vector<double> backward(const HazardModel& model, const GradientTape& tape, const Matrix& cotangents) {
  const auto& shape = model.shape();
  const Layout L(shape);
  if (cotangents.rows() != tape.batch_size() || cotangents.cols() != L.tau) {
    throw Error(ErrorCode::DimensionMismatch, "cotangent matrix must be batch x tau");
  }
  const auto theta = model.parameters();
  std::vector<double> grad(L.total, 0.0);

  std::vector<double> gz(L.tau);
  for (std::size_t b = 0; b < tape.batch_size(); ++b) {
    // dL/dz through the clamp and the sigmoid.
    bool any = false;
    for (std::size_t t = 0; t < L.tau; ++t) {
      const double s = tape.sigmoid_(b, t);
      gz[t] = is_clamped(s, shape.epsilon) ? 0.0 : cotangents(b, t) * s * (1.0 - s);
      any = any || gz[t] != 0.0;
    }
    if (!any) continue;
    const auto x = tape.inputs_.row(b);

    switch (shape.architecture) {
      case Architecture::LinearTime: {
        double total = 0.0;
        for (std::size_t t = 0; t < L.tau; ++t) {
          grad[L.b + t] += gz[t];
          total += gz[t];
        }
        for (std::size_t k = 0; k < L.d; ++k) grad[L.w + k] += total * x[k];
        break;
      }
      case Architecture::MlpTime: {
        const auto act = tape.hidden_.row(b);
        for (std::size_t t = 0; t < L.tau; ++t) {
          if (gz[t] == 0.0) continue;
          const double enc = time_encoding(t + 1, L.tau);
          const double* a = &act[t * L.h];
          grad[L.b2] += gz[t];
          for (std::size_t j = 0; j < L.h; ++j) {
            grad[L.w2 + j] += gz[t] * a[j];
            const double gpre = gz[t] * theta[L.w2 + j] * (1.0 - a[j] * a[j]);
            grad[L.b1 + j] += gpre;
            double* row = &grad[L.w1 + j * L.in];
            for (std::size_t k = 0; k < L.d; ++k) row[k] += gpre * x[k];
            row[L.d] += gpre * enc;
          }
        }
        break;
      }
      case Architecture::Recurrent: {
        const auto states = tape.hidden_.row(b);
        const auto gates = tape.gate_.row(b);
        const auto cands = tape.candidate_.row(b);
        std::vector<double> gs(L.h, 0.0), gs_prev(L.h), ggpre(L.h), gcpre(L.h);
        const std::vector<double> zeros(L.h, 0.0);
        for (std::size_t tt = L.tau; tt-- > 0;) {
          const double enc = time_encoding(tt + 1, L.tau);
          const double* s = &states[tt * L.h];
          const double* prev = tt == 0 ? zeros.data() : &states[(tt - 1) * L.h];
          const double* g = &gates[tt * L.h];
          const double* c = &cands[tt * L.h];
          if (gz[tt] != 0.0) {
            grad[L.bo] += gz[tt];
            for (std::size_t j = 0; j < L.h; ++j) {
              grad[L.wo + j] += gz[tt] * s[j];
              gs[j] += gz[tt] * theta[L.wo + j];
            }
          }
          for (std::size_t j = 0; j < L.h; ++j) {
            gs_prev[j] = gs[j] * (1.0 - g[j]);
            ggpre[j] = gs[j] * (c[j] - prev[j]) * g[j] * (1.0 - g[j]);
            gcpre[j] = gs[j] * g[j] * (1.0 - c[j] * c[j]);
          }
          for (std::size_t j = 0; j < L.h; ++j) {
            grad[L.bg + j] += ggpre[j];
            grad[L.bc + j] += gcpre[j];
            double* wg = &grad[L.wg + j * L.in];
            double* wc = &grad[L.wc + j * L.in];
            for (std::size_t k = 0; k < L.d; ++k) {
              wg[k] += ggpre[j] * x[k];
              wc[k] += gcpre[j] * x[k];
            }
            wg[L.d] += ggpre[j] * enc;
            wc[L.d] += gcpre[j] * enc;
            double* ug = &grad[L.ug + j * L.h];
            double* uc = &grad[L.uc + j * L.h];
            const double* tug = &theta[L.ug + j * L.h];
            const double* tuc = &theta[L.uc + j * L.h];
            for (std::size_t k = 0; k < L.h; ++k) {
              ug[k] += ggpre[j] * prev[k];
              uc[k] += gcpre[j] * prev[k];
              gs_prev[k] += tug[k] * ggpre[j] + tuc[k] * gcpre[j];
            }
          }
          gs.swap(gs_prev);
        }
        break;
      }
    }
  }
  return grad;
}

std::vector<double> grad_scalar(const HazardModel& model, const Matrix& inputs, std::span<const std::size_t> rows,
                                const std::function<Matrix(const Matrix& hazards)>& cotangent_fn) {
  const auto tape = record(model, inputs, rows);
  return backward(model, tape, cotangent_fn(tape.hazards()));
}

Matrix survival_from_hazards(const Matrix& hazards) {
  Matrix s(hazards.rows(), hazards.cols() + 1);
  for (std::size_t r = 0; r < hazards.rows(); ++r) {
    s(r, 0) = 1.0;
    for (std::size_t t = 0; t < hazards.cols(); ++t) s(r, t + 1) = s(r, t) * (1.0 - hazards(r, t));
  }
  return s;
}

Matrix predict_survival(const HazardModel& model, const Matrix& inputs) {
  if (inputs.cols() != model.input_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "input matrix width does not match the model");
  }
  Matrix s(inputs.rows(), static_cast<std::size_t>(model.tau()) + 1);
  for (std::size_t r = 0; r < inputs.rows(); ++r) {
    const auto h = model.hazards(inputs.row(r));
    s(r, 0) = 1.0;
    for (std::size_t t = 0; t < h.size(); ++t) s(r, t + 1) = s(r, t) * (1.0 - h[t]);
  }
  return s;
}

SurvivalCurve marginal_survival(const Matrix& survival, std::span<const std::size_t> members) {
  if (members.empty()) throw Error(ErrorCode::EmptySubgroup, "marginal over an empty selection");
  SurvivalCurve curve;
  curve.values.assign(survival.cols(), 0.0);
  for (auto m : members) {
    const auto row = survival.row(m);
    for (std::size_t t = 0; t < row.size(); ++t) curve.values[t] += row[t];
  }
  const double n = static_cast<double>(members.size());
  for (auto& v : curve.values) v /= n;
  return curve;
}

SurvivalCurve marginal_survival(const HazardModel& model, const Matrix& inputs, std::span<const std::size_t> members) {
  if (members.empty()) throw Error(ErrorCode::EmptySubgroup, "marginal over an empty selection");
  SurvivalCurve curve;
  curve.values.assign(static_cast<std::size_t>(model.tau()) + 1, 0.0);
  for (auto m : members) {
    if (m >= inputs.rows()) throw Error(ErrorCode::DimensionMismatch, "member index out of range");
    const auto s = model.survival_curve(inputs.row(m));
    for (std::size_t t = 0; t < s.values.size(); ++t) curve.values[t] += s.values[t];
  }
  const double n = static_cast<double>(members.size());
  for (auto& v : curve.values) v /= n;
  return curve;
}

void survival_cotangent_to_hazard(std::span<const double> hazards, std::span<const double> survival,
                                  std::span<const double> survival_cotangent, std::span<double> hazard_cotangent) {
  // suffix = sum_{t >= l} g_t S(t); S(0) does not depend on any hazard.
  double suffix = 0.0;
  for (std::size_t l = hazards.size(); l >= 1; --l) {
    suffix += survival_cotangent[l] * survival[l];
    hazard_cotangent[l - 1] += -suffix / (1.0 - hazards[l - 1]);
  }
}

// ---------------------------------------------------------------------------
// Artifact format

namespace {
constexpr const char* kMagic = "mcsurv-hazard-model";
constexpr int kVersion = 1;
}  // namespace

void serialize(const HazardModel& model, std::ostream& out) {
  const auto& s = model.shape();
  out << kMagic << " v" << kVersion << " arch=" << to_string(s.architecture) << " d=" << s.input_dim
      << " tau=" << s.tau << " hidden=" << s.hidden << " epsilon=" << detail::format_double17(s.epsilon)
      << " p=" << model.parameters().size() << '\n';
  for (double v : model.parameters()) out << detail::format_double17(v) << '\n';
}

HazardModel deserialize(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw Error(ErrorCode::CorruptArtifact, "empty model artifact");
  std::istringstream hs(header);
  std::string magic, version;
  hs >> magic >> version;
  if (magic != kMagic) throw Error(ErrorCode::CorruptArtifact, "not a hazard model artifact");
  if (version != "v" + std::to_string(kVersion)) {
    throw Error(ErrorCode::VersionMismatch, "artifact version '" + version + "', expected v" +
                                                std::to_string(kVersion));
  }

  ModelShape shape;
  std::size_t count = 0;
  int fields = 0;
  std::string token;
  while (hs >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::CorruptArtifact, "bad header token '" + token + "'");
    const auto key = token.substr(0, eq);
    const auto value = token.substr(eq + 1);
    try {
      if (key == "arch") {
        shape.architecture = parse_architecture(value);
      } else if (key == "d") {
        shape.input_dim = static_cast<std::size_t>(detail::parse_int(value).value());
      } else if (key == "tau") {
        shape.tau = static_cast<int>(detail::parse_int(value).value());
      } else if (key == "hidden") {
        shape.hidden = static_cast<std::size_t>(detail::parse_int(value).value());
      } else if (key == "epsilon") {
        shape.epsilon = detail::parse_double(value).value();
      } else if (key == "p") {
        count = static_cast<std::size_t>(detail::parse_int(value).value());
      } else {
        throw Error(ErrorCode::CorruptArtifact, "unknown header key '" + key + "'");
      }
    } catch (const std::bad_optional_access&) {
      throw Error(ErrorCode::CorruptArtifact, "bad value for '" + key + "'");
    } catch (const Error& e) {
      if (e.code() == ErrorCode::CorruptArtifact) throw;
      throw Error(ErrorCode::CorruptArtifact, e.what());
    }
    ++fields;
  }
  if (fields != 6) throw Error(ErrorCode::CorruptArtifact, "incomplete header");

  std::vector<double> params;
  params.reserve(count);
  std::string line;
  while (params.size() < count && std::getline(in, line)) {
    auto v = detail::parse_double(line);
    if (!v) throw Error(ErrorCode::CorruptArtifact, "bad parameter line " + std::to_string(params.size() + 1));
    params.push_back(*v);
  }
  if (params.size() != count) {
    throw Error(ErrorCode::CorruptArtifact, "truncated: " + std::to_string(params.size()) + " of " +
                                                std::to_string(count) + " parameters");
  }
  while (std::getline(in, line)) {
    if (!detail::trim(line).empty()) throw Error(ErrorCode::CorruptArtifact, "trailing data after parameters");
  }
  try {
    return HazardModel(shape, std::move(params));
  } catch (const Error& e) {
    throw Error(ErrorCode::CorruptArtifact, e.what());
  }
}

void save_model(const HazardModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  serialize(model, out);
}

HazardModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  return deserialize(in);
}

}  // namespace mcsurv
