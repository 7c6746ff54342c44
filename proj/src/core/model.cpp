#include "core/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "core/error.hpp"

namespace mcl {
namespace {

constexpr char kCheckpointMagic[4] = {'M', 'C', 'L', 'K'};
constexpr std::uint16_t kCheckpointVersion = 1;
constexpr double kMinNorm = 1e-12;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T take() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  void take_raw(void* dst, std::size_t len) {
    need(len);
    std::memcpy(dst, bytes_.data() + pos_, len);
    pos_ += len;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t len) const {
    if (bytes_.size() - pos_ < len) fail(ErrorCode::kTruncated, "truncated checkpoint");
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

Vector normalize_checked(const Vector& u) {
  const double norm = u.norm();
  if (!(norm >= kMinNorm)) fail(ErrorCode::kDegenerateEmbedding, "degenerate embedding (norm below 1e-12)");
  return u / norm;
}

}  // namespace

EncoderParams EncoderParams::zeros_like() const {
  EncoderParams z;
  z.W1 = Matrix::Zero(W1.rows(), W1.cols());
  z.b1 = Vector::Zero(b1.size());
  z.W2 = Matrix::Zero(W2.rows(), W2.cols());
  z.b2 = Vector::Zero(b2.size());
  return z;
}

bool EncoderParams::same_shape(const EncoderParams& o) const {
  return W1.rows() == o.W1.rows() && W1.cols() == o.W1.cols() && b1.size() == o.b1.size() &&
         W2.rows() == o.W2.rows() && W2.cols() == o.W2.cols() && b2.size() == o.b2.size();
}

bool EncoderParams::all_finite() const {
  return W1.allFinite() && b1.allFinite() && W2.allFinite() && b2.allFinite();
}

std::vector<double> EncoderParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  flat.insert(flat.end(), W1.data(), W1.data() + W1.size());
  flat.insert(flat.end(), b1.data(), b1.data() + b1.size());
  flat.insert(flat.end(), W2.data(), W2.data() + W2.size());
  flat.insert(flat.end(), b2.data(), b2.data() + b2.size());
  return flat;
}

void EncoderParams::assign_flat(std::span<const double> flat) {
  require(flat.size() == parameter_count(), "flat parameter size mismatch");
  const double* p = flat.data();
  std::memcpy(W1.data(), p, sizeof(double) * static_cast<std::size_t>(W1.size()));
  p += W1.size();
  std::memcpy(b1.data(), p, sizeof(double) * static_cast<std::size_t>(b1.size()));
  p += b1.size();
  std::memcpy(W2.data(), p, sizeof(double) * static_cast<std::size_t>(W2.size()));
  p += W2.size();
  std::memcpy(b2.data(), p, sizeof(double) * static_cast<std::size_t>(b2.size()));
}

bool EncoderParams::operator==(const EncoderParams& o) const {
  return same_shape(o) && W1 == o.W1 && b1 == o.b1 && W2 == o.W2 && b2 == o.b2;
}

EncoderParams EncoderParams::identity_init(std::size_t d_raw, std::size_t d_hidden, std::size_t d_emb,
                                           std::uint64_t seed, double jitter) {
  require(d_raw >= 1 && d_emb >= 1, "encoder dimensions must be positive");
  require(jitter >= 0.0, "jitter must be >= 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto near_identity = [&](std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
            (r == c ? 1.0 : 0.0) + (jitter > 0.0 ? jitter * normal(rng) : 0.0);
    return m;
  };
  EncoderParams p;
  if (d_hidden > 0) {
    p.W1 = near_identity(d_hidden, d_raw);
    p.b1 = Vector::Zero(static_cast<Eigen::Index>(d_hidden));
    p.W2 = near_identity(d_emb, d_hidden);
  } else {
    p.W1 = Matrix(0, 0);
    p.b1 = Vector(0);
    p.W2 = near_identity(d_emb, d_raw);
  }
  p.b2 = Vector::Zero(static_cast<Eigen::Index>(d_emb));
  return p;
}

Vector encode(const EncoderParams& params, std::span<const double> x) {
  require(x.size() == params.d_raw(), "input dimension does not match encoder");
  Eigen::Map<const Vector> in(x.data(), static_cast<Eigen::Index>(x.size()));
  if (!in.allFinite()) fail(ErrorCode::kNumeric, "non-finite encoder input");
  Vector u;
  if (params.linear()) {
    u = params.W2 * in + params.b2;
  } else {
    const Vector h = (params.W1 * in + params.b1).array().tanh().matrix();
    u = params.W2 * h + params.b2;
  }
  return normalize_checked(u);
}

Vector encode(const EncoderParams& params, std::span<const float> x) {
  std::vector<double> xd(x.begin(), x.end());
  return encode(params, std::span<const double>(xd));
}

EncodeCache encode_batch(const EncoderParams& params, Matrix input) {
  require(static_cast<std::size_t>(input.cols()) == params.d_raw(), "input dimension does not match encoder");
  if (!input.allFinite()) fail(ErrorCode::kNumeric, "non-finite encoder input");
  EncodeCache c;
  c.input = std::move(input);
  if (params.linear()) {
    c.pre.noalias() = c.input * params.W2.transpose();
  } else {
    c.hidden.noalias() = c.input * params.W1.transpose();
    c.hidden.rowwise() += params.b1.transpose();
    c.hidden = c.hidden.array().tanh().matrix();
    c.pre.noalias() = c.hidden * params.W2.transpose();
  }
  c.pre.rowwise() += params.b2.transpose();
  c.norms = c.pre.rowwise().norm();
  if (!(c.norms.minCoeff() >= kMinNorm))
    fail(ErrorCode::kDegenerateEmbedding, "degenerate embedding (norm below 1e-12)");
  c.out = c.norms.cwiseInverse().asDiagonal() * c.pre;
  return c;
}

EncoderParams encode_backward(const EncoderParams& params, const EncodeCache& cache, const Matrix& grad_out) {
  require(grad_out.rows() == cache.out.rows() && grad_out.cols() == cache.out.cols(),
          "gradient shape does not match encoder output");
  // d(u/|u|)/du applied row-wise: (g - v <v, g>) / |u|.
  const Vector radial = (cache.out.array() * grad_out.array()).rowwise().sum().matrix();
  Matrix grad_pre = grad_out - radial.asDiagonal() * cache.out;
  grad_pre = cache.norms.cwiseInverse().asDiagonal() * grad_pre;

  EncoderParams g = params.zeros_like();
  g.b2 = grad_pre.colwise().sum().transpose();
  if (params.linear()) {
    g.W2.noalias() = grad_pre.transpose() * cache.input;
    return g;
  }
  g.W2.noalias() = grad_pre.transpose() * cache.hidden;
  Matrix grad_hidden = grad_pre * params.W2;
  grad_hidden.array() *= (1.0 - cache.hidden.array().square());
  g.b1 = grad_hidden.colwise().sum().transpose();
  g.W1.noalias() = grad_hidden.transpose() * cache.input;
  return g;
}

Vector augment(std::span<const float> x, std::mt19937_64& rng, double sigma, double drop_p) {
  require(std::isfinite(sigma) && sigma >= 0.0, "augmentation sigma must be >= 0");
  require(drop_p >= 0.0 && drop_p < 1.0, "drop probability must be in [0, 1)");
  const std::size_t d = x.size();
  Vector out(static_cast<Eigen::Index>(d));
  for (std::size_t j = 0; j < d; ++j) out(static_cast<Eigen::Index>(j)) = x[j];
  if (sigma > 0.0) {
    std::normal_distribution<double> normal(0.0, sigma / std::sqrt(static_cast<double>(d)));
    for (std::size_t j = 0; j < d; ++j) out(static_cast<Eigen::Index>(j)) += normal(rng);
  }
  if (drop_p > 0.0) {
    std::bernoulli_distribution drop(drop_p);
    const double keep_scale = 1.0 / (1.0 - drop_p);
    for (std::size_t j = 0; j < d; ++j) {
      auto& v = out(static_cast<Eigen::Index>(j));
      v = drop(rng) ? 0.0 : v * keep_scale;
    }
  }
  return out;
}

OptimizerState OptimizerState::for_params(const EncoderParams& params, const AdamOptions& options) {
  require(options.lr >= 0.0 && options.weight_decay >= 0.0, "lr and weight decay must be >= 0");
  require(options.beta1 >= 0.0 && options.beta1 < 1.0 && options.beta2 >= 0.0 && options.beta2 < 1.0,
          "Adam betas must be in [0, 1)");
  OptimizerState s;
  s.options = options;
  s.m = params.zeros_like();
  s.v = params.zeros_like();
  return s;
}

void adam_step(EncoderParams& params, const EncoderParams& grads, OptimizerState& state, double lr) {
  if (!params.same_shape(grads) || !params.same_shape(state.m) || !params.same_shape(state.v))
    fail(ErrorCode::kInvalidArgument, "Adam shape mismatch between parameters, gradients and moments");
  const AdamOptions& o = state.options;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);

  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = o.beta1 * m + (1.0 - o.beta1) * g;
    v = (o.beta2 * v.array() + (1.0 - o.beta2) * g.array().square()).matrix();
    const auto step = ((m.array() / c1) / ((v.array() / c2).sqrt() + o.epsilon)).eval();
    p.array() -= lr * o.weight_decay * p.array();
    p.array() -= lr * step;
  };
  update(params.W1, grads.W1, state.m.W1, state.v.W1);
  update(params.b1, grads.b1, state.m.b1, state.v.b1);
  update(params.W2, grads.W2, state.m.W2, state.v.W2);
  update(params.b2, grads.b2, state.m.b2, state.v.b2);
}

double scheduled_lr(double base_lr, std::size_t epoch, std::size_t total_epochs,
                    const std::vector<std::size_t>& decay_epochs) {
  std::size_t decays = 0;
  if (decay_epochs.empty()) {
    // Every third of the run; integer form keeps 60 -> {20, 40} exact.
    if (total_epochs > 0) decays = std::min<std::size_t>(2, epoch * 3 / total_epochs);
  } else {
    for (std::size_t e : decay_epochs) decays += epoch >= e ? 1 : 0;
  }
  return base_lr * std::pow(0.1, static_cast<double>(decays));
}

void write_sections(const std::filesystem::path& path, const std::vector<Section>& sections) {
  static_assert(std::endian::native == std::endian::little);
  std::string out;
  out.append(kCheckpointMagic, 4);
  put<std::uint16_t>(out, kCheckpointVersion);
  put<std::uint16_t>(out, 0);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(sections.size()));
  for (const auto& s : sections) {
    require(s.values.size() == s.rows * s.cols, "section '" + s.name + "' has inconsistent shape");
    require(s.name.size() <= UINT16_MAX, "section name too long");
    put<std::uint16_t>(out, static_cast<std::uint16_t>(s.name.size()));
    out += s.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.rows));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.cols));
    out.append(reinterpret_cast<const char*>(s.values.data()), s.values.size() * sizeof(double));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) fail(ErrorCode::kIo, "write failed: " + path.string());
}

std::vector<Section> read_sections(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::kIo, "cannot open checkpoint " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    fail(ErrorCode::kBadMagic, "bad magic in checkpoint " + path.string());
  Reader r(bytes);
  r.take<std::uint32_t>();
  const auto version = r.take<std::uint16_t>();
  if (version != kCheckpointVersion)
    fail(ErrorCode::kUnsupportedVersion, "unsupported checkpoint version " + std::to_string(version));
  r.take<std::uint16_t>();
  const auto count = r.take<std::uint32_t>();
  std::vector<Section> sections;
  for (std::uint32_t i = 0; i < count; ++i) {
    Section s;
    s.name.resize(r.take<std::uint16_t>());
    r.take_raw(s.name.data(), s.name.size());
    s.rows = r.take<std::uint32_t>();
    s.cols = r.take<std::uint32_t>();
    s.values.resize(s.rows * s.cols);
    r.take_raw(s.values.data(), s.values.size() * sizeof(double));
    sections.push_back(std::move(s));
  }
  if (!r.done()) fail(ErrorCode::kDimensionMismatch, "trailing bytes in checkpoint");
  return sections;
}

std::vector<Section> params_to_sections(const EncoderParams& params) {
  auto mat = [](const std::string& name, const Matrix& m) {
    return Section{name, static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()),
                   std::vector<double>(m.data(), m.data() + m.size())};
  };
  auto vec = [](const std::string& name, const Vector& v) {
    return Section{name, static_cast<std::size_t>(v.size()), 1,
                   std::vector<double>(v.data(), v.data() + v.size())};
  };
  return {mat("encoder.W1", params.W1), vec("encoder.b1", params.b1), mat("encoder.W2", params.W2),
          vec("encoder.b2", params.b2)};
}

EncoderParams params_from_sections(const std::vector<Section>& sections) {
  auto find = [&](const std::string& name) -> const Section& {
    for (const auto& s : sections)
      if (s.name == name) return s;
    fail(ErrorCode::kDimensionMismatch, "checkpoint is missing section " + name);
  };
  auto mat = [](const Section& s) {
    Matrix m(static_cast<Eigen::Index>(s.rows), static_cast<Eigen::Index>(s.cols));
    if (!s.values.empty()) std::memcpy(m.data(), s.values.data(), s.values.size() * sizeof(double));
    return m;
  };
  auto vec = [](const Section& s) {
    Vector v(static_cast<Eigen::Index>(s.rows * s.cols));
    if (!s.values.empty()) std::memcpy(v.data(), s.values.data(), s.values.size() * sizeof(double));
    return v;
  };
  EncoderParams p;
  p.W1 = mat(find("encoder.W1"));
  p.b1 = vec(find("encoder.b1"));
  p.W2 = mat(find("encoder.W2"));
  p.b2 = vec(find("encoder.b2"));
  const bool consistent =
      (p.linear() ? p.b1.size() == 0 : (p.b1.size() == p.W1.rows() && p.W2.cols() == p.W1.rows())) &&
      p.b2.size() == p.W2.rows();
  if (!consistent) fail(ErrorCode::kDimensionMismatch, "checkpoint tensors have inconsistent shapes");
  if (!p.all_finite()) fail(ErrorCode::kNumeric, "checkpoint contains non-finite parameters");
  return p;
}

}  // namespace mcl
