#include "core/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include "core/error.hpp"

namespace mcl {
namespace {

constexpr char kMagic[4] = {'M', 'C', 'L', 'F'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint16_t kFlagLabels = 0x1;
constexpr std::size_t kHeaderBytes = 16;

static_assert(std::endian::native == std::endian::little,
              "MCLF I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t count_identities(const std::vector<std::uint32_t>& ids) {
  if (ids.empty()) return 0;
  return static_cast<std::size_t>(*std::max_element(ids.begin(), ids.end())) + 1;
}

Pool parse_csv(const std::string& text, std::size_t expected_dim) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (line.rfind("d=", 0) != 0) fail(ErrorCode::kBadMagic, "bad magic: expected MCLF or d=<int> header");
  std::size_t d = 0;
  try {
    d = std::stoul(line.substr(2));
  } catch (const std::exception&) {
    fail(ErrorCode::kBadMagic, "bad magic: unparsable CSV header '" + line + "'");
  }
  if (d == 0) fail(ErrorCode::kDimensionMismatch, "dimension mismatch: d=0");
  if (expected_dim != 0 && d != expected_dim)
    fail(ErrorCode::kDimensionMismatch, "dimension mismatch: file d=" + std::to_string(d) +
                                            ", expected " + std::to_string(expected_dim));
  Pool pool;
  pool.d_raw = d;
  int label_mode = -1;  // unknown until first row
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    const int mode = cells.size() == d ? 0 : cells.size() == d + 1 ? 1 : -2;
    if (mode < 0 || (label_mode >= 0 && mode != label_mode))
      fail(ErrorCode::kDimensionMismatch, "dimension mismatch: row " + std::to_string(row) +
                                              " has " + std::to_string(cells.size()) + " values");
    label_mode = mode;
    for (std::size_t j = 0; j < d; ++j) {
      const float v = std::stof(cells[j]);
      if (!std::isfinite(v)) fail(ErrorCode::kNumeric, "non-finite feature in CSV row " + std::to_string(row));
      pool.features.push_back(v);
    }
    if (mode == 1) pool.identities.push_back(static_cast<std::uint32_t>(std::stoul(cells[d])));
    ++row;
  }
  pool.num_identities = count_identities(pool.identities);
  return pool;
}

}  // namespace

Pool Pool::subset(std::span<const std::size_t> rows) const {
  Pool out;
  out.d_raw = d_raw;
  out.features.reserve(rows.size() * d_raw);
  for (std::size_t r : rows) {
    auto src = row(r);
    out.features.insert(out.features.end(), src.begin(), src.end());
    if (has_labels()) out.identities.push_back(identities[r]);
  }
  out.num_identities = count_identities(out.identities);
  return out;
}

Pool generate_pool(const GenSpec& spec) {
  require(spec.num_identities >= 2, "num_identities must be >= 2");
  require(spec.samples_per_identity >= 2, "samples_per_identity must be >= 2");
  require(spec.d_raw >= 1, "d_raw must be >= 1");
  require(std::isfinite(spec.intra_class_sigma) && spec.intra_class_sigma >= 0.0,
          "intra_class_sigma must be finite and >= 0");
  require(std::isfinite(spec.nuisance_sigma) && spec.nuisance_sigma >= 0.0,
          "nuisance_sigma must be finite and >= 0");
  require(spec.nuisance_rank <= spec.d_raw, "nuisance_rank must be <= d_raw");

  const std::size_t d = spec.d_raw;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<double> means(spec.num_identities * d);
  for (std::size_t i = 0; i < spec.num_identities; ++i) {
    double* m = means.data() + i * d;
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        m[j] = normal(rng);
        norm2 += m[j] * m[j];
      }
    } while (norm2 == 0.0);
    const double inv = 1.0 / std::sqrt(norm2);
    for (std::size_t j = 0; j < d; ++j) m[j] *= inv;
  }

  // Shared nuisance basis: Gaussian columns, Gram-Schmidt orthonormalized.
  const std::size_t r = spec.nuisance_sigma > 0.0 ? spec.nuisance_rank : 0;
  std::vector<double> basis(r * d);
  for (std::size_t c = 0; c < r; ++c) {
    double* b = basis.data() + c * d;
    for (std::size_t j = 0; j < d; ++j) b[j] = normal(rng);
    for (std::size_t p = 0; p < c; ++p) {
      const double* q = basis.data() + p * d;
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += b[j] * q[j];
      for (std::size_t j = 0; j < d; ++j) b[j] -= dot * q[j];
    }
    double norm2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) norm2 += b[j] * b[j];
    const double inv = 1.0 / std::sqrt(norm2);
    for (std::size_t j = 0; j < d; ++j) b[j] *= inv;
  }

  const double noise_sd = spec.intra_class_sigma / std::sqrt(static_cast<double>(d));
  const double nuisance_sd = r > 0 ? spec.nuisance_sigma / std::sqrt(static_cast<double>(r)) : 0.0;

  Pool pool;
  pool.d_raw = d;
  pool.num_identities = spec.num_identities;
  const std::size_t n = spec.num_identities * spec.samples_per_identity;
  pool.features.resize(n * d);
  pool.identities.resize(n);
  std::vector<double> x(d);
  std::vector<double> z(r);
  for (std::size_t i = 0; i < spec.num_identities; ++i) {
    for (std::size_t s = 0; s < spec.samples_per_identity; ++s) {
      const std::size_t row = i * spec.samples_per_identity + s;
      const double* m = means.data() + i * d;
      for (std::size_t j = 0; j < d; ++j) x[j] = m[j];
      if (noise_sd > 0.0)
        for (std::size_t j = 0; j < d; ++j) x[j] += noise_sd * normal(rng);
      for (std::size_t c = 0; c < r; ++c) z[c] = nuisance_sd * normal(rng);
      for (std::size_t c = 0; c < r; ++c) {
        const double* b = basis.data() + c * d;
        for (std::size_t j = 0; j < d; ++j) x[j] += z[c] * b[j];
      }
      float* out = pool.features.data() + row * d;
      for (std::size_t j = 0; j < d; ++j) out[j] = static_cast<float>(x[j]);
      pool.identities[row] = static_cast<std::uint32_t>(i);
    }
  }
  return pool;
}

void write_features(const Pool& pool, const std::filesystem::path& path) {
  require(pool.d_raw > 0, "cannot write pool with d_raw = 0");
  require(!pool.has_labels() || pool.identities.size() == pool.size(),
          "label count does not match sample count");
  const std::size_t n = pool.size();

  std::string out;
  if (path.extension() == ".csv") {
    std::ostringstream csv;
    csv << std::setprecision(std::numeric_limits<float>::max_digits10) << "d=" << pool.d_raw << '\n';
    for (std::size_t i = 0; i < n; ++i) {
      auto r = pool.row(i);
      for (std::size_t j = 0; j < pool.d_raw; ++j) csv << (j ? "," : "") << r[j];
      if (pool.has_labels()) csv << ',' << pool.identities[i];
      csv << '\n';
    }
    out = csv.str();
  } else {
    require(n <= UINT32_MAX && pool.d_raw <= UINT32_MAX, "pool too large for MCLF");
    out.reserve(kHeaderBytes + pool.features.size() * 4 + pool.identities.size() * 4);
    out.append(kMagic, 4);
    put<std::uint16_t>(out, kVersion);
    put<std::uint16_t>(out, pool.has_labels() ? kFlagLabels : 0);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(n));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(pool.d_raw));
    out.append(reinterpret_cast<const char*>(pool.features.data()), pool.features.size() * sizeof(float));
    out.append(reinterpret_cast<const char*>(pool.identities.data()),
               pool.identities.size() * sizeof(std::uint32_t));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) fail(ErrorCode::kIo, "write failed: " + path.string());
}

Pool read_features(const std::filesystem::path& path, std::size_t expected_dim) {
  const std::string bytes = slurp(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    if (bytes.rfind("d=", 0) == 0) return parse_csv(bytes, expected_dim);
    fail(ErrorCode::kBadMagic, "bad magic in " + path.string());
  }
  if (bytes.size() < kHeaderBytes) fail(ErrorCode::kTruncated, "truncated header in " + path.string());
  const auto version = get<std::uint16_t>(bytes.data() + 4);
  const auto flags = get<std::uint16_t>(bytes.data() + 6);
  const auto n = get<std::uint32_t>(bytes.data() + 8);
  const auto d = get<std::uint32_t>(bytes.data() + 12);
  if (version != kVersion)
    fail(ErrorCode::kUnsupportedVersion, "unsupported MCLF version " + std::to_string(version));
  if (d == 0 && n > 0) fail(ErrorCode::kDimensionMismatch, "dimension mismatch: d=0 with n>0");
  if (expected_dim != 0 && d != expected_dim)
    fail(ErrorCode::kDimensionMismatch, "dimension mismatch: file d=" + std::to_string(d) +
                                            ", expected " + std::to_string(expected_dim));
  const bool labels = (flags & kFlagLabels) != 0;
  const std::uint64_t payload = std::uint64_t{n} * d * 4 + (labels ? std::uint64_t{n} * 4 : 0);
  if (bytes.size() - kHeaderBytes < payload)
    fail(ErrorCode::kTruncated, "truncated payload: header promises " + std::to_string(n) + " rows");
  if (bytes.size() - kHeaderBytes > payload)
    fail(ErrorCode::kDimensionMismatch, "dimension mismatch: trailing bytes after payload");

  Pool pool;
  pool.d_raw = d;
  pool.features.resize(std::size_t{n} * d);
  std::memcpy(pool.features.data(), bytes.data() + kHeaderBytes, pool.features.size() * 4);
  for (float v : pool.features)
    if (!std::isfinite(v)) fail(ErrorCode::kNumeric, "non-finite feature value in " + path.string());
  if (labels) {
    pool.identities.resize(n);
    std::memcpy(pool.identities.data(), bytes.data() + kHeaderBytes + pool.features.size() * 4,
                std::size_t{n} * 4);
  }
  pool.num_identities = count_identities(pool.identities);
  return pool;
}

std::pair<Pool, Pool> split_holdout(const Pool& pool, std::size_t holdout) {
  require(pool.has_labels(), "holdout split needs ground-truth labels");
  require(holdout < pool.num_identities, "holdout must leave at least one training identity");
  const std::uint32_t first_held = static_cast<std::uint32_t>(pool.num_identities - holdout);
  std::vector<std::size_t> train_rows, eval_rows;
  for (std::size_t i = 0; i < pool.size(); ++i)
    (pool.identities[i] >= first_held ? eval_rows : train_rows).push_back(i);
  return {pool.subset(train_rows), pool.subset(eval_rows)};
}

}  // namespace mcl
