#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace mcl {

// Parameters of the synthetic identity generator.
//
// Every identity gets a mean direction uniform on the unit sphere. A sample is
// mean + isotropic Gaussian noise whose expected norm is intra_class_sigma
// (per-coordinate deviation sigma / sqrt(d_raw)). When nuisance_rank > 0 a
// shared random subspace of that rank adds a view-dependent offset with
// expected norm nuisance_sigma to every sample, independent of identity.
struct GenSpec {
  std::size_t num_identities = 200;
  std::size_t samples_per_identity = 30;
  std::size_t d_raw = 64;
  double intra_class_sigma = 0.35;
  std::size_t nuisance_rank = 0;
  double nuisance_sigma = 0.0;
  std::uint64_t seed = 1;
};

// A set of raw feature vectors. The sample id of a row is its index.
// Ground-truth identities are carried for evaluation only; the trainer never
// reads them.
struct Pool {
  std::size_t d_raw = 0;
  std::size_t num_identities = 0;  // max label + 1, or 0 when unlabeled
  std::vector<float> features;     // row-major, size() x d_raw
  std::vector<std::uint32_t> identities;

  std::size_t size() const { return d_raw == 0 ? 0 : features.size() / d_raw; }
  bool has_labels() const { return !identities.empty(); }

  std::span<const float> row(std::size_t i) const {
    return {features.data() + i * d_raw, d_raw};
  }

  // Copies the listed rows (and their labels) into a new pool.
  Pool subset(std::span<const std::size_t> rows) const;

  bool operator==(const Pool&) const = default;
};

Pool generate_pool(const GenSpec& spec);

// MCLF: "MCLF", u16 version, u16 flags (bit0 = labels), u32 n, u32 d, n*d f32,
// then n u32 labels when flagged. All little-endian. A ".csv" path gets the
// CSV form read_features accepts instead.
void write_features(const Pool& pool, const std::filesystem::path& path);

// Reads MCLF, or the CSV fallback (first line "d=<int>", one row per sample,
// optional trailing integer label column). A nonzero expected_dim is checked
// against the header.
Pool read_features(const std::filesystem::path& path, std::size_t expected_dim = 0);

// Splits off the `holdout` highest identity labels as an evaluation pool.
// Returns {train, eval}; both keep their ground-truth labels.
std::pair<Pool, Pool> split_holdout(const Pool& pool, std::size_t holdout);

}  // namespace mcl
