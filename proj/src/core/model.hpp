#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "core/linalg.hpp"

namespace mcl {

// Two-layer encoder v = normalize(W2 tanh(W1 x + b1) + b2). With hidden = 0
// the tanh layer is dropped and W2 maps the raw input directly.
struct EncoderParams {
  Matrix W1;  // hidden x d_raw (empty in linear mode)
  Vector b1;
  Matrix W2;  // d_emb x (hidden or d_raw)
  Vector b2;

  bool linear() const { return W1.size() == 0; }
  std::size_t d_raw() const { return static_cast<std::size_t>(linear() ? W2.cols() : W1.cols()); }
  std::size_t d_hidden() const { return linear() ? 0 : static_cast<std::size_t>(W1.rows()); }
  std::size_t d_emb() const { return static_cast<std::size_t>(W2.rows()); }
  std::size_t parameter_count() const {
    return static_cast<std::size_t>(W1.size() + b1.size() + W2.size() + b2.size());
  }

  // Same shapes, all zeros.
  EncoderParams zeros_like() const;
  bool same_shape(const EncoderParams& o) const;
  bool all_finite() const;

  // Flat views in the fixed order W1, b1, W2, b2 (used by optimizers/tests).
  std::vector<double> flatten() const;
  void assign_flat(std::span<const double> flat);

  // Near-identity start: ones on the leading diagonal of each weight matrix
  // plus N(0, jitter^2) entries, zero biases. With jitter = 0 and square
  // shapes the linear encoder is exactly the identity.
  static EncoderParams identity_init(std::size_t d_raw, std::size_t d_hidden, std::size_t d_emb,
                                     std::uint64_t seed, double jitter = 0.01);

  bool operator==(const EncoderParams& o) const;
};

// Intermediate values of a batch forward pass, kept for backward.
struct EncodeCache {
  Matrix input;   // B x d_raw
  Matrix hidden;  // B x d_h (empty in linear mode)
  Matrix pre;     // B x d_emb, before normalization
  Vector norms;   // B
  Matrix out;     // B x d_emb, unit rows
};

Vector encode(const EncoderParams& params, std::span<const double> x);
Vector encode(const EncoderParams& params, std::span<const float> x);

EncodeCache encode_batch(const EncoderParams& params, Matrix input);

// Gradient of the loss w.r.t. the parameters, given dL/d(out).
EncoderParams encode_backward(const EncoderParams& params, const EncodeCache& cache,
                              const Matrix& grad_out);

// Adds isotropic Gaussian noise with expected norm sigma (per-coordinate
// sigma / sqrt(d)), then zeroes each coordinate with probability drop_p and
// scales survivors by 1 / (1 - drop_p).
Vector augment(std::span<const float> x, std::mt19937_64& rng, double sigma, double drop_p);

struct AdamOptions {
  double lr = 3.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 5e-4;
};

struct OptimizerState {
  AdamOptions options;
  EncoderParams m;
  EncoderParams v;
  std::uint64_t step = 0;

  static OptimizerState for_params(const EncoderParams& params, const AdamOptions& options);
};

// Adam with bias correction; weight decay is decoupled (p -= lr * wd * p).
// `lr` overrides options.lr so schedules can be applied per call.
void adam_step(EncoderParams& params, const EncoderParams& grads, OptimizerState& state, double lr);

// Learning rate for a 0-based epoch: x0.1 at each decay epoch already passed.
// Empty decay list means the default of every third of the run (20/40 of 60).
double scheduled_lr(double base_lr, std::size_t epoch, std::size_t total_epochs,
                    const std::vector<std::size_t>& decay_epochs = {});

// Named f64 tensors in a small binary container: "MCLK", u16 version, u16
// flags, u32 count, then per section u16 name length, name, u32 rows,
// u32 cols, rows*cols f64 little-endian.
struct Section {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
};

void write_sections(const std::filesystem::path& path, const std::vector<Section>& sections);
std::vector<Section> read_sections(const std::filesystem::path& path);

std::vector<Section> params_to_sections(const EncoderParams& params);
EncoderParams params_from_sections(const std::vector<Section>& sections);

}  // namespace mcl
