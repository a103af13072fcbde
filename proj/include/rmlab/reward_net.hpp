#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rmlab/packing.hpp"

namespace rmlab {

enum class EncoderKind { gated_recurrent, causal_attention };
enum class Precision { f64, f32 };

std::string to_string(EncoderKind k);
std::string to_string(Precision p);
EncoderKind encoder_from_string(const std::string& s);
Precision precision_from_string(const std::string& s);

struct RewardNetConfig {
  int vocab_total = 0;  // embedding rows; covers content + reserved ids
  int embed_dim = 0;
  int hidden_dim = 0;
  EncoderKind encoder = EncoderKind::gated_recurrent;
  Precision precision = Precision::f64;
  std::uint64_t init_seed = 0;

  void validate() const;
  bool operator==(const RewardNetConfig&) const = default;
};

struct ShapeEntry {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool is_bias = false;
};

struct ShapeLedger {
  std::vector<ShapeEntry> entries;
  std::size_t total = 0;
};

ShapeLedger shape_ledger(const RewardNetConfig& config);
std::size_t param_count(const RewardNetConfig& config);
std::string param_name(const ShapeLedger& ledger, std::size_t flat_index);

template <class Real>
struct NetParams {
  RewardNetConfig config;
  std::vector<Real> flat;  // ledger order
};

// Non-bias entries uniform in +-1/sqrt(fan_in) (fan_in = column count),
// biases zero. Bit-identical for identical config.
template <class Real>
NetParams<Real> init_params(const RewardNetConfig& config);

// Scalar score: the linear head applied to the encoder state at the reward
// token position (which pack_example places last).
template <class Real>
double forward(const NetParams<Real>& params, const PackedExample& example);

enum class LossKind { pretrain_bt, sft_rank };

// One contrastive comparison: packed (prompt, reference, better) vs packed
// (prompt, reference, worse).
struct PackedPair {
  PackedExample pos;
  PackedExample neg;
  std::size_t source_index = 0;
};

// -log sigmoid(diff) via the stable softplus branches.
inline double pair_logistic_loss(double diff) {
  return diff > 0 ? std::log1p(std::exp(-diff)) : -diff + std::log1p(std::exp(diff));
}

// d/d diff of pair_logistic_loss: sigmoid(diff) - 1, stable for any diff.
inline double pair_logistic_dloss(double diff) {
  if (diff >= 0) return 1.0 / (1.0 + std::exp(-diff)) - 1.0;
  const double e = std::exp(diff);
  return e / (1.0 + e) - 1.0;
}

template <class Real>
struct GradResult {
  double loss = 0;
  std::vector<Real> grad;
};

// Mean pair loss over the batch and its exact gradient.
template <class Real>
GradResult<Real> grad(const NetParams<Real>& params,
                      std::span<const PackedPair> batch, LossKind kind);

struct FiniteDiffReport {
  double max_err = 0;
  std::size_t worst_index = 0;
  std::string worst_name;
  double worst_analytic = 0;
  double worst_numeric = 0;
};

// Central differences against the analytic gradient over every parameter.
// Per-parameter error is |analytic - numeric| / (1e-3 + max(|analytic|,
// |numeric|)): relative for healthy magnitudes, absolute near zero where
// finite differences run out of precision. f64 only.
FiniteDiffReport finite_diff_check(const NetParams<double>& params,
                                   const PackedPair& example, LossKind kind,
                                   double eps);

struct Checkpoint {
  RewardNetConfig config;
  std::vector<double> flat;
  std::uint64_t root_seed = 0;
};

// Versioned header plus little-endian f64 payload; load(save(p)) is
// bit-identical.
void save_checkpoint(const std::filesystem::path& path,
                     const NetParams<double>& params, std::uint64_t root_seed);
Checkpoint load_checkpoint(const std::filesystem::path& path);

template <class Real>
NetParams<Real> params_from_checkpoint(const Checkpoint& ck) {
  NetParams<Real> p;
  p.config = ck.config;
  p.flat.assign(ck.flat.begin(), ck.flat.end());
  return p;
}

extern template struct NetParams<double>;
extern template struct NetParams<float>;

}  // namespace rmlab
