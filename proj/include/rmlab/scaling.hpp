#pragma once

#include <cstddef>
#include <span>

namespace rmlab {

// L = coefficient * x^exponent, fit in log-log space.
struct PowerLawFit {
  double exponent = 0;
  double coefficient = 0;
  double r_squared = 0;
  std::size_t n_points = 0;
};

struct LossPoint {
  double x = 0;  // parameter count or training FLOPs
  double loss = 0;
};

PowerLawFit fit_power_law(std::span<const LossPoint> points);
double predict_loss(const PowerLawFit& fit, double x);

// Published desk-scale anchors used as round-trip targets in the tests.
PowerLawFit reference_model_size_law();  // loss vs parameter count
PowerLawFit reference_compute_law();     // loss vs training FLOPs

struct SweepPoint {
  double value = 0;  // swept hyperparameter (lr or batch size), > 0
  double loss = 0;
};

// Quartic least squares on standardized ln(value), minimized on a dense grid
// over the swept range. Fails when the minimum sits on a sweep endpoint,
// which is what monotone loss data produces.
double find_optimal_lr(std::span<const SweepPoint> sweep);

// Quadratic least squares on standardized ln(value), closed-form vertex.
// Fails when the parabola opens downward or the vertex leaves the range.
double find_optimal_bs(std::span<const SweepPoint> sweep);

// One measured optimum for a training configuration. Units are whatever the
// law being fit uses; the fit only sees logarithms.
struct HyperparamRecord {
  double n_params = 0;
  double pretrain_tokens = 0;  // ignored by laws without a pretrain factor
  double rank_tokens = 0;
  double value = 0;  // measured optimal lr or batch size
};

// value = coefficient * n^exp_params * dp^exp_pretrain * drm^exp_rank,
// with the pretrain factor dropped when uses_pretrain is false.
struct HyperparamLaw {
  double coefficient = 0;
  double exp_params = 0;
  double exp_pretrain = 0;
  double exp_rank = 0;
  bool uses_pretrain = true;
};

double predict_hyperparam(const HyperparamLaw& law, double n_params,
                          double pretrain_tokens, double rank_tokens);

// Log-linear least squares over the active factors. Fails when the factor
// columns are collinear (the exponents would be unidentifiable).
HyperparamLaw fit_hyperparam_law(std::span<const HyperparamRecord> records,
                                 bool use_pretrain);

// Published anchors. The lr law takes parameters and both token counts in
// millions and yields the optimum at reference batch size 256; the batch
// size law takes parameters in millions and rank tokens in billions.
HyperparamLaw reference_lr_law();
HyperparamLaw reference_bs_law();

struct HyperparamRecommendation {
  double batch_size_raw = 0;
  int batch_size = 0;   // batch_size_raw rounded to the nearest integer
  double lr_at_256 = 0;  // lr law output before batch rescaling
  double lr = 0;         // lr_at_256 * batch_size_raw / 256
};

// Inputs are absolute counts (parameters and tokens); unit conversion into
// the reference laws happens here.
HyperparamRecommendation recommend_hyperparameters(double n_params,
                                                   double pretrain_tokens,
                                                   double rank_tokens);

}  // namespace rmlab
