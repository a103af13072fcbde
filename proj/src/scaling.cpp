#include "rmlab/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "rmlab/error.hpp"

namespace rmlab {
namespace {

// Dense Gaussian elimination with partial pivoting; a is n x n row-major and
// gets destroyed. Near-singular systems abort with the caller's message.
std::vector<double> solve_linear(std::vector<double> a, std::vector<double> b,
                                 std::size_t n, const char* what) {
  double scale = 0;
  for (double v : a) scale = std::max(scale, std::abs(v));
  if (scale == 0) scale = 1;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r * n + col]) > std::abs(a[pivot * n + col])) pivot = r;
    if (std::abs(a[pivot * n + col]) < 1e-12 * scale) fail(what);
    if (pivot != col) {
      for (std::size_t c = 0; c < n; ++c)
        std::swap(a[pivot * n + c], a[col * n + c]);
      std::swap(b[pivot], b[col]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      double f = a[r * n + col] / a[col * n + col];
      if (f == 0) continue;
      for (std::size_t c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n, 0.0);
  for (std::size_t ri = n; ri-- > 0;) {
    double acc = b[ri];
    for (std::size_t c = ri + 1; c < n; ++c) acc -= a[ri * n + c] * x[c];
    x[ri] = acc / a[ri * n + ri];
  }
  return x;
}

// Least-squares polynomial coefficients (degree -> coeff[degree+1]) via the
// normal equations. zs should be standardized so the Vandermonde moments
// stay well conditioned.
std::vector<double> polyfit(std::span<const double> zs,
                            std::span<const double> ys, int degree,
                            const char* what) {
  std::size_t k = static_cast<std::size_t>(degree) + 1;
  std::vector<double> m(k * k, 0.0), rhs(k, 0.0);
  std::vector<double> powers(2 * k - 1);
  for (std::size_t i = 0; i < zs.size(); ++i) {
    powers[0] = 1;
    for (std::size_t p = 1; p < powers.size(); ++p)
      powers[p] = powers[p - 1] * zs[i];
    for (std::size_t r = 0; r < k; ++r) {
      for (std::size_t c = 0; c < k; ++c) m[r * k + c] += powers[r + c];
      rhs[r] += ys[i] * powers[r];
    }
  }
  return solve_linear(std::move(m), std::move(rhs), k, what);
}

double polyval(std::span<const double> coeff, double z) {
  double acc = 0;
  for (std::size_t i = coeff.size(); i-- > 0;) acc = acc * z + coeff[i];
  return acc;
}

struct LogSweep {
  std::vector<double> z;  // standardized ln(value)
  std::vector<double> y;
  double mean = 0;
  double stdev = 0;

  double value_at(double zstd) const { return std::exp(zstd * stdev + mean); }
};

LogSweep standardize_sweep(std::span<const SweepPoint> sweep, const char* name,
                           std::size_t min_points) {
  require(sweep.size() >= min_points, name, " sweep needs at least ",
          min_points, " points, got ", sweep.size());
  LogSweep out;
  out.z.reserve(sweep.size());
  out.y.reserve(sweep.size());
  for (const SweepPoint& p : sweep) {
    require(p.value > 0, name, " sweep values must be > 0, got ", p.value);
    require(std::isfinite(p.loss), name, " sweep loss must be finite");
    out.z.push_back(std::log(p.value));
    out.y.push_back(p.loss);
  }
  for (double v : out.z) out.mean += v;
  out.mean /= static_cast<double>(out.z.size());
  for (double v : out.z) out.stdev += (v - out.mean) * (v - out.mean);
  out.stdev = std::sqrt(out.stdev / static_cast<double>(out.z.size()));
  require(out.stdev > 0, name, " sweep needs more than one distinct value");
  for (double& v : out.z) v = (v - out.mean) / out.stdev;
  return out;
}

}  // namespace

PowerLawFit fit_power_law(std::span<const LossPoint> points) {
  require(points.size() >= 2, "power-law fit needs at least 2 points, got ",
          points.size());
  std::vector<double> lx, ly;
  lx.reserve(points.size());
  ly.reserve(points.size());
  for (const LossPoint& p : points) {
    require(p.x > 0, "power-law fit needs x > 0, got ", p.x);
    require(p.loss > 0, "power-law fit needs loss > 0, got ", p.loss);
    lx.push_back(std::log(p.x));
    ly.push_back(std::log(p.loss));
  }
  double n = static_cast<double>(points.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  require(sxx > 0, "power-law fit needs at least two distinct x values");

  PowerLawFit fit;
  fit.exponent = sxy / sxx;
  fit.coefficient = std::exp(my - fit.exponent * mx);
  fit.n_points = points.size();
  double ss_res = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    double pred = my + fit.exponent * (lx[i] - mx);
    ss_res += (ly[i] - pred) * (ly[i] - pred);
  }
  fit.r_squared = syy == 0 ? (ss_res == 0 ? 1.0 : 0.0) : 1.0 - ss_res / syy;
  fit.r_squared = std::clamp(fit.r_squared, 0.0, 1.0);
  return fit;
}

double predict_loss(const PowerLawFit& fit, double x) {
  require(x > 0, "power-law prediction needs x > 0, got ", x);
  return fit.coefficient * std::pow(x, fit.exponent);
}

PowerLawFit reference_model_size_law() { return {-0.0425, 0.9, 0.9886, 5}; }

PowerLawFit reference_compute_law() { return {-0.0342, 2.4, 0.9912, 5}; }

double find_optimal_lr(std::span<const SweepPoint> sweep) {
  LogSweep s = standardize_sweep(sweep, "learning-rate", 5);
  std::vector<double> coeff =
      polyfit(s.z, s.y, 4, "learning-rate sweep is degenerate (quartic fit singular)");
  auto [lo_it, hi_it] = std::minmax_element(s.z.begin(), s.z.end());
  double lo = *lo_it, hi = *hi_it;
  const int grid = 10001;
  int best = 0;
  double best_y = polyval(coeff, lo);
  for (int i = 1; i < grid; ++i) {
    double z = lo + (hi - lo) * static_cast<double>(i) / (grid - 1);
    double y = polyval(coeff, z);
    if (y < best_y) {
      best_y = y;
      best = i;
    }
  }
  require(best != 0 && best != grid - 1,
          "learning-rate sweep does not bracket a minimum; "
          "the fitted loss is lowest at a sweep endpoint");
  return s.value_at(lo + (hi - lo) * static_cast<double>(best) / (grid - 1));
}

double find_optimal_bs(std::span<const SweepPoint> sweep) {
  LogSweep s = standardize_sweep(sweep, "batch-size", 3);
  std::vector<double> coeff =
      polyfit(s.z, s.y, 2, "batch-size sweep is degenerate (quadratic fit singular)");
  require(coeff[2] > 0,
          "batch-size sweep has no interior minimum; "
          "the fitted parabola does not open upward");
  double vertex = -coeff[1] / (2 * coeff[2]);
  auto [lo_it, hi_it] = std::minmax_element(s.z.begin(), s.z.end());
  require(vertex >= *lo_it && vertex <= *hi_it,
          "batch-size sweep does not bracket its minimum; "
          "the fitted vertex falls outside the swept range");
  return s.value_at(vertex);
}

double predict_hyperparam(const HyperparamLaw& law, double n_params,
                          double pretrain_tokens, double rank_tokens) {
  require(n_params > 0, "prediction needs n_params > 0, got ", n_params);
  require(rank_tokens > 0, "prediction needs rank_tokens > 0, got ", rank_tokens);
  double out = law.coefficient * std::pow(n_params, law.exp_params) *
               std::pow(rank_tokens, law.exp_rank);
  if (law.uses_pretrain) {
    require(pretrain_tokens > 0, "prediction needs pretrain_tokens > 0, got ",
            pretrain_tokens);
    out *= std::pow(pretrain_tokens, law.exp_pretrain);
  }
  return out;
}

HyperparamLaw fit_hyperparam_law(std::span<const HyperparamRecord> records,
                                 bool use_pretrain) {
  std::size_t k = use_pretrain ? 3 : 2;  // slope count; intercept handled apart
  require(records.size() >= k + 1, "hyperparameter law fit needs at least ",
          k + 1, " records, got ", records.size());

  std::vector<std::vector<double>> cols(k);
  std::vector<double> y;
  for (const HyperparamRecord& r : records) {
    require(r.n_params > 0, "record needs n_params > 0, got ", r.n_params);
    require(r.rank_tokens > 0, "record needs rank_tokens > 0, got ",
            r.rank_tokens);
    require(r.value > 0, "record needs value > 0, got ", r.value);
    cols[0].push_back(std::log(r.n_params));
    if (use_pretrain) {
      require(r.pretrain_tokens > 0, "record needs pretrain_tokens > 0, got ",
              r.pretrain_tokens);
      cols[1].push_back(std::log(r.pretrain_tokens));
    }
    cols[k - 1].push_back(std::log(r.rank_tokens));
    y.push_back(std::log(r.value));
  }

  double n = static_cast<double>(records.size());
  std::vector<double> means(k, 0.0);
  double ymean = 0;
  for (std::size_t c = 0; c < k; ++c) {
    for (double v : cols[c]) means[c] += v;
    means[c] /= n;
  }
  for (double v : y) ymean += v;
  ymean /= n;

  std::vector<double> xtx(k * k, 0.0), xty(k, 0.0);
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (std::size_t a = 0; a < k; ++a) {
      double da = cols[a][i] - means[a];
      for (std::size_t b = 0; b < k; ++b)
        xtx[a * k + b] += da * (cols[b][i] - means[b]);
      xty[a] += da * (y[i] - ymean);
    }
  }
  std::vector<double> slopes = solve_linear(
      std::move(xtx), std::move(xty), k,
      "hyperparameter law factors are collinear; exponents are unidentifiable");

  double intercept = ymean;
  for (std::size_t c = 0; c < k; ++c) intercept -= slopes[c] * means[c];

  HyperparamLaw law;
  law.coefficient = std::exp(intercept);
  law.exp_params = slopes[0];
  law.uses_pretrain = use_pretrain;
  if (use_pretrain) {
    law.exp_pretrain = slopes[1];
    law.exp_rank = slopes[2];
  } else {
    law.exp_pretrain = 0;
    law.exp_rank = slopes[1];
  }
  return law;
}

HyperparamLaw reference_lr_law() {
  return {0.0002306, 0.01125, -0.66587, 0.33916, true};
}

HyperparamLaw reference_bs_law() {
  return {31.9032, 0.06944, 0.0, 0.52997, false};
}

HyperparamRecommendation recommend_hyperparameters(double n_params,
                                                   double pretrain_tokens,
                                                   double rank_tokens) {
  require(n_params > 0, "recommendation needs n_params > 0");
  require(pretrain_tokens > 0, "recommendation needs pretrain_tokens > 0");
  require(rank_tokens > 0, "recommendation needs rank_tokens > 0");

  // The lr law was fit with parameters and token counts in millions; the
  // batch size law with parameters in millions and rank tokens in billions.
  double n_m = n_params / 1e6;
  double dp_m = pretrain_tokens / 1e6;
  double drm_m = rank_tokens / 1e6;
  double drm_b = rank_tokens / 1e9;

  HyperparamRecommendation rec;
  rec.lr_at_256 = predict_hyperparam(reference_lr_law(), n_m, dp_m, drm_m);
  rec.batch_size_raw = predict_hyperparam(reference_bs_law(), n_m, 1.0, drm_b);
  rec.batch_size = static_cast<int>(std::llround(rec.batch_size_raw));
  rec.lr = rec.lr_at_256 * rec.batch_size_raw / 256.0;
  return rec;
}

}  // namespace rmlab
