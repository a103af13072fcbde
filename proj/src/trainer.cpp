#include "rmlab/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "rmlab/error.hpp"
#include "rmlab/rng.hpp"

namespace rmlab {

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adaptive_moments" || s == "adaptive-moments" || s == "adam")
    return OptimizerKind::adaptive_moments;
  fail("unknown optimizer '", s, "' (expected sgd or adaptive_moments)");
}

std::string to_string(OptimizerKind k) {
  return k == OptimizerKind::sgd ? "sgd" : "adaptive_moments";
}

void OptimizerConfig::validate() const {
  require(lr >= 0.0, "optimizer: lr must be >= 0, got ", lr);
  require(batch_size >= 1, "optimizer: batch_size must be >= 1, got ", batch_size);
  require(epochs >= 1, "optimizer: epochs must be >= 1, got ", epochs);
  require(beta1 >= 0.0 && beta1 < 1.0, "optimizer: beta1 must be in [0, 1)");
  require(beta2 >= 0.0 && beta2 < 1.0, "optimizer: beta2 must be in [0, 1)");
  require(eps > 0.0, "optimizer: eps must be positive");
}

namespace {

std::uint64_t pair_tokens(const PackedPair& p) {
  return p.pos.tokens.size() + p.neg.tokens.size();
}

}  // namespace

template <class Real>
double validation_loss(const NetParams<Real>& params,
                       std::span<const PackedPair> pairs, LossKind kind) {
  (void)kind;
  require(!pairs.empty(), "validation_loss: empty dataset");
  double total = 0.0;
  for (const PackedPair& p : pairs)
    total += pair_logistic_loss(forward(params, p.pos) - forward(params, p.neg));
  return total / static_cast<double>(pairs.size());
}

template <class Real>
TrainReport train(NetParams<Real>& params, std::span<const PackedPair> train_pairs,
                  std::span<const PackedPair> val_pairs,
                  const OptimizerConfig& opt, LossKind kind) {
  opt.validate();
  require(!train_pairs.empty(), "train: empty dataset");
  const auto t_start = std::chrono::steady_clock::now();

  TrainReport report;
  report.param_count = params.flat.size();

  std::vector<Real> m, v;
  if (opt.kind == OptimizerKind::adaptive_moments) {
    m.assign(params.flat.size(), Real(0));
    v.assign(params.flat.size(), Real(0));
  }

  std::vector<std::size_t> perm(train_pairs.size());
  std::iota(perm.begin(), perm.end(), std::size_t(0));
  std::vector<PackedPair> batch;
  batch.reserve(opt.batch_size);

  std::uint64_t adam_t = 0;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    Rng shuffle(derive_seed(opt.shuffle_seed, 0x73687566ULL + epoch));
    for (std::size_t i = perm.size(); i > 1; --i)
      std::swap(perm[i - 1], perm[shuffle.below(i)]);

    for (std::size_t start = 0; start < perm.size();
         start += static_cast<std::size_t>(opt.batch_size)) {
      const std::size_t stop =
          std::min(perm.size(), start + static_cast<std::size_t>(opt.batch_size));
      batch.clear();
      for (std::size_t i = start; i < stop; ++i)
        batch.push_back(train_pairs[perm[i]]);

      const GradResult<Real> g = grad<Real>(params, batch, kind);
      if (!std::isfinite(g.loss)) {
        std::ostringstream rows;
        for (const PackedPair& p : batch) rows << " " << p.source_index;
        fail("train: non-finite loss at step ", report.step_losses.size(),
             " (source rows:", rows.str(), ")");
      }

      ++adam_t;
      if (opt.kind == OptimizerKind::sgd) {
        for (std::size_t i = 0; i < params.flat.size(); ++i)
          params.flat[i] -= static_cast<Real>(opt.lr) * g.grad[i];
      } else {
        const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(adam_t));
        const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(adam_t));
        const Real b1 = static_cast<Real>(opt.beta1);
        const Real b2 = static_cast<Real>(opt.beta2);
        for (std::size_t i = 0; i < params.flat.size(); ++i) {
          m[i] = b1 * m[i] + (Real(1) - b1) * g.grad[i];
          v[i] = b2 * v[i] + (Real(1) - b2) * g.grad[i] * g.grad[i];
          const double mh = static_cast<double>(m[i]) / c1;
          const double vh = static_cast<double>(v[i]) / c2;
          params.flat[i] -=
              static_cast<Real>(opt.lr * mh / (std::sqrt(vh) + opt.eps));
        }
      }

      for (const PackedPair& p : batch) report.tokens_consumed += pair_tokens(p);
      report.step_losses.push_back(g.loss);
      report.step_tokens.push_back(report.tokens_consumed);
    }

    if (!val_pairs.empty())
      report.epoch_val_losses.push_back(validation_loss(params, val_pairs, kind));
  }

  report.estimated_compute = 6.0 * static_cast<double>(report.param_count) *
                             static_cast<double>(report.tokens_consumed);
  report.wall_clock_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return report;
}

std::vector<PackedPair> pack_pretrain(std::span<const TrainTriple> triples,
                                      const Vocab& vocab, int max_seq) {
  std::vector<PackedPair> out;
  out.reserve(triples.size());
  for (std::size_t i = 0; i < triples.size(); ++i) {
    const TrainTriple& t = triples[i];
    PackedPair pair;
    pair.pos = pack_example(t.prompt, t.reference, t.positive, vocab, max_seq);
    pair.neg = pack_example(t.prompt, t.reference, t.negative, vocab, max_seq);
    pair.source_index = i;
    out.push_back(std::move(pair));
  }
  return out;
}

std::vector<PackedPair> pack_ranked(std::span<const RankedTriple> triples,
                                    const Vocab& vocab, int max_seq) {
  std::vector<PackedPair> out;
  out.reserve(triples.size());
  for (std::size_t i = 0; i < triples.size(); ++i) {
    const RankedTriple& t = triples[i];
    PackedPair pair;
    pair.pos = pack_example(t.prompt, t.best, t.middle, vocab, max_seq);
    pair.neg = pack_example(t.prompt, t.best, t.worst, vocab, max_seq);
    pair.source_index = i;
    out.push_back(std::move(pair));
  }
  return out;
}

template TrainReport train<double>(NetParams<double>&,
                                   std::span<const PackedPair>,
                                   std::span<const PackedPair>,
                                   const OptimizerConfig&, LossKind);
template TrainReport train<float>(NetParams<float>&, std::span<const PackedPair>,
                                  std::span<const PackedPair>,
                                  const OptimizerConfig&, LossKind);
template double validation_loss<double>(const NetParams<double>&,
                                        std::span<const PackedPair>, LossKind);
template double validation_loss<float>(const NetParams<float>&,
                                       std::span<const PackedPair>, LossKind);

}  // namespace rmlab
