#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "rmlab/error.hpp"
#include "rmlab/trainer.hpp"

using namespace rmlab;

namespace {

// Candidates either echo the reference token or avoid it, so reward nets can
// separate them from the packed context alone.
std::vector<TrainTriple> separable_triples(const Vocab& v, int n) {
  std::vector<TrainTriple> out;
  for (int i = 0; i < n; ++i) {
    TrainTriple t;
    const Token a = static_cast<Token>(i % v.size);
    const Token b = static_cast<Token>((i + 1) % v.size);
    t.prompt = {a, b};
    t.reference = {a, a};
    t.positive = {a, a, a};
    t.negative = {b, b, b};
    t.policy_a = "echo";
    t.policy_b = "avoid";
    out.push_back(std::move(t));
  }
  return out;
}

NetParams<double> tiny_net(std::uint64_t seed = 5) {
  RewardNetConfig cfg;
  cfg.vocab_total = Vocab::with_content(4).total();
  cfg.embed_dim = 6;
  cfg.hidden_dim = 8;
  cfg.encoder = EncoderKind::gated_recurrent;
  cfg.init_seed = seed;
  return init_params<double>(cfg);
}

}  // namespace

TEST_CASE("pairwise loss identities") {
  CHECK(bt_pretrain_loss(1.7, 1.7) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(sft_rank_loss(0.0, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  // a reward gap of ln 3 puts the preferred side at probability 3/4
  CHECK(bt_pretrain_loss(std::log(3.0), 0.0) ==
        doctest::Approx(0.2876820724517809).epsilon(1e-14));
  CHECK(std::isfinite(bt_pretrain_loss(1e6, 0.0)));
  CHECK(std::isfinite(bt_pretrain_loss(0.0, 1e6)));
  CHECK(bt_pretrain_loss(0.0, 1e6) == doctest::Approx(1e6));
  CHECK(pair_logistic_dloss(0.0) == doctest::Approx(-0.5).epsilon(1e-15));
}

TEST_CASE("pairwise loss depends only on the reward difference") {
  for (double a : {-2.0, 0.0, 0.31}) {
    for (double b : {-1.0, 0.9}) {
      for (double shift : {-10.0, 3.5}) {
        CHECK(bt_pretrain_loss(a + shift, b + shift) ==
              doctest::Approx(bt_pretrain_loss(a, b)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("optimizer config validation and parsing") {
  OptimizerConfig opt;
  CHECK_NOTHROW(opt.validate());
  opt.lr = -1;
  CHECK_THROWS_AS(opt.validate(), Error);
  opt = OptimizerConfig{};
  opt.batch_size = 0;
  CHECK_THROWS_AS(opt.validate(), Error);
  opt = OptimizerConfig{};
  opt.beta1 = 1.0;
  CHECK_THROWS_AS(opt.validate(), Error);

  CHECK(optimizer_from_string("sgd") == OptimizerKind::sgd);
  CHECK(optimizer_from_string("adaptive_moments") == OptimizerKind::adaptive_moments);
  CHECK(optimizer_from_string("adam") == OptimizerKind::adaptive_moments);
  CHECK_THROWS_AS(optimizer_from_string("rmsprop"), Error);
  CHECK(to_string(OptimizerKind::sgd) == "sgd");
}

TEST_CASE("zero learning rate leaves parameters bit-identical") {
  Vocab v = Vocab::with_content(4);
  std::vector<PackedPair> pairs = pack_pretrain(separable_triples(v, 6), v, 64);
  for (OptimizerKind kind : {OptimizerKind::sgd, OptimizerKind::adaptive_moments}) {
    NetParams<double> p = tiny_net();
    const std::vector<double> before = p.flat;
    OptimizerConfig opt;
    opt.kind = kind;
    opt.lr = 0.0;
    opt.batch_size = 3;
    opt.epochs = 2;
    TrainReport report = train(p, pairs, {}, opt, LossKind::pretrain_bt);
    CHECK(p.flat == before);
    CHECK(report.step_losses.size() == 4);  // ceil(6/3) batches x 2 epochs
  }
}

TEST_CASE("training is deterministic") {
  Vocab v = Vocab::with_content(4);
  std::vector<PackedPair> pairs = pack_pretrain(separable_triples(v, 8), v, 64);
  std::vector<PackedPair> val(pairs.begin(), pairs.begin() + 2);

  OptimizerConfig opt;
  opt.lr = 0.02;
  opt.batch_size = 2;
  opt.epochs = 3;
  opt.shuffle_seed = 17;

  NetParams<double> p1 = tiny_net();
  NetParams<double> p2 = tiny_net();
  TrainReport r1 = train(p1, pairs, val, opt, LossKind::pretrain_bt);
  TrainReport r2 = train(p2, pairs, val, opt, LossKind::pretrain_bt);
  CHECK(r1.step_losses == r2.step_losses);
  CHECK(r1.epoch_val_losses == r2.epoch_val_losses);
  CHECK(p1.flat == p2.flat);
}

TEST_CASE("training reduces the loss on separable data") {
  Vocab v = Vocab::with_content(4);
  std::vector<PackedPair> pairs = pack_pretrain(separable_triples(v, 12), v, 64);
  NetParams<double> p = tiny_net();

  OptimizerConfig opt;
  opt.kind = OptimizerKind::adaptive_moments;
  opt.lr = 0.1;  // the contrastive score gap starts near zero, so push hard
  opt.batch_size = 4;
  opt.epochs = 25;
  opt.shuffle_seed = 3;

  const double before = validation_loss(p, pairs, LossKind::pretrain_bt);
  TrainReport report = train(p, pairs, pairs, opt, LossKind::pretrain_bt);
  const double after = validation_loss(p, pairs, LossKind::pretrain_bt);
  CHECK(after < before * 0.5);
  REQUIRE(report.epoch_val_losses.size() == 25);
  CHECK(report.epoch_val_losses.back() ==
        doctest::Approx(after).epsilon(1e-12));
}

TEST_CASE("token accounting and compute estimate") {
  Vocab v = Vocab::with_content(4);
  std::vector<TrainTriple> triples = separable_triples(v, 5);
  std::vector<PackedPair> pairs = pack_pretrain(triples, v, 64);

  std::uint64_t tokens_per_epoch = 0;
  for (const PackedPair& p : pairs)
    tokens_per_epoch += p.pos.tokens.size() + p.neg.tokens.size();

  NetParams<double> p = tiny_net();
  OptimizerConfig opt;
  opt.lr = 0.01;
  opt.batch_size = 2;
  opt.epochs = 3;
  TrainReport report = train(p, pairs, {}, opt, LossKind::pretrain_bt);

  CHECK(report.tokens_consumed == 3 * tokens_per_epoch);
  CHECK(report.param_count == p.flat.size());
  CHECK(report.estimated_compute ==
        doctest::Approx(6.0 * static_cast<double>(p.flat.size()) *
                        static_cast<double>(report.tokens_consumed)));
  REQUIRE(report.step_tokens.size() == report.step_losses.size());
  for (std::size_t i = 1; i < report.step_tokens.size(); ++i)
    CHECK(report.step_tokens[i] > report.step_tokens[i - 1]);
  CHECK(report.step_tokens.back() == report.tokens_consumed);
  CHECK(report.epoch_val_losses.empty());
}

TEST_CASE("non-finite loss aborts with step and source rows") {
  Vocab v = Vocab::with_content(4);
  std::vector<PackedPair> pairs = pack_pretrain(separable_triples(v, 4), v, 64);
  NetParams<double> p = tiny_net();
  p.flat[0] = std::numeric_limits<double>::quiet_NaN();

  OptimizerConfig opt;
  opt.batch_size = 4;
  try {
    train(p, pairs, {}, opt, LossKind::pretrain_bt);
    FAIL("expected a non-finite abort");
  } catch (const Error& e) {
    std::string msg = e.what();
    CHECK(msg.find("non-finite loss") != std::string::npos);
    CHECK(msg.find("step 0") != std::string::npos);
    CHECK(msg.find("source rows") != std::string::npos);
  }
}

TEST_CASE("train rejects empty datasets") {
  NetParams<double> p = tiny_net();
  OptimizerConfig opt;
  CHECK_THROWS_AS(train(p, {}, {}, opt, LossKind::pretrain_bt), Error);
  CHECK_THROWS_AS(validation_loss(p, {}, LossKind::pretrain_bt), Error);
}

TEST_CASE("single precision training runs and converges roughly") {
  Vocab v = Vocab::with_content(4);
  std::vector<PackedPair> pairs = pack_pretrain(separable_triples(v, 8), v, 64);
  RewardNetConfig cfg;
  cfg.vocab_total = v.total();
  cfg.embed_dim = 6;
  cfg.hidden_dim = 8;
  cfg.precision = Precision::f32;
  cfg.init_seed = 21;
  NetParams<float> p = init_params<float>(cfg);

  OptimizerConfig opt;
  opt.lr = 0.03;
  opt.batch_size = 4;
  opt.epochs = 15;
  TrainReport report = train(p, pairs, pairs, opt, LossKind::pretrain_bt);
  CHECK(report.epoch_val_losses.back() < report.epoch_val_losses.front());
  for (double l : report.step_losses) CHECK(std::isfinite(l));
}
