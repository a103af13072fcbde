#include "rmlab/reward_net.hpp"

#include <bit>
#include <cstring>

#include "json.hpp"
#include "rmlab/error.hpp"
#include "rmlab/io_util.hpp"
#include "rmlab/rng.hpp"

namespace rmlab {

using nlohmann::json;

std::string to_string(EncoderKind k) {
  return k == EncoderKind::gated_recurrent ? "gated_recurrent"
                                           : "causal_attention";
}

std::string to_string(Precision p) { return p == Precision::f64 ? "f64" : "f32"; }

EncoderKind encoder_from_string(const std::string& s) {
  if (s == "gated_recurrent") return EncoderKind::gated_recurrent;
  if (s == "causal_attention") return EncoderKind::causal_attention;
  fail("unknown encoder '", s, "' (expected gated_recurrent or causal_attention)");
}

Precision precision_from_string(const std::string& s) {
  if (s == "f64") return Precision::f64;
  if (s == "f32") return Precision::f32;
  fail("unknown precision '", s, "' (expected f64 or f32)");
}

void RewardNetConfig::validate() const {
  require(vocab_total >= 2, "net: vocab_total must be >= 2, got ", vocab_total);
  require(embed_dim >= 1, "net: embed_dim must be >= 1, got ", embed_dim);
  require(hidden_dim >= 1, "net: hidden_dim must be >= 1, got ", hidden_dim);
}

ShapeLedger shape_ledger(const RewardNetConfig& config) {
  config.validate();
  const std::size_t V = config.vocab_total;
  const std::size_t E = config.embed_dim;
  const std::size_t H = config.hidden_dim;
  ShapeLedger ledger;
  auto add = [&](const char* name, std::size_t rows, std::size_t cols,
                 bool bias) {
    ledger.entries.push_back({name, ledger.total, rows, cols, bias});
    ledger.total += rows * cols;
  };
  add("embed", V, E, false);
  if (config.encoder == EncoderKind::gated_recurrent) {
    add("gate_w", H, E, false);
    add("gate_u", H, H, false);
    add("gate_b", H, 1, true);
    add("cand_w", H, E, false);
    add("cand_u", H, H, false);
    add("cand_b", H, 1, true);
  } else {
    add("query_w", H, E, false);
    add("key_w", H, E, false);
    add("value_w", H, E, false);
    add("out_w", H, H, false);
    add("out_b", H, 1, true);
  }
  add("head_w", 1, H, false);
  add("head_b", 1, 1, true);
  return ledger;
}

std::size_t param_count(const RewardNetConfig& config) {
  return shape_ledger(config).total;
}

std::string param_name(const ShapeLedger& ledger, std::size_t flat_index) {
  for (const ShapeEntry& e : ledger.entries) {
    if (flat_index < e.offset + e.rows * e.cols) {
      const std::size_t local = flat_index - e.offset;
      std::ostringstream os;
      os << e.name << "[" << local / e.cols << "," << local % e.cols << "]";
      return os.str();
    }
  }
  return "out-of-range";
}

template <class Real>
NetParams<Real> init_params(const RewardNetConfig& config) {
  const ShapeLedger ledger = shape_ledger(config);
  NetParams<Real> p;
  p.config = config;
  p.flat.assign(ledger.total, Real(0));
  Rng rng(derive_seed(config.init_seed, 0x696e6974ULL));
  for (const ShapeEntry& e : ledger.entries) {
    if (e.is_bias) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(e.cols));
    for (std::size_t i = 0; i < e.rows * e.cols; ++i)
      p.flat[e.offset + i] =
          static_cast<Real>((2.0 * rng.uniform() - 1.0) * bound);
  }
  return p;
}

namespace {

// Flat-parameter offsets for the hot paths; the public ShapeLedger mirrors
// these by construction.
struct RecOffsets {
  std::size_t embed, gate_w, gate_u, gate_b, cand_w, cand_u, cand_b, head_w,
      head_b, total;
};

RecOffsets rec_offsets(const RewardNetConfig& c) {
  const std::size_t V = c.vocab_total, E = c.embed_dim, H = c.hidden_dim;
  RecOffsets o{};
  o.embed = 0;
  o.gate_w = o.embed + V * E;
  o.gate_u = o.gate_w + H * E;
  o.gate_b = o.gate_u + H * H;
  o.cand_w = o.gate_b + H;
  o.cand_u = o.cand_w + H * E;
  o.cand_b = o.cand_u + H * H;
  o.head_w = o.cand_b + H;
  o.head_b = o.head_w + H;
  o.total = o.head_b + 1;
  return o;
}

struct AttnOffsets {
  std::size_t embed, query_w, key_w, value_w, out_w, out_b, head_w, head_b,
      total;
};

AttnOffsets attn_offsets(const RewardNetConfig& c) {
  const std::size_t V = c.vocab_total, E = c.embed_dim, H = c.hidden_dim;
  AttnOffsets o{};
  o.embed = 0;
  o.query_w = o.embed + V * E;
  o.key_w = o.query_w + H * E;
  o.value_w = o.key_w + H * E;
  o.out_w = o.value_w + H * E;
  o.out_b = o.out_w + H * H;
  o.head_w = o.out_b + H;
  o.head_b = o.head_w + H;
  o.total = o.head_b + 1;
  return o;
}

template <class Real>
void matvec_acc(const Real* M, const Real* x, Real* y, std::size_t rows,
                std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* row = M + r * cols;
    Real acc = 0;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] += acc;
  }
}

// y += M^T d, M is rows x cols, d has rows entries, y has cols entries.
template <class Real>
void matvec_t_acc(const Real* M, const Real* d, Real* y, std::size_t rows,
                  std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const Real dr = d[r];
    const Real* row = M + r * cols;
    for (std::size_t c = 0; c < cols; ++c) y[c] += row[c] * dr;
  }
}

// G += d (rows) outer x (cols)
template <class Real>
void outer_acc(const Real* d, const Real* x, Real* G, std::size_t rows,
               std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const Real dr = d[r];
    Real* row = G + r * cols;
    for (std::size_t c = 0; c < cols; ++c) row[c] += dr * x[c];
  }
}

template <class Real>
Real sigmoid(Real z) {
  if (z >= 0) return Real(1) / (Real(1) + std::exp(-z));
  const Real e = std::exp(z);
  return e / (Real(1) + e);
}

void check_example(const RewardNetConfig& c, const PackedExample& ex) {
  require(!ex.tokens.empty(), "net: empty packed example");
  require(ex.reward_position == static_cast<int>(ex.tokens.size()) - 1,
          "net: reward position must be the final token");
  for (Token t : ex.tokens)
    require(t >= 0 && t < c.vocab_total, "net: token ", t,
            " outside embedding table of size ", c.vocab_total);
}

template <class Real>
struct RecCache {
  std::size_t len = 0;
  std::vector<Real> f;  // L x H
  std::vector<Real> c;  // L x H
  std::vector<Real> h;  // (L+1) x H, h[0] = 0
};

template <class Real>
double forward_rec(const NetParams<Real>& P, const PackedExample& ex,
                   RecCache<Real>* cache) {
  const std::size_t E = P.config.embed_dim, H = P.config.hidden_dim;
  const RecOffsets off = rec_offsets(P.config);
  const Real* flat = P.flat.data();
  const std::size_t L = ex.tokens.size();

  if (cache) {
    cache->len = L;
    cache->f.assign(L * H, Real(0));
    cache->c.assign(L * H, Real(0));
    cache->h.assign((L + 1) * H, Real(0));
  }
  std::vector<Real> h(H, Real(0)), f_scratch(H), c_scratch(H), fh(H);

  for (std::size_t t = 0; t < L; ++t) {
    const Real* x = flat + off.embed + static_cast<std::size_t>(ex.tokens[t]) * E;
    Real* f = cache ? cache->f.data() + t * H : f_scratch.data();
    Real* c = cache ? cache->c.data() + t * H : c_scratch.data();

    for (std::size_t i = 0; i < H; ++i) f[i] = flat[off.gate_b + i];
    matvec_acc(flat + off.gate_w, x, f, H, E);
    matvec_acc(flat + off.gate_u, h.data(), f, H, H);
    for (std::size_t i = 0; i < H; ++i) {
      f[i] = sigmoid(f[i]);
      fh[i] = f[i] * h[i];
    }

    for (std::size_t i = 0; i < H; ++i) c[i] = flat[off.cand_b + i];
    matvec_acc(flat + off.cand_w, x, c, H, E);
    matvec_acc(flat + off.cand_u, fh.data(), c, H, H);
    for (std::size_t i = 0; i < H; ++i) {
      c[i] = std::tanh(c[i]);
      h[i] = (Real(1) - f[i]) * h[i] + f[i] * c[i];
    }
    if (cache)
      std::memcpy(cache->h.data() + (t + 1) * H, h.data(), H * sizeof(Real));
  }

  const Real* h_final = h.data();
  Real r = flat[off.head_b];
  for (std::size_t i = 0; i < H; ++i) r += flat[off.head_w + i] * h_final[i];
  return static_cast<double>(r);
}

template <class Real>
void backward_rec(const NetParams<Real>& P, const PackedExample& ex,
                  const RecCache<Real>& cache, double d_reward, Real* g) {
  const std::size_t E = P.config.embed_dim, H = P.config.hidden_dim;
  const RecOffsets off = rec_offsets(P.config);
  const Real* flat = P.flat.data();
  const std::size_t L = cache.len;
  const Real dr = static_cast<Real>(d_reward);

  std::vector<Real> dh(H), dh_prev(H), df(H), dc_pre(H), df_pre(H), dfh(H),
      dx(E), fh(H);

  const Real* h_final = cache.h.data() + L * H;
  g[off.head_b] += dr;
  for (std::size_t i = 0; i < H; ++i) {
    g[off.head_w + i] += dr * h_final[i];
    dh[i] = flat[off.head_w + i] * dr;
  }

  for (std::size_t t = L; t-- > 0;) {
    const Real* x = flat + off.embed + static_cast<std::size_t>(ex.tokens[t]) * E;
    const Real* h_prev = cache.h.data() + t * H;
    const Real* f = cache.f.data() + t * H;
    const Real* c = cache.c.data() + t * H;

    for (std::size_t i = 0; i < H; ++i) {
      df[i] = dh[i] * (c[i] - h_prev[i]);
      dc_pre[i] = dh[i] * f[i] * (Real(1) - c[i] * c[i]);
      dh_prev[i] = dh[i] * (Real(1) - f[i]);
      fh[i] = f[i] * h_prev[i];
    }

    outer_acc(dc_pre.data(), x, g + off.cand_w, H, E);
    outer_acc(dc_pre.data(), fh.data(), g + off.cand_u, H, H);
    for (std::size_t i = 0; i < H; ++i) g[off.cand_b + i] += dc_pre[i];

    std::fill(dx.begin(), dx.end(), Real(0));
    matvec_t_acc(flat + off.cand_w, dc_pre.data(), dx.data(), H, E);

    std::fill(dfh.begin(), dfh.end(), Real(0));
    matvec_t_acc(flat + off.cand_u, dc_pre.data(), dfh.data(), H, H);
    for (std::size_t i = 0; i < H; ++i) {
      df[i] += dfh[i] * h_prev[i];
      dh_prev[i] += dfh[i] * f[i];
      df_pre[i] = df[i] * f[i] * (Real(1) - f[i]);
    }

    outer_acc(df_pre.data(), x, g + off.gate_w, H, E);
    outer_acc(df_pre.data(), h_prev, g + off.gate_u, H, H);
    for (std::size_t i = 0; i < H; ++i) g[off.gate_b + i] += df_pre[i];

    matvec_t_acc(flat + off.gate_w, df_pre.data(), dx.data(), H, E);
    matvec_t_acc(flat + off.gate_u, df_pre.data(), dh_prev.data(), H, H);

    Real* ge = g + off.embed + static_cast<std::size_t>(ex.tokens[t]) * E;
    for (std::size_t j = 0; j < E; ++j) ge[j] += dx[j];

    std::swap(dh, dh_prev);
  }
}

// Additive sinusoidal position code, computed in f64 and cast.
template <class Real>
void position_code(std::size_t t, std::size_t E, Real* out) {
  for (std::size_t i = 0; i < E; i += 2) {
    const double freq =
        std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(E));
    const double angle = static_cast<double>(t) * freq;
    out[i] = static_cast<Real>(std::sin(angle));
    if (i + 1 < E) out[i + 1] = static_cast<Real>(std::cos(angle));
  }
}

template <class Real>
struct AttnCache {
  std::size_t len = 0;
  std::vector<Real> e;    // L x E
  std::vector<Real> k;    // L x H
  std::vector<Real> v;    // L x H
  std::vector<Real> q;    // H
  std::vector<Real> a;    // L
  std::vector<Real> ctx;  // H
  std::vector<Real> o;    // H
};

// Single-head causal attention evaluated at the reward position (the final
// token), so the read-out depends on the whole packed sequence and nothing
// after it.
template <class Real>
double forward_attn(const NetParams<Real>& P, const PackedExample& ex,
                    AttnCache<Real>* cache) {
  const std::size_t E = P.config.embed_dim, H = P.config.hidden_dim;
  const AttnOffsets off = attn_offsets(P.config);
  const Real* flat = P.flat.data();
  const std::size_t L = ex.tokens.size();

  AttnCache<Real> local;
  AttnCache<Real>& c = cache ? *cache : local;
  c.len = L;
  c.e.assign(L * E, Real(0));
  c.k.assign(L * H, Real(0));
  c.v.assign(L * H, Real(0));
  c.q.assign(H, Real(0));
  c.a.assign(L, Real(0));
  c.ctx.assign(H, Real(0));
  c.o.assign(H, Real(0));

  for (std::size_t t = 0; t < L; ++t) {
    Real* e = c.e.data() + t * E;
    position_code(t, E, e);
    const Real* emb =
        flat + off.embed + static_cast<std::size_t>(ex.tokens[t]) * E;
    for (std::size_t j = 0; j < E; ++j) e[j] += emb[j];
    matvec_acc(flat + off.key_w, e, c.k.data() + t * H, H, E);
    matvec_acc(flat + off.value_w, e, c.v.data() + t * H, H, E);
  }

  matvec_acc(flat + off.query_w, c.e.data() + (L - 1) * E, c.q.data(), H, E);

  const Real scale = Real(1) / static_cast<Real>(std::sqrt(static_cast<double>(H)));
  Real max_s = -std::numeric_limits<Real>::infinity();
  for (std::size_t t = 0; t < L; ++t) {
    Real s = 0;
    const Real* kt = c.k.data() + t * H;
    for (std::size_t i = 0; i < H; ++i) s += c.q[i] * kt[i];
    c.a[t] = s * scale;
    max_s = std::max(max_s, c.a[t]);
  }
  Real denom = 0;
  for (std::size_t t = 0; t < L; ++t) {
    c.a[t] = std::exp(c.a[t] - max_s);
    denom += c.a[t];
  }
  for (std::size_t t = 0; t < L; ++t) {
    c.a[t] /= denom;
    const Real* vt = c.v.data() + t * H;
    for (std::size_t i = 0; i < H; ++i) c.ctx[i] += c.a[t] * vt[i];
  }

  for (std::size_t i = 0; i < H; ++i) c.o[i] = flat[off.out_b + i];
  matvec_acc(flat + off.out_w, c.ctx.data(), c.o.data(), H, H);
  for (std::size_t i = 0; i < H; ++i) c.o[i] = std::tanh(c.o[i]);

  Real r = flat[off.head_b];
  for (std::size_t i = 0; i < H; ++i) r += flat[off.head_w + i] * c.o[i];
  return static_cast<double>(r);
}

template <class Real>
void backward_attn(const NetParams<Real>& P, const PackedExample& ex,
                   const AttnCache<Real>& c, double d_reward, Real* g) {
  const std::size_t E = P.config.embed_dim, H = P.config.hidden_dim;
  const AttnOffsets off = attn_offsets(P.config);
  const Real* flat = P.flat.data();
  const std::size_t L = c.len;
  const Real dr = static_cast<Real>(d_reward);
  const Real scale = Real(1) / static_cast<Real>(std::sqrt(static_cast<double>(H)));

  std::vector<Real> do_pre(H), dctx(H, Real(0)), da(L), ds(L), dq(H, Real(0)),
      dk(H), dv(H), de(L * E, Real(0));

  g[off.head_b] += dr;
  for (std::size_t i = 0; i < H; ++i) {
    g[off.head_w + i] += dr * c.o[i];
    do_pre[i] = flat[off.head_w + i] * dr * (Real(1) - c.o[i] * c.o[i]);
  }

  outer_acc(do_pre.data(), c.ctx.data(), g + off.out_w, H, H);
  for (std::size_t i = 0; i < H; ++i) g[off.out_b + i] += do_pre[i];
  matvec_t_acc(flat + off.out_w, do_pre.data(), dctx.data(), H, H);

  Real a_dot = 0;
  for (std::size_t t = 0; t < L; ++t) {
    const Real* vt = c.v.data() + t * H;
    Real acc = 0;
    for (std::size_t i = 0; i < H; ++i) acc += vt[i] * dctx[i];
    da[t] = acc;
    a_dot += c.a[t] * da[t];
  }
  for (std::size_t t = 0; t < L; ++t) ds[t] = c.a[t] * (da[t] - a_dot);

  for (std::size_t t = 0; t < L; ++t) {
    const Real* kt = c.k.data() + t * H;
    const Real* et = c.e.data() + t * E;

    for (std::size_t i = 0; i < H; ++i) {
      dq[i] += ds[t] * kt[i] * scale;
      dk[i] = ds[t] * c.q[i] * scale;
      dv[i] = c.a[t] * dctx[i];
    }
    outer_acc(dk.data(), et, g + off.key_w, H, E);
    outer_acc(dv.data(), et, g + off.value_w, H, E);
    Real* det = de.data() + t * E;
    matvec_t_acc(flat + off.key_w, dk.data(), det, H, E);
    matvec_t_acc(flat + off.value_w, dv.data(), det, H, E);
  }

  const Real* e_last = c.e.data() + (L - 1) * E;
  outer_acc(dq.data(), e_last, g + off.query_w, H, E);
  matvec_t_acc(flat + off.query_w, dq.data(), de.data() + (L - 1) * E, H, E);

  for (std::size_t t = 0; t < L; ++t) {
    Real* ge = g + off.embed + static_cast<std::size_t>(ex.tokens[t]) * E;
    const Real* det = de.data() + t * E;
    for (std::size_t j = 0; j < E; ++j) ge[j] += det[j];
  }
}

template <class Real>
double forward_cached(const NetParams<Real>& P, const PackedExample& ex,
                      RecCache<Real>* rc, AttnCache<Real>* ac) {
  check_example(P.config, ex);
  return P.config.encoder == EncoderKind::gated_recurrent
             ? forward_rec(P, ex, rc)
             : forward_attn(P, ex, ac);
}

template <class Real>
void backward_dispatch(const NetParams<Real>& P, const PackedExample& ex,
                       const RecCache<Real>& rc, const AttnCache<Real>& ac,
                       double d_reward, Real* g) {
  if (P.config.encoder == EncoderKind::gated_recurrent)
    backward_rec(P, ex, rc, d_reward, g);
  else
    backward_attn(P, ex, ac, d_reward, g);
}

}  // namespace

template <class Real>
double forward(const NetParams<Real>& params, const PackedExample& example) {
  check_example(params.config, example);
  require(params.flat.size() == param_count(params.config),
          "net: parameter vector size ", params.flat.size(),
          " does not match config (", param_count(params.config), ")");
  return params.config.encoder == EncoderKind::gated_recurrent
             ? forward_rec<Real>(params, example, nullptr)
             : forward_attn<Real>(params, example, nullptr);
}

template <class Real>
GradResult<Real> grad(const NetParams<Real>& params,
                      std::span<const PackedPair> batch, LossKind kind) {
  (void)kind;  // both stages share the pairwise logistic objective
  require(!batch.empty(), "grad: empty batch");
  require(params.flat.size() == param_count(params.config),
          "net: parameter vector size ", params.flat.size(),
          " does not match config (", param_count(params.config), ")");
  GradResult<Real> out;
  out.grad.assign(params.flat.size(), Real(0));

  RecCache<Real> rc_pos, rc_neg;
  AttnCache<Real> ac_pos, ac_neg;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const PackedPair& pair : batch) {
    const double r_pos = forward_cached(params, pair.pos, &rc_pos, &ac_pos);
    const double r_neg = forward_cached(params, pair.neg, &rc_neg, &ac_neg);
    const double diff = r_pos - r_neg;
    out.loss += pair_logistic_loss(diff) * inv_n;
    const double w = pair_logistic_dloss(diff) * inv_n;
    backward_dispatch(params, pair.pos, rc_pos, ac_pos, w, out.grad.data());
    backward_dispatch(params, pair.neg, rc_neg, ac_neg, -w, out.grad.data());
  }
  return out;
}

FiniteDiffReport finite_diff_check(const NetParams<double>& params,
                                   const PackedPair& example, LossKind kind,
                                   double eps) {
  require(eps >= 1e-7 && eps <= 1e-4, "finite_diff: eps must be in [1e-7, 1e-4]");
  const GradResult<double> analytic =
      grad(params, std::span<const PackedPair>(&example, 1), kind);

  NetParams<double> p = params;
  auto pair_loss = [&]() {
    return pair_logistic_loss(forward(p, example.pos) - forward(p, example.neg));
  };

  FiniteDiffReport report;
  for (std::size_t i = 0; i < p.flat.size(); ++i) {
    const double orig = p.flat[i];
    p.flat[i] = orig + eps;
    const double up = pair_loss();
    p.flat[i] = orig - eps;
    const double down = pair_loss();
    p.flat[i] = orig;
    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic.grad[i];
    const double err =
        std::abs(a - numeric) / (1e-3 + std::max(std::abs(a), std::abs(numeric)));
    if (err > report.max_err) {
      report.max_err = err;
      report.worst_index = i;
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
  }
  report.worst_name = param_name(shape_ledger(params.config), report.worst_index);
  return report;
}

namespace {

void append_u32_le(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_f64_le(std::string& buf, double d) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i)
    buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

constexpr char kCheckpointMagic[8] = {'R', 'M', 'L', 'A', 'B', 'C', 'K', '1'};

}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     const NetParams<double>& params, std::uint64_t root_seed) {
  require(params.flat.size() == param_count(params.config),
          "checkpoint: parameter vector size does not match config");
  json header;
  header["config"] = {{"vocab_total", params.config.vocab_total},
                      {"embed_dim", params.config.embed_dim},
                      {"hidden_dim", params.config.hidden_dim},
                      {"encoder", to_string(params.config.encoder)},
                      {"precision", to_string(params.config.precision)},
                      {"init_seed", params.config.init_seed}};
  header["param_count"] = params.flat.size();
  header["root_seed"] = root_seed;
  const std::string header_str = header.dump();

  std::string buf(kCheckpointMagic, sizeof(kCheckpointMagic));
  append_u32_le(buf, static_cast<std::uint32_t>(header_str.size()));
  buf += header_str;
  for (double d : params.flat) append_f64_le(buf, d);
  write_file_atomic(path, buf);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  require(buf.size() >= sizeof(kCheckpointMagic) + 4 &&
              std::memcmp(buf.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) == 0,
          "checkpoint ", path.string(), ": bad magic");
  std::size_t pos = sizeof(kCheckpointMagic);
  std::uint32_t header_len = 0;
  for (int i = 0; i < 4; ++i)
    header_len |= static_cast<std::uint32_t>(
                      static_cast<unsigned char>(buf[pos + i]))
                  << (8 * i);
  pos += 4;
  require(buf.size() >= pos + header_len, "checkpoint ", path.string(),
          ": truncated header");
  json header;
  try {
    header = json::parse(buf.substr(pos, header_len));
  } catch (const json::exception& e) {
    fail("checkpoint ", path.string(), ": ", e.what());
  }
  pos += header_len;

  Checkpoint ck;
  try {
    const json& jc = header.at("config");
    ck.config.vocab_total = jc.at("vocab_total").get<int>();
    ck.config.embed_dim = jc.at("embed_dim").get<int>();
    ck.config.hidden_dim = jc.at("hidden_dim").get<int>();
    ck.config.encoder = encoder_from_string(jc.at("encoder").get<std::string>());
    ck.config.precision =
        precision_from_string(jc.at("precision").get<std::string>());
    ck.config.init_seed = jc.at("init_seed").get<std::uint64_t>();
    ck.root_seed = header.at("root_seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    fail("checkpoint ", path.string(), ": ", e.what());
  }
  const std::size_t n = header.at("param_count").get<std::size_t>();
  require(n == param_count(ck.config), "checkpoint ", path.string(),
          ": param_count ", n, " does not match config (",
          param_count(ck.config), ")");
  require(buf.size() == pos + 8 * n, "checkpoint ", path.string(),
          ": payload size mismatch");
  ck.flat.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b)
      bits |= static_cast<std::uint64_t>(
                  static_cast<unsigned char>(buf[pos + 8 * i + b]))
              << (8 * b);
    ck.flat[i] = std::bit_cast<double>(bits);
  }
  return ck;
}

template struct NetParams<double>;
template struct NetParams<float>;
template NetParams<double> init_params<double>(const RewardNetConfig&);
template NetParams<float> init_params<float>(const RewardNetConfig&);
template double forward<double>(const NetParams<double>&, const PackedExample&);
template double forward<float>(const NetParams<float>&, const PackedExample&);
template GradResult<double> grad<double>(const NetParams<double>&,
                                         std::span<const PackedPair>, LossKind);
template GradResult<float> grad<float>(const NetParams<float>&,
                                       std::span<const PackedPair>, LossKind);

}  // namespace rmlab
