#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "erc/common.hpp"
#include "erc/rng.hpp"
#include "erc/windowing.hpp"

namespace erc {

// A small trainable transformer encoder classifier, written directly against
// Eigen with hand-derived backward passes (no autograd framework), so
// gradients are exact for the implemented graph and finite-difference
// checkable at 64-bit precision.
//
// Two context strategies, freely combinable:
//  - masked context pooling ("mwce"): the full context+target sequence is
//    encoded jointly, but attention pooling and the classifier see target
//    positions only;
//  - context-vector concatenation ("ccfte"): context positions are pooled
//    into a vector C = tanh(FC(AttentionPool(context rows))) that is
//    concatenated to each pooled-path embedding before a widened pooling and
//    classifier head. Empty-context samples use a learned default C.

struct EncoderConfig {
  Modality modality = Modality::text;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 128;
  int max_positions = 256;
  int vocab_size = 0;  // text mode, includes the unknown-token id 0
  int d_feat = 0;      // acoustic mode
  double dropout_rate = 0.1;
  int d_ctx = 32;
  int n_classes = kNumClasses;
  bool mwce = true;
  bool ccfte = false;

  int pooled_width() const { return ccfte ? d_model + d_ctx : d_model; }
  bool operator==(const EncoderConfig&) const = default;
};

inline void validate_config(const EncoderConfig& c) {
  if (c.d_model < 1 || c.n_heads < 1 || c.d_ff < 1 || c.max_positions < 1)
    throw DataError("encoder dimensions must be >= 1");
  if (c.n_layers < 0) throw DataError("n_layers must be >= 0");
  if (c.d_model % c.n_heads != 0)
    throw DataError("d_model must be divisible by n_heads");
  if (c.modality == Modality::text && c.vocab_size < 1)
    throw DataError("text mode requires vocab_size >= 1");
  if (c.modality == Modality::acoustic && c.d_feat < 1)
    throw DataError("acoustic mode requires d_feat >= 1");
  if (c.dropout_rate < 0.0 || c.dropout_rate >= 1.0)
    throw DataError("dropout_rate must lie in [0,1)");
  if (c.ccfte && c.d_ctx < 1) throw DataError("ccfte requires d_ctx >= 1");
  if (c.n_classes != kNumClasses)
    throw DataError("n_classes must be " + std::to_string(kNumClasses));
}

inline nlohmann::json config_to_json(const EncoderConfig& c) {
  return {{"modality", std::string(to_string(c.modality))},
          {"d_model", c.d_model},
          {"n_layers", c.n_layers},
          {"n_heads", c.n_heads},
          {"d_ff", c.d_ff},
          {"max_positions", c.max_positions},
          {"vocab_size", c.vocab_size},
          {"d_feat", c.d_feat},
          {"dropout_rate", c.dropout_rate},
          {"d_ctx", c.d_ctx},
          {"n_classes", c.n_classes},
          {"mwce", c.mwce},
          {"ccfte", c.ccfte}};
}

inline EncoderConfig config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.modality = modality_from_string(j.at("modality").get<std::string>());
  j.at("d_model").get_to(c.d_model);
  j.at("n_layers").get_to(c.n_layers);
  j.at("n_heads").get_to(c.n_heads);
  j.at("d_ff").get_to(c.d_ff);
  j.at("max_positions").get_to(c.max_positions);
  j.at("vocab_size").get_to(c.vocab_size);
  j.at("d_feat").get_to(c.d_feat);
  j.at("dropout_rate").get_to(c.dropout_rate);
  j.at("d_ctx").get_to(c.d_ctx);
  j.at("n_classes").get_to(c.n_classes);
  j.at("mwce").get_to(c.mwce);
  j.at("ccfte").get_to(c.ccfte);
  validate_config(c);
  return c;
}

// ---------------------------------------------------------------------------
// Vocabulary: sorted corpus tokens with id 0 reserved for unknowns.
// ---------------------------------------------------------------------------

struct Vocabulary {
  std::vector<std::string> tokens;  // ids 1..tokens.size()
  std::map<std::string, int> index;

  static Vocabulary from_corpus(const Corpus& corpus) {
    Vocabulary v;
    v.tokens = corpus.vocabulary();
    for (std::size_t i = 0; i < v.tokens.size(); ++i)
      v.index[v.tokens[i]] = static_cast<int>(i) + 1;
    return v;
  }
  int id(const std::string& token) const {
    auto it = index.find(token);
    return it == index.end() ? 0 : it->second;
  }
  int size() const { return static_cast<int>(tokens.size()) + 1; }
};

// ---------------------------------------------------------------------------
// Model-ready sample: integer token ids (text) or frame rows (acoustic) plus
// the role mask and label.
// ---------------------------------------------------------------------------

struct ModelSample {
  std::string segment_id;
  std::string speaker_id;
  std::vector<int> token_ids;  // text mode
  Matrix frames{0, 0};         // acoustic mode
  std::vector<std::uint8_t> role_mask;
  int label = 0;

  Eigen::Index n_positions() const {
    return static_cast<Eigen::Index>(role_mask.size());
  }
};

inline ModelSample make_model_sample(const Vocabulary& vocab,
                                     const ContextualSample& s) {
  ModelSample m;
  m.segment_id = s.segment_id;
  m.speaker_id = s.speaker_id;
  for (const auto& t : s.positions()) m.token_ids.push_back(vocab.id(t));
  m.role_mask = s.role_mask();
  m.label = static_cast<int>(s.label);
  return m;
}

inline ModelSample make_model_sample(const AcousticContextualSample& s) {
  ModelSample m;
  m.segment_id = s.segment_id;
  m.speaker_id = s.speaker_id;
  m.frames = s.positions();
  m.role_mask = s.role_mask();
  m.label = static_cast<int>(s.label);
  return m;
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct LayerParams {
  Matrix wq, bq, wk, bk, wv, bv, wo, bo;
  Matrix ln1_g, ln1_b;
  Matrix ff_w1, ff_b1, ff_w2, ff_b2;
  Matrix ln2_g, ln2_b;
};

struct EncoderParams {
  EncoderConfig config;
  Matrix tok_embed;           // text: [vocab_size x d_model]
  Matrix frame_w, frame_b;    // acoustic: [d_feat x d_model], [1 x d_model]
  Matrix pos_embed;           // [max_positions x d_model]
  std::vector<LayerParams> layers;
  Matrix ctx_pool_q, ctx_fc_w, ctx_fc_b, ctx_default;  // ccfte only
  Matrix pool_q;  // [1 x pooled_width]
  Matrix cls_w;   // [pooled_width x n_classes]
  Matrix cls_b;   // [1 x n_classes]

  // Visits every active tensor in a fixed order with a stable name. The
  // order defines checkpoint layout; names drive warm-start matching.
  template <typename F>
  void for_each_named(F&& f) {
    if (config.modality == Modality::text) {
      f("embed.tokens", tok_embed);
    } else {
      f("embed.frames.w", frame_w);
      f("embed.frames.b", frame_b);
    }
    f("embed.positions", pos_embed);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string p = "layers." + std::to_string(l) + ".";
      LayerParams& L = layers[l];
      f(p + "attn.wq", L.wq);
      f(p + "attn.bq", L.bq);
      f(p + "attn.wk", L.wk);
      f(p + "attn.bk", L.bk);
      f(p + "attn.wv", L.wv);
      f(p + "attn.bv", L.bv);
      f(p + "attn.wo", L.wo);
      f(p + "attn.bo", L.bo);
      f(p + "ln1.gamma", L.ln1_g);
      f(p + "ln1.beta", L.ln1_b);
      f(p + "ff.w1", L.ff_w1);
      f(p + "ff.b1", L.ff_b1);
      f(p + "ff.w2", L.ff_w2);
      f(p + "ff.b2", L.ff_b2);
      f(p + "ln2.gamma", L.ln2_g);
      f(p + "ln2.beta", L.ln2_b);
    }
    if (config.ccfte) {
      f("ctx.pool.q", ctx_pool_q);
      f("ctx.fc.w", ctx_fc_w);
      f("ctx.fc.b", ctx_fc_b);
      f("ctx.default", ctx_default);
    }
    f("pool.q", pool_q);
    f("cls.w", cls_w);
    f("cls.b", cls_b);
  }
  template <typename F>
  void for_each_named(F&& f) const {
    const_cast<EncoderParams*>(this)->for_each_named(
        [&](const std::string& name, Matrix& m) {
          f(name, static_cast<const Matrix&>(m));
        });
  }

  std::size_t n_parameters() const {
    std::size_t n = 0;
    for_each_named([&](const std::string&, const Matrix& m) {
      n += static_cast<std::size_t>(m.size());
    });
    return n;
  }
};

// Allocates all tensors for `config` with the given per-tensor fill.
template <typename Fill>
inline EncoderParams make_params(const EncoderConfig& config, Fill&& fill) {
  validate_config(config);
  EncoderParams p;
  p.config = config;
  const int d = config.d_model;
  auto alloc = [&](Matrix& m, Eigen::Index r, Eigen::Index c,
                   const char* kind) { m = fill(r, c, kind); };
  if (config.modality == Modality::text) {
    alloc(p.tok_embed, config.vocab_size, d, "embed");
  } else {
    alloc(p.frame_w, config.d_feat, d, "weight");
    alloc(p.frame_b, 1, d, "bias");
  }
  alloc(p.pos_embed, config.max_positions, d, "embed");
  p.layers.resize(static_cast<std::size_t>(config.n_layers));
  for (auto& L : p.layers) {
    alloc(L.wq, d, d, "weight");
    alloc(L.bq, 1, d, "bias");
    alloc(L.wk, d, d, "weight");
    alloc(L.bk, 1, d, "bias");
    alloc(L.wv, d, d, "weight");
    alloc(L.bv, 1, d, "bias");
    alloc(L.wo, d, d, "weight");
    alloc(L.bo, 1, d, "bias");
    alloc(L.ln1_g, 1, d, "ln_gain");
    alloc(L.ln1_b, 1, d, "bias");
    alloc(L.ff_w1, d, config.d_ff, "weight");
    alloc(L.ff_b1, 1, config.d_ff, "bias");
    alloc(L.ff_w2, config.d_ff, d, "weight");
    alloc(L.ff_b2, 1, d, "bias");
    alloc(L.ln2_g, 1, d, "ln_gain");
    alloc(L.ln2_b, 1, d, "bias");
  }
  if (config.ccfte) {
    alloc(p.ctx_pool_q, 1, d, "query");
    alloc(p.ctx_fc_w, d, config.d_ctx, "weight");
    alloc(p.ctx_fc_b, 1, config.d_ctx, "bias");
    alloc(p.ctx_default, 1, config.d_ctx, "bias");
  }
  alloc(p.pool_q, 1, config.pooled_width(), "query");
  alloc(p.cls_w, config.pooled_width(), config.n_classes, "weight");
  alloc(p.cls_b, 1, config.n_classes, "bias");
  return p;
}

// Deterministic initialization: Xavier-scaled normals for weights and
// embeddings, zeros for biases, ones for layer-norm gains. Draw order is the
// for_each_named tensor order, element-major within each tensor.
inline EncoderParams init_params(const EncoderConfig& config, Rng& rng) {
  return make_params(config, [&](Eigen::Index r, Eigen::Index c,
                                 const std::string& kind) {
    Matrix m(r, c);
    if (kind == "bias") {
      m.setZero();
    } else if (kind == "ln_gain") {
      m.setOnes();
    } else {
      const double scale = kind == "embed"
                               ? 0.1
                               : std::sqrt(2.0 / static_cast<double>(r + c));
      for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
    }
    return m;
  });
}

inline EncoderParams zeros_like(const EncoderParams& p) {
  return make_params(p.config, [](Eigen::Index r, Eigen::Index c, const char*) {
    return Matrix::Zero(r, c).eval();
  });
}

// ---------------------------------------------------------------------------
// Numerics
// ---------------------------------------------------------------------------

inline constexpr double kLayerNormEps = 1e-5;

namespace detail {

inline void softmax_rows_inplace(Matrix& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double mx = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - mx).exp();
    s.row(i) /= s.row(i).sum();
  }
}

// d(softmax)/ds given the softmax output p and upstream dp, one row.
inline Eigen::RowVectorXd softmax_backward_row(const Eigen::RowVectorXd& p,
                                               const Eigen::RowVectorXd& dp) {
  const double dot = (dp.array() * p.array()).sum();
  return (p.array() * (dp.array() - dot)).matrix();
}

struct LayerNormCache {
  Matrix xhat;
  Eigen::VectorXd inv_std;
};

inline Matrix layer_norm_forward(const Matrix& x, const Matrix& gamma,
                                 const Matrix& beta, LayerNormCache& cache) {
  const Eigen::Index n = x.rows(), d = x.cols();
  cache.xhat.resize(n, d);
  cache.inv_std.resize(n);
  Matrix out(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().mean();
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.inv_std(i) = inv;
    cache.xhat.row(i) = (x.row(i).array() - mean) * inv;
    out.row(i) =
        cache.xhat.row(i).cwiseProduct(gamma.row(0)) + beta.row(0);
  }
  return out;
}

inline Matrix layer_norm_backward(const Matrix& dout, const Matrix& gamma,
                                  const LayerNormCache& cache, Matrix& dgamma,
                                  Matrix& dbeta) {
  const Eigen::Index n = dout.rows(), d = dout.cols();
  Matrix dx(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    dgamma.row(0) += dout.row(i).cwiseProduct(cache.xhat.row(i));
    dbeta.row(0) += dout.row(i);
    const Eigen::RowVectorXd dxhat = dout.row(i).cwiseProduct(gamma.row(0));
    const double m1 = dxhat.mean();
    const double m2 = dxhat.cwiseProduct(cache.xhat.row(i)).mean();
    dx.row(i) = (dxhat.array() - m1 - cache.xhat.row(i).array() * m2) *
                cache.inv_std(i);
  }
  return dx;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Forward pass with caches sufficient for an exact backward pass.
// ---------------------------------------------------------------------------

namespace detail {

struct LayerCache {
  Matrix x_in;                 // layer input
  Matrix q, k, v;              // projected, full width
  std::vector<Matrix> attn_p;  // per-head softmax matrices [n x n]
  Matrix o_cat;                // concatenated head outputs before wo
  Matrix attn_drop;            // dropout keep/scale mask (empty = off)
  LayerNormCache ln1;
  Matrix x_mid;                // after ln1
  Matrix ff_z1;                // pre-activation
  Matrix ff_h;                 // relu output
  Matrix ff_drop;
  LayerNormCache ln2;
};

struct PoolCache {
  std::vector<Eigen::Index> rows;  // pooled row indices
  Eigen::VectorXd alpha;
  Matrix pooled;  // [1 x w]
};

struct ForwardCache {
  Matrix x0;
  std::vector<LayerCache> layers;
  Matrix h;  // final embeddings
  // ccfte
  bool has_context = false;
  PoolCache ctx_pool;
  Matrix ctx_pre_tanh;  // [1 x d_ctx]
  Matrix ctx_c;         // [1 x d_ctx]
  Matrix widened;       // rows fed to the final pooling
  PoolCache pool;
  Matrix logits;  // [1 x n_classes]
};

// Attention pooling over the selected rows of m with query q (scores scaled
// by sqrt(width)). Returns [1 x w]; fills cache.
inline Matrix attention_pool_rows(const Matrix& m,
                                  const std::vector<Eigen::Index>& rows,
                                  const Matrix& q, PoolCache& cache) {
  if (rows.empty()) throw DataError("attention pooling over an empty mask");
  const double scale = 1.0 / std::sqrt(static_cast<double>(m.cols()));
  Eigen::VectorXd s(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    s(static_cast<Eigen::Index>(i)) = m.row(rows[i]).dot(q.row(0)) * scale;
  const double mx = s.maxCoeff();
  Eigen::VectorXd a = (s.array() - mx).exp();
  a /= a.sum();
  Matrix pooled = Matrix::Zero(1, m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    pooled.row(0) += a(static_cast<Eigen::Index>(i)) * m.row(rows[i]);
  cache.rows = rows;
  cache.alpha = a;
  cache.pooled = pooled;
  return pooled;
}

// Backward of attention_pool_rows: accumulates into dm (selected rows) and
// dq given upstream dpooled.
inline void attention_pool_backward(const Matrix& m, const Matrix& q,
                                    const PoolCache& cache,
                                    const Matrix& dpooled, Matrix& dm,
                                    Matrix& dq) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(m.cols()));
  const auto& rows = cache.rows;
  const auto& a = cache.alpha;
  Eigen::VectorXd dalpha(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    dm.row(rows[i]) += a(static_cast<Eigen::Index>(i)) * dpooled.row(0);
    dalpha(static_cast<Eigen::Index>(i)) = dpooled.row(0).dot(m.row(rows[i]));
  }
  const double dot = (dalpha.array() * a.array()).sum();
  const Eigen::VectorXd ds = (a.array() * (dalpha.array() - dot)).matrix();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    dq.row(0) += ds(static_cast<Eigen::Index>(i)) * scale * m.row(rows[i]);
    dm.row(rows[i]) += ds(static_cast<Eigen::Index>(i)) * scale * q.row(0);
  }
}

inline Matrix dropout_mask(Eigen::Index r, Eigen::Index c, double rate,
                           Rng* rng) {
  if (rate <= 0.0 || rng == nullptr) return Matrix();
  Matrix m(r, c);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j)
      m(i, j) = rng->uniform01() < rate ? 0.0 : keep_scale;
  return m;
}

inline Matrix embed_input(const EncoderParams& p, const ModelSample& s) {
  const auto& cfg = p.config;
  const Eigen::Index n = s.n_positions();
  if (n == 0) throw DataError("sample has no positions");
  if (n > cfg.max_positions)
    throw DataError("sample " + s.segment_id + " has " + std::to_string(n) +
                    " positions, exceeding max_positions " +
                    std::to_string(cfg.max_positions));
  Matrix x(n, cfg.d_model);
  if (cfg.modality == Modality::text) {
    if (static_cast<Eigen::Index>(s.token_ids.size()) != n)
      throw DataError("text sample token/mask length mismatch");
    for (Eigen::Index i = 0; i < n; ++i) {
      const int id = s.token_ids[static_cast<std::size_t>(i)];
      if (id < 0 || id >= cfg.vocab_size)
        throw DataError("token id out of range");
      x.row(i) = p.tok_embed.row(id);
    }
  } else {
    if (s.frames.rows() != n || s.frames.cols() != cfg.d_feat)
      throw DataError("acoustic sample frame/mask shape mismatch");
    x = s.frames * p.frame_w;
    x.rowwise() += p.frame_b.row(0);
  }
  x += p.pos_embed.topRows(n);
  return x;
}

// Multi-head self-attention + feed-forward block, post-layer-norm residuals.
inline Matrix layer_forward(const EncoderParams& p, const LayerParams& L,
                            const Matrix& x_in, double dropout_rate, Rng* rng,
                            LayerCache& cache) {
  const Eigen::Index n = x_in.rows();
  const int d = p.config.d_model;
  const int h = p.config.n_heads;
  const int dh = d / h;
  cache.x_in = x_in;
  cache.q = x_in * L.wq;
  cache.q.rowwise() += L.bq.row(0);
  cache.k = x_in * L.wk;
  cache.k.rowwise() += L.bk.row(0);
  cache.v = x_in * L.wv;
  cache.v.rowwise() += L.bv.row(0);

  cache.attn_p.assign(static_cast<std::size_t>(h), Matrix());
  cache.o_cat.resize(n, d);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int head = 0; head < h; ++head) {
    const auto qh = cache.q.middleCols(head * dh, dh);
    const auto kh = cache.k.middleCols(head * dh, dh);
    const auto vh = cache.v.middleCols(head * dh, dh);
    Matrix s = qh * kh.transpose() * scale;
    softmax_rows_inplace(s);
    cache.attn_p[static_cast<std::size_t>(head)] = s;
    cache.o_cat.middleCols(head * dh, dh) = s * vh;
  }
  Matrix attn_out = cache.o_cat * L.wo;
  attn_out.rowwise() += L.bo.row(0);

  cache.attn_drop = dropout_mask(n, d, dropout_rate, rng);
  if (cache.attn_drop.size() > 0)
    attn_out = attn_out.cwiseProduct(cache.attn_drop);
  const Matrix r1 = x_in + attn_out;
  cache.x_mid = layer_norm_forward(r1, L.ln1_g, L.ln1_b, cache.ln1);

  cache.ff_z1 = cache.x_mid * L.ff_w1;
  cache.ff_z1.rowwise() += L.ff_b1.row(0);
  cache.ff_h = cache.ff_z1.cwiseMax(0.0);
  Matrix ff_out = cache.ff_h * L.ff_w2;
  ff_out.rowwise() += L.ff_b2.row(0);
  cache.ff_drop = dropout_mask(n, d, dropout_rate, rng);
  if (cache.ff_drop.size() > 0) ff_out = ff_out.cwiseProduct(cache.ff_drop);
  const Matrix r2 = cache.x_mid + ff_out;
  return layer_norm_forward(r2, L.ln2_g, L.ln2_b, cache.ln2);
}

inline void layer_backward(const EncoderParams& p, const LayerParams& L,
                           LayerParams& G, const LayerCache& cache,
                           const Matrix& dout, Matrix& dx_in) {
  const int d = p.config.d_model;
  const int h = p.config.n_heads;
  const int dh = d / h;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // ln2
  Matrix dr2 = layer_norm_backward(dout, L.ln2_g, cache.ln2, G.ln2_g, G.ln2_b);
  // ff branch
  Matrix dff_out = dr2;
  if (cache.ff_drop.size() > 0) dff_out = dff_out.cwiseProduct(cache.ff_drop);
  G.ff_w2 += cache.ff_h.transpose() * dff_out;
  G.ff_b2.row(0) += dff_out.colwise().sum();
  Matrix dff_h = dff_out * L.ff_w2.transpose();
  Matrix dz1 =
      dff_h.cwiseProduct((cache.ff_z1.array() > 0.0).cast<double>().matrix());
  G.ff_w1 += cache.x_mid.transpose() * dz1;
  G.ff_b1.row(0) += dz1.colwise().sum();
  Matrix dx_mid = dr2 + dz1 * L.ff_w1.transpose();
  // ln1
  Matrix dr1 =
      layer_norm_backward(dx_mid, L.ln1_g, cache.ln1, G.ln1_g, G.ln1_b);
  dx_in += dr1;
  Matrix dattn_out = dr1;
  if (cache.attn_drop.size() > 0)
    dattn_out = dattn_out.cwiseProduct(cache.attn_drop);
  // output projection
  G.wo += cache.o_cat.transpose() * dattn_out;
  G.bo.row(0) += dattn_out.colwise().sum();
  Matrix do_cat = dattn_out * L.wo.transpose();
  // heads
  Matrix dq = Matrix::Zero(cache.q.rows(), d);
  Matrix dk = Matrix::Zero(cache.q.rows(), d);
  Matrix dv = Matrix::Zero(cache.q.rows(), d);
  for (int head = 0; head < h; ++head) {
    const auto qh = cache.q.middleCols(head * dh, dh);
    const auto kh = cache.k.middleCols(head * dh, dh);
    const auto vh = cache.v.middleCols(head * dh, dh);
    const Matrix& attn = cache.attn_p[static_cast<std::size_t>(head)];
    const auto doh = do_cat.middleCols(head * dh, dh);
    dv.middleCols(head * dh, dh) = attn.transpose() * doh;
    Matrix dp = doh * vh.transpose();
    Matrix ds(dp.rows(), dp.cols());
    for (Eigen::Index i = 0; i < dp.rows(); ++i)
      ds.row(i) = softmax_backward_row(attn.row(i), dp.row(i));
    dq.middleCols(head * dh, dh) = ds * kh * scale;
    dk.middleCols(head * dh, dh) = ds.transpose() * qh * scale;
  }
  G.wq += cache.x_in.transpose() * dq;
  G.bq.row(0) += dq.colwise().sum();
  G.wk += cache.x_in.transpose() * dk;
  G.bk.row(0) += dk.colwise().sum();
  G.wv += cache.x_in.transpose() * dv;
  G.bv.row(0) += dv.colwise().sum();
  dx_in += dq * L.wq.transpose() + dk * L.wk.transpose() + dv * L.wv.transpose();
}

inline std::vector<Eigen::Index> mask_rows(const std::vector<std::uint8_t>& mask,
                                           std::uint8_t role) {
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i] == role) rows.push_back(static_cast<Eigen::Index>(i));
  return rows;
}

// Everything after the encoder: pooling path + classifier. Kept separate so
// masking properties can be tested directly on post-encoder embeddings.
inline Matrix head_forward(const EncoderParams& p, const Matrix& h,
                           const std::vector<std::uint8_t>& role_mask,
                           ForwardCache& cache) {
  const auto& cfg = p.config;
  cache.h = h;
  const auto target_rows = mask_rows(role_mask, kRoleTarget);
  if (target_rows.empty()) throw DataError("sample has no target positions");
  const auto pool_base_rows =
      cfg.mwce ? target_rows
               : [&] {
                   std::vector<Eigen::Index> all(role_mask.size());
                   for (std::size_t i = 0; i < role_mask.size(); ++i)
                     all[i] = static_cast<Eigen::Index>(i);
                   return all;
                 }();

  if (!cfg.ccfte) {
    attention_pool_rows(h, pool_base_rows, p.pool_q, cache.pool);
  } else {
    const auto context_rows = mask_rows(role_mask, kRoleContext);
    cache.has_context = !context_rows.empty();
    if (cache.has_context) {
      const Matrix pooled_c =
          attention_pool_rows(h, context_rows, p.ctx_pool_q, cache.ctx_pool);
      cache.ctx_pre_tanh = pooled_c * p.ctx_fc_w;
      cache.ctx_pre_tanh.row(0) += p.ctx_fc_b.row(0);
      cache.ctx_c = cache.ctx_pre_tanh.array().tanh().matrix();
    } else {
      cache.ctx_c = p.ctx_default;
    }
    // Concatenate C to each pooled-path row, then pool over the widened rows.
    cache.widened.resize(static_cast<Eigen::Index>(pool_base_rows.size()),
                         cfg.d_model + cfg.d_ctx);
    for (std::size_t i = 0; i < pool_base_rows.size(); ++i) {
      cache.widened.row(static_cast<Eigen::Index>(i))
          << h.row(pool_base_rows[i]),
          cache.ctx_c.row(0);
    }
    std::vector<Eigen::Index> widened_rows(pool_base_rows.size());
    for (std::size_t i = 0; i < pool_base_rows.size(); ++i)
      widened_rows[i] = static_cast<Eigen::Index>(i);
    attention_pool_rows(cache.widened, widened_rows, p.pool_q, cache.pool);
  }
  cache.logits = cache.pool.pooled * p.cls_w;
  cache.logits.row(0) += p.cls_b.row(0);
  return cache.logits;
}

// Backward of head_forward; returns dH and accumulates parameter grads.
inline Matrix head_backward(const EncoderParams& p, EncoderParams& g,
                            const std::vector<std::uint8_t>& role_mask,
                            const ForwardCache& cache, const Matrix& dlogits) {
  const auto& cfg = p.config;
  Matrix dh = Matrix::Zero(cache.h.rows(), cache.h.cols());
  g.cls_w += cache.pool.pooled.transpose() * dlogits;
  g.cls_b.row(0) += dlogits.row(0);
  const Matrix dpooled = dlogits * p.cls_w.transpose();

  if (!cfg.ccfte) {
    attention_pool_backward(cache.h, p.pool_q, cache.pool, dpooled, dh,
                            g.pool_q);
    return dh;
  }

  Matrix dwidened = Matrix::Zero(cache.widened.rows(), cache.widened.cols());
  attention_pool_backward(cache.widened, p.pool_q, cache.pool, dpooled,
                          dwidened, g.pool_q);
  // Split widened gradients back into embedding rows and the context vector.
  const auto target_rows = mask_rows(role_mask, kRoleTarget);
  const auto pool_base_rows =
      cfg.mwce ? target_rows
               : [&] {
                   std::vector<Eigen::Index> all(role_mask.size());
                   for (std::size_t i = 0; i < role_mask.size(); ++i)
                     all[i] = static_cast<Eigen::Index>(i);
                   return all;
                 }();
  Matrix dc = Matrix::Zero(1, cfg.d_ctx);
  for (std::size_t i = 0; i < pool_base_rows.size(); ++i) {
    dh.row(pool_base_rows[i]) +=
        dwidened.row(static_cast<Eigen::Index>(i)).head(cfg.d_model);
    dc.row(0) += dwidened.row(static_cast<Eigen::Index>(i)).tail(cfg.d_ctx);
  }
  if (cache.has_context) {
    const Matrix du =
        dc.cwiseProduct((1.0 - cache.ctx_c.array().square()).matrix());
    g.ctx_fc_w += cache.ctx_pool.pooled.transpose() * du;
    g.ctx_fc_b.row(0) += du.row(0);
    const Matrix dpooled_c = du * p.ctx_fc_w.transpose();
    attention_pool_backward(cache.h, p.ctx_pool_q, cache.ctx_pool, dpooled_c,
                            dh, g.ctx_pool_q);
  } else {
    g.ctx_default += dc;
  }
  return dh;
}

inline Matrix encode_with_cache(const EncoderParams& p, const ModelSample& s,
                                double dropout_rate, Rng* rng,
                                ForwardCache& cache) {
  cache.x0 = embed_input(p, s);
  cache.layers.resize(p.layers.size());
  Matrix x = cache.x0;
  for (std::size_t l = 0; l < p.layers.size(); ++l)
    x = layer_forward(p, p.layers[l], x, dropout_rate, rng, cache.layers[l]);
  cache.h = x;
  return x;
}

inline void encode_backward(const EncoderParams& p, EncoderParams& g,
                            const ModelSample& s, const ForwardCache& cache,
                            Matrix dh) {
  for (std::size_t l = p.layers.size(); l-- > 0;) {
    Matrix dx_in = Matrix::Zero(dh.rows(), dh.cols());
    layer_backward(p, p.layers[l], g.layers[l], cache.layers[l], dh, dx_in);
    dh = std::move(dx_in);
  }
  // dh is now the gradient at x0 = embedding + positional rows.
  const Eigen::Index n = s.n_positions();
  g.pos_embed.topRows(n) += dh;
  if (p.config.modality == Modality::text) {
    for (Eigen::Index i = 0; i < n; ++i)
      g.tok_embed.row(s.token_ids[static_cast<std::size_t>(i)]) += dh.row(i);
  } else {
    g.frame_w += s.frames.transpose() * dh;
    g.frame_b.row(0) += dh.colwise().sum();
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

// Transformer encoding of the full concatenated sequence (no dropout).
inline Matrix encode(const EncoderParams& params, const ModelSample& sample) {
  detail::ForwardCache cache;
  return detail::encode_with_cache(params, sample, 0.0, nullptr, cache);
}

// Attention pooling over positions where pool_mask is nonzero.
inline Eigen::VectorXd attention_pool(const Matrix& embeddings,
                                      const std::vector<std::uint8_t>& pool_mask,
                                      const Matrix& query) {
  if (static_cast<Eigen::Index>(pool_mask.size()) != embeddings.rows())
    throw DataError("pool mask length mismatch");
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < pool_mask.size(); ++i)
    if (pool_mask[i]) rows.push_back(static_cast<Eigen::Index>(i));
  detail::PoolCache cache;
  const Matrix pooled = detail::attention_pool_rows(embeddings, rows, query, cache);
  return pooled.row(0).transpose();
}

// Pooling weights over the selected positions (diagnostic/testing aid).
inline Eigen::VectorXd attention_pool_weights(
    const Matrix& embeddings, const std::vector<std::uint8_t>& pool_mask,
    const Matrix& query) {
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < pool_mask.size(); ++i)
    if (pool_mask[i]) rows.push_back(static_cast<Eigen::Index>(i));
  detail::PoolCache cache;
  detail::attention_pool_rows(embeddings, rows, query, cache);
  return cache.alpha;
}

// Context vector from post-encoder embeddings (context positions only).
inline Eigen::VectorXd context_vector(const Matrix& embeddings,
                                      const std::vector<std::uint8_t>& role_mask,
                                      const EncoderParams& params) {
  if (!params.config.ccfte)
    throw DataError("context_vector requires a ccfte-enabled config");
  const auto rows = detail::mask_rows(role_mask, kRoleContext);
  if (rows.empty()) throw DataError("sample has no context positions");
  detail::PoolCache cache;
  const Matrix pooled =
      detail::attention_pool_rows(embeddings, rows, params.ctx_pool_q, cache);
  Matrix u = pooled * params.ctx_fc_w;
  u.row(0) += params.ctx_fc_b.row(0);
  return u.array().tanh().matrix().row(0).transpose();
}

// Post-encoder head only: embeddings -> logits (exposes the masking path).
inline Eigen::Vector4d logits_from_embeddings(
    const EncoderParams& params, const Matrix& embeddings,
    const std::vector<std::uint8_t>& role_mask) {
  detail::ForwardCache cache;
  const Matrix logits = detail::head_forward(params, embeddings, role_mask, cache);
  return logits.row(0).transpose();
}

// Full inference path (no dropout).
inline Eigen::Vector4d forward(const EncoderParams& params,
                               const ModelSample& sample) {
  detail::ForwardCache cache;
  detail::encode_with_cache(params, sample, 0.0, nullptr, cache);
  const Matrix logits =
      detail::head_forward(params, cache.h, sample.role_mask, cache);
  return logits.row(0).transpose();
}

inline Eigen::Vector4d softmax4(const Eigen::Vector4d& z) {
  const double mx = z.maxCoeff();
  Eigen::Vector4d e = (z.array() - mx).exp();
  return e / e.sum();
}

// Argmax with ties resolved to the smallest class index.
inline int predict(const EncoderParams& params, const ModelSample& sample) {
  const Eigen::Vector4d z = forward(params, sample);
  int best = 0;
  for (int c = 1; c < kNumClasses; ++c)
    if (z(c) > z(best)) best = c;
  return best;
}

// Mean cross-entropy over the batch plus exact gradients. Dropout masks are
// drawn from `dropout_rng` (pass nullptr for none); draw order is fixed:
// samples in batch order, layers in depth order, attention site before
// feed-forward site, elements row-major.
inline std::pair<double, EncoderParams> loss_and_grad(
    const EncoderParams& params, const std::vector<ModelSample>& batch,
    Rng* dropout_rng = nullptr) {
  if (batch.empty()) throw DataError("loss_and_grad: empty batch");
  EncoderParams grads = zeros_like(params);
  double loss = 0.0;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (const ModelSample& s : batch) {
    detail::ForwardCache cache;
    detail::encode_with_cache(params, s, params.config.dropout_rate,
                              dropout_rng, cache);
    detail::head_forward(params, cache.h, s.role_mask, cache);
    // Stable log-softmax cross-entropy.
    const Eigen::RowVectorXd z = cache.logits.row(0);
    const double mx = z.maxCoeff();
    const double lse = mx + std::log((z.array() - mx).exp().sum());
    loss += (lse - z(s.label)) * inv_b;
    Eigen::RowVectorXd dz = (z.array() - lse).exp();
    dz(s.label) -= 1.0;
    dz *= inv_b;
    Matrix dlogits(1, kNumClasses);
    dlogits.row(0) = dz;
    const Matrix dh =
        detail::head_backward(params, grads, s.role_mask, cache, dlogits);
    detail::encode_backward(params, grads, s, cache, dh);
  }
  if (!std::isfinite(loss))
    throw DivergenceError("non-finite training loss");
  return {loss, std::move(grads)};
}

// ---------------------------------------------------------------------------
// Checkpoints: binary container with a JSON config header; byte-exact
// round-trip (load(save(p)) == p).
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[] = "ERCCKPT1";

inline std::string serialize_params(const EncoderParams& params) {
  std::string out(kCheckpointMagic);
  out += '\n';
  out += config_to_json(params.config).dump();
  out += '\n';
  auto put_u64 = [&out](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
  };
  std::uint64_t n_tensors = 0;
  params.for_each_named([&](const std::string&, const Matrix&) { ++n_tensors; });
  put_u64(n_tensors);
  params.for_each_named([&](const std::string& name, const Matrix& m) {
    put_u64(name.size());
    out += name;
    put_u64(static_cast<std::uint64_t>(m.rows()));
    put_u64(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const double v = m(i, j);
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(v));
        std::memcpy(&bits, &v, sizeof(bits));
        put_u64(bits);
      }
  });
  return out;
}

inline EncoderParams deserialize_params(const std::string& bytes) {
  std::size_t pos = 0;
  auto need = [&](std::size_t n) {
    if (pos + n > bytes.size()) throw DataError("truncated checkpoint");
  };
  auto get_line = [&]() {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw DataError("truncated checkpoint header");
    std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };
  if (get_line() != kCheckpointMagic)
    throw DataError("not a checkpoint file (bad magic)");
  EncoderConfig config;
  try {
    config = config_from_json(nlohmann::json::parse(get_line()));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("bad checkpoint config: ") + e.what());
  }
  auto get_u64 = [&]() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i]))
           << (8 * i);
    pos += 8;
    return v;
  };
  EncoderParams params = make_params(
      config, [](Eigen::Index r, Eigen::Index c, const char*) {
        return Matrix::Zero(r, c).eval();
      });
  const std::uint64_t n_tensors = get_u64();
  std::uint64_t seen = 0;
  params.for_each_named([&](const std::string& name, Matrix& m) {
    const std::uint64_t name_len = get_u64();
    need(name_len);
    const std::string got = bytes.substr(pos, name_len);
    pos += name_len;
    if (got != name)
      throw DataError("checkpoint tensor order mismatch: expected " + name +
                      ", found " + got);
    const auto rows = static_cast<Eigen::Index>(get_u64());
    const auto cols = static_cast<Eigen::Index>(get_u64());
    if (rows != m.rows() || cols != m.cols())
      throw DataError("checkpoint tensor " + name + " has shape " +
                      std::to_string(rows) + "x" + std::to_string(cols) +
                      ", expected " + std::to_string(m.rows()) + "x" +
                      std::to_string(m.cols()));
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) {
        const std::uint64_t bits = get_u64();
        double v;
        std::memcpy(&v, &bits, sizeof(v));
        m(i, j) = v;
      }
    ++seen;
  });
  if (seen != n_tensors) throw DataError("checkpoint tensor count mismatch");
  return params;
}

inline std::string checkpoint_digest(const EncoderParams& params) {
  return hex64(fnv1a64(serialize_params(params)));
}

inline void save_checkpoint(const EncoderParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  const std::string bytes = serialize_params(params);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("I/O failure writing " + path);
}

inline EncoderParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return deserialize_params(bytes);
}

// Copies tensors whose name and shape both match from `source` into a fresh
// parameter set for `config`; everything else keeps `fresh`'s values.
// Returns the list of warm-started tensor names.
inline std::vector<std::string> warm_start(EncoderParams& fresh,
                                           const EncoderParams& source) {
  std::vector<std::string> copied;
  std::map<std::string, const Matrix*> by_name;
  source.for_each_named(
      [&](const std::string& name, const Matrix& m) { by_name[name] = &m; });
  fresh.for_each_named([&](const std::string& name, Matrix& m) {
    auto it = by_name.find(name);
    if (it != by_name.end() && it->second->rows() == m.rows() &&
        it->second->cols() == m.cols()) {
      m = *it->second;
      copied.push_back(name);
    }
  });
  return copied;
}

}  // namespace erc
