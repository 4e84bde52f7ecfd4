#pragma once

#include "hgt/autodiff.hpp"
#include "hgt/checkpoint.hpp"
#include "hgt/quantizer.hpp"

#include <map>
#include <random>
#include <string>
#include <vector>

namespace hgt {

enum class Variant { PT, HG1, HG2, HG2R, HG2RL };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::PT: return "pt";
    case Variant::HG1: return "hg1";
    case Variant::HG2: return "hg2";
    case Variant::HG2R: return "hg2r";
    case Variant::HG2RL: return "hg2rl";
  }
  return "?";
}

inline Variant variant_from_string(const std::string& s) {
  if (s == "pt") return Variant::PT;
  if (s == "hg1") return Variant::HG1;
  if (s == "hg2") return Variant::HG2;
  if (s == "hg2r") return Variant::HG2R;
  if (s == "hg2rl") return Variant::HG2RL;
  throw std::invalid_argument("unknown variant: " + s);
}

struct ModelConfig {
  Variant variant = Variant::HG2RL;
  int vocab = kVocabSize;
  int embed_dim = 128;
  int heads = 4;
  int total_layers = 24;
  long context = 1616;    // token positions, multiple of 8
  long prefix_len = 0;    // conditioning slots, 0 or multiple of 8
  int mlp_ratio = 4;

  // Test-harness ablations (negative controls for the causality suite).
  bool ablate_down_shift = false;
  bool ablate_skip_shift = false;

  long seq_len() const { return prefix_len + context; }

  int bottleneck_layers() const {
    switch (variant) {
      case Variant::PT: return total_layers;
      case Variant::HG1: return total_layers - 2;
      default: return total_layers - 4;
    }
  }

  bool has_unet_residual() const {
    return variant == Variant::HG2R || variant == Variant::HG2RL;
  }
  bool learned_alpha() const { return variant == Variant::HG2RL; }

  void validate() const {
    if (context <= 0 || context % 8 != 0)
      throw std::invalid_argument("model: context must be a positive multiple of 8");
    if (prefix_len < 0 || prefix_len % 8 != 0)
      throw std::invalid_argument("model: prefix_len must be a multiple of 8");
    if (embed_dim % heads != 0)
      throw std::invalid_argument("model: embed_dim % heads != 0");
    if (bottleneck_layers() < (has_unet_residual() ? 2 : 1))
      throw std::invalid_argument("model: too few layers for variant");
  }
};

/// Flat named parameter store. Creation order is the canonical order used
/// by the optimizer and checkpoints.
template <typename T>
struct ModelParams {
  ModelConfig cfg;
  std::vector<std::string> names;
  std::vector<Mat<T>> values;
  std::map<std::string, std::size_t> index;

  Mat<T>& operator[](const std::string& name) {
    auto it = index.find(name);
    if (it == index.end())
      throw std::out_of_range("model param not found: " + name);
    return values[it->second];
  }
  const Mat<T>& at(const std::string& name) const {
    return const_cast<ModelParams*>(this)->operator[](name);
  }
  bool has(const std::string& name) const { return index.count(name) != 0; }

  long param_count() const {
    long n = 0;
    for (const auto& m : values) n += m.size();
    return n;
  }

  Checkpoint to_checkpoint() const {
    Checkpoint ck;
    for (std::size_t i = 0; i < names.size(); ++i)
      ck.tensors[names[i]] = values[i].template cast<double>();
    ck.meta["variant"] = to_string(cfg.variant);
    ck.meta["embed_dim"] = std::to_string(cfg.embed_dim);
    ck.meta["heads"] = std::to_string(cfg.heads);
    ck.meta["total_layers"] = std::to_string(cfg.total_layers);
    ck.meta["context"] = std::to_string(cfg.context);
    ck.meta["prefix_len"] = std::to_string(cfg.prefix_len);
    ck.meta["mlp_ratio"] = std::to_string(cfg.mlp_ratio);
    ck.meta["vocab"] = std::to_string(cfg.vocab);
    ck.meta["format_version"] = "1";
    return ck;
  }

  void load_values(const Checkpoint& ck) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      auto it = ck.tensors.find(names[i]);
      if (it == ck.tensors.end())
        throw std::runtime_error("checkpoint missing tensor: " + names[i]);
      if (it->second.rows() != values[i].rows() ||
          it->second.cols() != values[i].cols())
        throw std::runtime_error("checkpoint shape mismatch: " + names[i]);
      values[i] = it->second.template cast<T>();
    }
  }
};

inline ModelConfig config_from_checkpoint_meta(
    const std::map<std::string, std::string>& meta) {
  ModelConfig cfg;
  cfg.variant = variant_from_string(meta.at("variant"));
  cfg.embed_dim = std::stoi(meta.at("embed_dim"));
  cfg.heads = std::stoi(meta.at("heads"));
  cfg.total_layers = std::stoi(meta.at("total_layers"));
  cfg.context = std::stol(meta.at("context"));
  cfg.prefix_len = std::stol(meta.at("prefix_len"));
  cfg.mlp_ratio = std::stoi(meta.at("mlp_ratio"));
  cfg.vocab = std::stoi(meta.at("vocab"));
  return cfg;
}

namespace detail {

template <typename T>
void add_param(ModelParams<T>& p, const std::string& name, long r, long c,
               std::mt19937_64& rng, double std_dev) {
  std::normal_distribution<double> dist(0.0, std_dev);
  Mat<T> m(r, c);
  for (long i = 0; i < r; ++i)
    for (long j = 0; j < c; ++j) m(i, j) = T(dist(rng));
  p.names.push_back(name);
  p.index[name] = p.values.size();
  p.values.push_back(std::move(m));
}

template <typename T>
void add_const_param(ModelParams<T>& p, const std::string& name, long r,
                     long c, T value) {
  p.names.push_back(name);
  p.index[name] = p.values.size();
  p.values.push_back(Mat<T>::Constant(r, c, value));
}

}  // namespace detail

template <typename T>
ModelParams<T> init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams<T> p;
  p.cfg = cfg;
  std::mt19937_64 rng(seed ^ 0xda3e39cb94b95bdbULL);
  const long d = cfg.embed_dim;
  const long hidden = d * cfg.mlp_ratio;
  const double w_std = 0.02;

  detail::add_param(p, "tok_emb", cfg.vocab, d, rng, w_std);
  const long N = cfg.seq_len();
  detail::add_param(p, "pos_emb0", N, d, rng, w_std);
  if (cfg.variant != Variant::PT) {
    detail::add_param(p, "pos_emb1", N / 4, d, rng, w_std);
    detail::add_const_param(p, "boundary0", 1, d, T(0));
  }
  if (cfg.variant != Variant::PT && cfg.variant != Variant::HG1) {
    detail::add_param(p, "pos_emb2", N / 8, d, rng, w_std);
    detail::add_const_param(p, "boundary1", 1, d, T(0));
  }

  for (int l = 0; l < cfg.total_layers; ++l) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    detail::add_const_param(p, pre + "ln1.g", 1, d, T(1));
    detail::add_const_param(p, pre + "ln1.b", 1, d, T(0));
    for (const char* w : {"wq", "wk", "wv", "wo"})
      detail::add_param(p, pre + w, d, d, rng, w_std);
    for (const char* b : {"bq", "bk", "bv", "bo"})
      detail::add_const_param(p, pre + b, 1, d, T(0));
    detail::add_const_param(p, pre + "ln2.g", 1, d, T(1));
    detail::add_const_param(p, pre + "ln2.b", 1, d, T(0));
    detail::add_param(p, pre + "w1", d, hidden, rng, w_std);
    detail::add_const_param(p, pre + "b1", 1, hidden, T(0));
    detail::add_param(p, pre + "w2", hidden, d, rng, w_std);
    detail::add_const_param(p, pre + "b2", 1, d, T(0));
  }

  if (cfg.learned_alpha()) {
    const int nb = cfg.bottleneck_layers();
    for (int j = nb / 2; j < nb; ++j)
      detail::add_const_param(p, "alpha" + std::to_string(j), 1, d, T(0));
  }

  if (cfg.prefix_len > 0) {
    detail::add_param(p, "pc.w1", 3, d, rng, w_std);
    detail::add_const_param(p, "pc.b1", 1, d, T(0));
    detail::add_param(p, "pc.w2", d, d, rng, w_std);
    detail::add_const_param(p, "pc.b2", 1, d, T(0));
    detail::add_param(p, "pc.queries", cfg.prefix_len, d, rng, w_std);
    for (const char* w : {"pc.wq", "pc.wk", "pc.wv", "pc.wo"})
      detail::add_param(p, w, d, d, rng, w_std);
    for (const char* b : {"pc.bq", "pc.bk", "pc.bv", "pc.bo"})
      detail::add_const_param(p, b, 1, d, T(0));
    detail::add_const_param(p, "pc.ln.g", 1, d, T(1));
    detail::add_const_param(p, "pc.ln.b", 1, d, T(0));
  }

  detail::add_const_param(p, "ln_f.g", 1, d, T(1));
  detail::add_const_param(p, "ln_f.b", 1, d, T(0));
  detail::add_param(p, "out_w", d, cfg.vocab, rng, w_std);
  detail::add_const_param(p, "out_b", 1, cfg.vocab, T(0));
  return p;
}

/// Bound parameter leaves for one forward pass; grads align with the
/// canonical parameter order after backward().
template <typename T>
struct BoundModel {
  const ModelParams<T>* params = nullptr;
  Graph<T>* graph = nullptr;
  std::vector<Var<T>> leaves;  // aligned with params->names

  Var<T> operator[](const std::string& name) const {
    return leaves[params->index.at(name)];
  }

  std::vector<Mat<T>> grads() const {
    std::vector<Mat<T>> out;
    out.reserve(leaves.size());
    for (const auto& v : leaves) {
      if (v.n->grad.size() == 0)
        out.push_back(Mat<T>::Zero(v.rows(), v.cols()));
      else
        out.push_back(v.n->grad);
    }
    return out;
  }
};

template <typename T>
BoundModel<T> bind_model(Graph<T>& g, const ModelParams<T>& p,
                         bool requires_grad = true) {
  BoundModel<T> bm;
  bm.params = &p;
  bm.graph = &g;
  bm.leaves.reserve(p.values.size());
  for (const auto& m : p.values) bm.leaves.push_back(leaf(g, m, requires_grad));
  return bm;
}

namespace detail {

/// Pre-norm residual block: causal attention then MLP.
template <typename T>
Var<T> transformer_block(const BoundModel<T>& bm, Var<T> x, int layer,
                         int heads) {
  const std::string pre = "layer" + std::to_string(layer) + ".";
  Var<T> h = layernorm(x, bm[pre + "ln1.g"], bm[pre + "ln1.b"]);
  Var<T> q = add_rowvec(matmul(h, bm[pre + "wq"]), bm[pre + "bq"]);
  Var<T> k = add_rowvec(matmul(h, bm[pre + "wk"]), bm[pre + "bk"]);
  Var<T> v = add_rowvec(matmul(h, bm[pre + "wv"]), bm[pre + "bv"]);
  Var<T> att = causal_attention(q, k, v, heads);
  x = add(x, add_rowvec(matmul(att, bm[pre + "wo"]), bm[pre + "bo"]));
  Var<T> h2 = layernorm(x, bm[pre + "ln2.g"], bm[pre + "ln2.b"]);
  Var<T> m = add_rowvec(matmul(h2, bm[pre + "w1"]), bm[pre + "b1"]);
  m = add_rowvec(matmul(gelu(m), bm[pre + "w2"]), bm[pre + "b2"]);
  return add(x, m);
}

/// Causal downsample: right-shift by k-1 (learned boundary fill), then
/// mean-pool groups of k. Pooled token g sees only original positions
/// <= g*k.
template <typename T>
Var<T> causal_downsample(const BoundModel<T>& bm, Var<T> x, long k,
                         const std::string& boundary, bool ablate_shift) {
  Var<T> s = ablate_shift ? x : shift_rows_down(x, k - 1, bm[boundary]);
  return mean_pool_rows(s, k);
}

/// Decoder skip: the group-aligned encoder stream delayed by one position
/// (first slot zero-filled). The delay is what keeps the skip causal.
template <typename T>
Var<T> skip_connection(Graph<T>& g, Var<T> enc_stream, bool ablate_shift) {
  if (ablate_shift) return enc_stream;
  Var<T> zero = leaf(g, Mat<T>(Mat<T>::Zero(1, enc_stream.cols())), false);
  return shift_rows_down(enc_stream, 1, zero);
}

}  // namespace detail

/// Forward pass over one token sequence (length = cfg.context), with an
/// optional conditioning prefix of embedding rows. Returns logits with one
/// row per input position (prefix rows included).
template <typename T>
Var<T> model_forward(Graph<T>& g, const BoundModel<T>& bm,
                     const std::vector<int>& tokens,
                     std::optional<Var<T>> prefix = std::nullopt) {
  const ModelConfig& cfg = bm.params->cfg;
  if (long(tokens.size()) != cfg.context)
    throw ShapeError("model_forward: expected " + std::to_string(cfg.context) +
                     " tokens, got " + std::to_string(tokens.size()));
  if (bool(prefix) != (cfg.prefix_len > 0))
    throw ShapeError("model_forward: prefix/config mismatch");

  Var<T> x = embedding(bm["tok_emb"], tokens);
  if (prefix) {
    if (prefix->rows() != cfg.prefix_len || prefix->cols() != cfg.embed_dim)
      throw ShapeError("model_forward: bad prefix shape");
    x = concat_rows(*prefix, x);
  }
  x = add(x, bm["pos_emb0"]);

  const int heads = cfg.heads;
  int layer = 0;

  if (cfg.variant == Variant::PT) {
    for (; layer < cfg.total_layers; ++layer)
      x = detail::transformer_block(bm, x, layer, heads);
  } else if (cfg.variant == Variant::HG1) {
    Var<T> a1 = detail::transformer_block(bm, x, layer++, heads);
    Var<T> p1 = add(detail::causal_downsample(bm, a1, 4, "boundary0",
                                              cfg.ablate_down_shift),
                    bm["pos_emb1"]);
    Var<T> b = p1;
    for (int i = 0; i < cfg.bottleneck_layers(); ++i)
      b = detail::transformer_block(bm, b, layer++, heads);
    Var<T> up = add(repeat_rows(b, 4),
                    detail::skip_connection(g, a1, cfg.ablate_skip_shift));
    x = detail::transformer_block(bm, up, layer++, heads);
  } else {
    // HG2 family.
    Var<T> a1 = detail::transformer_block(bm, x, layer++, heads);
    Var<T> p1 = add(detail::causal_downsample(bm, a1, 4, "boundary0",
                                              cfg.ablate_down_shift),
                    bm["pos_emb1"]);
    Var<T> a2 = detail::transformer_block(bm, p1, layer++, heads);
    // Group-aligned (unshifted) pooled encoder stream feeding the decoder
    // skip at L/4; causal only in combination with the skip delay.
    Var<T> e2 = mean_pool_rows(a1, 4);
    Var<T> p2 = add(detail::causal_downsample(bm, a2, 2, "boundary1",
                                              cfg.ablate_down_shift),
                    bm["pos_emb2"]);

    const int nb = cfg.bottleneck_layers();
    std::vector<Var<T>> early;
    Var<T> b = p2;
    for (int j = 0; j < nb; ++j) {
      if (cfg.has_unet_residual() && j >= nb / 2) {
        Var<T> partner = early[nb - 1 - j];
        if (cfg.learned_alpha())
          b = add(b, mul_rowvec(partner, bm["alpha" + std::to_string(j)]));
        else
          b = add(b, partner);
      }
      b = detail::transformer_block(bm, b, layer++, heads);
      if (j < nb / 2) early.push_back(b);
    }

    Var<T> up2 = add(repeat_rows(b, 2),
                     detail::skip_connection(g, e2, cfg.ablate_skip_shift));
    Var<T> d2 = detail::transformer_block(bm, up2, layer++, heads);
    Var<T> up1 = add(repeat_rows(d2, 4),
                     detail::skip_connection(g, a1, cfg.ablate_skip_shift));
    x = detail::transformer_block(bm, up1, layer++, heads);
  }

  Var<T> hN = layernorm(x, bm["ln_f.g"], bm["ln_f.b"]);
  return add_rowvec(matmul(hN, bm["out_w"]), bm["out_b"]);
}

/// Attention-score compute count, in units of (stage length)^2 summed over
/// layers; used by the efficiency check.
inline double attention_score_units(const ModelConfig& cfg) {
  const double L = double(cfg.seq_len());
  switch (cfg.variant) {
    case Variant::PT: return cfg.total_layers * L * L;
    case Variant::HG1:
      return 2 * L * L + cfg.bottleneck_layers() * (L / 4) * (L / 4);
    default:
      return 2 * L * L + 2 * (L / 4) * (L / 4) +
             cfg.bottleneck_layers() * (L / 8) * (L / 8);
  }
}

}  // namespace hgt
