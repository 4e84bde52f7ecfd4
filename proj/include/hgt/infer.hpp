#pragma once

#include "hgt/model.hpp"

#include <optional>
#include <vector>

namespace hgt {
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic, Eigen::RowMajor>;

namespace nograd {

template <typename T>
Mat<T> layernorm(const Mat<T>& x, const Mat<T>& gain, const Mat<T>& bias,
                 T eps = T(1e-5)) {
  Mat<T> out(x.rows(), x.cols());
  for (long i = 0; i < x.rows(); ++i) {
    const T mu = x.row(i).mean();
    const T var = (x.row(i).array() - mu).square().mean();
    const T inv_std = T(1) / std::sqrt(var + eps);
    out.row(i) = (((x.row(i).array() - mu) * inv_std) *
                  gain.row(0).array()) +
                 bias.row(0).array();
  }
  return out;
}

template <typename T>
Mat<T> gelu(const Mat<T>& x) {
  const T inv_sqrt2 = T(1) / std::sqrt(T(2));
  return x.unaryExpr([inv_sqrt2](T v) {
    return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
  });
}

template <typename T>
Mat<T> causal_attention(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v,
                        int heads) {
  const long L = q.rows(), D = q.cols();
  const long dh = D / heads;
  const T inv_scale = T(1) / std::sqrt(T(dh));
  Mat<T> out(L, D);
  for (int h = 0; h < heads; ++h) {
    auto Qh = q.middleCols(h * dh, dh);
    auto Kh = k.middleCols(h * dh, dh);
    auto Vh = v.middleCols(h * dh, dh);
    Mat<T> S = (Qh * Kh.transpose()) * inv_scale;
    for (long i = 0; i < L; ++i) {
      auto row = S.row(i).head(i + 1);
      const T m = row.maxCoeff();
      Eigen::Array<T, 1, Eigen::Dynamic> e = (row.array() - m).exp();
      out.block(i, h * dh, 1, dh) =
          (e / e.sum()).matrix() * Vh.topRows(i + 1);
    }
  }
  return out;
}

}  // namespace nograd

/// Tape-free forward passes over a trained model: a whole-sequence forward
/// and an incremental decoder with per-layer key/value caches. Both produce
/// the same logits as the training-graph forward.
template <typename T>
class InferenceEngine {
 public:
  explicit InferenceEngine(const ModelParams<T>& params)
      : p_(&params), cfg_(params.cfg) {
    cfg_.validate();
    if (cfg_.ablate_down_shift || cfg_.ablate_skip_shift)
      throw std::invalid_argument("inference: ablation flags not supported");
    // Conditional models need reset(prefix) before incremental decoding.
    if (cfg_.prefix_len == 0) reset();
  }

  const ModelConfig& config() const { return cfg_; }

  /// Whole-sequence forward. The token count plus prefix must be a multiple
  /// of 8 and no longer than the configured sequence length. Returns one
  /// logits row per position (prefix rows included).
  Mat<T> full_forward(const std::vector<int>& tokens,
                      const Mat<T>* prefix = nullptr) const {
    const long P = prefix ? prefix->rows() : 0;
    if (P != cfg_.prefix_len)
      throw ShapeError("full_forward: prefix length mismatch");
    const long N = P + long(tokens.size());
    if (N <= 0 || N % 8 != 0 || N > cfg_.seq_len())
      throw ShapeError("full_forward: total length must be a positive "
                       "multiple of 8 and fit the configured context");

    const long d = cfg_.embed_dim;
    Mat<T> x(N, d);
    if (P > 0) x.topRows(P) = *prefix;
    const Mat<T>& emb = p_->at("tok_emb");
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (tokens[i] < 0 || tokens[i] >= cfg_.vocab)
        throw std::out_of_range("full_forward: token out of range");
      x.row(P + long(i)) = emb.row(tokens[i]);
    }
    x += p_->at("pos_emb0").topRows(N);

    int layer = 0;
    if (cfg_.variant == Variant::PT) {
      for (; layer < cfg_.total_layers; ++layer) x = block_full(x, layer);
      return project(x);
    }

    Mat<T> a1 = block_full(x, layer++);
    Mat<T> p1 = downsample(a1, 4, p_->at("boundary0"));
    p1 += p_->at("pos_emb1").topRows(p1.rows());

    if (cfg_.variant == Variant::HG1) {
      Mat<T> b = p1;
      for (int i = 0; i < cfg_.bottleneck_layers(); ++i)
        b = block_full(b, layer++);
      Mat<T> up = upsample(b, 4) + delayed(a1);
      return project(block_full(up, layer));
    }

    Mat<T> a2 = block_full(p1, layer++);
    Mat<T> e2 = pool(a1, 4);
    Mat<T> p2 = downsample(a2, 2, p_->at("boundary1"));
    p2 += p_->at("pos_emb2").topRows(p2.rows());

    const int nb = cfg_.bottleneck_layers();
    std::vector<Mat<T>> early;
    Mat<T> b = p2;
    for (int j = 0; j < nb; ++j) {
      if (cfg_.has_unet_residual() && j >= nb / 2) {
        const Mat<T>& partner = early[nb - 1 - j];
        if (cfg_.learned_alpha())
          b += (partner.array().rowwise() *
                p_->at("alpha" + std::to_string(j)).row(0).array())
                   .matrix();
        else
          b += partner;
      }
      b = block_full(b, layer++);
      if (j < nb / 2) early.push_back(b);
    }

    Mat<T> d2 = block_full(Mat<T>(upsample(b, 2) + delayed(e2)), layer++);
    Mat<T> d1 = block_full(Mat<T>(upsample(d2, 4) + delayed(a1)), layer);
    return project(d1);
  }

  // ---- incremental decoding ----

  void reset(const Mat<T>* prefix = nullptr) {
    const long P = prefix ? prefix->rows() : 0;
    if (P != cfg_.prefix_len)
      throw ShapeError("reset: prefix length mismatch");
    const long N = cfg_.seq_len();
    const long d = cfg_.embed_dim;
    pos_ = 0;
    caches_.assign(cfg_.total_layers, {});
    for (int l = 0; l < cfg_.total_layers; ++l) {
      const long rows = rows_at_layer(l, N);
      caches_[l].k = Mat<T>(rows, d);
      caches_[l].v = Mat<T>(rows, d);
      caches_[l].n = 0;
    }
    a1_.resize(N, d);
    if (cfg_.variant != Variant::PT) {
      a2_.resize(N / 4, d);
      bout_.resize(cfg_.variant == Variant::HG1 ? N / 4 : N / 8, d);
    }
    if (cfg_.variant != Variant::PT && cfg_.variant != Variant::HG1) {
      d2_.resize(N / 4, d);
      early_.assign(cfg_.has_unet_residual() ? cfg_.bottleneck_layers() / 2
                                             : 0,
                    Mat<T>(N / 8, d));
    }
    if (P > 0) {
      for (long i = 0; i < P; ++i) feed_row(RowVec<T>(prefix->row(i)));
    }
  }

  long position() const { return pos_; }

  /// Advance one position; returns the logits row predicting the next token.
  RowVec<T> step(int token) {
    if (token < 0 || token >= cfg_.vocab)
      throw std::out_of_range("step: token out of range");
    return feed_row(RowVec<T>(p_->at("tok_emb").row(token)));
  }

 private:
  struct LayerCache {
    Mat<T> k, v;
    long n = 0;
  };

  long rows_at_layer(int l, long N) const {
    switch (cfg_.variant) {
      case Variant::PT: return N;
      case Variant::HG1:
        return (l == 0 || l == cfg_.total_layers - 1) ? N : N / 4;
      default:
        if (l == 0 || l == cfg_.total_layers - 1) return N;
        if (l == 1 || l == cfg_.total_layers - 2) return N / 4;
        return N / 8;
    }
  }

  Mat<T> block_full(const Mat<T>& x, int layer) const {
    const std::string pre = "layer" + std::to_string(layer) + ".";
    Mat<T> h = nograd::layernorm(x, p_->at(pre + "ln1.g"),
                                 p_->at(pre + "ln1.b"));
    Mat<T> q = (h * p_->at(pre + "wq")).rowwise() + p_->at(pre + "bq").row(0);
    Mat<T> k = (h * p_->at(pre + "wk")).rowwise() + p_->at(pre + "bk").row(0);
    Mat<T> v = (h * p_->at(pre + "wv")).rowwise() + p_->at(pre + "bv").row(0);
    Mat<T> att = nograd::causal_attention(q, k, v, cfg_.heads);
    Mat<T> y = x + ((att * p_->at(pre + "wo")).rowwise() +
                    p_->at(pre + "bo").row(0));
    Mat<T> h2 = nograd::layernorm(y, p_->at(pre + "ln2.g"),
                                  p_->at(pre + "ln2.b"));
    Mat<T> m = (h2 * p_->at(pre + "w1")).rowwise() + p_->at(pre + "b1").row(0);
    m = (nograd::gelu(m) * p_->at(pre + "w2")).rowwise() +
        p_->at(pre + "b2").row(0);
    return y + m;
  }

  Mat<T> downsample(const Mat<T>& x, long k, const Mat<T>& boundary) const {
    const long R = x.rows();
    Mat<T> s(R, x.cols());
    for (long i = 0; i < k - 1 && i < R; ++i) s.row(i) = boundary.row(0);
    if (R > k - 1) s.bottomRows(R - (k - 1)) = x.topRows(R - (k - 1));
    return pool(s, k);
  }

  static Mat<T> pool(const Mat<T>& x, long k) {
    const long G = x.rows() / k;
    Mat<T> out(G, x.cols());
    for (long g = 0; g < G; ++g)
      out.row(g) = x.middleRows(g * k, k).colwise().mean();
    return out;
  }

  static Mat<T> upsample(const Mat<T>& x, long k) {
    Mat<T> out(x.rows() * k, x.cols());
    for (long i = 0; i < x.rows(); ++i)
      out.middleRows(i * k, k) = x.row(i).replicate(k, 1);
    return out;
  }

  static Mat<T> delayed(const Mat<T>& x) {
    Mat<T> out(x.rows(), x.cols());
    out.row(0).setZero();
    if (x.rows() > 1) out.bottomRows(x.rows() - 1) = x.topRows(x.rows() - 1);
    return out;
  }

  Mat<T> project(const Mat<T>& x) const {
    Mat<T> h = nograd::layernorm(x, p_->at("ln_f.g"), p_->at("ln_f.b"));
    return (h * p_->at("out_w")).rowwise() + p_->at("out_b").row(0);
  }

  RowVec<T> attend_row(const RowVec<T>& q, const LayerCache& c) const {
    const int heads = cfg_.heads;
    const long dh = q.cols() / heads;
    const T inv_scale = T(1) / std::sqrt(T(dh));
    RowVec<T> out(q.cols());
    for (int h = 0; h < heads; ++h) {
      auto Kh = c.k.middleCols(h * dh, dh).topRows(c.n);
      auto Vh = c.v.middleCols(h * dh, dh).topRows(c.n);
      RowVec<T> s = (q.middleCols(h * dh, dh) * Kh.transpose()) * inv_scale;
      const T m = s.maxCoeff();
      Eigen::Array<T, 1, Eigen::Dynamic> e = (s.array() - m).exp();
      out.middleCols(h * dh, dh) = ((e / e.sum()).matrix() * Vh);
    }
    return out;
  }

  RowVec<T> block_step(const RowVec<T>& x, int layer) {
    const std::string pre = "layer" + std::to_string(layer) + ".";
    LayerCache& c = caches_[layer];
    Mat<T> xm = x;
    Mat<T> hm = nograd::layernorm(xm, p_->at(pre + "ln1.g"),
                                  p_->at(pre + "ln1.b"));
    RowVec<T> h = hm.row(0);
    RowVec<T> q = h * p_->at(pre + "wq") + p_->at(pre + "bq").row(0);
    c.k.row(c.n) = h * p_->at(pre + "wk") + p_->at(pre + "bk").row(0);
    c.v.row(c.n) = h * p_->at(pre + "wv") + p_->at(pre + "bv").row(0);
    ++c.n;
    RowVec<T> att = attend_row(q, c);
    RowVec<T> y = x + att * p_->at(pre + "wo") + p_->at(pre + "bo").row(0);
    Mat<T> ym = y;
    Mat<T> h2 = nograd::layernorm(ym, p_->at(pre + "ln2.g"),
                                  p_->at(pre + "ln2.b"));
    RowVec<T> m =
        h2.row(0) * p_->at(pre + "w1") + p_->at(pre + "b1").row(0);
    Mat<T> mm = m;
    m = nograd::gelu(mm).row(0) * p_->at(pre + "w2") +
        p_->at(pre + "b2").row(0);
    return y + m;
  }

  /// Mean of rows [first..first+k-1] of `src`, substituting `boundary` for
  /// negative indices.
  RowVec<T> pool_window(const Mat<T>& src, long first, long k,
                        const Mat<T>& boundary) const {
    RowVec<T> acc = RowVec<T>::Zero(src.cols());
    for (long i = first; i < first + k; ++i)
      acc += (i < 0) ? RowVec<T>(boundary.row(0)) : RowVec<T>(src.row(i));
    return acc / T(k);
  }

  RowVec<T> feed_row(RowVec<T> x) {
    const long N = cfg_.seq_len();
    if (caches_.empty())
      throw ShapeError("step: reset(prefix) required before decoding");
    if (pos_ >= N) throw ShapeError("step: sequence length exceeded");
    const long t = pos_++;
    x += p_->at("pos_emb0").row(t);

    if (cfg_.variant == Variant::PT) {
      for (int l = 0; l < cfg_.total_layers; ++l) x = block_step(x, l);
      return project(Mat<T>(x)).row(0);
    }

    RowVec<T> a1 = block_step(x, 0);
    a1_.row(t) = a1;

    const int nb = cfg_.bottleneck_layers();
    if (cfg_.variant == Variant::HG1) {
      if (t % 4 == 0) {
        const long g = t / 4;
        RowVec<T> p1 =
            pool_window(a1_, t - 3, 4, p_->at("boundary0")) +
            p_->at("pos_emb1").row(g);
        RowVec<T> b = p1;
        for (int j = 0; j < nb; ++j) b = block_step(b, 1 + j);
        bout_.row(g) = b;
      }
      RowVec<T> up = bout_.row(t / 4);
      if (t >= 1) up += a1_.row(t - 1);
      RowVec<T> d1 = block_step(up, cfg_.total_layers - 1);
      return project(Mat<T>(d1)).row(0);
    }

    if (t % 4 == 0) {
      const long g = t / 4;
      RowVec<T> p1 = pool_window(a1_, t - 3, 4, p_->at("boundary0")) +
                     p_->at("pos_emb1").row(g);
      a2_.row(g) = block_step(p1, 1);

      if (t % 8 == 0) {
        const long hh = t / 8;
        RowVec<T> p2 = pool_window(a2_, g - 1, 2, p_->at("boundary1")) +
                       p_->at("pos_emb2").row(hh);
        RowVec<T> b = p2;
        for (int j = 0; j < nb; ++j) {
          if (cfg_.has_unet_residual() && j >= nb / 2) {
            if (cfg_.learned_alpha())
              b += early_[nb - 1 - j].row(hh).cwiseProduct(
                  p_->at("alpha" + std::to_string(j)).row(0));
            else
              b += early_[nb - 1 - j].row(hh);
          }
          b = block_step(b, 2 + j);
          if (long(early_.size()) > 0 && j < nb / 2) early_[j].row(hh) = b;
        }
        bout_.row(hh) = b;
      }

      RowVec<T> up2 = bout_.row(g / 2);
      if (g >= 1)
        up2 += pool_window(a1_, 4 * (g - 1), 4, p_->at("boundary0"));
      d2_.row(g) = block_step(up2, cfg_.total_layers - 2);
    }

    RowVec<T> up1 = d2_.row(t / 4);
    if (t >= 1) up1 += a1_.row(t - 1);
    RowVec<T> d1 = block_step(up1, cfg_.total_layers - 1);
    return project(Mat<T>(d1)).row(0);
  }

  const ModelParams<T>* p_;
  ModelConfig cfg_;
  long pos_ = 0;
  std::vector<LayerCache> caches_;
  Mat<T> a1_, a2_, bout_, d2_;
  std::vector<Mat<T>> early_;
};

}  // namespace hgt
