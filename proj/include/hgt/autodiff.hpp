#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace hgt {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void check_shape(bool ok, long r1, long c1, long r2, long c2,
                        const char* op) {
  if (!ok)
    throw ShapeError(std::string(op) + ": shape mismatch [" +
                     std::to_string(r1) + "x" + std::to_string(c1) + "] vs [" +
                     std::to_string(r2) + "x" + std::to_string(c2) + "]");
}

/// Reverse-mode tape over dense row-major matrices. One Graph per training
/// step; nodes are created by the op functions below and freed with the
/// graph. backward() may be called once per graph.
template <typename T>
class Graph {
 public:
  struct Node {
    Mat<T> value;
    Mat<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::function<void()> backward;

    void accum(const Mat<T>& g) {
      if (!requires_grad) return;
      if (grad.size() == 0) grad = Mat<T>::Zero(value.rows(), value.cols());
      grad += g;
    }
  };

  Node* add(Mat<T> value, bool requires_grad,
            std::function<void()> backward = nullptr) {
    nodes_.push_back(std::make_unique<Node>());
    Node* n = nodes_.back().get();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->backward = std::move(backward);
    return n;
  }

  void run_backward(Node* loss) {
    if (loss->value.rows() != 1 || loss->value.cols() != 1)
      throw std::invalid_argument("backward: loss must be a scalar");
    if (backward_done_)
      throw std::logic_error("backward: already run on this graph");
    backward_done_ = true;
    loss->accum(Mat<T>::Constant(1, 1, T(1)));
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node* n = it->get();
      if (n->requires_grad && n->grad.size() != 0 && n->backward)
        n->backward();
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::unique_ptr<Node>> nodes_;
  bool backward_done_ = false;
};

/// Lightweight handle to a tape node.
template <typename T>
struct Var {
  Graph<T>* g = nullptr;
  typename Graph<T>::Node* n = nullptr;

  const Mat<T>& val() const { return n->value; }
  const Mat<T>& grad() const { return n->grad; }
  bool rg() const { return n->requires_grad; }
  long rows() const { return n->value.rows(); }
  long cols() const { return n->value.cols(); }
};

template <typename T>
Var<T> leaf(Graph<T>& g, Mat<T> value, bool requires_grad = false) {
  return {&g, g.add(std::move(value), requires_grad)};
}

template <typename T>
void backward(Var<T> loss) {
  loss.g->run_backward(loss.n);
}

// ---- elementwise and linear ops ----

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  check_shape(a.rows() == b.rows() && a.cols() == b.cols(), a.rows(), a.cols(),
              b.rows(), b.cols(), "add");
  auto* n = a.g->add(a.val() + b.val(), a.rg() || b.rg());
  n->backward = [an = a.n, bn = b.n, n] {
    an->accum(n->grad);
    bn->accum(n->grad);
  };
  return {a.g, n};
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  check_shape(a.rows() == b.rows() && a.cols() == b.cols(), a.rows(), a.cols(),
              b.rows(), b.cols(), "sub");
  auto* n = a.g->add(a.val() - b.val(), a.rg() || b.rg());
  n->backward = [an = a.n, bn = b.n, n] {
    an->accum(n->grad);
    bn->accum(-n->grad);
  };
  return {a.g, n};
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  check_shape(a.rows() == b.rows() && a.cols() == b.cols(), a.rows(), a.cols(),
              b.rows(), b.cols(), "mul");
  auto* n = a.g->add(a.val().cwiseProduct(b.val()), a.rg() || b.rg());
  n->backward = [an = a.n, bn = b.n, n] {
    an->accum(n->grad.cwiseProduct(bn->value));
    bn->accum(n->grad.cwiseProduct(an->value));
  };
  return {a.g, n};
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  auto* n = a.g->add(Mat<T>(a.val() * s), a.rg());
  n->backward = [an = a.n, n, s] { an->accum(Mat<T>(n->grad * s)); };
  return {a.g, n};
}

/// Broadcast-add of a 1 x cols row vector to every row.
template <typename T>
Var<T> add_rowvec(Var<T> a, Var<T> r) {
  check_shape(r.rows() == 1 && r.cols() == a.cols(), a.rows(), a.cols(),
              r.rows(), r.cols(), "add_rowvec");
  Mat<T> v = a.val();
  v.rowwise() += r.val().row(0);
  auto* n = a.g->add(std::move(v), a.rg() || r.rg());
  n->backward = [an = a.n, rn = r.n, n] {
    an->accum(n->grad);
    rn->accum(n->grad.colwise().sum());
  };
  return {a.g, n};
}

/// Broadcast elementwise product with a 1 x cols row vector.
template <typename T>
Var<T> mul_rowvec(Var<T> a, Var<T> r) {
  check_shape(r.rows() == 1 && r.cols() == a.cols(), a.rows(), a.cols(),
              r.rows(), r.cols(), "mul_rowvec");
  Mat<T> v = a.val().array().rowwise() * r.val().row(0).array();
  auto* n = a.g->add(std::move(v), a.rg() || r.rg());
  n->backward = [an = a.n, rn = r.n, n] {
    an->accum(Mat<T>(n->grad.array().rowwise() * rn->value.row(0).array()));
    rn->accum(
        Mat<T>(n->grad.cwiseProduct(an->value).colwise().sum()));
  };
  return {a.g, n};
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  check_shape(a.cols() == b.rows(), a.rows(), a.cols(), b.rows(), b.cols(),
              "matmul");
  auto* n = a.g->add(Mat<T>(a.val() * b.val()), a.rg() || b.rg());
  n->backward = [an = a.n, bn = b.n, n] {
    an->accum(Mat<T>(n->grad * bn->value.transpose()));
    bn->accum(Mat<T>(an->value.transpose() * n->grad));
  };
  return {a.g, n};
}

/// a * b^T
template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  check_shape(a.cols() == b.cols(), a.rows(), a.cols(), b.rows(), b.cols(),
              "matmul_nt");
  auto* n = a.g->add(Mat<T>(a.val() * b.val().transpose()),
                     a.rg() || b.rg());
  n->backward = [an = a.n, bn = b.n, n] {
    an->accum(Mat<T>(n->grad * bn->value));
    bn->accum(Mat<T>(n->grad.transpose() * an->value));
  };
  return {a.g, n};
}

// ---- nonlinearities ----

template <typename T>
Var<T> gelu(Var<T> a) {
  const T inv_sqrt2 = T(1) / std::sqrt(T(2));
  Mat<T> v = a.val().unaryExpr([inv_sqrt2](T x) {
    return T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2));
  });
  auto* n = a.g->add(std::move(v), a.rg());
  n->backward = [an = a.n, n, inv_sqrt2] {
    const T c = T(1) / std::sqrt(T(2) * T(M_PI));
    Mat<T> d = an->value.unaryExpr([inv_sqrt2, c](T x) {
      const T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
      return cdf + x * c * std::exp(T(-0.5) * x * x);
    });
    an->accum(n->grad.cwiseProduct(d));
  };
  return {a.g, n};
}

/// Numerically stable softmax over the last axis (each row).
template <typename T>
Var<T> softmax_rows(Var<T> a) {
  Mat<T> v = a.val();
  for (long i = 0; i < v.rows(); ++i) {
    auto row = v.row(i);
    const T m = row.maxCoeff();
    row = (row.array() - m).exp().matrix();
    row /= row.sum();
  }
  auto* n = a.g->add(std::move(v), a.rg());
  n->backward = [an = a.n, n] {
    Mat<T> g(n->value.rows(), n->value.cols());
    for (long i = 0; i < g.rows(); ++i) {
      const T dot = n->grad.row(i).dot(n->value.row(i));
      g.row(i) = n->value.row(i).cwiseProduct(
          (n->grad.row(i).array() - dot).matrix());
    }
    an->accum(g);
  };
  return {a.g, n};
}

/// Log-softmax over each row.
template <typename T>
Var<T> log_softmax_rows(Var<T> a) {
  Mat<T> v = a.val();
  for (long i = 0; i < v.rows(); ++i) {
    auto row = v.row(i);
    const T m = row.maxCoeff();
    const T lse = m + std::log((row.array() - m).exp().sum());
    row = (row.array() - lse).matrix();
  }
  auto* n = a.g->add(std::move(v), a.rg());
  n->backward = [an = a.n, n] {
    Mat<T> g(n->value.rows(), n->value.cols());
    for (long i = 0; i < g.rows(); ++i) {
      const T srow = n->grad.row(i).sum();
      g.row(i) =
          n->grad.row(i) - (n->value.row(i).array().exp() * srow).matrix();
    }
    an->accum(g);
  };
  return {a.g, n};
}

/// Where mask != 0, replaces entries with `value` (may be -infinity).
template <typename T>
Var<T> masked_fill(Var<T> a, const Mat<T>& mask, T value) {
  check_shape(mask.rows() == a.rows() && mask.cols() == a.cols(), a.rows(),
              a.cols(), mask.rows(), mask.cols(), "masked_fill");
  Mat<T> v = (mask.array() != T(0))
                 .select(Mat<T>::Constant(a.rows(), a.cols(), value), a.val());
  auto* n = a.g->add(std::move(v), a.rg());
  n->backward = [an = a.n, n, mask] {
    an->accum(Mat<T>((mask.array() != T(0))
                         .select(Mat<T>::Zero(mask.rows(), mask.cols()),
                                 n->grad)));
  };
  return {a.g, n};
}

/// Row-wise layer normalization with learned gain/bias (1 x cols each).
template <typename T>
Var<T> layernorm(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5)) {
  check_shape(gain.rows() == 1 && gain.cols() == x.cols(), x.rows(), x.cols(),
              gain.rows(), gain.cols(), "layernorm");
  const long R = x.rows(), C = x.cols();
  Mat<T> xhat(R, C);
  Mat<T> inv_std(R, 1);
  for (long i = 0; i < R; ++i) {
    const T mu = x.val().row(i).mean();
    const T var = (x.val().row(i).array() - mu).square().mean();
    inv_std(i, 0) = T(1) / std::sqrt(var + eps);
    xhat.row(i) = (x.val().row(i).array() - mu) * inv_std(i, 0);
  }
  Mat<T> v = (xhat.array().rowwise() * gain.val().row(0).array()).rowwise() +
             bias.val().row(0).array();
  auto* n = x.g->add(std::move(v), x.rg() || gain.rg() || bias.rg());
  n->backward = [xn = x.n, gn = gain.n, bn = bias.n, n, xhat, inv_std] {
    const long R = xhat.rows(), C = xhat.cols();
    bn->accum(n->grad.colwise().sum());
    gn->accum(n->grad.cwiseProduct(xhat).colwise().sum());
    if (!xn->requires_grad) return;
    Mat<T> gx(R, C);
    for (long i = 0; i < R; ++i) {
      // d xhat
      Eigen::Array<T, 1, Eigen::Dynamic> dxh =
          n->grad.row(i).array() * gn->value.row(0).array();
      const T mean_dxh = dxh.mean();
      const T mean_dxh_xhat = (dxh * xhat.row(i).array()).mean();
      gx.row(i) = ((dxh - mean_dxh - xhat.row(i).array() * mean_dxh_xhat) *
                   inv_std(i, 0))
                      .matrix();
    }
    xn->accum(gx);
  };
  return {x.g, n};
}

// ---- structural ops ----

/// Rows gathered from a table by integer id; backward scatter-adds.
template <typename T>
Var<T> embedding(Var<T> table, const std::vector<int>& ids) {
  Mat<T> v(long(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows())
      throw std::out_of_range("embedding: id out of range");
    v.row(long(i)) = table.val().row(ids[i]);
  }
  auto* n = table.g->add(std::move(v), table.rg());
  n->backward = [tn = table.n, n, ids] {
    if (tn->grad.size() == 0)
      tn->grad = Mat<T>::Zero(tn->value.rows(), tn->value.cols());
    for (std::size_t i = 0; i < ids.size(); ++i)
      tn->grad.row(ids[i]) += n->grad.row(long(i));
  };
  return {table.g, n};
}

/// Mean over consecutive groups of k rows.
template <typename T>
Var<T> mean_pool_rows(Var<T> a, long k) {
  if (a.rows() % k != 0)
    throw ShapeError("mean_pool_rows: " + std::to_string(a.rows()) +
                     " rows not divisible by " + std::to_string(k));
  const long G = a.rows() / k;
  Mat<T> v = Mat<T>::Zero(G, a.cols());
  for (long g = 0; g < G; ++g)
    v.row(g) = a.val().middleRows(g * k, k).colwise().mean();
  auto* n = a.g->add(std::move(v), a.rg());
  n->backward = [an = a.n, n, k] {
    const long G = n->value.rows();
    Mat<T> g(G * k, n->value.cols());
    for (long i = 0; i < G; ++i)
      g.middleRows(i * k, k) =
          (n->grad.row(i) / T(k)).replicate(k, 1);
    an->accum(g);
  };
  return {a.g, n};
}

/// Each row duplicated k times.
template <typename T>
Var<T> repeat_rows(Var<T> a, long k) {
  Mat<T> v(a.rows() * k, a.cols());
  for (long i = 0; i < a.rows(); ++i)
    v.middleRows(i * k, k) = a.val().row(i).replicate(k, 1);
  auto* n = a.g->add(std::move(v), a.rg());
  n->backward = [an = a.n, n, k] {
    const long R = an->value.rows();
    Mat<T> g(R, n->value.cols());
    for (long i = 0; i < R; ++i)
      g.row(i) = n->grad.middleRows(i * k, k).colwise().sum();
    an->accum(g);
  };
  return {a.g, n};
}

template <typename T>
Var<T> concat_rows(Var<T> a, Var<T> b) {
  check_shape(a.cols() == b.cols(), a.rows(), a.cols(), b.rows(), b.cols(),
              "concat_rows");
  Mat<T> v(a.rows() + b.rows(), a.cols());
  v.topRows(a.rows()) = a.val();
  v.bottomRows(b.rows()) = b.val();
  auto* n = a.g->add(std::move(v), a.rg() || b.rg());
  n->backward = [an = a.n, bn = b.n, n] {
    an->accum(n->grad.topRows(an->value.rows()));
    bn->accum(n->grad.bottomRows(bn->value.rows()));
  };
  return {a.g, n};
}

template <typename T>
Var<T> slice_rows(Var<T> a, long start, long len) {
  if (start < 0 || start + len > a.rows())
    throw ShapeError("slice_rows: out of range");
  auto* n = a.g->add(Mat<T>(a.val().middleRows(start, len)), a.rg());
  n->backward = [an = a.n, n, start, len] {
    Mat<T> g = Mat<T>::Zero(an->value.rows(), an->value.cols());
    g.middleRows(start, len) = n->grad;
    an->accum(g);
  };
  return {a.g, n};
}

template <typename T>
Var<T> slice_cols(Var<T> a, long start, long len) {
  if (start < 0 || start + len > a.cols())
    throw ShapeError("slice_cols: out of range");
  auto* n = a.g->add(Mat<T>(a.val().middleCols(start, len)), a.rg());
  n->backward = [an = a.n, n, start, len] {
    Mat<T> g = Mat<T>::Zero(an->value.rows(), an->value.cols());
    g.middleCols(start, len) = n->grad;
    an->accum(g);
  };
  return {a.g, n};
}

/// Rows moved down by k; the first k rows are filled with `fill` (1 x cols).
template <typename T>
Var<T> shift_rows_down(Var<T> a, long k, Var<T> fill) {
  check_shape(fill.rows() == 1 && fill.cols() == a.cols(), a.rows(), a.cols(),
              fill.rows(), fill.cols(), "shift_rows_down");
  const long R = a.rows();
  Mat<T> v(R, a.cols());
  for (long i = 0; i < std::min(k, R); ++i) v.row(i) = fill.val().row(0);
  if (R > k) v.bottomRows(R - k) = a.val().topRows(R - k);
  auto* n = a.g->add(std::move(v), a.rg() || fill.rg());
  n->backward = [an = a.n, fn = fill.n, n, k] {
    const long R = n->value.rows();
    if (an->requires_grad && R > k) {
      Mat<T> g = Mat<T>::Zero(R, n->value.cols());
      g.topRows(R - k) = n->grad.bottomRows(R - k);
      an->accum(g);
    }
    if (fn->requires_grad)
      fn->accum(n->grad.topRows(std::min(k, R)).colwise().sum());
  };
  return {a.g, n};
}

template <typename T>
Var<T> sum(Var<T> a) {
  auto* n = a.g->add(Mat<T>::Constant(1, 1, a.val().sum()), a.rg());
  n->backward = [an = a.n, n] {
    an->accum(Mat<T>::Constant(an->value.rows(), an->value.cols(),
                               n->grad(0, 0)));
  };
  return {a.g, n};
}

template <typename T>
Var<T> mean_all(Var<T> a) {
  const T inv = T(1) / T(a.rows() * a.cols());
  auto* n = a.g->add(Mat<T>::Constant(1, 1, a.val().sum() * inv), a.rg());
  n->backward = [an = a.n, n, inv] {
    an->accum(Mat<T>::Constant(an->value.rows(), an->value.cols(),
                               n->grad(0, 0) * inv));
  };
  return {a.g, n};
}

/// Mean negative log-likelihood of `targets` under row-wise log-probs,
/// restricted to positions with mask != 0.
template <typename T>
Var<T> masked_nll(Var<T> logp, const std::vector<int>& targets,
                  const std::vector<char>& mask) {
  if (long(targets.size()) != logp.rows() || mask.size() != targets.size())
    throw ShapeError("masked_nll: target/mask length mismatch");
  long count = 0;
  T acc = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (!mask[i]) continue;
    if (targets[i] < 0 || targets[i] >= logp.cols())
      throw std::out_of_range("masked_nll: target out of range");
    acc -= logp.val()(long(i), targets[i]);
    ++count;
  }
  if (count == 0) throw std::invalid_argument("masked_nll: all-masked batch");
  auto* n = logp.g->add(Mat<T>::Constant(1, 1, acc / T(count)), logp.rg());
  n->backward = [ln = logp.n, n, targets, mask, count] {
    Mat<T> g = Mat<T>::Zero(ln->value.rows(), ln->value.cols());
    const T s = n->grad(0, 0) / T(count);
    for (std::size_t i = 0; i < targets.size(); ++i)
      if (mask[i]) g(long(i), targets[i]) -= s;
    ln->accum(g);
  };
  return {logp.g, n};
}

/// Fused multi-head causal self-attention. q, k, v are L x (H*Dh); the
/// output is L x (H*Dh). Strictly lower-triangular-plus-diagonal
/// visibility; masked weights are exactly zero.
template <typename T>
Var<T> causal_attention(Var<T> q, Var<T> k, Var<T> v, int heads) {
  const long L = q.rows(), D = q.cols();
  check_shape(k.rows() == L && k.cols() == D && v.rows() == L && v.cols() == D,
              L, D, k.rows(), k.cols(), "causal_attention");
  if (D % heads != 0) throw ShapeError("causal_attention: D % heads != 0");
  const long dh = D / heads;
  const T inv_scale = T(1) / std::sqrt(T(dh));

  auto attn = std::make_shared<std::vector<Mat<T>>>();
  attn->reserve(heads);
  Mat<T> out(L, D);
  for (int h = 0; h < heads; ++h) {
    auto Qh = q.val().middleCols(h * dh, dh);
    auto Kh = k.val().middleCols(h * dh, dh);
    auto Vh = v.val().middleCols(h * dh, dh);
    Mat<T> S = (Qh * Kh.transpose()) * inv_scale;
    Mat<T> A = Mat<T>::Zero(L, L);
    for (long i = 0; i < L; ++i) {
      auto row = S.row(i).head(i + 1);
      const T m = row.maxCoeff();
      Eigen::Array<T, 1, Eigen::Dynamic> e = (row.array() - m).exp();
      A.row(i).head(i + 1) = (e / e.sum()).matrix();
    }
    out.middleCols(h * dh, dh) = A * Vh;
    attn->push_back(std::move(A));
  }
  auto* n = q.g->add(std::move(out), q.rg() || k.rg() || v.rg());
  n->backward = [qn = q.n, kn = k.n, vn = v.n, n, attn, heads, dh,
                 inv_scale] {
    const long L = n->value.rows();
    Mat<T> gq = Mat<T>::Zero(L, heads * dh);
    Mat<T> gk = gq, gv = gq;
    for (int h = 0; h < heads; ++h) {
      const Mat<T>& A = (*attn)[h];
      auto Qh = qn->value.middleCols(h * dh, dh);
      auto Kh = kn->value.middleCols(h * dh, dh);
      auto Vh = vn->value.middleCols(h * dh, dh);
      auto dOh = n->grad.middleCols(h * dh, dh);
      gv.middleCols(h * dh, dh) = A.transpose() * dOh;
      Mat<T> dA = dOh * Vh.transpose();
      Mat<T> dS(L, L);
      for (long i = 0; i < L; ++i) {
        const T dot = dA.row(i).head(i + 1).dot(A.row(i).head(i + 1));
        dS.row(i).head(i + 1) = A.row(i).head(i + 1).cwiseProduct(
            (dA.row(i).head(i + 1).array() - dot).matrix());
        if (i + 1 < L) dS.row(i).tail(L - i - 1).setZero();
      }
      gq.middleCols(h * dh, dh) = (dS * Kh) * inv_scale;
      gk.middleCols(h * dh, dh) = (dS.transpose() * Qh) * inv_scale;
    }
    qn->accum(gq);
    kn->accum(gk);
    vn->accum(gv);
  };
  return {q.g, n};
}

/// Unmasked cross-attention: queries Q (Lq x D) attend over keys/values
/// (Lk x D). Used by the point-cloud conditioning encoder.
template <typename T>
Var<T> cross_attention(Var<T> q, Var<T> k, Var<T> v, int heads) {
  const long Lq = q.rows(), D = q.cols(), Lk = k.rows();
  check_shape(k.cols() == D && v.cols() == D && v.rows() == Lk, Lq, D,
              k.rows(), k.cols(), "cross_attention");
  if (D % heads != 0) throw ShapeError("cross_attention: D % heads != 0");
  const long dh = D / heads;
  const T inv_scale = T(1) / std::sqrt(T(dh));

  auto attn = std::make_shared<std::vector<Mat<T>>>();
  Mat<T> out(Lq, D);
  for (int h = 0; h < heads; ++h) {
    Mat<T> S = (q.val().middleCols(h * dh, dh) *
                k.val().middleCols(h * dh, dh).transpose()) *
               inv_scale;
    for (long i = 0; i < Lq; ++i) {
      auto row = S.row(i);
      const T m = row.maxCoeff();
      row = (row.array() - m).exp().matrix();
      row /= row.sum();
    }
    out.middleCols(h * dh, dh) = S * v.val().middleCols(h * dh, dh);
    attn->push_back(std::move(S));
  }
  auto* n = q.g->add(std::move(out), q.rg() || k.rg() || v.rg());
  n->backward = [qn = q.n, kn = k.n, vn = v.n, n, attn, heads, dh,
                 inv_scale] {
    const long Lq = n->value.rows();
    Mat<T> gq = Mat<T>::Zero(Lq, heads * dh);
    Mat<T> gk = Mat<T>::Zero(kn->value.rows(), heads * dh);
    Mat<T> gv = gk;
    for (int h = 0; h < heads; ++h) {
      const Mat<T>& A = (*attn)[h];
      auto dOh = n->grad.middleCols(h * dh, dh);
      gv.middleCols(h * dh, dh) = A.transpose() * dOh;
      Mat<T> dA = dOh * vn->value.middleCols(h * dh, dh).transpose();
      Mat<T> dS(Lq, A.cols());
      for (long i = 0; i < Lq; ++i) {
        const T dot = dA.row(i).dot(A.row(i));
        dS.row(i) =
            A.row(i).cwiseProduct((dA.row(i).array() - dot).matrix());
      }
      gq.middleCols(h * dh, dh) =
          (dS * kn->value.middleCols(h * dh, dh)) * inv_scale;
      gk.middleCols(h * dh, dh) =
          (dS.transpose() * qn->value.middleCols(h * dh, dh)) * inv_scale;
    }
    qn->accum(gq);
    kn->accum(gk);
    vn->accum(gv);
  };
  return {q.g, n};
}

}  // namespace hgt
