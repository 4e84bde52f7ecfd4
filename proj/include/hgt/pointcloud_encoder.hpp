#pragma once

#include "hgt/geometry.hpp"
#include "hgt/infer.hpp"
#include "hgt/model.hpp"

namespace hgt {

/// Points as an n x 3 matrix in normalized coordinates.
template <typename T>
Mat<T> points_to_matrix(const std::vector<Vec3>& pts) {
  Mat<T> m(long(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i)
    m.row(long(i)) << T(pts[i].x()), T(pts[i].y()), T(pts[i].z());
  return m;
}

/// Point-cloud conditioning prefix on the training graph. A shared
/// per-point MLP embeds each point; a fixed set of learned query slots
/// attends over all point features (no mask), so the result is invariant
/// to point order. Output shape: prefix_len x embed_dim.
template <typename T>
Var<T> encode_pointcloud(Graph<T>& g, const BoundModel<T>& bm,
                         const Mat<T>& points) {
  const ModelConfig& cfg = bm.params->cfg;
  if (cfg.prefix_len <= 0)
    throw ShapeError("encode_pointcloud: model has no conditioning prefix");
  if (points.cols() != 3 || points.rows() < 1)
    throw ShapeError("encode_pointcloud: points must be n x 3, n >= 1");

  Var<T> pts = leaf(g, points, false);
  Var<T> f = add_rowvec(matmul(pts, bm["pc.w1"]), bm["pc.b1"]);
  f = add_rowvec(matmul(gelu(f), bm["pc.w2"]), bm["pc.b2"]);

  Var<T> queries = bm["pc.queries"];
  Var<T> q = add_rowvec(matmul(queries, bm["pc.wq"]), bm["pc.bq"]);
  Var<T> k = add_rowvec(matmul(f, bm["pc.wk"]), bm["pc.bk"]);
  Var<T> v = add_rowvec(matmul(f, bm["pc.wv"]), bm["pc.bv"]);
  Var<T> att = cross_attention(q, k, v, cfg.heads);
  Var<T> out = add(queries, add_rowvec(matmul(att, bm["pc.wo"]), bm["pc.bo"]));
  return layernorm(out, bm["pc.ln.g"], bm["pc.ln.b"]);
}

/// Tape-free version producing the same prefix rows.
template <typename T>
Mat<T> encode_pointcloud(const ModelParams<T>& p, const Mat<T>& points) {
  const ModelConfig& cfg = p.cfg;
  if (cfg.prefix_len <= 0)
    throw ShapeError("encode_pointcloud: model has no conditioning prefix");
  if (points.cols() != 3 || points.rows() < 1)
    throw ShapeError("encode_pointcloud: points must be n x 3, n >= 1");

  Mat<T> f = (points * p.at("pc.w1")).rowwise() + p.at("pc.b1").row(0);
  f = (nograd::gelu(f) * p.at("pc.w2")).rowwise() + p.at("pc.b2").row(0);

  const Mat<T>& queries = p.at("pc.queries");
  Mat<T> q = (queries * p.at("pc.wq")).rowwise() + p.at("pc.bq").row(0);
  Mat<T> k = (f * p.at("pc.wk")).rowwise() + p.at("pc.bk").row(0);
  Mat<T> v = (f * p.at("pc.wv")).rowwise() + p.at("pc.bv").row(0);

  const int heads = cfg.heads;
  const long dh = cfg.embed_dim / heads;
  const T inv_scale = T(1) / std::sqrt(T(dh));
  Mat<T> att(q.rows(), q.cols());
  for (int h = 0; h < heads; ++h) {
    Mat<T> s = (q.middleCols(h * dh, dh) *
                k.middleCols(h * dh, dh).transpose()) *
               inv_scale;
    for (long i = 0; i < s.rows(); ++i) {
      auto row = s.row(i);
      const T m = row.maxCoeff();
      Eigen::Array<T, 1, Eigen::Dynamic> e = (row.array() - m).exp();
      att.block(i, h * dh, 1, dh) =
          (e / e.sum()).matrix() * v.middleCols(h * dh, dh);
    }
  }
  Mat<T> out = queries +
               ((att * p.at("pc.wo")).rowwise() + p.at("pc.bo").row(0));
  return nograd::layernorm(out, p.at("pc.ln.g"), p.at("pc.ln.b"));
}

}  // namespace hgt
