#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace hgt {

using Vec3 = Eigen::Vector3d;

/// One endpoint of a branch: position plus the branch radius at that point.
struct BranchPoint {
  double x = 0.0, y = 0.0, z = 0.0;
  double r = 0.0;  // > 0

  Vec3 pos() const { return Vec3(x, y, z); }
};

/// A tapered cylinder segment from the proximal endpoint s to the distal t.
struct Branch {
  BranchPoint s;
  BranchPoint t;

  double length() const { return (t.pos() - s.pos()).norm(); }
};

/// An unordered set of branches; storage order carries no meaning.
struct TreeSkeleton {
  std::vector<Branch> branches;
  std::string species_tag;

  std::size_t size() const { return branches.size(); }
  bool empty() const { return branches.empty(); }
};

struct DegenerateGeometryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invertible uniform scale + translation: p' = scale * (p - center).
struct NormalizationTransform {
  Vec3 center = Vec3::Zero();
  double scale = 1.0;
  double r_max = 0.0;  // max radius observed after normalization

  Vec3 apply(const Vec3& p) const { return scale * (p - center); }
  Vec3 invert(const Vec3& p) const { return p / scale + center; }
};

/// Maps the bounding box of all endpoints into [-1,1]^3 centered at the
/// origin, preserving aspect ratio. Radii scale by the same factor.
inline std::pair<TreeSkeleton, NormalizationTransform> normalize(
    const TreeSkeleton& tree) {
  if (tree.empty()) throw std::invalid_argument("normalize: empty tree");
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const Branch& b : tree.branches) {
    lo = lo.cwiseMin(b.s.pos()).cwiseMin(b.t.pos());
    hi = hi.cwiseMax(b.s.pos()).cwiseMax(b.t.pos());
  }
  const double extent = (hi - lo).maxCoeff();
  if (extent <= 0.0)
    throw DegenerateGeometryError("normalize: degenerate bounding box");
  NormalizationTransform tf;
  tf.center = 0.5 * (lo + hi);
  tf.scale = 2.0 / extent;

  TreeSkeleton out = tree;
  for (Branch& b : out.branches) {
    for (BranchPoint* p : {&b.s, &b.t}) {
      Vec3 q = tf.apply(p->pos());
      p->x = q.x();
      p->y = q.y();
      p->z = q.z();
      p->r *= tf.scale;
      tf.r_max = std::max(tf.r_max, p->r);
    }
  }
  return {out, tf};
}

inline TreeSkeleton denormalize(const TreeSkeleton& tree,
                                const NormalizationTransform& tf) {
  TreeSkeleton out = tree;
  for (Branch& b : out.branches) {
    for (BranchPoint* p : {&b.s, &b.t}) {
      Vec3 q = tf.invert(p->pos());
      p->x = q.x();
      p->y = q.y();
      p->z = q.z();
      p->r /= tf.scale;
    }
  }
  return out;
}

/// Rotation about z by theta; if mirror, x -> -x is applied first.
/// The result is re-normalized only if it leaves [-1,1]^3.
inline TreeSkeleton augment(const TreeSkeleton& tree, double theta_z,
                            bool mirror) {
  const double c = std::cos(theta_z), s = std::sin(theta_z);
  TreeSkeleton out = tree;
  bool exited = false;
  for (Branch& b : out.branches) {
    for (BranchPoint* p : {&b.s, &b.t}) {
      double x = mirror ? -p->x : p->x;
      double y = p->y;
      p->x = c * x - s * y;
      p->y = s * x + c * y;
      if (std::abs(p->x) > 1.0 || std::abs(p->y) > 1.0 || std::abs(p->z) > 1.0)
        exited = true;
    }
  }
  if (exited) return normalize(out).first;
  return out;
}

/// Points drawn uniformly by lateral surface area over the union of the
/// branches' tapered cylinders. Deterministic per seed.
inline std::vector<Vec3> sample_point_cloud(const TreeSkeleton& tree,
                                            std::size_t n_points,
                                            std::uint64_t seed) {
  if (tree.empty())
    throw std::invalid_argument("sample_point_cloud: empty tree");
  if (n_points == 0)
    throw std::invalid_argument("sample_point_cloud: n_points must be >= 1");

  // Lateral area of a conical frustum: pi * (r_s + r_t) * slant.
  std::vector<double> cum_area;
  cum_area.reserve(tree.size());
  double total = 0.0;
  for (const Branch& b : tree.branches) {
    const double len = b.length();
    const double dr = b.t.r - b.s.r;
    const double slant = std::sqrt(len * len + dr * dr);
    total += M_PI * (b.s.r + b.t.r) * slant;
    cum_area.push_back(total);
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<Vec3> pts;
  pts.reserve(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    const double pick = uni(rng) * total;
    const std::size_t bi =
        std::lower_bound(cum_area.begin(), cum_area.end(), pick) -
        cum_area.begin();
    const Branch& b = tree.branches[std::min(bi, tree.size() - 1)];

    // Along the axis, area density is proportional to the local radius
    // r(u) = r_s + u (r_t - r_s); invert its CDF.
    const double rs = b.s.r, rt = b.t.r;
    const double v = uni(rng);
    double u;
    if (std::abs(rt - rs) < 1e-12 * std::max(rs, rt)) {
      u = v;
    } else {
      u = (std::sqrt(rs * rs + v * (rt * rt - rs * rs)) - rs) / (rt - rs);
    }
    const double radius = rs + u * (rt - rs);

    const Vec3 axis = (b.t.pos() - b.s.pos()).normalized();
    Vec3 ortho = axis.cross(Vec3::UnitX());
    if (ortho.squaredNorm() < 1e-12) ortho = axis.cross(Vec3::UnitY());
    ortho.normalize();
    const Vec3 ortho2 = axis.cross(ortho);

    const double phi = 2.0 * M_PI * uni(rng);
    const Vec3 center = b.s.pos() + u * (b.t.pos() - b.s.pos());
    pts.push_back(center +
                  radius * (std::cos(phi) * ortho + std::sin(phi) * ortho2));
  }
  return pts;
}

}  // namespace hgt
