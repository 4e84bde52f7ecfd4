#include "doctest.h"
#include "hgt/geometry.hpp"

#include <random>

using namespace hgt;

namespace {

Branch make_branch(Vec3 s, Vec3 t, double rs, double rt) {
  Branch b;
  b.s = {s.x(), s.y(), s.z(), rs};
  b.t = {t.x(), t.y(), t.z(), rt};
  return b;
}

TreeSkeleton y_tree() {
  TreeSkeleton t;
  t.branches.push_back(make_branch({0, 0, 0}, {0, 0, 1}, 0.10, 0.08));
  t.branches.push_back(make_branch({0, 0, 1}, {0.5, 0, 1.8}, 0.06, 0.04));
  t.branches.push_back(make_branch({0, 0, 1}, {-0.4, 0.3, 1.7}, 0.06, 0.04));
  return t;
}

double max_point_diff(const TreeSkeleton& a, const TreeSkeleton& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, (a.branches[i].s.pos() - b.branches[i].s.pos())
                                .cwiseAbs()
                                .maxCoeff());
    worst = std::max(worst, (a.branches[i].t.pos() - b.branches[i].t.pos())
                                .cwiseAbs()
                                .maxCoeff());
    worst = std::max(worst, std::abs(a.branches[i].s.r - b.branches[i].s.r));
    worst = std::max(worst, std::abs(a.branches[i].t.r - b.branches[i].t.r));
  }
  return worst;
}

}  // namespace

TEST_CASE("normalize maps the bounding box into [-1,1]^3 touching the bounds") {
  auto [norm, tf] = normalize(y_tree());
  Vec3 lo = Vec3::Constant(1e9), hi = -lo;
  for (const auto& b : norm.branches) {
    lo = lo.cwiseMin(b.s.pos()).cwiseMin(b.t.pos());
    hi = hi.cwiseMax(b.s.pos()).cwiseMax(b.t.pos());
  }
  CHECK(lo.minCoeff() >= -1.0 - 1e-12);
  CHECK(hi.maxCoeff() <= 1.0 + 1e-12);
  // the longest axis spans the full interval
  CHECK((hi - lo).maxCoeff() == doctest::Approx(2.0));
}

TEST_CASE("normalization is invariant to uniform scaling of the input") {
  TreeSkeleton t = y_tree();
  TreeSkeleton big = t;
  for (auto& b : big.branches) {
    for (auto* p : {&b.s, &b.t}) {
      p->x *= 10;
      p->y *= 10;
      p->z *= 10;
      p->r *= 10;
    }
  }
  auto [na, _ta] = normalize(t);
  auto [nb, _tb] = normalize(big);
  CHECK(max_point_diff(na, nb) < 1e-9);
}

TEST_CASE("normalization transform round-trips points") {
  auto [norm, tf] = normalize(y_tree());
  TreeSkeleton back = denormalize(norm, tf);
  CHECK(max_point_diff(back, y_tree()) < 1e-9);
}

TEST_CASE("degenerate geometry is rejected") {
  TreeSkeleton t;
  t.branches.push_back(make_branch({1, 1, 1}, {1, 1, 1}, 0.1, 0.1));
  CHECK_THROWS_AS(normalize(t), DegenerateGeometryError);
  CHECK_THROWS_AS(normalize(TreeSkeleton{}), std::invalid_argument);
}

TEST_CASE("augment with zero rotation and no mirror is the identity") {
  auto [t, tf] = normalize(y_tree());
  TreeSkeleton a = augment(t, 0.0, false);
  CHECK(max_point_diff(a, t) < 1e-12);
}

TEST_CASE("augment involutions: two half-turns and double mirror undo") {
  auto [t, tf] = normalize(y_tree());
  const double pi = 3.14159265358979323846;
  TreeSkeleton twice = augment(augment(t, pi, false), pi, false);
  CHECK(max_point_diff(twice, t) < 1e-9);
  TreeSkeleton mm = augment(augment(t, 0.0, true), 0.0, true);
  CHECK(max_point_diff(mm, t) < 1e-9);
}

TEST_CASE("augment preserves pairwise distances and radii") {
  auto [t, tf] = normalize(y_tree());
  TreeSkeleton a = augment(t, 1.234, true);
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(a.branches[i].length() ==
          doctest::Approx(t.branches[i].length()).epsilon(1e-9));
    CHECK(a.branches[i].s.r == doctest::Approx(t.branches[i].s.r));
    CHECK(a.branches[i].t.r == doctest::Approx(t.branches[i].t.r));
  }
}

TEST_CASE("point cloud samples lie on branch surfaces") {
  TreeSkeleton t;
  t.branches.push_back(make_branch({0, 0, 0}, {0, 0, 1}, 0.1, 0.1));
  auto pts = sample_point_cloud(t, 500, 9);
  REQUIRE(pts.size() == 500);
  for (const auto& p : pts) {
    CHECK(p.z() >= -1e-9);
    CHECK(p.z() <= 1.0 + 1e-9);
    const double d = std::hypot(p.x(), p.y());
    CHECK(d == doctest::Approx(0.1).epsilon(1e-6));
  }
}

TEST_CASE("point cloud sampling is deterministic per seed") {
  TreeSkeleton t = y_tree();
  auto a = sample_point_cloud(t, 64, 3);
  auto b = sample_point_cloud(t, 64, 3);
  auto c = sample_point_cloud(t, 64, 4);
  REQUIRE(a.size() == b.size());
  double same = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    same = std::max(same, (a[i] - b[i]).cwiseAbs().maxCoeff());
  CHECK(same == 0.0);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if ((a[i] - c[i]).cwiseAbs().maxCoeff() > 0) differs = true;
  CHECK(differs);
}

TEST_CASE("point count is proportional to lateral surface area") {
  // Two parallel branches, one with 3x the radius (and so 3x the area).
  TreeSkeleton t;
  t.branches.push_back(make_branch({0, 0, 0}, {0, 0, 1}, 0.3, 0.3));
  t.branches.push_back(make_branch({2, 0, 0}, {2, 0, 1}, 0.1, 0.1));
  auto pts = sample_point_cloud(t, 4000, 5);
  long on_big = 0;
  for (const auto& p : pts)
    if (p.x() < 1.0) ++on_big;
  const double frac = double(on_big) / double(pts.size());
  CHECK(frac == doctest::Approx(0.75).epsilon(0.05));
}
