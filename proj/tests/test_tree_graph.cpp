#include "doctest.h"
#include "hgt/tree_graph.hpp"

using namespace hgt;

namespace {

Branch mk(Vec3 s, Vec3 t) {
  Branch b;
  b.s = {s.x(), s.y(), s.z(), 0.1};
  b.t = {t.x(), t.y(), t.z(), 0.05};
  return b;
}

}  // namespace

TEST_CASE("trunk with two children resolves parents and child order") {
  TreeSkeleton t;
  t.branches.push_back(mk({0, 0, 0}, {0, 0, 1}));
  t.branches.push_back(mk({0, 0, 1}, {0.5, 0, 1.5}));
  t.branches.push_back(mk({0, 0, 1}, {-0.5, 0, 1.5}));
  TreeGraph g = build_tree_graph(t, 1e-6);
  CHECK(g.root == 0);
  CHECK(!g.parent[0].has_value());
  CHECK(g.parent[1] == 0);
  CHECK(g.parent[2] == 0);
  REQUIRE(g.children[0].size() == 2);
  CHECK(g.children[0][0] == 1);
  CHECK(g.children[0][1] == 2);
}

TEST_CASE("single branch is its own root with no children") {
  TreeSkeleton t;
  t.branches.push_back(mk({0, 0, 0}, {0, 0, 1}));
  TreeGraph g = build_tree_graph(t, 1e-6);
  CHECK(g.root == 0);
  CHECK(g.children[0].empty());
}

TEST_CASE("an attachment gap beyond eps splits the tree") {
  TreeSkeleton t;
  t.branches.push_back(mk({0, 0, 0}, {0, 0, 1}));
  t.branches.push_back(mk({0, 0, 1.01}, {0, 0, 2}));
  CHECK_THROWS_AS(build_tree_graph(t, 1e-3), NotATreeError);
  // widening eps past the gap reconnects it
  TreeGraph g = build_tree_graph(t, 0.02);
  CHECK(g.parent[1] == 0);
}

TEST_CASE("mutually attached branches with no root are rejected") {
  TreeSkeleton t;
  t.branches.push_back(mk({0, 0, 0}, {1, 0, 0}));
  t.branches.push_back(mk({1, 0, 0}, {0, 0, 0}));
  CHECK_THROWS_AS(build_tree_graph(t, 1e-6), NotATreeError);
}

TEST_CASE("parent is the nearest attachment among candidates") {
  TreeSkeleton t;
  t.branches.push_back(mk({0, 0, 0}, {0, 0, 1}));
  t.branches.push_back(mk({0, 0, 1}, {0, 0, 1.001}));
  // child s sits within eps of both tips, closer to branch 1's
  t.branches.push_back(mk({0, 0, 1.0008}, {1, 0, 2}));
  TreeGraph g = build_tree_graph(t, 0.01);
  CHECK(g.parent[2] == 1);
}
