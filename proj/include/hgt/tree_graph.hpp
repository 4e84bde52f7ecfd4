#pragma once

#include "hgt/geometry.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>
#include <vector>

namespace hgt {

struct NotATreeError : std::runtime_error {
  std::vector<std::size_t> offending;
  NotATreeError(const std::string& msg, std::vector<std::size_t> idx)
      : std::runtime_error(msg), offending(std::move(idx)) {}
};

/// Rooted parent-child graph over branches. Children lists follow the
/// canonical order: sorted by (t.z, t.y, t.x) descending, then by index.
struct TreeGraph {
  std::size_t root = 0;
  std::vector<std::optional<std::size_t>> parent;
  std::vector<std::vector<std::size_t>> children;

  std::size_t size() const { return parent.size(); }
};

/// Parent of branch b is the branch a != b minimizing |b.s - a.t|, subject
/// to |b.s - a.t| <= eps_connect. Exactly one parentless branch is the root.
inline TreeGraph build_tree_graph(const TreeSkeleton& tree,
                                  double eps_connect = 1e-6) {
  if (tree.empty())
    throw std::invalid_argument("build_tree_graph: empty tree");
  const std::size_t n = tree.size();
  TreeGraph g;
  g.parent.assign(n, std::nullopt);
  g.children.assign(n, {});

  std::vector<std::size_t> roots;
  for (std::size_t b = 0; b < n; ++b) {
    double best = eps_connect;
    std::optional<std::size_t> best_parent;
    const Vec3 sb = tree.branches[b].s.pos();
    for (std::size_t a = 0; a < n; ++a) {
      if (a == b) continue;
      const double d = (sb - tree.branches[a].t.pos()).norm();
      if (d <= best) {
        best = d;
        best_parent = a;
      }
    }
    if (best_parent)
      g.parent[b] = best_parent;
    else
      roots.push_back(b);
  }
  if (roots.empty())
    throw NotATreeError("build_tree_graph: no parentless branch (cycle)", {});
  if (roots.size() > 1)
    throw NotATreeError("build_tree_graph: multiple parentless branches",
                        roots);
  g.root = roots[0];

  for (std::size_t b = 0; b < n; ++b)
    if (g.parent[b]) g.children[*g.parent[b]].push_back(b);

  auto key = [&](std::size_t i) {
    const BranchPoint& t = tree.branches[i].t;
    return std::make_tuple(-t.z, -t.y, -t.x, i);
  };
  for (auto& kids : g.children)
    std::sort(kids.begin(), kids.end(),
              [&](std::size_t a, std::size_t b) { return key(a) < key(b); });

  // Reachability from root doubles as the cycle check.
  std::vector<char> seen(n, 0);
  std::vector<std::size_t> stack{g.root};
  seen[g.root] = 1;
  std::size_t visited = 0;
  while (!stack.empty()) {
    const std::size_t v = stack.back();
    stack.pop_back();
    ++visited;
    for (std::size_t c : g.children[v]) {
      if (seen[c])
        throw NotATreeError("build_tree_graph: cycle detected", {c});
      seen[c] = 1;
      stack.push_back(c);
    }
  }
  if (visited != n) {
    std::vector<std::size_t> missing;
    for (std::size_t i = 0; i < n; ++i)
      if (!seen[i]) missing.push_back(i);
    throw NotATreeError("build_tree_graph: branches unreachable from root",
                        missing);
  }
  return g;
}

}  // namespace hgt
