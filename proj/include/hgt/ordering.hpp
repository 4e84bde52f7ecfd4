#pragma once

#include "hgt/geometry.hpp"
#include "hgt/tree_graph.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

namespace hgt {

enum class OrderStrategy { ZYX, HILBERT, DFS, BFS };

inline const char* to_string(OrderStrategy s) {
  switch (s) {
    case OrderStrategy::ZYX: return "zyx";
    case OrderStrategy::HILBERT: return "hilbert";
    case OrderStrategy::DFS: return "dfs";
    case OrderStrategy::BFS: return "bfs";
  }
  return "?";
}

inline OrderStrategy order_strategy_from_string(const std::string& s) {
  if (s == "zyx") return OrderStrategy::ZYX;
  if (s == "hilbert") return OrderStrategy::HILBERT;
  if (s == "dfs") return OrderStrategy::DFS;
  if (s == "bfs") return OrderStrategy::BFS;
  throw std::invalid_argument("unknown ordering strategy: " + s);
}

struct BranchPermutation {
  std::vector<std::size_t> order;
  OrderStrategy strategy;
};

/// Branches sorted descending by (s.z, s.y, s.x); ties by index ascending.
inline BranchPermutation order_zyx(const TreeSkeleton& tree) {
  BranchPermutation perm{{}, OrderStrategy::ZYX};
  perm.order.resize(tree.size());
  std::iota(perm.order.begin(), perm.order.end(), 0);
  std::sort(perm.order.begin(), perm.order.end(),
            [&](std::size_t a, std::size_t b) {
              const BranchPoint& pa = tree.branches[a].s;
              const BranchPoint& pb = tree.branches[b].s;
              return std::make_tuple(-pa.z, -pa.y, -pa.x, a) <
                     std::make_tuple(-pb.z, -pb.y, -pb.x, b);
            });
  return perm;
}

/// Index of cell (x, y, z) on the 3D Hilbert curve over a 2^bits grid.
/// Skilling's transpose algorithm, axis order (x, y, z).
inline std::uint64_t hilbert_index(std::uint32_t x, std::uint32_t y,
                                   std::uint32_t z, int bits) {
  std::uint32_t coords[3] = {x, y, z};
  const int n = 3;

  // Inverse undo excess work (map Cartesian coords to transposed Hilbert).
  std::uint32_t m = 1u << (bits - 1);
  for (std::uint32_t q = m; q > 1; q >>= 1) {
    const std::uint32_t p = q - 1;
    for (int i = 0; i < n; ++i) {
      if (coords[i] & q) {
        coords[0] ^= p;  // invert
      } else {
        const std::uint32_t t = (coords[0] ^ coords[i]) & p;
        coords[0] ^= t;
        coords[i] ^= t;
      }
    }
  }
  // Gray encode.
  for (int i = 1; i < n; ++i) coords[i] ^= coords[i - 1];
  std::uint32_t t = 0;
  for (std::uint32_t q = m; q > 1; q >>= 1)
    if (coords[n - 1] & q) t ^= q - 1;
  for (int i = 0; i < n; ++i) coords[i] ^= t;

  // Interleave the transposed form into a single index, x major.
  std::uint64_t idx = 0;
  for (int b = bits - 1; b >= 0; --b)
    for (int i = 0; i < n; ++i)
      idx = (idx << 1) | ((coords[i] >> b) & 1u);
  return idx;
}

/// Branches keyed by the Hilbert index of the quantized start point on a
/// 2^bits grid over [-1,1]^3; sorted ascending, ties by index.
inline BranchPermutation order_hilbert(const TreeSkeleton& tree,
                                       int bits = 7) {
  if (bits < 1 || bits > 10)
    throw std::invalid_argument("order_hilbert: bits must be in [1,10]");
  const std::uint32_t cells = 1u << bits;
  auto cell = [&](double v) {
    double u = (v + 1.0) * 0.5 * cells;
    long c = static_cast<long>(std::floor(u));
    return static_cast<std::uint32_t>(std::clamp(c, 0L, long(cells) - 1));
  };
  std::vector<std::uint64_t> keys(tree.size());
  for (std::size_t i = 0; i < tree.size(); ++i) {
    const BranchPoint& p = tree.branches[i].s;
    keys[i] = hilbert_index(cell(p.x), cell(p.y), cell(p.z), bits);
  }
  BranchPermutation perm{{}, OrderStrategy::HILBERT};
  perm.order.resize(tree.size());
  std::iota(perm.order.begin(), perm.order.end(), 0);
  std::stable_sort(perm.order.begin(), perm.order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return keys[a] != keys[b] ? keys[a] < keys[b] : a < b;
                   });
  return perm;
}

/// Preorder depth-first traversal from the root, canonical child order.
inline BranchPermutation order_dfs(const TreeGraph& graph) {
  BranchPermutation perm{{}, OrderStrategy::DFS};
  perm.order.reserve(graph.size());
  std::vector<std::size_t> stack{graph.root};
  while (!stack.empty()) {
    const std::size_t v = stack.back();
    stack.pop_back();
    perm.order.push_back(v);
    const auto& kids = graph.children[v];
    for (auto it = kids.rbegin(); it != kids.rend(); ++it)
      stack.push_back(*it);
  }
  return perm;
}

/// Level-order traversal from the root, canonical child order per level.
inline BranchPermutation order_bfs(const TreeGraph& graph) {
  BranchPermutation perm{{}, OrderStrategy::BFS};
  perm.order.reserve(graph.size());
  std::size_t head = 0;
  perm.order.push_back(graph.root);
  while (head < perm.order.size()) {
    const std::size_t v = perm.order[head++];
    for (std::size_t c : graph.children[v]) perm.order.push_back(c);
  }
  return perm;
}

/// Ordering for a tree under the given strategy. DFS/BFS build the tree
/// graph; zyx/Hilbert are purely spatial.
inline BranchPermutation order_branches(const TreeSkeleton& tree,
                                        OrderStrategy strategy,
                                        double eps_connect = 1e-6,
                                        int hilbert_bits = 7) {
  switch (strategy) {
    case OrderStrategy::ZYX: return order_zyx(tree);
    case OrderStrategy::HILBERT: return order_hilbert(tree, hilbert_bits);
    case OrderStrategy::DFS:
      return order_dfs(build_tree_graph(tree, eps_connect));
    case OrderStrategy::BFS:
      return order_bfs(build_tree_graph(tree, eps_connect));
  }
  throw std::logic_error("unreachable");
}

}  // namespace hgt
