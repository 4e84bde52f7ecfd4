#pragma once

#include "hgt/geometry.hpp"
#include "hgt/quantizer.hpp"
#include "hgt/tree_graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace hgt {

/// Symmetric Chamfer distance: mean squared nearest-neighbor distance in
/// both directions, summed.
inline double chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("chamfer: empty point set");
  auto one_way = [](const std::vector<Vec3>& from,
                    const std::vector<Vec3>& to) {
    double acc = 0;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) best = std::min(best, (p - q).squaredNorm());
      acc += best;
    }
    return acc / double(from.size());
  };
  return one_way(a, b) + one_way(b, a);
}

struct MmdCovResult {
  double mmd = 0.0;  // mean over reference of nearest generated distance
  double cov = 0.0;  // fraction of reference matched as someone's nearest
};

inline MmdCovResult mmd_cov(const std::vector<std::vector<Vec3>>& reference,
                            const std::vector<std::vector<Vec3>>& generated) {
  if (reference.empty() || generated.empty())
    throw std::invalid_argument("mmd_cov: empty set");
  const std::size_t R = reference.size(), G = generated.size();
  Eigen::MatrixXd d(G, R);
  for (std::size_t i = 0; i < G; ++i)
    for (std::size_t j = 0; j < R; ++j)
      d(long(i), long(j)) = chamfer(generated[i], reference[j]);

  MmdCovResult out;
  for (std::size_t j = 0; j < R; ++j) out.mmd += d.col(long(j)).minCoeff();
  out.mmd /= double(R);

  std::vector<char> covered(R, 0);
  for (std::size_t i = 0; i < G; ++i) {
    long best;
    d.row(long(i)).minCoeff(&best);
    covered[std::size_t(best)] = 1;
  }
  long c = 0;
  for (char v : covered) c += v;
  out.cov = double(c) / double(R);
  return out;
}

/// Occupancy histogram over a grid^3 lattice covering [-1,1]^3; points
/// outside are clamped to the boundary cells.
inline std::vector<double> occupancy_histogram(
    const std::vector<std::vector<Vec3>>& clouds, int grid) {
  std::vector<double> h(std::size_t(grid) * grid * grid, 0.0);
  double total = 0;
  for (const auto& cloud : clouds)
    for (const auto& p : cloud) {
      auto cell = [grid](double v) {
        int c = int(std::floor((v + 1.0) * 0.5 * grid));
        return std::clamp(c, 0, grid - 1);
      };
      h[(std::size_t(cell(p.x())) * grid + cell(p.y())) * grid + cell(p.z())] +=
          1.0;
      total += 1.0;
    }
  if (total > 0)
    for (auto& v : h) v /= total;
  return h;
}

/// Jensen-Shannon divergence between two discrete distributions, natural
/// log.
inline double jsd(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size())
    throw std::invalid_argument("jsd: size mismatch");
  auto kl_to_mix = [](const std::vector<double>& a,
                      const std::vector<double>& b) {
    double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i] <= 0) continue;
      acc += a[i] * std::log(a[i] / (0.5 * (a[i] + b[i])));
    }
    return acc;
  };
  return 0.5 * kl_to_mix(p, q) + 0.5 * kl_to_mix(q, p);
}

inline double jsd_points(const std::vector<std::vector<Vec3>>& reference,
                         const std::vector<std::vector<Vec3>>& generated,
                         int grid = 32) {
  return jsd(occupancy_histogram(reference, grid),
             occupancy_histogram(generated, grid));
}

/// True when every non-root branch attaches to some parent tip within eps.
inline bool is_connected(const TreeSkeleton& tree, double eps) {
  try {
    build_tree_graph(tree, eps);
    return true;
  } catch (const NotATreeError&) {
    return false;
  }
}

/// Per-branch connectivity: the fraction of branches whose start lies
/// within eps of some earlier branch's tip, in storage (generation) order.
/// The first branch counts as connected. Empty trees score 0.
inline double connect_fraction(const TreeSkeleton& tree, double eps) {
  if (tree.empty()) return 0.0;
  long connected = 1;
  for (std::size_t i = 1; i < tree.size(); ++i) {
    const Vec3 s = tree.branches[i].s.pos();
    for (std::size_t j = 0; j < i; ++j)
      if ((s - tree.branches[j].t.pos()).norm() <= eps) {
        ++connected;
        break;
      }
  }
  return double(connected) / double(tree.size());
}

/// Connectivity tolerance implied by the coordinate quantization: the
/// largest bin diagonal plus the generator's own tolerance.
inline double connect_eps_for(const Quantizer& q, double eps_connect = 1e-6) {
  double w = 0;
  const auto& e = q.coord_edges;
  for (std::size_t i = 0; i + 1 < e.size(); ++i)
    w = std::max(w, e[i + 1] - e[i]);
  return w * std::sqrt(3.0) + eps_connect;
}

/// Mean per-branch connectivity over a set of trees.
inline double connect_score(const std::vector<TreeSkeleton>& trees,
                            double eps) {
  if (trees.empty()) throw std::invalid_argument("connect_score: empty set");
  double acc = 0;
  for (const auto& t : trees) acc += connect_fraction(t, eps);
  return acc / double(trees.size());
}

/// Distance from each cloud to its nearest other cloud in `others`
/// (self-pairs skipped when the sets alias each other via `skip_index`).
inline double nearest_chamfer(const std::vector<Vec3>& cloud,
                              const std::vector<std::vector<Vec3>>& others,
                              long skip_index = -1) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < others.size(); ++j) {
    if (long(j) == skip_index) continue;
    best = std::min(best, chamfer(cloud, others[j]));
  }
  return best;
}

/// Novelty threshold: the given percentile (default 1st) of
/// train-to-train nearest-neighbor Chamfer distances.
inline double novelty_threshold(const std::vector<std::vector<Vec3>>& train,
                                double percentile = 1.0) {
  if (train.size() < 2)
    throw std::invalid_argument("novelty_threshold: need >= 2 clouds");
  std::vector<double> nn(train.size());
  for (std::size_t i = 0; i < train.size(); ++i)
    nn[i] = nearest_chamfer(train[i], train, long(i));
  std::sort(nn.begin(), nn.end());
  double idx = percentile / 100.0 * double(nn.size() - 1);
  std::size_t lo = std::size_t(std::floor(idx));
  std::size_t hi = std::min(lo + 1, nn.size() - 1);
  double f = idx - double(lo);
  return nn[lo] * (1.0 - f) + nn[hi] * f;
}

struct NoveltyReport {
  double novel_fraction = 0.0;   // farther than delta from every train cloud
  double unique_fraction = 0.0;  // farther than delta from every other sample
  double delta = 0.0;
};

inline NoveltyReport novelty_uniqueness(
    const std::vector<std::vector<Vec3>>& train,
    const std::vector<std::vector<Vec3>>& generated, double delta) {
  if (generated.empty())
    throw std::invalid_argument("novelty_uniqueness: empty generated set");
  NoveltyReport r;
  r.delta = delta;
  long novel = 0, unique = 0;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    if (nearest_chamfer(generated[i], train) > delta) ++novel;
    // First occurrence of each near-duplicate cluster counts as unique.
    bool duplicate = false;
    for (std::size_t j = 0; j < i && !duplicate; ++j)
      duplicate = chamfer(generated[i], generated[j]) <= delta;
    if (!duplicate) ++unique;
  }
  r.novel_fraction = double(novel) / double(generated.size());
  r.unique_fraction = double(unique) / double(generated.size());
  return r;
}

struct EvalReport {
  std::map<std::string, double> values;  // ordered for stable output

  void set(const std::string& k, double v) { values[k] = v; }

  void write_csv(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("eval: cannot write " + path);
    f << "metric,value\n";
    f.precision(10);
    for (const auto& [k, v] : values) f << k << ',' << v << '\n';
  }

  std::string pretty() const {
    std::string out;
    for (const auto& [k, v] : values) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "%-24s %.6g\n", k.c_str(), v);
      out += buf;
    }
    return out;
  }
};

}  // namespace hgt
