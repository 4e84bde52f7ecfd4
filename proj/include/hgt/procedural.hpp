#pragma once

#include "hgt/geometry.hpp"
#include "hgt/tree_graph.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace hgt {

struct InvalidParamsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Ten chronological snapshots of one growing tree. Branch endpoints are
/// fixed across stages; radii only thicken.
struct GrowthSequence {
  static constexpr std::size_t kStages = 10;
  std::vector<TreeSkeleton> stages;  // exactly 10
};

/// Knobs for the stochastic recursive branching process used as the
/// training data source.
struct ProceduralParams {
  int depth_min = 3;
  int depth_max = 5;
  int children_min = 1;  // children per node (uniform in [min,max])
  int children_max = 3;
  double length_decay = 0.7;   // in (0,1)
  double radius_decay = 0.65;  // in (0,1)
  double angle_mean_deg = 32.0;
  double angle_spread_deg = 14.0;
  double tropism = 0.25;  // upward pull in [0,1]
  double trunk_length = 1.0;
  double trunk_radius = 0.06;
  std::uint64_t seed = 0;
  std::string species_tag = "procedural";

  void validate() const {
    if (depth_min < 1 || depth_max < depth_min)
      throw InvalidParamsError("procedural: bad depth range");
    if (children_min < 0 || children_max < children_min)
      throw InvalidParamsError("procedural: bad children range");
    if (length_decay <= 0.0 || length_decay >= 1.0 || radius_decay <= 0.0 ||
        radius_decay >= 1.0)
      throw InvalidParamsError("procedural: decay factors must be in (0,1)");
    if (trunk_length <= 0.0 || trunk_radius <= 0.0)
      throw InvalidParamsError("procedural: trunk dimensions must be > 0");
  }
};

namespace detail {

struct GrownBranch {
  Vec3 s, t;
  double rs, rt;
  int birth;  // growth step at which the branch appears
};

inline Vec3 rotate_towards(const Vec3& dir, double angle_rad, double azimuth,
                           double tropism) {
  Vec3 ortho = dir.cross(Vec3::UnitX());
  if (ortho.squaredNorm() < 1e-10) ortho = dir.cross(Vec3::UnitY());
  ortho.normalize();
  const Vec3 ortho2 = dir.cross(ortho).normalized();
  Vec3 bent = std::cos(angle_rad) * dir +
              std::sin(angle_rad) *
                  (std::cos(azimuth) * ortho + std::sin(azimuth) * ortho2);
  bent = ((1.0 - tropism) * bent + tropism * Vec3::UnitZ()).normalized();
  return bent;
}

}  // namespace detail

/// Generates a 10-stage growth sequence of one procedural tree. The final
/// stage has at most n_max branches; every stage passes build_tree_graph.
/// Deterministic for a fixed seed.
inline GrowthSequence generate_procedural(const ProceduralParams& params,
                                          std::size_t n_max) {
  params.validate();
  if (n_max < 1) throw InvalidParamsError("procedural: n_max must be >= 1");

  std::mt19937_64 rng(params.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::uniform_int_distribution<int> depth_dist(params.depth_min,
                                                params.depth_max);
  std::uniform_int_distribution<int> kids_dist(params.children_min,
                                               params.children_max);

  const int depth = depth_dist(rng);
  std::vector<detail::GrownBranch> grown;
  grown.push_back({Vec3::Zero(), Vec3(0, 0, params.trunk_length),
                   params.trunk_radius, params.trunk_radius * 0.8, 0});

  // Breadth-first expansion so the n_max cut keeps the tree connected.
  struct Frontier {
    std::size_t branch;
    int level;
  };
  std::vector<Frontier> frontier{{0, 0}};
  while (!frontier.empty()) {
    std::vector<Frontier> next;
    for (const Frontier& f : frontier) {
      if (f.level >= depth) continue;
      const int kids = kids_dist(rng);
      const detail::GrownBranch parent = grown[f.branch];
      const Vec3 dir = (parent.t - parent.s).normalized();
      const double len =
          (parent.t - parent.s).norm() * params.length_decay *
          (0.85 + 0.3 * uni(rng));
      for (int k = 0; k < kids; ++k) {
        if (grown.size() >= n_max) break;
        const double angle =
            (params.angle_mean_deg +
             params.angle_spread_deg * (2.0 * uni(rng) - 1.0)) *
            M_PI / 180.0;
        const double azimuth = 2.0 * M_PI * uni(rng);
        const Vec3 cdir =
            detail::rotate_towards(dir, angle, azimuth, params.tropism);
        detail::GrownBranch child;
        child.s = parent.t;
        child.t = parent.t + len * cdir;
        child.rs = parent.rt;
        child.rt = parent.rt * params.radius_decay;
        child.birth = f.level + 1;
        grown.push_back(child);
        next.push_back({grown.size() - 1, f.level + 1});
      }
      if (grown.size() >= n_max) break;
    }
    if (grown.size() >= n_max) break;
    frontier = std::move(next);
  }

  int max_birth = 0;
  for (const auto& b : grown) max_birth = std::max(max_birth, b.birth);

  GrowthSequence gs;
  gs.stages.resize(GrowthSequence::kStages);
  for (std::size_t k = 0; k < GrowthSequence::kStages; ++k) {
    // Stage k contains branches born in the first (k+1)/10 of the growth.
    const double frac = double(k + 1) / double(GrowthSequence::kStages);
    const int cutoff = static_cast<int>(std::floor(frac * (max_birth + 1)) - 1);
    TreeSkeleton& stage = gs.stages[k];
    stage.species_tag = params.species_tag;
    for (const auto& b : grown) {
      if (b.birth > std::max(cutoff, 0)) continue;
      // Radii thicken monotonically with stage age.
      const double age =
          double(k + 1 - b.birth) /
          std::max(1.0, double(GrowthSequence::kStages) - double(b.birth));
      const double thick = 0.6 + 0.4 * std::min(1.0, std::max(0.0, age));
      Branch br;
      br.s = {b.s.x(), b.s.y(), b.s.z(), b.rs * thick};
      br.t = {b.t.x(), b.t.y(), b.t.z(), b.rt * thick};
      stage.branches.push_back(br);
    }
  }
  return gs;
}

/// Final-stage tree of a procedural growth sequence.
inline TreeSkeleton generate_procedural_tree(const ProceduralParams& params,
                                             std::size_t n_max) {
  return generate_procedural(params, n_max).stages.back();
}

}  // namespace hgt
