#pragma once

#include "hgt/geometry.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hgt {

inline constexpr int kNumBins = 256;
inline constexpr int kSosToken = 256;
inline constexpr int kEosToken = 257;
inline constexpr int kPadToken = 258;
inline constexpr int kVocabSize = 259;

enum class Channel { Coord, Radius };

/// Per-channel bin-edge tables: 256 bins, 257 strictly increasing edges.
/// Coordinates share one uniform table over [-1,1]; radii use empirical
/// equal-frequency edges fitted on a corpus.
class Quantizer {
 public:
  std::vector<double> coord_edges;   // 257
  std::vector<double> radius_edges;  // 257
  std::string provenance;

  const std::vector<double>& edges(Channel c) const {
    return c == Channel::Coord ? coord_edges : radius_edges;
  }

  /// Bin index k with edges[k] <= v < edges[k+1]; out-of-range values are
  /// clamped to the nearest bin and counted.
  int quantize(double v, Channel c) const {
    const auto& e = edges(c);
    if (v < e.front()) {
      ++clamp_count_;
      return 0;
    }
    if (v >= e.back()) {
      if (v > e.back()) ++clamp_count_;
      return kNumBins - 1;
    }
    const int k =
        int(std::upper_bound(e.begin(), e.end(), v) - e.begin()) - 1;
    return std::clamp(k, 0, kNumBins - 1);
  }

  /// Midpoint of bin k.
  double dequantize(int k, Channel c) const {
    const auto& e = edges(c);
    return 0.5 * (e[k] + e[k + 1]);
  }

  std::uint64_t clamp_count() const { return clamp_count_; }
  void reset_clamp_count() const { clamp_count_ = 0; }

  void save(std::ostream& os) const {
    os << std::setprecision(17);
    for (const auto& [name, e] :
         {std::pair{"coord", &coord_edges}, {"radius", &radius_edges}}) {
      os << name;
      for (double v : *e) os << ' ' << v;
      os << '\n';
    }
    os << "provenance " << provenance << '\n';
  }

  void save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write quantizer: " + path);
    save(os);
  }

  static Quantizer load(std::istream& is) {
    Quantizer q;
    std::string line;
    while (std::getline(is, line)) {
      std::istringstream ss(line);
      std::string name;
      ss >> name;
      if (name == "coord" || name == "radius") {
        std::vector<double>& e =
            name == "coord" ? q.coord_edges : q.radius_edges;
        double v;
        while (ss >> v) e.push_back(v);
        if (e.size() != kNumBins + 1)
          throw std::runtime_error("quantizer: expected 257 edges");
      } else if (name == "provenance") {
        std::getline(ss >> std::ws, q.provenance);
      }
    }
    if (q.coord_edges.empty() || q.radius_edges.empty())
      throw std::runtime_error("quantizer: missing edge tables");
    return q;
  }

  static Quantizer load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read quantizer: " + path);
    return load(is);
  }

 private:
  mutable std::uint64_t clamp_count_ = 0;
};

inline std::vector<double> uniform_edges(double lo, double hi) {
  std::vector<double> e(kNumBins + 1);
  for (int i = 0; i <= kNumBins; ++i)
    e[i] = lo + (hi - lo) * double(i) / kNumBins;
  return e;
}

/// Coordinate bins are uniform over [-1,1]. Radius bins are empirical
/// 256-quantile edges of all radii in the corpus; corpora with fewer than
/// 256 distinct radii fall back to uniform bins over [min,max].
inline Quantizer fit_quantizer(const std::vector<TreeSkeleton>& corpus) {
  if (corpus.empty())
    throw std::invalid_argument("fit_quantizer: empty corpus");
  Quantizer q;
  q.coord_edges = uniform_edges(-1.0, 1.0);

  std::vector<double> radii;
  for (const TreeSkeleton& t : corpus)
    for (const Branch& b : t.branches) {
      radii.push_back(b.s.r);
      radii.push_back(b.t.r);
    }
  std::sort(radii.begin(), radii.end());
  const std::size_t distinct =
      std::set<double>(radii.begin(), radii.end()).size();

  bool fallback = distinct < kNumBins;
  if (!fallback) {
    q.radius_edges.resize(kNumBins + 1);
    for (int i = 0; i <= kNumBins; ++i) {
      const double t = double(i) / kNumBins * (radii.size() - 1);
      q.radius_edges[i] = radii[static_cast<std::size_t>(std::round(t))];
    }
    q.radius_edges.front() = radii.front();
    q.radius_edges.back() = radii.back();
    for (int i = 0; i < kNumBins; ++i)
      if (q.radius_edges[i + 1] <= q.radius_edges[i]) {
        fallback = true;
        break;
      }
  }
  if (fallback) {
    double lo = radii.front(), hi = radii.back();
    if (hi <= lo) hi = lo + 1e-9;
    q.radius_edges = uniform_edges(lo, hi);
    q.provenance = "radius-bins=uniform-fallback";
  } else {
    q.provenance = "radius-bins=quantile";
  }
  q.provenance += " trees=" + std::to_string(corpus.size());
  return q;
}

}  // namespace hgt
