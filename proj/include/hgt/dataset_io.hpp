#pragma once

#include "hgt/geometry.hpp"
#include "hgt/procedural.hpp"
#include "hgt/tokenizer.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace hgt {

/// Line-delimited text formats, all floats at 10 significant digits so
/// values survive a save/load round trip at float precision and better.
///
/// Trees:   one record per line: `tree <tag> <n> <8n floats>`
/// Growth:  header line `growth <tag> <stages>`, then one `stage` line per
///          snapshot in tree layout: `stage <n> <8n floats>`
/// Points:  one `x y z` triple per line, blank line between clouds
/// Tokens:  one sequence per line: `tokens <n> <ids>`

namespace detail {

inline void write_branches(std::ostream& os, const TreeSkeleton& t) {
  for (const auto& b : t.branches)
    os << ' ' << b.s.x << ' ' << b.s.y << ' ' << b.s.z << ' ' << b.s.r << ' '
       << b.t.x << ' ' << b.t.y << ' ' << b.t.z << ' ' << b.t.r;
}

inline void read_branches(std::istringstream& ss, TreeSkeleton& t,
                          std::size_t n) {
  t.branches.resize(n);
  for (auto& b : t.branches)
    if (!(ss >> b.s.x >> b.s.y >> b.s.z >> b.s.r >> b.t.x >> b.t.y >> b.t.z >>
          b.t.r))
      throw std::runtime_error("dataset: truncated branch record");
}

}  // namespace detail

inline void save_trees(const std::vector<TreeSkeleton>& trees,
                       const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("dataset: cannot write " + path);
  f << std::setprecision(10);
  for (const auto& t : trees) {
    f << "tree " << (t.species_tag.empty() ? "-" : t.species_tag) << ' '
      << t.size();
    detail::write_branches(f, t);
    f << '\n';
  }
}

inline std::vector<TreeSkeleton> load_trees(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("dataset: cannot read " + path);
  std::vector<TreeSkeleton> trees;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string kind, tag;
    std::size_t n;
    if (!(ss >> kind >> tag >> n) || kind != "tree")
      throw std::runtime_error("dataset: bad tree record: " + line);
    TreeSkeleton t;
    t.species_tag = (tag == "-") ? "" : tag;
    detail::read_branches(ss, t, n);
    trees.push_back(std::move(t));
  }
  return trees;
}

inline void save_growth(const std::vector<GrowthSequence>& seqs,
                        const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("dataset: cannot write " + path);
  f << std::setprecision(10);
  for (const auto& gs : seqs) {
    const std::string tag =
        gs.stages.empty() || gs.stages[0].species_tag.empty()
            ? "-"
            : gs.stages[0].species_tag;
    f << "growth " << tag << ' ' << gs.stages.size() << '\n';
    for (const auto& st : gs.stages) {
      f << "stage " << st.size();
      detail::write_branches(f, st);
      f << '\n';
    }
  }
}

inline std::vector<GrowthSequence> load_growth(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("dataset: cannot read " + path);
  std::vector<GrowthSequence> seqs;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string kind, tag;
    std::size_t stages;
    if (!(ss >> kind >> tag >> stages) || kind != "growth")
      throw std::runtime_error("dataset: bad growth record: " + line);
    GrowthSequence gs;
    gs.stages.resize(stages);
    for (auto& st : gs.stages) {
      if (!std::getline(f, line))
        throw std::runtime_error("dataset: truncated growth record");
      std::istringstream ls(line);
      std::string sk;
      std::size_t n;
      if (!(ls >> sk >> n) || sk != "stage")
        throw std::runtime_error("dataset: bad stage record: " + line);
      st.species_tag = (tag == "-") ? "" : tag;
      detail::read_branches(ls, st, n);
    }
    seqs.push_back(std::move(gs));
  }
  return seqs;
}

inline void save_point_cloud(const std::vector<Vec3>& pts,
                             const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("dataset: cannot write " + path);
  f << std::setprecision(10);
  for (const auto& p : pts) f << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
}

inline std::vector<Vec3> load_point_cloud(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("dataset: cannot read " + path);
  std::vector<Vec3> pts;
  double x, y, z;
  while (f >> x >> y >> z) pts.emplace_back(x, y, z);
  if (pts.empty()) throw std::runtime_error("dataset: empty point cloud");
  return pts;
}

inline void save_token_sequences(const std::vector<std::vector<int>>& seqs,
                                 const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("dataset: cannot write " + path);
  for (const auto& s : seqs) {
    f << "tokens " << s.size();
    for (int t : s) f << ' ' << t;
    f << '\n';
  }
}

inline std::vector<std::vector<int>> load_token_sequences(
    const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("dataset: cannot read " + path);
  std::vector<std::vector<int>> seqs;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string kind;
    std::size_t n;
    if (!(ss >> kind >> n) || kind != "tokens")
      throw std::runtime_error("dataset: bad token record: " + line);
    std::vector<int> s(n);
    for (auto& t : s)
      if (!(ss >> t)) throw std::runtime_error("dataset: truncated tokens");
    seqs.push_back(std::move(s));
  }
  return seqs;
}

}  // namespace hgt
