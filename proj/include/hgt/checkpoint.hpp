#pragma once

#include "hgt/autodiff.hpp"

#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace hgt {

/// Named-tensor checkpoint. Binary layout:
///   magic "HGTCKPT1\n", then one entry per tensor:
///   name '\n' rows cols (int64 LE) raw little-endian doubles.
/// Values are stored as double regardless of training precision.
struct Checkpoint {
  std::map<std::string, Mat<double>> tensors;
  std::map<std::string, std::string> meta;

  void save(const std::string& path) const {
    std::ofstream os(path + ".tmp", std::ios::binary);
    if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
    os << "HGTCKPT1\n";
    os << "meta " << meta.size() << '\n';
    for (const auto& [k, v] : meta) os << k << '=' << v << '\n';
    for (const auto& [name, m] : tensors) {
      os << name << '\n';
      const std::int64_t r = m.rows(), c = m.cols();
      os.write(reinterpret_cast<const char*>(&r), 8);
      os.write(reinterpret_cast<const char*>(&c), 8);
      os.write(reinterpret_cast<const char*>(m.data()),
               std::streamsize(sizeof(double)) * r * c);
    }
    os.close();
    if (std::rename((path + ".tmp").c_str(), path.c_str()) != 0)
      throw std::runtime_error("cannot finalize checkpoint: " + path);
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read checkpoint: " + path);
    std::string line;
    std::getline(is, line);
    if (line != "HGTCKPT1")
      throw std::runtime_error("checkpoint: bad magic in " + path);
    Checkpoint ck;
    std::getline(is, line);
    if (line.rfind("meta ", 0) != 0)
      throw std::runtime_error("checkpoint: missing meta header");
    const int n_meta = std::stoi(line.substr(5));
    for (int i = 0; i < n_meta; ++i) {
      std::getline(is, line);
      const auto eq = line.find('=');
      ck.meta[line.substr(0, eq)] = line.substr(eq + 1);
    }
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      std::int64_t r = 0, c = 0;
      is.read(reinterpret_cast<char*>(&r), 8);
      is.read(reinterpret_cast<char*>(&c), 8);
      Mat<double> m(r, c);
      is.read(reinterpret_cast<char*>(m.data()),
              std::streamsize(sizeof(double)) * r * c);
      if (!is) throw std::runtime_error("checkpoint: truncated tensor " + line);
      ck.tensors[line] = std::move(m);
    }
    return ck;
  }
};

}  // namespace hgt
