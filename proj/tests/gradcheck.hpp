#pragma once

#include "hgt/autodiff.hpp"

#include <functional>
#include <random>

namespace hgt::testing {

inline Mat<double> random_mat(long r, long c, std::mt19937_64& rng,
                              double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Mat<double> m(r, c);
  for (long i = 0; i < r; ++i)
    for (long j = 0; j < c; ++j) m(i, j) = d(rng);
  return m;
}

/// Central finite-difference check of a scalar-valued builder against the
/// tape gradient. `build` must construct the loss from the given leaves on
/// the given graph. Returns the max relative error over all leaf elements
/// (absolute error where the scale is tiny).
inline double gradcheck(
    std::vector<Mat<double>> inputs,
    const std::function<Var<double>(Graph<double>&,
                                    std::vector<Var<double>>&)>& build,
    double h = 1e-5) {
  Graph<double> g;
  std::vector<Var<double>> leaves;
  for (auto& m : inputs) leaves.push_back(leaf(g, m, true));
  Var<double> loss = build(g, leaves);
  backward(loss);

  double worst = 0.0;
  for (std::size_t li = 0; li < inputs.size(); ++li) {
    Mat<double> analytic = leaves[li].n->grad.size() == 0
                               ? Mat<double>::Zero(inputs[li].rows(),
                                                   inputs[li].cols())
                               : leaves[li].n->grad;
    for (long i = 0; i < inputs[li].rows(); ++i)
      for (long j = 0; j < inputs[li].cols(); ++j) {
        auto eval = [&](double delta) {
          std::vector<Mat<double>> shifted = inputs;
          shifted[li](i, j) += delta;
          Graph<double> g2;
          std::vector<Var<double>> l2;
          for (auto& m : shifted) l2.push_back(leaf(g2, m, false));
          return build(g2, l2).val()(0, 0);
        };
        const double fd = (eval(h) - eval(-h)) / (2.0 * h);
        const double an = analytic(i, j);
        const double denom = std::max({std::abs(fd), std::abs(an), 1.0});
        worst = std::max(worst, std::abs(fd - an) / denom);
      }
  }
  return worst;
}

}  // namespace hgt::testing
