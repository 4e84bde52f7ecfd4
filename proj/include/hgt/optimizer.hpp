#pragma once

#include "hgt/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace hgt {

struct NonFiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvalidScheduleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Linear warmup 0 -> peak over warmup_steps, then cosine decay peak -> 0
/// at total_steps.
inline double lr_schedule(long step, long warmup_steps, long total_steps,
                          double peak_lr) {
  if (warmup_steps >= total_steps)
    throw InvalidScheduleError("lr_schedule: warmup >= total");
  if (step < 0 || step > total_steps)
    throw InvalidScheduleError("lr_schedule: step out of range");
  if (step < warmup_steps) return peak_lr * double(step) / double(warmup_steps);
  const double t =
      double(step - warmup_steps) / double(total_steps - warmup_steps);
  return peak_lr * 0.5 * (1.0 + std::cos(M_PI * t));
}

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Decoupled-weight-decay Adam over a flat list of parameter matrices.
template <typename T>
class AdamW {
 public:
  AdamWConfig cfg;
  long step_count = 0;

  explicit AdamW(AdamWConfig c = {}) : cfg(c) {}

  void step(std::vector<Mat<T>*>& params,
            const std::vector<Mat<T>>& grads, double lr_override = -1.0) {
    if (params.size() != grads.size())
      throw std::invalid_argument("adamw: param/grad count mismatch");
    if (m_.empty()) {
      for (auto* p : params) {
        m_.push_back(Mat<T>::Zero(p->rows(), p->cols()));
        v_.push_back(Mat<T>::Zero(p->rows(), p->cols()));
      }
    }
    const double lr = lr_override >= 0.0 ? lr_override : cfg.lr;
    ++step_count;
    const double bc1 = 1.0 - std::pow(cfg.beta1, step_count);
    const double bc2 = 1.0 - std::pow(cfg.beta2, step_count);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Mat<T>& g = grads[i];
      if (!g.allFinite()) throw NonFiniteError("adamw: non-finite gradient");
      m_[i] = T(cfg.beta1) * m_[i] + T(1 - cfg.beta1) * g;
      v_[i] = (T(cfg.beta2) * v_[i]).eval();
      v_[i].array() += T(1 - cfg.beta2) * g.array().square();
      Mat<T>& p = *params[i];
      if (cfg.weight_decay > 0.0) p *= T(1.0 - lr * cfg.weight_decay);
      p.array() -= T(lr) * (m_[i].array() / T(bc1)) /
                   ((v_[i].array() / T(bc2)).sqrt() + T(cfg.eps));
    }
  }

  // Raw accumulators, exposed for checkpointing.
  std::vector<Mat<T>>& first_moments() { return m_; }
  std::vector<Mat<T>>& second_moments() { return v_; }

 private:
  std::vector<Mat<T>> m_;
  std::vector<Mat<T>> v_;
};

/// Scales gradients in place so their global L2 norm is at most max_norm.
template <typename T>
double clip_global_norm(std::vector<Mat<T>>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) sq += double(g.squaredNorm());
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const T s = T(max_norm / norm);
    for (auto& g : grads) g *= s;
  }
  return norm;
}

}  // namespace hgt
