#pragma once

#include "hgt/infer.hpp"
#include "hgt/model.hpp"
#include "hgt/optimizer.hpp"
#include "hgt/pointcloud_encoder.hpp"
#include "hgt/tokenizer.hpp"

#include <fstream>
#include <functional>
#include <random>

namespace hgt {

/// Next-token targets and loss mask for one padded sequence fed to a model
/// with `prefix_len` conditioning rows. Row j of the logits predicts
/// sequence position j+1. The loss covers value-bin targets plus the first
/// end marker of each frame; start markers, trailing end markers, and
/// padding are excluded.
struct TargetsAndMask {
  std::vector<int> targets;  // one per logits row; 0 where masked out
  std::vector<char> mask;
};

inline TargetsAndMask targets_and_mask(const std::vector<int>& tokens,
                                       long prefix_len) {
  const long P = prefix_len;
  const long N = P + long(tokens.size());
  TargetsAndMask tm;
  tm.targets.assign(N, 0);
  tm.mask.assign(N, 0);
  for (long j = std::max<long>(P - 1, 0); j + 1 < N; ++j) {
    const int tgt = tokens[j + 1 - P];
    tm.targets[j] = tgt;
    if (tgt < kNumBins) {
      tm.mask[j] = 1;
    } else if (tgt == kEosToken) {
      const long ti = j + 1 - P;
      if (ti == 0 || tokens[ti - 1] != kEosToken) tm.mask[j] = 1;
    }
  }
  return tm;
}

struct TrainSample {
  std::vector<int> tokens;            // length == cfg.context
  std::optional<Mat<float>> points;   // n x 3, set iff model has a prefix
};

using SampleFn = std::function<TrainSample(std::mt19937_64&)>;

struct TrainConfig {
  long steps = 1000;
  long warmup_steps = 100;
  double peak_lr = 3e-4;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
  std::string log_path;        // per-step CSV when non-empty
  std::string checkpoint_dir;  // periodic checkpoints when non-empty
  long checkpoint_every = 0;   // steps; 0 disables periodic checkpoints
  double stop_below_loss = -1.0;  // running mean threshold; <0 disables
  long stop_window = 20;
};

struct TrainResult {
  long steps_run = 0;
  double final_loss = 0.0;
  double running_mean_loss = 0.0;
  bool early_stopped = false;
};

/// One optimization step on a single sample. Returns the masked mean NLL.
template <typename T>
double train_step(ModelParams<T>& params, AdamW<T>& opt,
                  const TrainSample& sample, double lr, double clip_norm) {
  Graph<T> g;
  BoundModel<T> bm = bind_model(g, params);
  std::optional<Var<T>> prefix;
  if (params.cfg.prefix_len > 0) {
    if (!sample.points)
      throw std::invalid_argument("train_step: model needs a point cloud");
    prefix = encode_pointcloud(g, bm, Mat<T>(sample.points->cast<T>()));
  }
  Var<T> logits = model_forward(g, bm, sample.tokens, prefix);
  TargetsAndMask tm = targets_and_mask(sample.tokens, params.cfg.prefix_len);
  Var<T> loss = masked_nll(log_softmax_rows(logits), tm.targets, tm.mask);
  g.run_backward(loss.n);

  std::vector<Mat<T>> grads = bm.grads();
  clip_global_norm(grads, clip_norm);
  std::vector<Mat<T>*> ptrs;
  ptrs.reserve(params.values.size());
  for (auto& m : params.values) ptrs.push_back(&m);
  opt.step(ptrs, grads, lr);
  return double(loss.val()(0, 0));
}

template <typename T>
TrainResult train(ModelParams<T>& params, const TrainConfig& tc,
                  const SampleFn& next_sample) {
  AdamWConfig oc;
  oc.weight_decay = tc.weight_decay;
  AdamW<T> opt(oc);
  std::mt19937_64 rng(tc.seed ^ 0x9e3779b97f4a7c15ULL);

  std::ofstream log;
  if (!tc.log_path.empty()) {
    log.open(tc.log_path);
    log << "step,loss,lr,running_mean\n";
  }

  std::vector<double> window;
  TrainResult res;
  for (long s = 0; s < tc.steps; ++s) {
    const double lr = lr_schedule(s, tc.warmup_steps, tc.steps, tc.peak_lr);
    TrainSample sample = next_sample(rng);
    const double loss = train_step(params, opt, sample, lr, tc.clip_norm);

    window.push_back(loss);
    if (long(window.size()) > tc.stop_window) window.erase(window.begin());
    double mean = 0;
    for (double v : window) mean += v;
    mean /= double(window.size());

    res.steps_run = s + 1;
    res.final_loss = loss;
    res.running_mean_loss = mean;
    if (log.is_open())
      log << s << ',' << loss << ',' << lr << ',' << mean << '\n';

    if (!tc.checkpoint_dir.empty() && tc.checkpoint_every > 0 &&
        (s + 1) % tc.checkpoint_every == 0) {
      Checkpoint ck = params.to_checkpoint();
      ck.meta["step"] = std::to_string(s + 1);
      ck.save(tc.checkpoint_dir + "/step" + std::to_string(s + 1) + ".ckpt");
    }
    if (tc.stop_below_loss >= 0.0 &&
        long(window.size()) == tc.stop_window &&
        mean <= tc.stop_below_loss) {
      res.early_stopped = true;
      break;
    }
  }
  if (log.is_open()) log.close();
  return res;
}

/// Masked NLL of one sequence under the trained model, tape-free.
/// Returns (total nll, masked position count).
template <typename T>
std::pair<double, long> sequence_nll(const InferenceEngine<T>& eng,
                                     const std::vector<int>& tokens,
                                     const Mat<T>* prefix = nullptr) {
  Mat<T> logits = eng.full_forward(tokens, prefix);
  TargetsAndMask tm =
      targets_and_mask(tokens, eng.config().prefix_len);
  double acc = 0;
  long count = 0;
  for (long j = 0; j < logits.rows(); ++j) {
    if (!tm.mask[j]) continue;
    const auto row = logits.row(j);
    const T m = row.maxCoeff();
    const double lse =
        double(m) + std::log(double((row.array() - m).exp().sum()));
    acc += lse - double(row(tm.targets[j]));
    ++count;
  }
  return {acc, count};
}

struct NllReport {
  double mean_nll = 0.0;
  double perplexity = 0.0;
  long positions = 0;
};

template <typename T>
NllReport corpus_nll(const InferenceEngine<T>& eng,
                     const std::vector<std::vector<int>>& seqs,
                     const std::vector<Mat<T>>* prefixes = nullptr) {
  double acc = 0;
  long count = 0;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const Mat<T>* pre = prefixes ? &(*prefixes)[i] : nullptr;
    auto [a, c] = sequence_nll(eng, seqs[i], pre);
    acc += a;
    count += c;
  }
  NllReport r;
  r.positions = count;
  r.mean_nll = count > 0 ? acc / double(count) : 0.0;
  r.perplexity = std::exp(r.mean_nll);
  return r;
}

}  // namespace hgt
