#pragma once

#include "hgt/infer.hpp"
#include "hgt/pointcloud_encoder.hpp"
#include "hgt/tokenizer.hpp"

#include <random>

namespace hgt {

struct SamplerConfig {
  double temperature = 1.0;
  int top_k = 50;  // 0 disables the cutoff
  std::uint64_t seed = 0;
};

struct SampleResult {
  TokenSequence seq;
  bool truncated = false;  // capacity reached before the end marker
};

namespace detail {

template <typename T>
int sample_from_logits(const RowVec<T>& logits, const SamplerConfig& sc,
                       std::mt19937_64& rng) {
  const long V = logits.cols();
  std::vector<std::pair<double, int>> scored(V);
  const double temp = std::max(sc.temperature, 1e-8);
  for (long i = 0; i < V; ++i)
    scored[i] = {double(logits(i)) / temp, int(i)};
  long k = (sc.top_k > 0 && sc.top_k < V) ? sc.top_k : V;
  std::partial_sort(scored.begin(), scored.begin() + k, scored.end(),
                    [](const auto& a, const auto& b) { return a.first > b.first; });
  const double m = scored[0].first;
  std::vector<double> w(k);
  double z = 0;
  for (long i = 0; i < k; ++i) {
    w[i] = std::exp(scored[i].first - m);
    z += w[i];
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = u(rng) * z;
  for (long i = 0; i < k; ++i) {
    r -= w[i];
    if (r <= 0) return scored[i].second;
  }
  return scored[k - 1].second;
}

/// Feeds `forced` tokens, keeping only the last logits row.
template <typename T>
RowVec<T> feed_tokens(InferenceEngine<T>& eng, std::vector<int>& buf,
                      const std::vector<int>& forced) {
  RowVec<T> last;
  for (int t : forced) {
    last = eng.step(t);
    buf.push_back(t);
  }
  return last;
}

}  // namespace detail

/// Autoregressive decoding of one framed branch list. The start-marker
/// group is forced; value tokens are sampled until an end marker appears,
/// then the end-marker group is completed. `prompt` optionally supplies
/// already-fixed tokens after the start group (for completion). The
/// working buffer always grows one token at a time through the
/// incremental engine; group capacity is 8*(n_max+2).
template <typename T>
SampleResult sample_framed(InferenceEngine<T>& eng, std::vector<int>& buf,
                           const SamplerConfig& sc, std::mt19937_64& rng,
                           long capacity_tokens,
                           const std::vector<int>& prompt = {}) {
  SampleResult res;
  const long start = long(buf.size());
  RowVec<T> last = detail::feed_tokens(
      eng, buf, std::vector<int>(kGroupSize, kSosToken));
  if (!prompt.empty()) last = detail::feed_tokens(eng, buf, prompt);

  bool ended = false;
  while (long(buf.size()) - start < capacity_tokens) {
    int tok = detail::sample_from_logits(last, sc, rng);
    if (tok == kEosToken || tok == kPadToken) {
      // Close the frame with a full group of end markers; a partial value
      // group is padded out too (the detokenizer then drops it).
      const long group_pos = (long(buf.size()) - start) % kGroupSize;
      const long remaining =
          kGroupSize + (group_pos == 0 ? 0 : kGroupSize - group_pos);
      if (long(buf.size()) - start + remaining > capacity_tokens) {
        res.truncated = true;
        break;
      }
      for (long i = 0; i < remaining; ++i)
        last = detail::feed_tokens(eng, buf, {kEosToken});
      ended = true;
      break;
    }
    last = detail::feed_tokens(eng, buf, {tok});
  }
  if (!ended && !res.truncated) res.truncated = true;

  res.seq.tokens.assign(buf.begin() + start, buf.end());
  res.seq.n_branches = long(res.seq.tokens.size()) / kGroupSize - 2;
  return res;
}

/// Samples one tree as tokens. The returned sequence starts with the
/// start-marker group and ends with a full end-marker group unless
/// truncated at capacity.
template <typename T>
SampleResult sample_tree_tokens(InferenceEngine<T>& eng,
                                const SamplerConfig& sc, long n_max,
                                std::mt19937_64& rng,
                                const std::vector<int>& prompt = {},
                                const Mat<T>* prefix = nullptr) {
  eng.reset(prefix);
  std::vector<int> buf;
  buf.reserve(token_length_for(n_max));
  return sample_framed(eng, buf, sc, rng, token_length_for(n_max), prompt);
}

/// Samples a full growth sequence: kStages frames decoded back to back in
/// one context, each frame forced to open with a start-marker group.
template <typename T>
std::vector<SampleResult> sample_growth_tokens(InferenceEngine<T>& eng,
                                               const SamplerConfig& sc,
                                               long total_groups,
                                               std::mt19937_64& rng,
                                               int stages =
                                                   GrowthSequence::kStages) {
  eng.reset();
  std::vector<int> buf;
  const long capacity = total_groups * kGroupSize;
  std::vector<SampleResult> frames;
  for (int s = 0; s < stages; ++s) {
    const long left = capacity - long(buf.size());
    if (left < 3 * kGroupSize) break;  // no room for another frame
    SampleResult r = sample_framed(eng, buf, sc, rng, left);
    const bool truncated = r.truncated;
    frames.push_back(std::move(r));
    if (truncated) break;
  }
  return frames;
}

/// Continues a partially grown tree: earlier stage frames are forced as
/// context, then the remaining stages are sampled.
template <typename T>
std::vector<SampleResult> grow_from_frames(
    InferenceEngine<T>& eng, const SamplerConfig& sc,
    const std::vector<std::vector<int>>& fixed_frames, long total_groups,
    std::mt19937_64& rng) {
  eng.reset();
  std::vector<int> buf;
  const long capacity = total_groups * kGroupSize;
  for (const auto& f : fixed_frames) detail::feed_tokens(eng, buf, f);
  std::vector<SampleResult> frames;
  for (int s = int(fixed_frames.size()); s < GrowthSequence::kStages; ++s) {
    const long left = capacity - long(buf.size());
    if (left < 3 * kGroupSize) break;
    SampleResult r = sample_framed(eng, buf, sc, rng, left);
    const bool truncated = r.truncated;
    frames.push_back(std::move(r));
    if (truncated) break;
  }
  return frames;
}

}  // namespace hgt
