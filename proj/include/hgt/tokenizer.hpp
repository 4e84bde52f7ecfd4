#pragma once

#include "hgt/ordering.hpp"
#include "hgt/procedural.hpp"
#include "hgt/quantizer.hpp"

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace hgt {

struct CapacityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyGenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Discrete token stream. Layout: 8 SOS, 8 tokens per branch
/// (s.x s.y s.z s.r t.x t.y t.z t.r), 8 EOS, PAD to 8*(n_max+2).
struct TokenSequence {
  std::vector<int> tokens;
  std::size_t n_branches = 0;
};

inline constexpr long kGroupSize = 8;

inline Channel channel_of_position(std::size_t pos_in_group) {
  return (pos_in_group % 4 == 3) ? Channel::Radius : Channel::Coord;
}

inline std::size_t token_length_for(std::size_t n_max) {
  return 8 * (n_max + 2);
}

inline TokenSequence tokenize(const TreeSkeleton& tree,
                              const BranchPermutation& perm,
                              const Quantizer& q, std::size_t n_max) {
  if (tree.size() > n_max)
    throw CapacityError("tokenize: tree has " + std::to_string(tree.size()) +
                        " branches, budget is " + std::to_string(n_max));
  if (perm.order.size() != tree.size())
    throw std::invalid_argument("tokenize: permutation size mismatch");

  TokenSequence seq;
  seq.n_branches = tree.size();
  seq.tokens.reserve(token_length_for(n_max));
  seq.tokens.insert(seq.tokens.end(), 8, kSosToken);
  for (std::size_t idx : perm.order) {
    const Branch& b = tree.branches[idx];
    const double vals[8] = {b.s.x, b.s.y, b.s.z, b.s.r,
                            b.t.x, b.t.y, b.t.z, b.t.r};
    for (int i = 0; i < 8; ++i)
      seq.tokens.push_back(q.quantize(vals[i], channel_of_position(i)));
  }
  seq.tokens.insert(seq.tokens.end(), 8, kEosToken);
  seq.tokens.resize(token_length_for(n_max), kPadToken);
  return seq;
}

struct DetokenizeStats {
  std::size_t dropped_groups = 0;
};

/// Reads 8-token groups after the leading SOS block until a group whose
/// first token is special; groups with stray specials inside are dropped
/// and counted.
inline TreeSkeleton detokenize(const TokenSequence& seq, const Quantizer& q,
                               DetokenizeStats* stats = nullptr) {
  const auto& t = seq.tokens;
  std::size_t i = 0;
  if (i >= t.size() || t[i] != kSosToken)
    throw std::invalid_argument("detokenize: sequence must start with SOS");
  while (i < t.size() && t[i] == kSosToken) ++i;

  TreeSkeleton tree;
  DetokenizeStats local;
  while (i + 8 <= t.size()) {
    if (t[i] >= kNumBins) break;  // EOS/PAD at a group boundary
    bool clean = true;
    for (int j = 1; j < 8; ++j)
      if (t[i + j] >= kNumBins) clean = false;
    if (clean) {
      double vals[8];
      for (int j = 0; j < 8; ++j)
        vals[j] = q.dequantize(t[i + j], channel_of_position(j));
      Branch b;
      b.s = {vals[0], vals[1], vals[2], vals[3]};
      b.t = {vals[4], vals[5], vals[6], vals[7]};
      tree.branches.push_back(b);
    } else {
      ++local.dropped_groups;
    }
    i += 8;
  }
  if (i + 8 > t.size() && i < t.size() && t[i] < kNumBins)
    ++local.dropped_groups;  // malformed trailing partial group
  if (stats) *stats = local;
  if (tree.empty())
    throw EmptyGenerationError("detokenize: no complete branch group");
  return tree;
}

/// Growth tokenization: the 10 per-stage token lists (each with its own
/// SOS/EOS framing) concatenated chronologically, PAD-padded so the total
/// is total_groups * 8 tokens. The full-scale configuration uses
/// per-stage n_max 100 and total_groups 1027.
inline TokenSequence tokenize_growth(const GrowthSequence& gs,
                                     OrderStrategy strategy,
                                     const Quantizer& q,
                                     std::size_t stage_n_max,
                                     std::size_t total_groups,
                                     double eps_connect = 1e-6) {
  if (gs.stages.size() != GrowthSequence::kStages)
    throw std::invalid_argument("tokenize_growth: expected 10 stages");
  TokenSequence out;
  for (std::size_t k = 0; k < gs.stages.size(); ++k) {
    const TreeSkeleton& stage = gs.stages[k];
    if (stage.size() > stage_n_max)
      throw CapacityError("tokenize_growth: stage " + std::to_string(k) +
                          " has " + std::to_string(stage.size()) +
                          " branches, budget is " +
                          std::to_string(stage_n_max));
    TokenSequence st =
        tokenize(stage, order_branches(stage, strategy, eps_connect), q,
                 stage.size());
    out.tokens.insert(out.tokens.end(), st.tokens.begin(), st.tokens.end());
    out.n_branches += stage.size();
  }
  if (out.tokens.size() > total_groups * 8)
    throw CapacityError("tokenize_growth: sequence exceeds total budget");
  out.tokens.resize(total_groups * 8, kPadToken);
  return out;
}

/// Splits a growth sequence token stream back into its framed stage blocks.
inline std::vector<TokenSequence> split_growth_frames(
    const TokenSequence& seq) {
  std::vector<TokenSequence> frames;
  const auto& t = seq.tokens;
  std::size_t i = 0;
  while (i + 8 <= t.size()) {
    if (t[i] != kSosToken) {
      i += 8;
      continue;
    }
    TokenSequence frame;
    // SOS block.
    while (i < t.size() && t[i] == kSosToken) {
      frame.tokens.push_back(t[i]);
      ++i;
    }
    // Value groups until a special-led group.
    while (i + 8 <= t.size() && t[i] < kNumBins) {
      for (int j = 0; j < 8; ++j) frame.tokens.push_back(t[i + j]);
      ++frame.n_branches;
      i += 8;
    }
    frames.push_back(std::move(frame));
  }
  return frames;
}

}  // namespace hgt
