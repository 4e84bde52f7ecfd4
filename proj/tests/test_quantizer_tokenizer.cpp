#include "doctest.h"
#include "hgt/procedural.hpp"
#include "hgt/tokenizer.hpp"

#include <random>
#include <sstream>

using namespace hgt;

namespace {

Branch mk(Vec3 s, Vec3 t, double rs, double rt) {
  Branch b;
  b.s = {s.x(), s.y(), s.z(), rs};
  b.t = {t.x(), t.y(), t.z(), rt};
  return b;
}

// A corpus with plenty of distinct radii so the quantile path engages.
std::vector<TreeSkeleton> continuous_radius_corpus(std::size_t n_trees,
                                                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.9, 0.9);
  std::uniform_real_distribution<double> ur(0.005, 0.2);
  std::vector<TreeSkeleton> corpus;
  for (std::size_t i = 0; i < n_trees; ++i) {
    TreeSkeleton t;
    for (int b = 0; b < 12; ++b)
      t.branches.push_back(
          mk({u(rng), u(rng), u(rng)}, {u(rng), u(rng), u(rng)}, ur(rng),
             ur(rng)));
    corpus.push_back(std::move(t));
  }
  return corpus;
}

}  // namespace

TEST_CASE("coordinate bins are uniform over [-1,1]") {
  auto q = fit_quantizer(continuous_radius_corpus(30, 1));
  CHECK(q.quantize(-1.0, Channel::Coord) == 0);
  CHECK(q.quantize(-1.0 + 1e-9, Channel::Coord) == 0);
  CHECK(q.quantize(1.0 - 1e-9, Channel::Coord) == 255);
  CHECK(q.quantize(0.0, Channel::Coord) == 128);
  const double w = 2.0 / 256;
  CHECK(q.coord_edges[1] - q.coord_edges[0] == doctest::Approx(w));
  CHECK(q.coord_edges[256] == doctest::Approx(1.0));
}

TEST_CASE("quantize(dequantize(k)) == k for every bin of both channels") {
  auto q = fit_quantizer(continuous_radius_corpus(50, 2));
  for (int k = 0; k < kNumBins; ++k) {
    CHECK(q.quantize(q.dequantize(k, Channel::Coord), Channel::Coord) == k);
    CHECK(q.quantize(q.dequantize(k, Channel::Radius), Channel::Radius) == k);
  }
}

TEST_CASE("out-of-range values clamp to edge bins and are counted") {
  auto q = fit_quantizer(continuous_radius_corpus(10, 3));
  q.reset_clamp_count();
  CHECK(q.quantize(1.5, Channel::Coord) == 255);
  CHECK(q.quantize(-2.0, Channel::Coord) == 0);
  CHECK(q.quantize(99.0, Channel::Radius) == 255);
  CHECK(q.clamp_count() == 3);
}

TEST_CASE("radius bins are equal-frequency on an exponential-law corpus") {
  std::mt19937_64 rng(7);
  std::exponential_distribution<double> ex(20.0);
  std::vector<double> radii(200000);
  for (auto& r : radii) r = 0.001 + ex(rng);

  // wrap the draws in dummy branches (two radii per branch)
  std::vector<TreeSkeleton> corpus(1);
  for (std::size_t i = 0; i + 1 < radii.size(); i += 2)
    corpus[0].branches.push_back(
        mk({0, 0, 0}, {0, 0, 1}, radii[i], radii[i + 1]));

  auto q = fit_quantizer(corpus);
  CHECK(q.provenance.find("radius-bins=quantile") != std::string::npos);

  std::vector<long> hist(kNumBins, 0);
  for (double r : radii) ++hist[q.quantize(r, Channel::Radius)];
  const double expected = double(radii.size()) / kNumBins;
  for (int k = 0; k < kNumBins; ++k)
    CHECK(std::abs(hist[k] - expected) <= 0.10 * expected);
}

TEST_CASE("corpora with few distinct radii fall back to uniform radius bins") {
  std::vector<TreeSkeleton> corpus(1);
  for (int i = 0; i < 500; ++i)
    corpus[0].branches.push_back(mk({0, 0, 0}, {0, 0, 1}, 0.1, 0.05));
  auto q = fit_quantizer(corpus);
  CHECK(q.provenance.find("uniform-fallback") != std::string::npos);
  // still usable: strictly increasing edges
  for (int i = 0; i < kNumBins; ++i)
    CHECK(q.radius_edges[i + 1] > q.radius_edges[i]);
}

TEST_CASE("quantizer file round-trips exactly") {
  auto q = fit_quantizer(continuous_radius_corpus(40, 4));
  std::ostringstream os;
  q.save(os);
  std::istringstream is(os.str());
  Quantizer r = Quantizer::load(is);
  CHECK(r.coord_edges == q.coord_edges);
  CHECK(r.radius_edges == q.radius_edges);
  CHECK(r.provenance == q.provenance);
}

TEST_CASE("token layout: 8 SOS, 8 per branch, 8 EOS, PAD to 8*(n_max+2)") {
  auto q = fit_quantizer(continuous_radius_corpus(30, 5));
  TreeSkeleton t;
  t.branches.push_back(mk({0, 0, -1}, {0, 0, 0}, 0.1, 0.08));
  t.branches.push_back(mk({0, 0, 0}, {0.5, 0, 0.5}, 0.06, 0.04));
  t.branches.push_back(mk({0, 0, 0}, {-0.5, 0, 0.5}, 0.06, 0.04));
  auto seq = tokenize(t, order_zyx(t), q, 200);
  REQUIRE(seq.tokens.size() == 1616);
  for (int i = 0; i < 8; ++i) CHECK(seq.tokens[i] == kSosToken);
  for (int i = 8; i < 8 + 24; ++i) CHECK(seq.tokens[i] < kNumBins);
  for (int i = 32; i < 40; ++i) CHECK(seq.tokens[i] == kEosToken);
  for (std::size_t i = 40; i < seq.tokens.size(); ++i)
    CHECK(seq.tokens[i] == kPadToken);
  for (int tok : seq.tokens) CHECK(tok < kVocabSize);
}

TEST_CASE("a tree at exactly n_max branches leaves no PAD") {
  auto q = fit_quantizer(continuous_radius_corpus(30, 6));
  TreeSkeleton t;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-0.9, 0.9);
  for (int i = 0; i < 10; ++i)
    t.branches.push_back(
        mk({u(rng), u(rng), u(rng)}, {u(rng), u(rng), u(rng)}, 0.1, 0.05));
  auto seq = tokenize(t, order_zyx(t), q, 10);
  REQUIRE(seq.tokens.size() == token_length_for(10));
  CHECK(seq.tokens.back() == kEosToken);
  CHECK_THROWS_AS(tokenize(t, order_zyx(t), q, 9), CapacityError);
}

TEST_CASE("round trip error is at most half a bin width, 200 trees") {
  ProceduralParams p;
  std::vector<TreeSkeleton> corpus;
  for (std::uint64_t s = 0; s < 200; ++s) {
    p.seed = s;
    corpus.push_back(normalize(generate_procedural_tree(p, 200)).first);
  }
  auto q = fit_quantizer(corpus);
  const double half_coord = 0.5 * (q.coord_edges[1] - q.coord_edges[0]);
  for (const auto& tree : corpus) {
    auto perm = order_branches(tree, OrderStrategy::ZYX);
    auto seq = tokenize(tree, perm, q, 200);
    REQUIRE(seq.tokens.size() == 1616);
    TreeSkeleton back = detokenize(seq, q);
    REQUIRE(back.size() == tree.size());
    for (std::size_t i = 0; i < tree.size(); ++i) {
      const Branch& a = tree.branches[perm.order[i]];
      const Branch& b = back.branches[i];
      for (auto [pa, pb] : {std::pair{&a.s, &b.s}, {&a.t, &b.t}}) {
        CHECK((pa->pos() - pb->pos()).cwiseAbs().maxCoeff() <=
              half_coord + 1e-12);
        const int kr = q.quantize(pa->r, Channel::Radius);
        const double half_r =
            0.5 * (q.radius_edges[kr + 1] - q.radius_edges[kr]);
        CHECK(std::abs(pa->r - pb->r) <= half_r + 1e-12);
      }
    }
  }
}

TEST_CASE("detokenize stops at the first EOS group boundary") {
  auto q = fit_quantizer(continuous_radius_corpus(30, 9));
  TokenSequence seq;
  seq.tokens.assign(8, kSosToken);
  for (int b = 0; b < 2; ++b)
    for (int j = 0; j < 8; ++j) seq.tokens.push_back(100 + b);
  seq.tokens.insert(seq.tokens.end(), 8, kEosToken);
  for (int j = 0; j < 8; ++j) seq.tokens.push_back(7);  // ignored after EOS
  TreeSkeleton t = detokenize(seq, q);
  CHECK(t.size() == 2);
}

TEST_CASE("groups with stray specials are dropped and counted") {
  auto q = fit_quantizer(continuous_radius_corpus(30, 10));
  TokenSequence seq;
  seq.tokens.assign(8, kSosToken);
  for (int j = 0; j < 8; ++j) seq.tokens.push_back(50);
  for (int j = 0; j < 8; ++j)
    seq.tokens.push_back(j == 3 ? kSosToken : 60);  // corrupted group
  for (int j = 0; j < 8; ++j) seq.tokens.push_back(70);
  seq.tokens.insert(seq.tokens.end(), 8, kEosToken);
  DetokenizeStats stats;
  TreeSkeleton t = detokenize(seq, q, &stats);
  CHECK(t.size() == 2);
  CHECK(stats.dropped_groups == 1);
}

TEST_CASE("a sequence with no complete branch group is an error") {
  auto q = fit_quantizer(continuous_radius_corpus(30, 11));
  TokenSequence seq;
  seq.tokens.assign(8, kSosToken);
  seq.tokens.insert(seq.tokens.end(), 8, kEosToken);
  CHECK_THROWS_AS(detokenize(seq, q), EmptyGenerationError);
  TokenSequence bad;
  bad.tokens.assign(8, 5);
  CHECK_THROWS_AS(detokenize(bad, q), std::invalid_argument);
}

TEST_CASE("growth tokenization frames each stage and pads to the budget") {
  auto q = fit_quantizer(continuous_radius_corpus(30, 12));
  // 10 stages of the same single branch (radii thicken)
  GrowthSequence gs;
  gs.stages.resize(GrowthSequence::kStages);
  for (std::size_t k = 0; k < gs.stages.size(); ++k)
    gs.stages[k].branches.push_back(
        mk({0, 0, -1}, {0, 0, 1}, 0.02 + 0.005 * double(k),
           0.01 + 0.004 * double(k)));

  auto seq = tokenize_growth(gs, OrderStrategy::ZYX, q, 100, 1027);
  REQUIRE(seq.tokens.size() == 1027 * 8);

  // 10 frames of 24 tokens each: SOS*8, branch*8, EOS*8
  for (int k = 0; k < 10; ++k) {
    const std::size_t at = std::size_t(k) * 24;
    for (int j = 0; j < 8; ++j) CHECK(seq.tokens[at + j] == kSosToken);
    for (int j = 8; j < 16; ++j) CHECK(seq.tokens[at + j] < kNumBins);
    for (int j = 16; j < 24; ++j) CHECK(seq.tokens[at + j] == kEosToken);
  }
  for (std::size_t i = 240; i < seq.tokens.size(); ++i)
    CHECK(seq.tokens[i] == kPadToken);

  auto frames = split_growth_frames(seq);
  REQUIRE(frames.size() == 10);
  for (std::size_t k = 0; k < 10; ++k) {
    TreeSkeleton back = detokenize(frames[k], q);
    REQUIRE(back.size() == 1);
    CHECK(std::abs(back.branches[0].s.r - gs.stages[k].branches[0].s.r) <
          0.5 * (q.radius_edges.back() - q.radius_edges.front()));
  }
}

TEST_CASE("growth tokenization rejects stages over the per-stage budget") {
  auto q = fit_quantizer(continuous_radius_corpus(30, 13));
  GrowthSequence gs;
  gs.stages.resize(GrowthSequence::kStages);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-0.9, 0.9);
  for (auto& st : gs.stages)
    for (int b = 0; b < 5; ++b)
      st.branches.push_back(
          mk({u(rng), u(rng), u(rng)}, {u(rng), u(rng), u(rng)}, 0.1, 0.05));
  CHECK_THROWS_AS(tokenize_growth(gs, OrderStrategy::ZYX, q, 4, 1027),
                  CapacityError);
  // and rejects a total budget too small for the frames
  CHECK_THROWS_AS(tokenize_growth(gs, OrderStrategy::ZYX, q, 100, 30),
                  CapacityError);
}

TEST_CASE("channel assignment: every 4th token in a group is a radius") {
  CHECK(channel_of_position(3) == Channel::Radius);
  CHECK(channel_of_position(7) == Channel::Radius);
  for (int i : {0, 1, 2, 4, 5, 6}) CHECK(channel_of_position(i) == Channel::Coord);
}
