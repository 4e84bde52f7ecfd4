// Command-line front end: dataset generation, quantizer fitting, training,
// sampling, completion, point-cloud conditioning, growth, evaluation, mesh
// export, and a forward-pass benchmark.

#include "hgt/config.hpp"
#include "hgt/dataset_io.hpp"
#include "hgt/mesh_export.hpp"
#include "hgt/metrics.hpp"
#include "hgt/sampler.hpp"
#include "hgt/training.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>

using namespace hgt;

namespace {

ModelConfig model_config_from(const Config& cfg) {
  ModelConfig mc;
  mc.variant = variant_from_string(cfg.get_str("variant", "hg2rl"));
  mc.embed_dim = int(cfg.get_long("embed_dim", 128));
  mc.heads = int(cfg.get_long("heads", 4));
  mc.total_layers = int(cfg.get_long("layers", 24));
  mc.context = cfg.get_long("context", 1616);
  mc.prefix_len = cfg.get_long("prefix_len", 0);
  mc.mlp_ratio = int(cfg.get_long("mlp_ratio", 4));
  return mc;
}

ProceduralParams procedural_params_from(const Config& cfg) {
  ProceduralParams pp;
  pp.depth_min = int(cfg.get_long("depth_min", pp.depth_min));
  pp.depth_max = int(cfg.get_long("depth_max", pp.depth_max));
  pp.children_min = int(cfg.get_long("children_min", pp.children_min));
  pp.children_max = int(cfg.get_long("children_max", pp.children_max));
  pp.length_decay = cfg.get_double("length_decay", pp.length_decay);
  pp.radius_decay = cfg.get_double("radius_decay", pp.radius_decay);
  pp.angle_mean_deg = cfg.get_double("angle_mean_deg", pp.angle_mean_deg);
  pp.angle_spread_deg =
      cfg.get_double("angle_spread_deg", pp.angle_spread_deg);
  pp.tropism = cfg.get_double("tropism", pp.tropism);
  pp.trunk_length = cfg.get_double("trunk_length", pp.trunk_length);
  pp.trunk_radius = cfg.get_double("trunk_radius", pp.trunk_radius);
  pp.species_tag = cfg.get_str("species_tag", pp.species_tag);
  return pp;
}

ModelParams<double> load_model(const std::string& path) {
  Checkpoint ck = Checkpoint::load(path);
  ModelConfig cfg = config_from_checkpoint_meta(ck.meta);
  ModelParams<double> p = init_model<double>(cfg, 0);
  p.load_values(ck);
  return p;
}

std::vector<int> value_tokens_for(const TreeSkeleton& tree,
                                  OrderStrategy order, const Quantizer& q,
                                  std::size_t keep) {
  BranchPermutation perm = order_branches(tree, order);
  TokenSequence full = tokenize(tree, perm, q, tree.size());
  const std::size_t n = std::min(keep, tree.size());
  return std::vector<int>(full.tokens.begin() + kGroupSize,
                          full.tokens.begin() + kGroupSize * (1 + n));
}

int run_gen_data(const Config& cfg) {
  const long n = cfg.get_long("n", 64);
  const std::uint64_t seed = std::uint64_t(cfg.get_long("seed", 0));
  const std::size_t n_max = std::size_t(cfg.get_long("n_max", 200));
  ProceduralParams pp = procedural_params_from(cfg);

  std::vector<TreeSkeleton> trees;
  std::vector<GrowthSequence> growth;
  for (long i = 0; i < n; ++i) {
    pp.seed = seed + std::uint64_t(i);
    GrowthSequence gs = generate_procedural(pp, n_max);
    auto [norm, tf] = normalize(gs.stages.back());
    // Re-normalize every stage with the final stage's transform so stages
    // stay mutually aligned.
    GrowthSequence ngs;
    ngs.stages.reserve(gs.stages.size());
    for (const auto& st : gs.stages) {
      TreeSkeleton s = st;
      for (Branch& b : s.branches)
        for (BranchPoint* p : {&b.s, &b.t}) {
          Vec3 v = tf.apply(p->pos());
          p->x = v.x();
          p->y = v.y();
          p->z = v.z();
          p->r *= tf.scale;
        }
      ngs.stages.push_back(std::move(s));
    }
    trees.push_back(norm);
    growth.push_back(std::move(ngs));
  }

  const std::string out = cfg.get_str("out", "trees.txt");
  save_trees(trees, out);
  std::cout << "wrote " << trees.size() << " trees to " << out << '\n';
  const std::string growth_out = cfg.get_str("growth_out", "");
  if (!growth_out.empty()) {
    save_growth(growth, growth_out);
    std::cout << "wrote growth sequences to " << growth_out << '\n';
  }
  return 0;
}

int run_fit_quantizer(const Config& cfg) {
  auto trees = load_trees(cfg.get_str("trees", "trees.txt"));
  Quantizer q = fit_quantizer(trees);
  const std::string out = cfg.get_str("out", "quantizer.txt");
  q.save(out);
  std::cout << "fit quantizer over " << trees.size() << " trees ("
            << q.provenance << ") -> " << out << '\n';
  return 0;
}

int run_train(const Config& cfg) {
  const std::string quant_path = cfg.get_str("quantizer", "quantizer.txt");
  Quantizer q = Quantizer::load_file(quant_path);
  const OrderStrategy order =
      order_strategy_from_string(cfg.get_str("order", "hilbert"));
  const std::size_t n_max = std::size_t(cfg.get_long("n_max", 200));
  const bool growth_mode = cfg.get_bool("growth", false);
  const std::size_t stage_n_max = std::size_t(cfg.get_long("stage_n_max", 100));
  const std::size_t total_groups =
      std::size_t(cfg.get_long("total_groups", 1027));
  const bool augment_on = cfg.get_bool("augment", true);
  const long pc_points = cfg.get_long("points_per_cloud", 256);

  ModelConfig mc = model_config_from(cfg);
  const long want = growth_mode ? long(total_groups) * kGroupSize
                                : long(token_length_for(n_max));
  if (mc.context != want)
    throw std::runtime_error("train: context " + std::to_string(mc.context) +
                             " does not match data layout " +
                             std::to_string(want));

  std::vector<TreeSkeleton> trees;
  std::vector<GrowthSequence> growth;
  if (growth_mode)
    growth = load_growth(cfg.get_str("growth_path", "growth.txt"));
  else
    trees = load_trees(cfg.get_str("trees", "trees.txt"));

  ModelParams<float> params =
      init_model<float>(mc, std::uint64_t(cfg.get_long("seed", 0)));
  std::cout << "variant=" << to_string(mc.variant)
            << " params=" << params.param_count() << '\n';

  SampleFn next = [&](std::mt19937_64& rng) {
    TrainSample s;
    if (growth_mode) {
      std::uniform_int_distribution<std::size_t> pick(0, growth.size() - 1);
      const GrowthSequence& gs = growth[pick(rng)];
      s.tokens = tokenize_growth(gs, order, q, stage_n_max, total_groups)
                     .tokens;
      return s;
    }
    std::uniform_int_distribution<std::size_t> pick(0, trees.size() - 1);
    TreeSkeleton t = trees[pick(rng)];
    if (augment_on) {
      std::uniform_real_distribution<double> u(0.0, 2.0 * M_PI);
      t = augment(t, u(rng), (rng() & 1) != 0);
    }
    BranchPermutation perm = order_branches(t, order);
    s.tokens = tokenize(t, perm, q, n_max).tokens;
    if (mc.prefix_len > 0) {
      auto pts = sample_point_cloud(t, std::size_t(pc_points), rng());
      s.points = points_to_matrix<float>(pts);
    }
    return s;
  };

  TrainConfig tc;
  tc.steps = cfg.get_long("steps", 1000);
  tc.warmup_steps = cfg.get_long("warmup", std::max<long>(1, tc.steps / 10));
  tc.peak_lr = cfg.get_double("peak_lr", 3e-4);
  tc.weight_decay = cfg.get_double("weight_decay", 0.01);
  tc.clip_norm = cfg.get_double("clip", 1.0);
  tc.seed = std::uint64_t(cfg.get_long("seed", 0));
  tc.log_path = cfg.get_str("log", "");
  tc.checkpoint_dir = cfg.get_str("checkpoint_dir", "");
  tc.checkpoint_every = cfg.get_long("checkpoint_every", 0);
  tc.stop_below_loss = cfg.get_double("stop_below_loss", -1.0);

  TrainResult res = train(params, tc, next);
  std::cout << "steps=" << res.steps_run << " final_loss=" << res.final_loss
            << " running_mean=" << res.running_mean_loss
            << (res.early_stopped ? " (early stop)" : "") << '\n';

  const std::string out = cfg.get_str("out", "model.ckpt");
  Checkpoint ck = params.to_checkpoint();
  ck.meta["steps"] = std::to_string(res.steps_run);
  ck.save(out);
  std::cout << "saved " << out << '\n';

  const std::string manifest = cfg.get_str("manifest", "");
  if (!manifest.empty()) {
    std::map<std::string, std::string> extra;
    extra["artifact.model"] = file_hash(out);
    extra["artifact.quantizer"] = file_hash(quant_path);
    extra["result.final_loss"] = std::to_string(res.final_loss);
    extra["result.steps"] = std::to_string(res.steps_run);
    write_manifest(manifest, cfg, extra);
  }
  return 0;
}

int run_sample(const Config& cfg) {
  auto params = load_model(cfg.get_str("ckpt", "model.ckpt"));
  Quantizer q = Quantizer::load_file(cfg.get_str("quantizer", "quantizer.txt"));
  InferenceEngine<double> eng(params);
  SamplerConfig sc;
  sc.temperature = cfg.get_double("temperature", 1.0);
  sc.top_k = int(cfg.get_long("top_k", 50));
  std::mt19937_64 rng(std::uint64_t(cfg.get_long("seed", 0)));
  const long n = cfg.get_long("n", 8);
  const std::size_t n_max =
      std::size_t(cfg.get_long("n_max", params.cfg.context / 8 - 2));

  std::vector<TreeSkeleton> out;
  long truncated = 0, empty = 0;
  for (long i = 0; i < n; ++i) {
    SampleResult r = sample_tree_tokens(eng, sc, n_max, rng);
    truncated += r.truncated ? 1 : 0;
    try {
      out.push_back(detokenize(r.seq, q));
    } catch (const EmptyGenerationError&) {
      ++empty;
    }
  }
  save_trees(out, cfg.get_str("out", "samples.txt"));
  std::cout << "sampled " << out.size() << " trees (truncated=" << truncated
            << " empty=" << empty << ")\n";
  return 0;
}

int run_complete(const Config& cfg) {
  auto params = load_model(cfg.get_str("ckpt", "model.ckpt"));
  Quantizer q = Quantizer::load_file(cfg.get_str("quantizer", "quantizer.txt"));
  auto trees = load_trees(cfg.get_str("tree", "trees.txt"));
  const std::size_t index = std::size_t(cfg.get_long("index", 0));
  if (index >= trees.size()) throw std::runtime_error("complete: bad index");
  const std::size_t keep = std::size_t(cfg.get_long("keep", 5));
  const OrderStrategy order =
      order_strategy_from_string(cfg.get_str("order", "hilbert"));

  std::vector<int> prompt = value_tokens_for(trees[index], order, q, keep);
  InferenceEngine<double> eng(params);
  SamplerConfig sc;
  sc.temperature = cfg.get_double("temperature", 1.0);
  sc.top_k = int(cfg.get_long("top_k", 50));
  std::mt19937_64 rng(std::uint64_t(cfg.get_long("seed", 0)));
  const std::size_t n_max =
      std::size_t(cfg.get_long("n_max", params.cfg.context / 8 - 2));

  SampleResult r = sample_tree_tokens(eng, sc, n_max, rng, prompt);
  TreeSkeleton done = detokenize(r.seq, q);
  save_trees({done}, cfg.get_str("out", "completed.txt"));
  std::cout << "kept " << keep << " branches, completed to " << done.size()
            << (r.truncated ? " (truncated)" : "") << '\n';
  return 0;
}

int run_pc2tree(const Config& cfg) {
  auto params = load_model(cfg.get_str("ckpt", "model.ckpt"));
  if (params.cfg.prefix_len <= 0)
    throw std::runtime_error("pc2tree: model has no conditioning prefix");
  Quantizer q = Quantizer::load_file(cfg.get_str("quantizer", "quantizer.txt"));
  auto pts = load_point_cloud(cfg.get_str("points", "points.txt"));
  Mat<double> prefix =
      encode_pointcloud(params, points_to_matrix<double>(pts));

  InferenceEngine<double> eng(params);
  SamplerConfig sc;
  sc.temperature = cfg.get_double("temperature", 1.0);
  sc.top_k = int(cfg.get_long("top_k", 50));
  std::mt19937_64 rng(std::uint64_t(cfg.get_long("seed", 0)));
  const std::size_t n_max =
      std::size_t(cfg.get_long("n_max", params.cfg.context / 8 - 2));

  SampleResult r = sample_tree_tokens(eng, sc, n_max, rng, {}, &prefix);
  TreeSkeleton tree = detokenize(r.seq, q);
  save_trees({tree}, cfg.get_str("out", "pc2tree.txt"));
  std::cout << "reconstructed " << tree.size() << " branches from "
            << pts.size() << " points"
            << (r.truncated ? " (truncated)" : "") << '\n';
  return 0;
}

int run_grow(const Config& cfg) {
  auto params = load_model(cfg.get_str("ckpt", "model.ckpt"));
  Quantizer q = Quantizer::load_file(cfg.get_str("quantizer", "quantizer.txt"));
  auto growth = load_growth(cfg.get_str("growth_path", "growth.txt"));
  const std::size_t index = std::size_t(cfg.get_long("index", 0));
  if (index >= growth.size()) throw std::runtime_error("grow: bad index");
  const std::size_t keep = std::size_t(cfg.get_long("keep_stages", 3));
  const OrderStrategy order =
      order_strategy_from_string(cfg.get_str("order", "hilbert"));
  const std::size_t stage_n_max = std::size_t(cfg.get_long("stage_n_max", 100));
  const std::size_t total_groups = std::size_t(params.cfg.context / 8);

  TokenSequence all =
      tokenize_growth(growth[index], order, q, stage_n_max, total_groups);
  std::vector<TokenSequence> frames = split_growth_frames(all);
  std::vector<std::vector<int>> fixed;
  for (std::size_t i = 0; i < std::min(keep, frames.size()); ++i)
    fixed.push_back(frames[i].tokens);

  InferenceEngine<double> eng(params);
  SamplerConfig sc;
  sc.temperature = cfg.get_double("temperature", 1.0);
  sc.top_k = int(cfg.get_long("top_k", 50));
  std::mt19937_64 rng(std::uint64_t(cfg.get_long("seed", 0)));

  auto sampled = grow_from_frames(eng, sc, fixed, total_groups, rng);

  GrowthSequence out;
  for (std::size_t i = 0; i < fixed.size(); ++i)
    out.stages.push_back(growth[index].stages[i]);
  for (const auto& r : sampled) {
    try {
      out.stages.push_back(detokenize(r.seq, q));
    } catch (const EmptyGenerationError&) {
      out.stages.push_back(out.stages.back());
    }
  }
  save_growth({out}, cfg.get_str("out", "grown.txt"));
  std::cout << "kept " << fixed.size() << " stages, grew "
            << sampled.size() << " more\n";
  return 0;
}

int run_eval(const Config& cfg) {
  auto ref = load_trees(cfg.get_str("train", "trees.txt"));
  auto gen = load_trees(cfg.get_str("gen", "samples.txt"));
  const std::size_t n_pts = std::size_t(cfg.get_long("points_per_cloud", 256));
  const std::uint64_t seed = std::uint64_t(cfg.get_long("seed", 0));

  auto clouds = [&](const std::vector<TreeSkeleton>& ts) {
    std::vector<std::vector<Vec3>> cs;
    cs.reserve(ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i)
      cs.push_back(sample_point_cloud(ts[i], n_pts, seed + i));
    return cs;
  };
  auto ref_clouds = clouds(ref);
  auto gen_clouds = clouds(gen);

  EvalReport rep;
  MmdCovResult mc = mmd_cov(ref_clouds, gen_clouds);
  rep.set("mmd_cd", mc.mmd);
  rep.set("cov_cd", mc.cov);
  rep.set("jsd", jsd_points(ref_clouds, gen_clouds,
                            int(cfg.get_long("jsd_grid", 32))));

  double eps = cfg.get_double("connect_eps", -1.0);
  const std::string quant_path = cfg.get_str("quantizer", "");
  if (eps < 0 && !quant_path.empty())
    eps = connect_eps_for(Quantizer::load_file(quant_path));
  if (eps >= 0) rep.set("connect", connect_score(gen, eps));

  if (ref.size() >= 2) {
    const double delta = novelty_threshold(ref_clouds);
    NoveltyReport nr = novelty_uniqueness(ref_clouds, gen_clouds, delta);
    rep.set("novel", nr.novel_fraction);
    rep.set("unique", nr.unique_fraction);
    rep.set("novelty_delta", delta);
  }

  const std::string ckpt = cfg.get_str("ckpt", "");
  if (!ckpt.empty() && !quant_path.empty()) {
    auto params = load_model(ckpt);
    Quantizer q = Quantizer::load_file(quant_path);
    const OrderStrategy order =
        order_strategy_from_string(cfg.get_str("order", "hilbert"));
    const std::size_t n_max = std::size_t(params.cfg.context / 8 - 2);
    std::vector<std::vector<int>> seqs;
    for (const auto& t : ref) {
      BranchPermutation perm = order_branches(t, order);
      seqs.push_back(tokenize(t, perm, q, n_max).tokens);
    }
    InferenceEngine<double> eng(params);
    NllReport nll = corpus_nll(eng, seqs);
    rep.set("nll", nll.mean_nll);
    rep.set("ppl", nll.perplexity);
  }

  std::cout << rep.pretty();
  const std::string out = cfg.get_str("out", "");
  if (!out.empty()) {
    rep.write_csv(out);
    std::cout << "wrote " << out << '\n';
  }
  return 0;
}

int run_export_mesh(const Config& cfg) {
  auto trees = load_trees(cfg.get_str("tree", "trees.txt"));
  const std::size_t index = std::size_t(cfg.get_long("index", 0));
  if (index >= trees.size())
    throw std::runtime_error("export-mesh: bad index");
  const std::string out = cfg.get_str("out", "tree.obj");
  export_obj(trees[index], out, int(cfg.get_long("segments", 12)));
  std::cout << "wrote " << out << " (" << trees[index].size()
            << " branches)\n";
  return 0;
}

int run_bench(const Config& cfg) {
  ModelConfig mc = model_config_from(cfg);
  const int reps = int(cfg.get_long("reps", 1));
  const double pt_units =
      attention_score_units([&] {
        ModelConfig c = mc;
        c.variant = Variant::PT;
        return c;
      }());
  auto params = init_model<float>(mc, 1);
  AdamW<float> opt;
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> tok(0, kNumBins - 1);
  TrainSample sample;
  sample.tokens.resize(std::size_t(mc.context));
  for (auto& t : sample.tokens) t = tok(rng);

  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i)
    train_step(params, opt, sample, 1e-4, 1.0);
  const auto t1 = std::chrono::steady_clock::now();
  const double ms =
      std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
  std::cout << "variant=" << to_string(mc.variant) << " context=" << mc.context
            << " params=" << params.param_count() << " step_ms=" << ms
            << " peak_rss_kb=" << peak_rss_kb()
            << " attention_units_vs_pt="
            << attention_score_units(mc) / pt_units << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"branch-structure sequence modeling toolkit"};
  app.require_subcommand(1);

  struct Cmd {
    std::string name, help;
    int (*fn)(const Config&);
  };
  const std::vector<Cmd> cmds = {
      {"gen-data", "generate a procedural dataset", run_gen_data},
      {"fit-quantizer", "fit value-bin edges over a dataset",
       run_fit_quantizer},
      {"train", "train a model", run_train},
      {"sample", "sample trees unconditionally", run_sample},
      {"complete", "complete a partial tree", run_complete},
      {"pc2tree", "reconstruct a tree from a point cloud", run_pc2tree},
      {"grow", "continue a growth sequence", run_grow},
      {"eval", "compute evaluation metrics", run_eval},
      {"export-mesh", "write a tree as an OBJ tube mesh", run_export_mesh},
      {"bench", "time a training step", run_bench},
  };

  struct Parsed {
    std::string config_path;
    std::vector<std::string> overrides;
  };
  std::map<std::string, Parsed> parsed;
  std::map<std::string, const Cmd*> by_name;
  for (const auto& c : cmds) {
    auto* sub = app.add_subcommand(c.name, c.help);
    auto& pr = parsed[c.name];
    sub->add_option("--config", pr.config_path, "key=value config file");
    sub->add_option("set", pr.overrides, "key=value overrides");
    by_name[c.name] = &c;
  }

  CLI11_PARSE(app, argc, argv);

  try {
    for (auto* sub : app.get_subcommands()) {
      const auto& pr = parsed[sub->get_name()];
      Config cfg;
      if (!pr.config_path.empty()) cfg = Config::from_file(pr.config_path);
      cfg.apply_overrides(pr.overrides);
      return by_name[sub->get_name()]->fn(cfg);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
