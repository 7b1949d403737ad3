#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mswap/harness.hpp"

namespace fs = std::filesystem;
using namespace mswap;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;

  void add(CLI::App* app) {
    app->add_option("--config", config, "config file (key = value lines)");
    app->add_option("--set", overrides, "override one key, e.g. --set train.total_steps=100");
    app->add_option("--seed", seed, "run seed");
  }

  TrainConfig load() const {
    TrainConfig cfg = config.empty() ? TrainConfig{} : TrainConfig::load(config);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ContractError("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) cfg.seed = *seed;
    cfg.validate();
    return cfg;
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::shared_ptr<World> load_world(const TrainConfig& cfg, const std::string& embedder_path) {
  if (embedder_path.empty()) {
    std::fprintf(stderr, "pretraining embedder (%zu steps)\n", cfg.pretrain.steps);
    auto w = World::create(cfg);
    std::fprintf(stderr, "embedder separation: same %.4f, cross %.4f\n", w->separation().same, w->separation().cross);
    return w;
  }
  const Checkpoint ckpt = Checkpoint::load(embedder_path);
  return World::from_checkpoint(TrainConfig::parse(ckpt.text("__config__")), ckpt);
}

void print_report(const EvalReport& r) {
  std::printf("identity_similarity          %.6f\n", r.identity_similarity);
  std::printf("attribute_consistency        %.6f\n", r.attribute_consistency);
  std::printf("frechet_distance             %.6f\n", r.frechet_distance);
  std::printf("n_samples                    %zu\n", r.n_samples);
  std::printf("identity_similarity_target   %.6f\n", r.identity_similarity_target);
  std::printf("attribute_consistency_source %.6f\n", r.attribute_consistency_source);
}

int cmd_pretrain(const Common& common, const std::string& out) {
  const TrainConfig cfg = common.load();
  const auto t0 = std::chrono::steady_clock::now();
  const auto world = World::create(cfg);
  world->embedder_checkpoint().save(out);
  std::printf("held-out separation: same %.4f cross %.4f gap %.4f (%.1f s)\n", world->separation().same,
              world->separation().cross, world->separation().gap(), seconds_since(t0));
  return 0;
}

int cmd_train(const Common& common, const std::string& out, const std::string& embedder, const std::string& resume,
              std::optional<std::uint64_t> steps) {
  fs::create_directories(out);
  std::unique_ptr<Trainer> tr;
  std::shared_ptr<World> world;
  if (!resume.empty()) {
    const Checkpoint ckpt = Checkpoint::load(resume);
    const TrainConfig cfg = TrainConfig::parse(ckpt.text("__config__"));
    world = World::from_checkpoint(cfg, ckpt);
    tr = std::make_unique<Trainer>(ckpt, world);
    std::fprintf(stderr, "resuming at step %llu\n", static_cast<unsigned long long>(tr->step()));
  } else {
    TrainConfig cfg = common.load();
    if (steps) cfg.total_steps = *steps;
    cfg.validate();
    world = load_world(cfg, embedder);
    tr = std::make_unique<Trainer>(cfg, world);
  }
  {
    std::ofstream f(out + "/config.txt");
    f << tr->config().serialize();
  }
  const std::string csv = out + "/metrics.csv";
  const bool append = !resume.empty() && fs::exists(csv);
  std::ofstream log(csv, append ? std::ios::app : std::ios::trunc);
  if (!log) throw FormatError("cannot open " + csv);
  if (!append) log << csv_header() << "\n" << std::flush;
  const auto t0 = std::chrono::steady_clock::now();
  tr->run(out, [&](const LogRow& r) {
    log << csv_line(r) << "\n" << std::flush;
    std::fprintf(stderr, "step %6llu  G_Loss %9.4f  G_ID %9.4f  G_feat %9.4f  D_fake %.4f  D_real %.4f  (%.0f s)\n",
                 static_cast<unsigned long long>(r.step), r.g_loss, r.g_id, r.g_feat_match, r.d_fake, r.d_real,
                 seconds_since(t0));
  });
  tr->checkpoint().save(out + "/final.mswp");
  const EvalReport rep = evaluate(tr->generator(), *world, tr->config().eval_pairs, tr->config().seed);
  std::ofstream ev(out + "/eval.csv");
  ev << eval_csv_header() << "\n" << eval_csv_line(rep) << "\n";
  print_report(rep);
  return 0;
}

int cmd_swap(const std::string& ckpt_path, const std::string& src_path, const std::string& tgt_path,
             const std::string& out) {
  const Checkpoint ckpt = Checkpoint::load(ckpt_path);
  if (ckpt.text("__role__") != "generator") throw FormatError(ckpt_path + " is not a generator checkpoint");
  const TrainConfig cfg = TrainConfig::parse(ckpt.text("__config__"));
  Generator<float> gen(cfg.generator_config(), 0);
  Embedder<float> emb(cfg.embedder_config(), 0);
  ckpt.get_params("G/", gen.params());
  ckpt.get_params("E/", emb.params());
  emb.freeze();
  const Tensor<float> src = read_ppm(src_path).cast<float>();
  const Tensor<float> tgt = read_ppm(tgt_path).cast<float>();
  const Shape want{3, cfg.image_size, cfg.image_size};
  if (src.shape() != want || tgt.shape() != want)
    throw ShapeError("swap: images must be " + std::to_string(cfg.image_size) + "x" + std::to_string(cfg.image_size) +
                     ", got " + shape_str(src.shape()) + " and " + shape_str(tgt.shape()));
  write_ppm(out, gen.swap(src, tgt, emb.embed(src)));
  return 0;
}

int cmd_eval(const std::string& ckpt_path, std::optional<std::size_t> pairs, std::optional<std::uint64_t> seed,
             const std::string& out) {
  const Checkpoint ckpt = Checkpoint::load(ckpt_path);
  const TrainConfig cfg = TrainConfig::parse(ckpt.text("__config__"));
  const auto world = World::from_checkpoint(cfg, ckpt);
  const Trainer tr(ckpt, world);
  const EvalReport rep = evaluate(tr.generator(), *world, pairs.value_or(cfg.eval_pairs), seed.value_or(cfg.seed));
  print_report(rep);
  if (!out.empty()) {
    std::ofstream f(out);
    f << eval_csv_header() << "\n" << eval_csv_line(rep) << "\n";
  }
  return 0;
}

int cmd_ablate(const Common& common, const std::string& out, const std::string& embedder, const AblationOptions& o) {
  AblationOptions opt = o;
  opt.out_dir = out + "/runs";
  fs::create_directories(opt.out_dir);
  const TrainConfig cfg = common.load();
  const auto world = load_world(cfg, embedder);
  const auto t0 = std::chrono::steady_clock::now();
  const AblationTables t = run_ablation(cfg, world, opt, [&](const std::string& msg) {
    std::fprintf(stderr, "[%6.0f s] %s\n", seconds_since(t0), msg.c_str());
  });
  write_ablation_csvs(t, out);
  for (const char* name : {"attention.csv", "weighting.csv", "lr.csv"}) {
    std::ifstream f(out + "/" + name);
    std::cout << f.rdbuf() << "\n";
  }
  return 0;
}

int cmd_render(const Common& common, const std::string& out, std::size_t count) {
  const TrainConfig cfg = common.load();
  fs::create_directories(out);
  const Dataset ds = sample_dataset(cfg.data_ids, cfg.data_per_id, cfg.data_seed);
  std::size_t n = 0;
  for (std::size_t id : ds.heldout_ids)
    for (std::size_t k = 0; k < ds.n_per_id && n < count; ++k, ++n)
      write_ppm(out + "/id" + std::to_string(id) + "_" + std::to_string(k) + ".ppm",
                render(ds.sample(id, k).spec, cfg.image_size));
  std::printf("wrote %zu held-out images to %s\n", n, out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mswap: desk-scale attention face-swap GAN on synthetic faces"};
  app.require_subcommand(1);

  Common common;
  std::string out, embedder, resume, checkpoint, source, target, csv;
  std::optional<std::uint64_t> steps, eval_seed;
  std::optional<std::size_t> pairs;
  std::size_t count = 20;
  AblationOptions abl;

  auto* pre = app.add_subcommand("pretrain-embedder", "train the frozen identity embedder");
  common.add(pre);
  pre->add_option("--out", out, "output checkpoint")->required();

  auto* train = app.add_subcommand("train", "train the generator and discriminator");
  common.add(train);
  train->add_option("--out", out, "run directory")->required();
  train->add_option("--embedder", embedder, "pretrained embedder checkpoint (pretrains one if absent)");
  train->add_option("--resume", resume, "training checkpoint to continue from");
  train->add_option("--steps", steps, "override train.total_steps");

  auto* swap = app.add_subcommand("swap", "swap the source identity onto the target image");
  swap->add_option("--checkpoint", checkpoint)->required();
  swap->add_option("--source", source)->required();
  swap->add_option("--target", target)->required();
  swap->add_option("--out", out)->required();

  auto* eval = app.add_subcommand("eval", "held-out metrics of a training checkpoint");
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--pairs", pairs);
  eval->add_option("--seed", eval_seed);
  eval->add_option("--out", out, "optional CSV report");

  auto* ablate = app.add_subcommand("ablate", "attention, weighting and learning-rate ablations");
  common.add(ablate);
  ablate->add_option("--out", out, "output directory")->required();
  ablate->add_option("--embedder", embedder);
  ablate->add_option("--steps", abl.steps, "steps per run");
  ablate->add_option("--log-every", abl.log_every);
  ablate->add_option("--seeds", abl.n_seeds, "seeds in the attention table");

  auto* plot = app.add_subcommand("plot", "line plot per metric column");
  plot->add_option("--csv", csv)->required();
  plot->add_option("--out", out)->required();

  auto* render = app.add_subcommand("render", "write held-out synthetic faces as PPM");
  common.add(render);
  render->add_option("--out", out)->required();
  render->add_option("--count", count);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*pre) return cmd_pretrain(common, out);
    if (*train) return cmd_train(common, out, embedder, resume, steps);
    if (*swap) return cmd_swap(checkpoint, source, target, out);
    if (*eval) return cmd_eval(checkpoint, pairs, eval_seed, out);
    if (*ablate) return cmd_ablate(common, out, embedder, abl);
    if (*plot) {
      fs::create_directories(out);
      for (const auto& p : plot_csv(csv, out)) std::printf("%s\n", p.c_str());
      return 0;
    }
    if (*render) return cmd_render(common, out, count);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
