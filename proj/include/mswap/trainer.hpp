#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mswap/checkpoint.hpp"
#include "mswap/config.hpp"
#include "mswap/metrics.hpp"
#include "mswap/rng.hpp"

namespace mswap {

/// One metric CSV row. Loss columns are means over the steps since the
/// previous row; lambda and lr are the values used at `step`.
struct LogRow {
  std::uint64_t step = 0;
  double g_loss = 0;        // adversarial generator term
  double g_id = 0;          // lambda_id(t) * identity loss
  double g_feat_match = 0;  // lambda_feat * feature-matching loss
  double d_fake = 0;
  double d_real = 0;
  double lambda_id = 0;
  double lambda_rec = 0;
  double lr = 0;
};

std::string csv_header();
std::string csv_line(const LogRow& r);
void write_csv(const std::string& path, const std::vector<LogRow>& rows);

/// Unweighted per-step losses, kept in memory for analysis.
struct StepRecord {
  LossBundle bundle;
  bool self_swap = false;
};

/// Dataset, rendered images, frozen embedder and fitted attribute probe:
/// everything runs on the same data share.
class World {
 public:
  /// Samples the dataset and pretrains a fresh embedder.
  static std::shared_ptr<World> create(const TrainConfig& cfg);
  /// Uses the `E/` parameters of a checkpoint (embedder or training role).
  static std::shared_ptr<World> from_checkpoint(const TrainConfig& cfg, const Checkpoint& ckpt);

  const Dataset& dataset() const noexcept { return ds_; }
  const std::vector<Tensor<float>>& images() const noexcept { return images_; }
  const Embedder<float>& embedder() const noexcept { return *embedder_; }
  const AttributeProbe& probe() const noexcept { return probe_; }
  const Separation& separation() const noexcept { return separation_; }
  /// Config values the world was built from (data, embedder, pretraining).
  const TrainConfig& config() const noexcept { return cfg_; }
  /// True when `other` would build the same world.
  bool compatible(const TrainConfig& other) const;

  Checkpoint embedder_checkpoint() const;

 private:
  World(const TrainConfig& cfg);
  TrainConfig cfg_;
  Dataset ds_;
  std::vector<Tensor<float>> images_;
  std::unique_ptr<Embedder<float>> embedder_;
  AttributeProbe probe_;
  Separation separation_;
};

class Trainer {
 public:
  /// Fresh models initialized from cfg.seed.
  Trainer(const TrainConfig& cfg, std::shared_ptr<const World> world);
  /// Resumes a training-role checkpoint.
  Trainer(const Checkpoint& ckpt, std::shared_ptr<const World> world);

  const TrainConfig& config() const noexcept { return cfg_; }
  std::uint64_t step() const noexcept { return step_; }
  bool done() const noexcept { return step_ >= cfg_.total_steps; }

  /// One D update then one G update. Returns the CSV row if this step closes
  /// a log window. Periodic checkpoints go to out_dir when it is non-empty.
  /// On a non-finite loss or gradient the models are rolled back to the
  /// start of the step, written to out_dir/last_good.mswp, and
  /// NumericalError is rethrown naming the term.
  std::optional<LogRow> train_step(const std::string& out_dir = "");
  /// Steps until total_steps, calling on_row for every CSV row.
  void run(const std::string& out_dir = "", const std::function<void(const LogRow&)>& on_row = {});

  Checkpoint checkpoint() const;

  const std::vector<LogRow>& rows() const noexcept { return rows_; }
  const std::vector<StepRecord>& history() const noexcept { return history_; }
  std::uint64_t d_updates() const noexcept { return d_updates_; }
  std::uint64_t g_updates() const noexcept { return g_updates_; }

  Generator<float>& generator() noexcept { return gen_; }
  const Generator<float>& generator() const noexcept { return gen_; }
  Discriminator<float>& discriminator() noexcept { return disc_; }
  const World& world() const noexcept { return *world_; }

 private:
  struct Window {
    double sums[5] = {0, 0, 0, 0, 0};
    std::uint64_t count = 0;
  };
  void load(const Checkpoint& ckpt);
  void abort_step(const std::string& out_dir, const std::string& what);

  TrainConfig cfg_;
  std::shared_ptr<const World> world_;
  Generator<float> gen_;
  Discriminator<float> disc_;
  AdamState<float> adam_g_, adam_d_;
  CounterRng rng_;
  std::uint64_t step_ = 0;
  std::uint64_t d_updates_ = 0, g_updates_ = 0;
  Window window_;
  std::vector<LogRow> rows_;
  std::vector<StepRecord> history_;
};

/// Held-out evaluation over n_pairs (source, target) pairs of distinct
/// identities, drawn deterministically from seed.
EvalReport evaluate(const Generator<float>& gen, const World& world, std::size_t n_pairs, std::uint64_t seed);

std::string eval_csv_header();
std::string eval_csv_line(const EvalReport& r);

}  // namespace mswap
