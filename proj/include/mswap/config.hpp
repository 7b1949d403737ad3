#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "mswap/discriminator.hpp"
#include "mswap/embedder.hpp"
#include "mswap/generator.hpp"
#include "mswap/losses.hpp"
#include "mswap/pretrain.hpp"
#include "mswap/schedules.hpp"

namespace mswap {

/// Everything a run depends on. Text form is flat `key = value` lines with
/// `#` comments; see README for the key list.
struct TrainConfig {
  std::size_t image_size = 32;
  GeneratorConfig gen;
  DiscriminatorConfig disc;
  EmbedderConfig emb;

  double lambda_id_max = 40.0;
  double lambda_rec_max = 2.0;
  double lambda_feat = 10.0;
  double gamma = 1.0;
  bool dynamic_weights = true;
  double eta_max = 2e-4;
  double eta_min = -1.0;       // negative: eta_max / 100
  std::uint64_t t_cycle = 0;   // 0: total_steps
  LrPolicy lr_policy = LrPolicy::Cosine;

  std::size_t batch_size = 8;
  std::uint64_t total_steps = 2000;
  std::uint64_t log_every = 100;
  std::uint64_t checkpoint_every = 0;  // 0: only the final checkpoint
  double self_swap_prob = 0.25;
  std::uint64_t seed = 0;

  std::size_t data_ids = 100;
  std::size_t data_per_id = 10;
  std::uint64_t data_seed = 1;

  PretrainConfig pretrain;
  std::uint64_t pretrain_seed = 0;

  std::size_t eval_pairs = 64;

  /// Checks every invariant of the derived sub-configs and the schedule.
  void validate() const;
  /// Sub-configs with image_size applied.
  GeneratorConfig generator_config() const;
  DiscriminatorConfig discriminator_config() const;
  EmbedderConfig embedder_config() const;
  ScheduleState schedule() const;
  LossWeights loss_weights(std::uint64_t step) const;

  /// Applies one key. Throws ContractError on unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  /// Parses config text on top of the defaults.
  static TrainConfig parse(std::string_view text);
  static TrainConfig load(const std::string& path);
  /// Every key, fixed order, round-trip exact.
  std::string serialize() const;
};

}  // namespace mswap
