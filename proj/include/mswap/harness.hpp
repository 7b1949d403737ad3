#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mswap/trainer.hpp"

namespace mswap {

// ---------------------------------------------------------------------------
// Ablation

struct AblationRun {
  std::string label;
  std::uint64_t seed = 0;
  TrainConfig cfg;
  EvalReport report;
  std::vector<LogRow> rows;
  std::size_t generator_params = 0;
  double convergence_step = 0;
};

struct AblationTables {
  std::vector<AblationRun> attention;  // 4 configurations x seeds, config-major
  std::vector<AblationRun> weighting;  // 4 rows, first seed
  std::vector<AblationRun> lr;         // 3 rows, first seed
};

struct AblationOptions {
  std::uint64_t steps = 500;
  std::uint64_t log_every = 25;
  std::size_t n_seeds = 3;  // attention table seeds: base.seed, base.seed + 1, ...
  std::string out_dir;      // per-run metric CSVs when non-empty
};

/// Row labels and configs of each table, derived from `base`.
std::vector<std::pair<std::string, TrainConfig>> attention_variants(const TrainConfig& base);
std::vector<std::pair<std::string, TrainConfig>> weighting_variants(const TrainConfig& base);
std::vector<std::pair<std::string, TrainConfig>> lr_variants(const TrainConfig& base);

/// First logged step whose G_feat_match has covered half of the drop from
/// the first row to the last. Falls back to the last row's step when the
/// column does not decrease.
double convergence_step(const std::vector<LogRow>& rows);

/// Trains and evaluates every row. Identical configurations run once.
AblationTables run_ablation(const TrainConfig& base, std::shared_ptr<const World> world, const AblationOptions& opt,
                            const std::function<void(const std::string&)>& progress = {});

/// attention.csv (seed means), attention_seeds.csv, weighting.csv, lr.csv.
void write_ablation_csvs(const AblationTables& t, const std::string& dir);

// ---------------------------------------------------------------------------
// Plots

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  /// Throws ContractError for an unknown column.
  std::size_t column(const std::string& name) const;
};

/// Numeric CSV with a header line. Throws FormatError on ragged or
/// non-numeric rows.
CsvTable parse_csv_table(const std::string& text);
CsvTable read_csv_table(const std::string& path);

struct PlotFrame {
  std::size_t width = 320, height = 200;
  std::size_t left = 40, right = 10, top = 10, bottom = 30;  // margins in pixels
};

/// White canvas, black axes, one blue polyline through (x, y). Returns
/// [3, height, width] in [-1, 1].
Tensor<double> line_plot(const std::vector<double>& x, const std::vector<double>& y, const PlotFrame& frame = {});

/// One PPM per column after the first, plotted against the first column.
/// Axis ranges and the plot rectangle are written as header comments.
/// Throws ContractError when the log has no data rows.
std::vector<std::string> plot_csv(const std::string& csv_path, const std::string& out_dir);

}  // namespace mswap
