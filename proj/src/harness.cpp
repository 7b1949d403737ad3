#include "mswap/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace mswap {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream f(path);
  if (!f) throw FormatError("cannot open " + path + " for writing");
  for (const auto& l : lines) f << l << "\n";
  if (!f) throw FormatError("failed writing " + path);
}

}  // namespace

std::vector<std::pair<std::string, TrainConfig>> attention_variants(const TrainConfig& base) {
  auto with = [&](bool self, bool cross) {
    TrainConfig c = base;
    c.gen.use_self_attention = self;
    c.gen.use_cross_attention = cross;
    return c;
  };
  return {{"Baseline (No attention)", with(false, false)},
          {"Self-attention only", with(true, false)},
          {"Cross-attention only", with(false, true)},
          {"Full model (Self + Cross)", with(true, true)}};
}

std::vector<std::pair<std::string, TrainConfig>> weighting_variants(const TrainConfig& base) {
  auto with = [&](bool dynamic, double gamma) {
    TrainConfig c = base;
    c.dynamic_weights = dynamic;
    c.gamma = gamma;
    return c;
  };
  return {{"Static weights", with(false, base.gamma)},
          {"Dynamic weights (\xCE\xB3 = 0.5)", with(true, 0.5)},
          {"Dynamic weights (\xCE\xB3 = 1.0)", with(true, 1.0)},
          {"Dynamic weights (\xCE\xB3 = 2.0)", with(true, 2.0)}};
}

std::vector<std::pair<std::string, TrainConfig>> lr_variants(const TrainConfig& base) {
  auto with = [&](LrPolicy p) {
    TrainConfig c = base;
    c.lr_policy = p;
    return c;
  };
  return {{"Constant LR", with(LrPolicy::Constant)},
          {"Step decay", with(LrPolicy::StepDecay)},
          {"Cosine annealing", with(LrPolicy::Cosine)}};
}

double convergence_step(const std::vector<LogRow>& rows) {
  if (rows.empty()) throw ContractError("convergence_step: no rows");
  const double first = rows.front().g_feat_match, last = rows.back().g_feat_match;
  if (!(last < first)) return static_cast<double>(rows.back().step);
  const double half = 0.5 * (first + last);
  for (const auto& r : rows)
    if (r.g_feat_match <= half) return static_cast<double>(r.step);
  return static_cast<double>(rows.back().step);
}

AblationTables run_ablation(const TrainConfig& base, std::shared_ptr<const World> world, const AblationOptions& opt,
                            const std::function<void(const std::string&)>& progress) {
  if (opt.n_seeds < 1) throw ContractError("ablation: need at least one seed");
  TrainConfig shared = base;
  shared.total_steps = opt.steps;
  shared.log_every = opt.log_every;
  shared.checkpoint_every = 0;
  shared.t_cycle = 0;

  std::map<std::string, AblationRun> cache;
  std::size_t n_run = 0;
  auto run = [&](const std::string& table, std::size_t index, const std::string& label, TrainConfig cfg) {
    const std::string key = cfg.serialize();
    auto it = cache.find(key);
    if (it == cache.end()) {
      ++n_run;
      if (progress) progress("run " + std::to_string(n_run) + ": " + table + " / " + label + " / seed " +
                             std::to_string(cfg.seed));
      Trainer tr(cfg, world);
      tr.run();
      AblationRun r;
      r.seed = cfg.seed;
      r.cfg = cfg;
      r.rows = tr.rows();
      r.generator_params = tr.generator().params().scalar_count();
      r.convergence_step = convergence_step(r.rows);
      r.report = evaluate(tr.generator(), *world, cfg.eval_pairs, cfg.seed);
      if (!opt.out_dir.empty())
        write_csv(opt.out_dir + "/" + table + "_" + std::to_string(index) + "_seed" + std::to_string(cfg.seed) + ".csv",
                  r.rows);
      it = cache.emplace(key, std::move(r)).first;
    }
    AblationRun out = it->second;
    out.label = label;
    return out;
  };

  AblationTables t;
  const auto att = attention_variants(shared);
  for (std::size_t i = 0; i < att.size(); ++i)
    for (std::size_t s = 0; s < opt.n_seeds; ++s) {
      TrainConfig c = att[i].second;
      c.seed = base.seed + s;
      t.attention.push_back(run("attention", i, att[i].first, c));
    }
  const auto wv = weighting_variants(shared);
  for (std::size_t i = 0; i < wv.size(); ++i) t.weighting.push_back(run("weighting", i, wv[i].first, wv[i].second));
  const auto lv = lr_variants(shared);
  for (std::size_t i = 0; i < lv.size(); ++i) t.lr.push_back(run("lr", i, lv[i].first, lv[i].second));
  return t;
}

void write_ablation_csvs(const AblationTables& t, const std::string& dir) {
  std::vector<std::string> att{"Model Configuration,Identity Similarity,Attribute Consistency,FID Score"};
  std::vector<std::string> seeds{"Model Configuration,Seed,Identity Similarity,Attribute Consistency,FID Score,"
                                 "Generator Parameters"};
  for (std::size_t i = 0; i < t.attention.size();) {
    const std::string& label = t.attention[i].label;
    double id = 0, attr = 0, fid = 0;
    std::size_t n = 0;
    for (; i < t.attention.size() && t.attention[i].label == label; ++i, ++n) {
      const auto& r = t.attention[i];
      id += r.report.identity_similarity;
      attr += r.report.attribute_consistency;
      fid += r.report.frechet_distance;
      seeds.push_back(label + "," + std::to_string(r.seed) + "," + fmt(r.report.identity_similarity) + "," +
                      fmt(r.report.attribute_consistency) + "," + fmt(r.report.frechet_distance) + "," +
                      std::to_string(r.generator_params));
    }
    att.push_back(label + "," + fmt(id / n) + "," + fmt(attr / n) + "," + fmt(fid / n));
  }
  std::vector<std::string> w{"Loss Weighting Strategy,Identity Similarity,FID Score"};
  for (const auto& r : t.weighting)
    w.push_back(r.label + "," + fmt(r.report.identity_similarity) + "," + fmt(r.report.frechet_distance));
  std::vector<std::string> lr{"Learning Rate Schedule,Convergence Speed,Final FID Score"};
  for (const auto& r : t.lr) lr.push_back(r.label + "," + fmt(r.convergence_step) + "," + fmt(r.report.frechet_distance));
  write_lines(dir + "/attention.csv", att);
  write_lines(dir + "/attention_seeds.csv", seeds);
  write_lines(dir + "/weighting.csv", w);
  write_lines(dir + "/lr.csv", lr);
}

// ---------------------------------------------------------------------------
// Plots

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw ContractError("csv: no column named " + name);
}

CsvTable parse_csv_table(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  CsvTable t;
  auto split = [](const std::string& l) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ls(l);
    while (std::getline(ls, cell, ',')) out.push_back(cell);
    if (!l.empty() && l.back() == ',') out.emplace_back();
    return out;
  };
  auto strip = [](std::string& l) {
    if (!l.empty() && l.back() == '\r') l.pop_back();
  };
  if (!std::getline(in, line)) throw FormatError("csv: missing header");
  strip(line);
  t.header = split(line);
  if (t.header.empty()) throw FormatError("csv: empty header");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip(line);
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != t.header.size())
      throw FormatError("csv line " + std::to_string(line_no) + ": expected " + std::to_string(t.header.size()) +
                        " cells");
    std::vector<double> row;
    for (const auto& c : cells) {
      double v = 0;
      const auto r = std::from_chars(c.data(), c.data() + c.size(), v);
      if (r.ec != std::errc() || r.ptr != c.data() + c.size())
        throw FormatError("csv line " + std::to_string(line_no) + ": '" + c + "' is not a number");
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable read_csv_table(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_csv_table(ss.str());
}

namespace {

struct Range {
  double lo, hi;
};

Range padded_range(const std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  if (*hi > *lo) return {*lo, *hi};
  const double pad = std::max(0.5, 0.05 * std::abs(*lo));
  return {*lo - pad, *hi + pad};
}

void set_pixel(Tensor<double>& img, long x, long y, double r, double g, double b) {
  const long h = static_cast<long>(img.dim(1)), w = static_cast<long>(img.dim(2));
  if (x < 0 || y < 0 || x >= w || y >= h) return;
  const std::size_t plane = img.dim(1) * img.dim(2), i = static_cast<std::size_t>(y * w + x);
  img[i] = r;
  img[plane + i] = g;
  img[2 * plane + i] = b;
}

void draw_line(Tensor<double>& img, long x0, long y0, long x1, long y1, double r, double g, double b) {
  const long dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  long err = dx + dy;
  while (true) {
    set_pixel(img, x0, y0, r, g, b);
    if (x0 == x1 && y0 == y1) break;
    const long e2 = 2 * err;
    if (e2 >= dy) err += dy, x0 += sx;
    if (e2 <= dx) err += dx, y0 += sy;
  }
}

}  // namespace

Tensor<double> line_plot(const std::vector<double>& x, const std::vector<double>& y, const PlotFrame& f) {
  if (x.empty() || x.size() != y.size()) throw ContractError("line_plot: need equal, non-empty x and y");
  if (f.left + f.right + 2 > f.width || f.top + f.bottom + 2 > f.height)
    throw ContractError("line_plot: margins leave no plot area");
  Tensor<double> img({3, f.height, f.width}, 1.0);
  const long l = static_cast<long>(f.left), r = static_cast<long>(f.width - f.right - 1);
  const long t = static_cast<long>(f.top), b = static_cast<long>(f.height - f.bottom - 1);
  draw_line(img, l, t, l, b, -1, -1, -1);
  draw_line(img, l, b, r, b, -1, -1, -1);
  const Range rx = padded_range(x), ry = padded_range(y);
  auto px = [&](double v) { return l + std::lround((v - rx.lo) / (rx.hi - rx.lo) * static_cast<double>(r - l)); };
  auto py = [&](double v) { return b - std::lround((v - ry.lo) / (ry.hi - ry.lo) * static_cast<double>(b - t)); };
  for (std::size_t i = 0; i + 1 < x.size(); ++i) draw_line(img, px(x[i]), py(y[i]), px(x[i + 1]), py(y[i + 1]), -1, -1, 1);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (long d = -1; d <= 1; ++d) {
      set_pixel(img, px(x[i]) + d, py(y[i]), 1, -1, -1);
      set_pixel(img, px(x[i]), py(y[i]) + d, 1, -1, -1);
    }
  return img;
}

std::vector<std::string> plot_csv(const std::string& csv_path, const std::string& out_dir) {
  const CsvTable t = read_csv_table(csv_path);
  if (t.rows.empty()) throw ContractError("plot: " + csv_path + " has no data rows");
  if (t.header.size() < 2) throw ContractError("plot: need at least two columns");
  const PlotFrame frame;
  std::vector<double> x;
  for (const auto& row : t.rows) x.push_back(row[0]);
  std::vector<std::string> written;
  for (std::size_t c = 1; c < t.header.size(); ++c) {
    std::vector<double> y;
    for (const auto& row : t.rows) y.push_back(row[c]);
    const Range rx = padded_range(x), ry = padded_range(y);
    const std::string comment =
        "x: " + t.header[0] + " from " + fmt(rx.lo) + " (pixel column " + std::to_string(frame.left) + ") to " +
        fmt(rx.hi) + " (pixel column " + std::to_string(frame.width - frame.right - 1) + ")\n" + "y: " + t.header[c] +
        " from " + fmt(ry.lo) + " (pixel row " + std::to_string(frame.height - frame.bottom - 1) + ") to " +
        fmt(ry.hi) + " (pixel row " + std::to_string(frame.top) + ")";
    const std::string path = out_dir + "/" + t.header[c] + ".ppm";
    write_ppm(path, line_plot(x, y, frame), comment);
    written.push_back(path);
  }
  return written;
}

}  // namespace mswap
