#include "mswap/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace mswap {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* want) {
  throw ContractError("config: key '" + std::string(key) + "' expects " + want + ", got '" + std::string(value) + "'");
}

std::uint64_t parse_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

double parse_f64(std::string_view key, std::string_view v) {
  double out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true or false");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Key {
  const char* name;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, std::string_view)> set;
};

template <typename M>
Key size_key(const char* name, M member) {
  return {name, [member](TrainConfig c) { return std::to_string(member(c)); },
          [name, member](TrainConfig& c, std::string_view v) {
            member(c) = static_cast<std::remove_reference_t<decltype(member(c))>>(parse_u64(name, v));
          }};
}

template <typename M>
Key real_key(const char* name, M member) {
  return {name, [member](TrainConfig c) { return fmt(member(c)); },
          [name, member](TrainConfig& c, std::string_view v) { member(c) = parse_f64(name, v); }};
}

template <typename M>
Key bool_key(const char* name, M member) {
  return {name, [member](TrainConfig c) { return std::string(member(c) ? "true" : "false"); },
          [name, member](TrainConfig& c, std::string_view v) { member(c) = parse_bool(name, v); }};
}

#define MSWAP_FIELD(expr) [](TrainConfig& c) -> auto& { return expr; }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    std::vector<Key> k;
    k.push_back(size_key("image_size", MSWAP_FIELD(c.image_size)));
    k.push_back(size_key("seed", MSWAP_FIELD(c.seed)));
    k.push_back(size_key("gen.base_channels", MSWAP_FIELD(c.gen.base_channels)));
    k.push_back(size_key("gen.n_downsamples", MSWAP_FIELD(c.gen.n_downsamples)));
    k.push_back(size_key("gen.n_res_blocks", MSWAP_FIELD(c.gen.n_res_blocks)));
    k.push_back(bool_key("gen.use_self_attention", MSWAP_FIELD(c.gen.use_self_attention)));
    k.push_back(bool_key("gen.use_cross_attention", MSWAP_FIELD(c.gen.use_cross_attention)));
    k.push_back(size_key("gen.d_k", MSWAP_FIELD(c.gen.d_k)));
    k.push_back(bool_key("gen.attention_output_projection", MSWAP_FIELD(c.gen.attention_output_projection)));
    k.push_back(bool_key("gen.attention_residual", MSWAP_FIELD(c.gen.attention_residual)));
    k.push_back(real_key("gen.leaky_slope", MSWAP_FIELD(c.gen.leaky_slope)));
    k.push_back(size_key("disc.n_scales", MSWAP_FIELD(c.disc.n_scales)));
    k.push_back(size_key("disc.n_layers", MSWAP_FIELD(c.disc.n_layers)));
    k.push_back(size_key("disc.base_channels", MSWAP_FIELD(c.disc.base_channels)));
    k.push_back(real_key("disc.leaky_slope", MSWAP_FIELD(c.disc.leaky_slope)));
    k.push_back(size_key("emb.id_dim", MSWAP_FIELD(c.emb.id_dim)));
    k.push_back({"emb.widths",
                 [](const TrainConfig& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.emb.widths.size(); ++i)
                     s += (i ? "," : "") + std::to_string(c.emb.widths[i]);
                   return s;
                 },
                 [](TrainConfig& c, std::string_view v) {
                   std::vector<std::size_t> w;
                   while (!v.empty()) {
                     const auto comma = v.find(',');
                     w.push_back(parse_u64("emb.widths", trim(v.substr(0, comma))));
                     v = comma == std::string_view::npos ? std::string_view{} : v.substr(comma + 1);
                   }
                   c.emb.widths = w;
                 }});
    k.push_back(real_key("loss.lambda_id_max", MSWAP_FIELD(c.lambda_id_max)));
    k.push_back(real_key("loss.lambda_rec_max", MSWAP_FIELD(c.lambda_rec_max)));
    k.push_back(real_key("loss.lambda_feat", MSWAP_FIELD(c.lambda_feat)));
    k.push_back(real_key("sched.gamma", MSWAP_FIELD(c.gamma)));
    k.push_back(bool_key("sched.dynamic_weights", MSWAP_FIELD(c.dynamic_weights)));
    k.push_back(real_key("sched.eta_max", MSWAP_FIELD(c.eta_max)));
    k.push_back(real_key("sched.eta_min", MSWAP_FIELD(c.eta_min)));
    k.push_back(size_key("sched.t_cycle", MSWAP_FIELD(c.t_cycle)));
    k.push_back({"sched.lr_policy", [](const TrainConfig& c) { return std::string(to_string(c.lr_policy)); },
                 [](TrainConfig& c, std::string_view v) { c.lr_policy = lr_policy_from_string(v); }});
    k.push_back(size_key("train.batch_size", MSWAP_FIELD(c.batch_size)));
    k.push_back(size_key("train.total_steps", MSWAP_FIELD(c.total_steps)));
    k.push_back(size_key("train.log_every", MSWAP_FIELD(c.log_every)));
    k.push_back(size_key("train.checkpoint_every", MSWAP_FIELD(c.checkpoint_every)));
    k.push_back(real_key("train.self_swap_prob", MSWAP_FIELD(c.self_swap_prob)));
    k.push_back(size_key("data.ids", MSWAP_FIELD(c.data_ids)));
    k.push_back(size_key("data.per_id", MSWAP_FIELD(c.data_per_id)));
    k.push_back(size_key("data.seed", MSWAP_FIELD(c.data_seed)));
    k.push_back(size_key("pretrain.steps", MSWAP_FIELD(c.pretrain.steps)));
    k.push_back(size_key("pretrain.batch", MSWAP_FIELD(c.pretrain.batch)));
    k.push_back(real_key("pretrain.lr", MSWAP_FIELD(c.pretrain.lr)));
    k.push_back(real_key("pretrain.margin", MSWAP_FIELD(c.pretrain.margin)));
    k.push_back(real_key("pretrain.min_separation", MSWAP_FIELD(c.pretrain.min_separation)));
    k.push_back(size_key("pretrain.seed", MSWAP_FIELD(c.pretrain_seed)));
    k.push_back(size_key("eval.pairs", MSWAP_FIELD(c.eval_pairs)));
    return k;
  }();
  return table;
}

#undef MSWAP_FIELD

}  // namespace

GeneratorConfig TrainConfig::generator_config() const {
  GeneratorConfig g = gen;
  g.image_size = image_size;
  g.id_dim = emb.id_dim;
  return g;
}

DiscriminatorConfig TrainConfig::discriminator_config() const {
  DiscriminatorConfig d = disc;
  d.image_size = image_size;
  return d;
}

EmbedderConfig TrainConfig::embedder_config() const {
  EmbedderConfig e = emb;
  e.image_size = image_size;
  return e;
}

ScheduleState TrainConfig::schedule() const {
  ScheduleState s;
  s.total_steps = total_steps;
  s.gamma = gamma;
  s.lambda_id_max = lambda_id_max;
  s.lambda_rec_max = lambda_rec_max;
  s.dynamic_weights = dynamic_weights;
  s.eta_max = eta_max;
  s.eta_min = eta_min < 0 ? eta_max / 100.0 : eta_min;
  s.t_cycle = t_cycle == 0 ? total_steps : t_cycle;
  s.lr_policy = lr_policy;
  return s;
}

LossWeights TrainConfig::loss_weights(std::uint64_t step) const {
  const ScheduleState s = schedule().at(step);
  return {lambda_id_at(s), lambda_feat, lambda_rec_at(s)};
}

void TrainConfig::validate() const {
  if (total_steps < 1) throw ContractError("config: train.total_steps must be >= 1");
  if (batch_size < 1) throw ContractError("config: train.batch_size must be >= 1");
  if (log_every < 1) throw ContractError("config: train.log_every must be >= 1");
  if (!(self_swap_prob >= 0.0 && self_swap_prob <= 1.0))
    throw ContractError("config: train.self_swap_prob must be in [0, 1]");
  if (data_ids < 5) throw ContractError("config: data.ids must be >= 5 so both splits hold two identities");
  if (data_per_id < 2) throw ContractError("config: data.per_id must be >= 2");
  if (eval_pairs < 2) throw ContractError("config: eval.pairs must be >= 2");
  generator_config().validate();
  discriminator_config().validate();
  embedder_config().validate();
  schedule().validate();
  LossWeights{lambda_id_max, lambda_feat, lambda_rec_max}.validate();
}

void TrainConfig::set(std::string_view key, std::string_view value) {
  for (const auto& k : keys())
    if (key == k.name) {
      k.set(*this, value);
      return;
    }
  throw ContractError("config: unknown key '" + std::string(key) + "'");
}

TrainConfig TrainConfig::parse(std::string_view text) {
  TrainConfig cfg;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ContractError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    try {
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ContractError& e) {
      throw ContractError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ContractError("config: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

std::string TrainConfig::serialize() const {
  std::string out;
  for (const auto& k : keys()) out += std::string(k.name) + " = " + k.get(*this) + "\n";
  return out;
}

}  // namespace mswap
