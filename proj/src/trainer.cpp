#include "mswap/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mswap {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// Stream indices under cfg.seed.
constexpr std::uint64_t kGenSeed = 10, kDiscSeed = 11, kBatchSeed = 12, kEmbedderSeed = 13;

TrainConfig config_of(const Checkpoint& ckpt) {
  if (ckpt.text("__role__") != "generator") throw FormatError("checkpoint does not hold a training run");
  TrainConfig cfg = TrainConfig::parse(ckpt.text("__config__"));
  cfg.validate();
  return cfg;
}

// Lines of the serialized config that determine the dataset and embedder.
std::string world_key(const TrainConfig& cfg) {
  std::istringstream in(cfg.serialize());
  std::string line, out;
  while (std::getline(in, line))
    if (line.rfind("image_size", 0) == 0 || line.rfind("emb.", 0) == 0 || line.rfind("data.", 0) == 0 ||
        line.rfind("pretrain.", 0) == 0)
      out += line + "\n";
  return out;
}

void put_adam(Checkpoint& c, const std::string& prefix, const AdamState<float>& st, const ParameterStore<float>& ps) {
  c.put_u64("__" + prefix + "_step__", {st.step});
  if (st.m.empty()) return;
  std::size_t i = 0;
  for (const auto& p : ps) {
    c.put_tensor(prefix + "/m/" + p.name, st.m[i]);
    c.put_tensor(prefix + "/v/" + p.name, st.v[i]);
    ++i;
  }
}

void get_adam(const Checkpoint& c, const std::string& prefix, AdamState<float>& st, const ParameterStore<float>& ps) {
  st.step = c.u64_scalar("__" + prefix + "_step__");
  st.m.clear();
  st.v.clear();
  if (ps.size() == 0 || !c.contains(prefix + "/m/" + ps.begin()->name)) return;
  for (const auto& p : ps) {
    st.m.push_back(c.tensor_f32(prefix + "/m/" + p.name));
    st.v.push_back(c.tensor_f32(prefix + "/v/" + p.name));
    if (st.m.back().shape() != p.value.shape() || st.v.back().shape() != p.value.shape())
      throw ShapeError("checkpoint: optimizer state for " + p.name + " has the wrong shape");
  }
}

template <typename T>
Var<T> mean_of(const std::vector<Var<T>>& xs) {
  Var<T> s = xs.front();
  for (std::size_t i = 1; i < xs.size(); ++i) s = add(s, xs[i]);
  return scale(s, 1.0 / static_cast<double>(xs.size()));
}

bool finite(Var<float> v) { return std::isfinite(static_cast<double>(v.value()[0])); }

// Restores D's requires_grad flag however the G step exits.
struct FreezeGuard {
  ParameterStore<float>& ps;
  explicit FreezeGuard(ParameterStore<float>& p) : ps(p) { ps.set_requires_grad(false); }
  ~FreezeGuard() { ps.set_requires_grad(true); }
};

}  // namespace

std::string csv_header() { return "step,G_Loss,G_ID,G_feat_match,D_fake,D_real,lambda_id,lambda_rec,lr"; }

std::string csv_line(const LogRow& r) {
  return std::to_string(r.step) + "," + fmt(r.g_loss) + "," + fmt(r.g_id) + "," + fmt(r.g_feat_match) + "," +
         fmt(r.d_fake) + "," + fmt(r.d_real) + "," + fmt(r.lambda_id) + "," + fmt(r.lambda_rec) + "," + fmt(r.lr);
}

void write_csv(const std::string& path, const std::vector<LogRow>& rows) {
  std::ofstream f(path);
  if (!f) throw FormatError("cannot open " + path + " for writing");
  f << csv_header() << "\n";
  for (const auto& r : rows) f << csv_line(r) << "\n";
  if (!f) throw FormatError("failed writing " + path);
}

// ---------------------------------------------------------------------------
// World

World::World(const TrainConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  ds_ = sample_dataset(cfg_.data_ids, cfg_.data_per_id, cfg_.data_seed);
  images_ = render_dataset(ds_, cfg_.image_size);
  embedder_ = std::make_unique<Embedder<float>>(cfg_.embedder_config(), derive_seed(cfg_.pretrain_seed, kEmbedderSeed));

  std::vector<Tensor<double>> imgs;
  std::vector<std::array<double, kAttributeFactors>> attrs;
  for (std::size_t id : ds_.train_ids)
    for (std::size_t k = 0; k < ds_.n_per_id; ++k) {
      imgs.push_back(images_[id * ds_.n_per_id + k].cast<double>());
      attrs.push_back(ds_.sample(id, k).spec.attributes);
    }
  probe_.fit(imgs, attrs);
}

std::shared_ptr<World> World::create(const TrainConfig& cfg) {
  std::shared_ptr<World> w(new World(cfg));
  w->separation_ = pretrain_embedder(*w->embedder_, w->ds_, w->images_, w->cfg_.pretrain, w->cfg_.pretrain_seed);
  return w;
}

std::shared_ptr<World> World::from_checkpoint(const TrainConfig& cfg, const Checkpoint& ckpt) {
  std::shared_ptr<World> w(new World(cfg));
  ckpt.get_params("E/", w->embedder_->params());
  w->embedder_->freeze();
  w->separation_ = embedding_separation(*w->embedder_, w->ds_, w->images_, w->ds_.heldout_ids);
  return w;
}

bool World::compatible(const TrainConfig& other) const { return world_key(cfg_) == world_key(other); }

Checkpoint World::embedder_checkpoint() const {
  Checkpoint c;
  c.put_text("__role__", "embedder");
  c.put_text("__config__", cfg_.serialize());
  c.put_tensor("__separation__", Tensor<double>({2}, {separation_.same, separation_.cross}));
  c.put_params("E/", embedder_->params());
  return c;
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(const TrainConfig& cfg, std::shared_ptr<const World> world)
    : cfg_(cfg),
      world_(std::move(world)),
      gen_(cfg_.generator_config(), derive_seed(cfg_.seed, kGenSeed)),
      disc_(cfg_.discriminator_config(), derive_seed(cfg_.seed, kDiscSeed)),
      rng_(derive_seed(cfg_.seed, kBatchSeed)) {
  cfg_.validate();
  if (!world_->compatible(cfg_)) throw ContractError("trainer: config does not match the data/embedder setup");
}

Trainer::Trainer(const Checkpoint& ckpt, std::shared_ptr<const World> world) : Trainer(config_of(ckpt), world) {
  load(ckpt);
}

void Trainer::load(const Checkpoint& ckpt) {
  ckpt.get_params("G/", gen_.params());
  ckpt.get_params("D/", disc_.params());
  get_adam(ckpt, "adam_g", adam_g_, gen_.params());
  get_adam(ckpt, "adam_d", adam_d_, disc_.params());
  const auto rng = ckpt.u64("__rng__");
  if (rng.size() != 2) throw FormatError("checkpoint: __rng__ must hold key and counter");
  rng_ = CounterRng(rng[0], rng[1]);
  step_ = ckpt.u64_scalar("__step__");
  const auto updates = ckpt.u64("__updates__");
  if (updates.size() != 2) throw FormatError("checkpoint: __updates__ must hold two counts");
  d_updates_ = updates[0];
  g_updates_ = updates[1];
  const auto win = ckpt.tensor_f64("__window__");
  if (win.numel() != 5) throw FormatError("checkpoint: __window__ must hold five sums");
  for (std::size_t i = 0; i < 5; ++i) window_.sums[i] = win[i];
  window_.count = ckpt.u64_scalar("__window_count__");
  if (step_ > cfg_.total_steps) throw FormatError("checkpoint: step beyond total_steps");
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.put_text("__role__", "generator");
  c.put_text("__config__", cfg_.serialize());
  c.put_u64("__step__", {step_});
  c.put_u64("__rng__", {rng_.key(), rng_.counter()});
  c.put_u64("__updates__", {d_updates_, g_updates_});
  c.put_tensor("__window__", Tensor<double>({5}, {window_.sums[0], window_.sums[1], window_.sums[2],
                                                   window_.sums[3], window_.sums[4]}));
  c.put_u64("__window_count__", {window_.count});
  c.put_params("G/", gen_.params());
  c.put_params("D/", disc_.params());
  c.put_params("E/", world_->embedder().params());
  put_adam(c, "adam_g", adam_g_, gen_.params());
  put_adam(c, "adam_d", adam_d_, disc_.params());
  return c;
}

std::optional<LogRow> Trainer::train_step(const std::string& out_dir) {
  if (done()) throw ContractError("trainer: already at total_steps");
  const std::uint64_t t = step_;
  const ScheduleState sched = cfg_.schedule().at(t);
  const LossWeights w{lambda_id_at(sched), cfg_.lambda_feat, lambda_rec_at(sched)};
  const double lr = lr_at(sched);

  const Dataset& ds = world_->dataset();
  const auto& images = world_->images();
  const Embedder<float>& emb = world_->embedder();

  // Start-of-step state for rollback. G is only touched by its own Adam
  // update, which validates every gradient before writing.
  const CounterRng rng_start = rng_;
  std::vector<Tensor<float>> d_snapshot;
  for (const auto& p : disc_.params()) d_snapshot.push_back(p.value);
  const AdamState<float> adam_d_snapshot = adam_d_;
  const std::uint64_t d_updates_snapshot = d_updates_;

  StepRecord rec;
  try {
    rec.self_swap = rng_.bernoulli(cfg_.self_swap_prob);
    std::vector<const Tensor<float>*> src, tgt;
    for (std::size_t b = 0; b < cfg_.batch_size; ++b) {
      const std::size_t tid = ds.train_ids[rng_.below(ds.train_ids.size())];
      const std::size_t tk = rng_.below(ds.n_per_id);
      tgt.push_back(&images[tid * ds.n_per_id + tk]);
      if (rec.self_swap) {
        src.push_back(tgt.back());
        continue;
      }
      std::size_t sid = tid;
      while (sid == tid) sid = ds.train_ids[rng_.below(ds.train_ids.size())];
      src.push_back(&images[sid * ds.n_per_id + rng_.below(ds.n_per_id)]);
    }

    Graph<float> gg;
    std::vector<Var<float>> e_src, fakes;
    for (std::size_t b = 0; b < cfg_.batch_size; ++b) {
      e_src.push_back(gg.constant(emb.embed(*src[b])));
      fakes.push_back(gen_.forward(gg.constant(*src[b]), gg.constant(*tgt[b]), e_src.back()));
    }

    // Discriminator update on detached fakes.
    {
      Graph<float> gd;
      std::vector<Var<float>> real_scores, fake_scores;
      for (std::size_t b = 0; b < cfg_.batch_size; ++b) {
        for (auto s : disc_.forward(gd.constant(*tgt[b])).scores) real_scores.push_back(s);
        for (auto s : disc_.forward(gd.constant(fakes[b].value())).scores) fake_scores.push_back(s);
      }
      const auto dparts = hinge_d_loss(real_scores, fake_scores);
      if (!finite(dparts.real)) throw NumericalError("non-finite D_real");
      if (!finite(dparts.fake)) throw NumericalError("non-finite D_fake");
      rec.bundle.adv_d_real = dparts.real.value()[0];
      rec.bundle.adv_d_fake = dparts.fake.value()[0];
      disc_.params().zero_grad();
      gd.backward(dparts.total);
      adam_step(disc_.params(), adam_d_, lr);
      ++d_updates_;
    }

    // Generator update against the updated, frozen discriminator.
    {
      FreezeGuard freeze(disc_.params());
      Graph<float> gr(false);
      std::vector<Var<float>> fake_scores, ids, feats, recs;
      for (std::size_t b = 0; b < cfg_.batch_size; ++b) {
        std::vector<Var<float>> real_feats;
        for (const auto& f : disc_.forward(gr.constant(*tgt[b])).feats) real_feats.push_back(gg.constant(f.value()));
        const auto out = disc_.forward(fakes[b]);
        for (auto s : out.scores) fake_scores.push_back(s);
        ids.push_back(identity_loss(e_src[b], emb.forward(fakes[b])));
        feats.push_back(feature_matching_loss(real_feats, out.feats));
        if (rec.self_swap) recs.push_back(reconstruction_loss(gg.constant(*tgt[b]), fakes[b]));
      }
      GeneratorLossParts<float> parts;
      parts.adv_g = hinge_g_loss(fake_scores);
      parts.id = mean_of(ids);
      parts.feat = mean_of(feats);
      if (rec.self_swap) parts.rec = mean_of(recs);
      if (!finite(parts.adv_g)) throw NumericalError("non-finite G_Loss");
      if (!finite(parts.id)) throw NumericalError("non-finite G_ID");
      if (!finite(parts.feat)) throw NumericalError("non-finite G_feat_match");
      if (rec.self_swap && !finite(parts.rec)) throw NumericalError("non-finite G_rec");
      const auto gl = total_generator_loss(parts, w, rec.self_swap);
      gen_.params().zero_grad();
      gg.backward(gl.total);
      adam_step(gen_.params(), adam_g_, lr);
      ++g_updates_;
      const double d_real = rec.bundle.adv_d_real, d_fake = rec.bundle.adv_d_fake;
      rec.bundle = gl.bundle;
      rec.bundle.adv_d_real = d_real;
      rec.bundle.adv_d_fake = d_fake;
    }
  } catch (const NumericalError& e) {
    rng_ = rng_start;
    std::size_t i = 0;
    for (auto& p : disc_.params()) p.value = d_snapshot[i++];
    adam_d_ = adam_d_snapshot;
    d_updates_ = d_updates_snapshot;
    abort_step(out_dir, std::string(e.what()) + " at step " + std::to_string(t));
  }

  for (const auto& p : emb.params())
    for (float g : p.grad.data())
      if (g != 0.0f) throw ContractError("trainer: embedder parameter " + p.name + " received a gradient");

  history_.push_back(rec);
  window_.sums[0] += rec.bundle.adv_g;
  window_.sums[1] += w.lambda_id * rec.bundle.id;
  window_.sums[2] += w.lambda_feat * rec.bundle.feat;
  window_.sums[3] += rec.bundle.adv_d_fake;
  window_.sums[4] += rec.bundle.adv_d_real;
  ++window_.count;
  ++step_;

  std::optional<LogRow> row;
  if (step_ % cfg_.log_every == 0 || step_ == cfg_.total_steps) {
    const double n = static_cast<double>(window_.count);
    row = LogRow{t,
                 window_.sums[0] / n,
                 window_.sums[1] / n,
                 window_.sums[2] / n,
                 window_.sums[3] / n,
                 window_.sums[4] / n,
                 w.lambda_id,
                 w.lambda_rec,
                 lr};
    rows_.push_back(*row);
    window_ = Window{};
  }
  if (!out_dir.empty() && cfg_.checkpoint_every > 0 && step_ % cfg_.checkpoint_every == 0)
    checkpoint().save(out_dir + "/ckpt_" + std::to_string(step_) + ".mswp");
  return row;
}

void Trainer::abort_step(const std::string& out_dir, const std::string& what) {
  std::string msg = "training aborted: " + what;
  if (!out_dir.empty()) {
    const std::string path = out_dir + "/last_good.mswp";
    checkpoint().save(path);
    msg += "; last good state saved to " + path;
  }
  throw NumericalError(msg);
}

void Trainer::run(const std::string& out_dir, const std::function<void(const LogRow&)>& on_row) {
  while (!done()) {
    const auto row = train_step(out_dir);
    if (row && on_row) on_row(*row);
  }
}

// ---------------------------------------------------------------------------
// Evaluation

EvalReport evaluate(const Generator<float>& gen, const World& world, std::size_t n_pairs, std::uint64_t seed) {
  if (n_pairs < 2) throw ContractError("evaluate: need at least 2 pairs");
  const Dataset& ds = world.dataset();
  if (ds.heldout_ids.size() < 2) throw ContractError("evaluate: need at least 2 held-out identities");
  const Embedder<float>& emb = world.embedder();
  CounterRng rng(derive_seed(seed, 0xE7A1));

  std::vector<std::pair<Tensor<float>, Tensor<float>>> src_swap, src_tgt;
  std::vector<Tensor<float>> swaps, targets;
  std::vector<Tensor<double>> swaps_d;
  std::vector<std::array<double, kAttributeFactors>> tgt_attr, src_attr;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const std::size_t sid = ds.heldout_ids[rng.below(ds.heldout_ids.size())];
    std::size_t tid = sid;
    while (tid == sid) tid = ds.heldout_ids[rng.below(ds.heldout_ids.size())];
    const std::size_t sk = rng.below(ds.n_per_id), tk = rng.below(ds.n_per_id);
    const Tensor<float>& s = world.images()[sid * ds.n_per_id + sk];
    const Tensor<float>& t = world.images()[tid * ds.n_per_id + tk];
    Tensor<float> out = gen.swap(s, t, emb.embed(s));
    src_swap.emplace_back(s, out);
    src_tgt.emplace_back(s, t);
    swaps_d.push_back(out.cast<double>());
    swaps.push_back(std::move(out));
    targets.push_back(t);
    tgt_attr.push_back(ds.sample(tid, tk).spec.attributes);
    src_attr.push_back(ds.sample(sid, sk).spec.attributes);
  }

  EvalReport r;
  r.n_samples = n_pairs;
  r.identity_similarity = identity_similarity(src_swap, emb);
  r.identity_similarity_target = identity_similarity(src_tgt, emb);
  r.attribute_consistency = attribute_consistency(world.probe(), swaps_d, tgt_attr);
  r.attribute_consistency_source = attribute_consistency(world.probe(), swaps_d, src_attr);
  r.frechet_distance = frechet_distance(swaps, targets, emb);
  return r;
}

std::string eval_csv_header() {
  return "identity_similarity,attribute_consistency,frechet_distance,n_samples,identity_similarity_target,"
         "attribute_consistency_source";
}

std::string eval_csv_line(const EvalReport& r) {
  return fmt(r.identity_similarity) + "," + fmt(r.attribute_consistency) + "," + fmt(r.frechet_distance) + "," +
         std::to_string(r.n_samples) + "," + fmt(r.identity_similarity_target) + "," +
         fmt(r.attribute_consistency_source);
}

}  // namespace mswap
