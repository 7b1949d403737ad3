#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

#include "mswap/metrics.hpp"
#include "mswap/pretrain.hpp"
#include "test_util.hpp"

using namespace mswap;
using mswap::testing::random_tensor;
using mswap::testing::values;

namespace {

FaceSpec random_spec(std::uint64_t seed) {
  CounterRng rng(derive_seed(seed, 99));
  FaceSpec s;
  for (auto& v : s.identity) v = rng.uniform();
  for (auto& v : s.attributes) v = rng.uniform();
  s.seed = seed;
  return s;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

FeatureSet gaussian_cloud(std::size_t n, std::size_t d, std::uint64_t seed) {
  CounterRng rng(seed);
  FeatureSet s(n, std::vector<double>(d));
  for (auto& row : s)
    for (auto& v : row) v = rng.normal();
  return s;
}

// Naive sample covariance trace with the same 1/(n-1) normalization.
double covariance_trace(const FeatureSet& s) {
  const std::size_t n = s.size(), d = s[0].size();
  double tr = 0;
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0;
    for (const auto& row : s) mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0;
    for (const auto& row : s) var += (row[j] - mean) * (row[j] - mean);
    tr += var / static_cast<double>(n - 1);
  }
  return tr;
}

EmbedderConfig small_embedder() {
  EmbedderConfig c;
  c.image_size = 16;
  c.id_dim = 8;
  c.widths = {4, 8};
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Synthetic faces

TEST(Synth, RenderIsDeterministicAndInRange) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const FaceSpec s = random_spec(seed);
    const auto a = render(s, 32), b = render(s, 32);
    EXPECT_EQ(values(a), values(b));
    EXPECT_EQ(a.shape(), (Shape{3, 32, 32}));
    for (double v : a.data()) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Synth, NoiseSeedChangesOnlyTexture) {
  FaceSpec a = random_spec(3), b = a;
  b.seed = a.seed + 1;
  const double d = max_abs_diff(render(a, 32), render(b, 32));
  EXPECT_GT(d, 0.0);
  EXPECT_LE(d, 2 * 0.06 + 1e-12);  // noise amplitude 0.03 per albedo, doubled by rendering
}

TEST(Synth, LightingIsMonotoneInStrength) {
  FaceSpec s = random_spec(7);
  s.attributes[kLightStrength] = 0.3;
  const auto lo = lighting(s, 32);
  s.attributes[kLightStrength] = 0.8;
  const auto hi = lighting(s, 32);
  for (std::size_t i = 0; i < lo.numel(); ++i) {
    EXPECT_GT(hi[i], lo[i]);
    EXPECT_LE(hi[i], 1.0 + 1e-15);
  }
}

TEST(Synth, LightingMatchesClosedForm) {
  FaceSpec s = random_spec(8);
  const double k = s.attributes[kLightStrength], d = 2 * s.attributes[kLightDirection] - 1;
  const auto l = lighting(s, 16);
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 0; x < 16; ++x) {
      const double u = (x + 0.5) / 16.0 * 2.0 - 1.0;
      EXPECT_NEAR(l[y * 16 + x], 0.4 + 0.6 * k * (0.75 + 0.25 * d * u), 1e-12);
    }
}

TEST(Synth, LightingChangesNoGeometry) {
  FaceSpec a = random_spec(9), b = a;
  b.attributes[kLightStrength] = 1.0 - a.attributes[kLightStrength];
  b.attributes[kLightDirection] = 1.0 - a.attributes[kLightDirection];
  EXPECT_EQ(geometry(a).identity, geometry(b).identity);
  EXPECT_EQ(values(albedo(a, 32)), values(albedo(b, 32)));
  EXPECT_NE(values(render(a, 32)), values(render(b, 32)));
}

TEST(Synth, AttributesNeverMoveIdentityGeometry) {
  FaceSpec a = random_spec(10), b = a;
  for (auto& v : b.attributes) v = 1.0 - v;
  EXPECT_EQ(geometry(a).identity, geometry(b).identity);
  b = a;
  b.identity[kEyeSpacing] = 1.0 - a.identity[kEyeSpacing];
  EXPECT_NE(geometry(a).identity, geometry(b).identity);
}

TEST(Synth, YawShiftsFeaturesMoreThanOutline) {
  FaceSpec s = random_spec(11);
  s.attributes[kYaw] = 0.9;
  const auto p = geometry(s).pose;
  EXPECT_GT(std::abs(p.feature_shift), std::abs(p.outline_shift));
  s.attributes[kYaw] = 0.5;
  EXPECT_NEAR(geometry(s).pose.feature_shift, 0.0, 1e-12);
}

TEST(Synth, InvalidInputsRejected) {
  FaceSpec s = random_spec(1);
  s.identity[kNoseLength] = 1.5;
  EXPECT_THROW(render(s, 32), ContractError);
  EXPECT_THROW(render(random_spec(1), 8), ContractError);
}

TEST(Synth, DatasetCountsSplitsAndSpacing) {
  const Dataset ds = sample_dataset(20, 3, 5);
  EXPECT_EQ(ds.samples.size(), 60u);
  EXPECT_EQ(ds.heldout_ids.size(), 4u);
  EXPECT_EQ(ds.train_ids.size(), 16u);
  std::set<std::size_t> all(ds.train_ids.begin(), ds.train_ids.end());
  for (auto id : ds.heldout_ids) EXPECT_TRUE(all.insert(id).second);
  EXPECT_EQ(all.size(), 20u);
  for (std::size_t a = 0; a < 20; ++a) {
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_EQ(ds.sample(a, k).label, a);
      EXPECT_EQ(ds.sample(a, k).spec.identity, ds.sample(a, 0).spec.identity);
    }
    for (std::size_t b = a + 1; b < 20; ++b) {
      double d2 = 0;
      for (std::size_t j = 0; j < kIdentityFactors; ++j) {
        const double d = ds.sample(a, 0).spec.identity[j] - ds.sample(b, 0).spec.identity[j];
        d2 += d * d;
      }
      EXPECT_GE(std::sqrt(d2), kMinIdentityDistance);
    }
  }
  EXPECT_NE(ds.sample(0, 0).spec.attributes, ds.sample(0, 1).spec.attributes);
}

TEST(Synth, DatasetIsDeterministicInSeed) {
  const Dataset a = sample_dataset(10, 2, 42), b = sample_dataset(10, 2, 42), c = sample_dataset(10, 2, 43);
  for (std::size_t i = 0; i < a.samples.size(); ++i) EXPECT_EQ(a.samples[i].spec, b.samples[i].spec);
  EXPECT_NE(a.samples[0].spec, c.samples[0].spec);
}

TEST(Synth, PpmRoundTripWithinQuantization) {
  const auto img = render(random_spec(4), 16);
  const auto back = decode_ppm(encode_ppm(img, "axis one\naxis two"));
  EXPECT_EQ(back.shape(), img.shape());
  EXPECT_LE(max_abs_diff(img, back), 0.5 / 127.5 + 1e-12);
  EXPECT_EQ(encode_ppm(back), encode_ppm(decode_ppm(encode_ppm(back))));
}

TEST(Synth, PpmRejectsBadFiles) {
  std::vector<unsigned char> bad{'P', '5', '\n', '2', ' ', '2', '\n', '2', '5', '5', '\n', 0, 0, 0, 0};
  EXPECT_THROW(decode_ppm(bad), FormatError);
  auto good = encode_ppm(render(random_spec(4), 16));
  good.pop_back();
  EXPECT_THROW(decode_ppm(good), FormatError);
  EXPECT_THROW(read_ppm("/nonexistent/file.ppm"), FormatError);
  EXPECT_THROW(encode_ppm(Tensor<double>({16, 16})), ShapeError);
}

// ---------------------------------------------------------------------------
// Metrics

TEST(Frechet, IdenticalSetsAreZero) {
  const auto a = gaussian_cloud(64, 16, 1);
  EXPECT_LT(frechet_distance(a, a), 1e-6);
}

TEST(Frechet, ShiftedCloudIsSquaredMeanDistance) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto a = gaussian_cloud(64, 8, seed);
    auto b = a;
    CounterRng rng(seed + 100);
    std::vector<double> shift(8);
    double d2 = 0;
    for (auto& s : shift) {
      s = rng.uniform(-2, 2);
      d2 += s * s;
    }
    for (auto& row : b)
      for (std::size_t j = 0; j < 8; ++j) row[j] += shift[j];
    EXPECT_NEAR(frechet_distance(a, b), d2, 0.05 * d2);
    EXPECT_NEAR(frechet_distance(a, b), d2, 1e-6 * (1 + d2));
  }
}

TEST(Frechet, ScaledCloudMatchesClosedForm) {
  // b = c a: B = c^2 A, so the trace term is (1 - c)^2 tr A.
  const auto a = gaussian_cloud(50, 6, 3);
  for (double c : {0.5, 2.0, 3.0}) {
    FeatureSet b = a;
    for (auto& row : b)
      for (auto& v : row) v *= c;
    double mean_d2 = 0;
    for (std::size_t j = 0; j < 6; ++j) {
      double m = 0;
      for (const auto& row : a) m += row[j];
      m /= 50.0;
      mean_d2 += (m - c * m) * (m - c * m);
    }
    const double expect = mean_d2 + (1 - c) * (1 - c) * covariance_trace(a);
    EXPECT_NEAR(frechet_distance(a, b), expect, 1e-5 * expect);
  }
}

TEST(Frechet, OneDimensionalClosedForm) {
  FeatureSet a, b;
  CounterRng rng(5);
  for (int i = 0; i < 40; ++i) a.push_back({rng.normal() * 2 + 1});
  for (int i = 0; i < 30; ++i) b.push_back({rng.normal() * 0.5 - 3});
  auto stats = [](const FeatureSet& s) {
    double m = 0;
    for (const auto& r : s) m += r[0];
    m /= static_cast<double>(s.size());
    double v = 0;
    for (const auto& r : s) v += (r[0] - m) * (r[0] - m);
    return std::pair{m, v / static_cast<double>(s.size() - 1) + 1e-6};
  };
  const auto [ma, va] = stats(a);
  const auto [mb, vb] = stats(b);
  const double expect = (ma - mb) * (ma - mb) + std::pow(std::sqrt(va) - std::sqrt(vb), 2);
  EXPECT_NEAR(frechet_distance(a, b), expect, 1e-9);
}

TEST(Frechet, SymmetricAndNonNegative) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto a = gaussian_cloud(30, 5, seed), b = gaussian_cloud(40, 5, seed + 50);
    const double ab = frechet_distance(a, b), ba = frechet_distance(b, a);
    EXPECT_GE(ab, 0.0);
    EXPECT_NEAR(ab, ba, 1e-9 * (1 + ab));
  }
}

TEST(Frechet, DegenerateInputsRejected) {
  EXPECT_THROW(frechet_distance(gaussian_cloud(1, 3, 0), gaussian_cloud(5, 3, 1)), ContractError);
  EXPECT_THROW(frechet_distance(gaussian_cloud(5, 3, 0), gaussian_cloud(5, 4, 1)), ShapeError);
}

TEST(IdentitySimilarity, SelfPairIsOne) {
  Embedder<double> e(small_embedder(), 3);
  std::vector<std::pair<Tensor<double>, Tensor<double>>> pairs;
  for (std::uint64_t s = 0; s < 4; ++s) {
    const auto img = random_tensor({3, 16, 16}, s);
    pairs.emplace_back(img, img);
  }
  EXPECT_NEAR(identity_similarity(pairs, e), 1.0, 1e-12);
  EXPECT_THROW(identity_similarity(std::vector<std::pair<Tensor<double>, Tensor<double>>>{}, e), ContractError);
}

TEST(AttributeProbe, RecoversAttributesOfCleanRenders) {
  const Dataset ds = sample_dataset(30, 8, 3);
  std::vector<Tensor<double>> train, test;
  std::vector<std::array<double, kAttributeFactors>> train_y, test_y, wrong_y;
  for (std::size_t id : ds.train_ids)
    for (std::size_t k = 0; k < ds.n_per_id; ++k) {
      train.push_back(render(ds.sample(id, k).spec, 32));
      train_y.push_back(ds.sample(id, k).spec.attributes);
    }
  for (std::size_t id : ds.heldout_ids)
    for (std::size_t k = 0; k < ds.n_per_id; ++k) {
      test.push_back(render(ds.sample(id, k).spec, 32));
      test_y.push_back(ds.sample(id, k).spec.attributes);
      wrong_y.push_back(ds.sample(id, (k + 1) % ds.n_per_id).spec.attributes);
    }
  AttributeProbe p;
  EXPECT_THROW(attribute_consistency(p, test, test_y), ContractError);
  p.fit(train, train_y);
  const double right = attribute_consistency(p, test, test_y);
  const double wrong = attribute_consistency(p, test, wrong_y);
  EXPECT_GT(right, 0.5);
  EXPECT_GT(right, wrong + 0.3);
  EXPECT_LE(right, 1.0);
  EXPECT_GE(wrong, 0.0);
}

TEST(AttributeProbe, StateRoundTrip) {
  const Dataset ds = sample_dataset(10, 4, 8);
  std::vector<Tensor<double>> imgs;
  std::vector<std::array<double, kAttributeFactors>> y;
  for (const auto& s : ds.samples) {
    imgs.push_back(render(s.spec, 16));
    y.push_back(s.spec.attributes);
  }
  AttributeProbe p, q;
  p.fit(imgs, y);
  q.set_state(p.weights(), p.train_mean());
  EXPECT_EQ(p.predict(imgs[3]), q.predict(imgs[3]));
}

// ---------------------------------------------------------------------------
// Embedder pretraining

TEST(Pretrain, ZeroStepsFreezesWithoutGate) {
  const Dataset ds = sample_dataset(10, 3, 2);
  const auto imgs = render_dataset(ds, 16);
  Embedder<float> e(small_embedder(), 1);
  PretrainConfig cfg;
  cfg.steps = 0;
  cfg.min_separation = 10.0;  // unreachable, but not checked at zero steps
  EXPECT_NO_THROW(pretrain_embedder(e, ds, imgs, cfg, 0));
  EXPECT_TRUE(e.frozen());
}

TEST(Pretrain, DeterministicAndSeparating) {
  const Dataset ds = sample_dataset(10, 4, 2);
  const auto imgs = render_dataset(ds, 16);
  PretrainConfig cfg;
  cfg.steps = 150;
  cfg.min_separation = 0.0;
  Embedder<float> a(small_embedder(), 1), b(small_embedder(), 1);
  const auto sa = pretrain_embedder(a, ds, imgs, cfg, 5);
  const auto sb = pretrain_embedder(b, ds, imgs, cfg, 5);
  EXPECT_EQ(sa.same, sb.same);
  EXPECT_EQ(sa.cross, sb.cross);
  auto pa = a.params().begin();
  for (const auto& p : b.params()) EXPECT_EQ(values((pa++)->value), values(p.value));
  const auto before = embedding_separation(Embedder<float>(small_embedder(), 1), ds, imgs, ds.train_ids);
  const auto after = embedding_separation(a, ds, imgs, ds.train_ids);
  EXPECT_GT(after.gap(), before.gap());
}

TEST(Pretrain, GateFailureIsReported) {
  const Dataset ds = sample_dataset(10, 3, 2);
  const auto imgs = render_dataset(ds, 16);
  Embedder<float> e(small_embedder(), 1);
  PretrainConfig cfg;
  cfg.steps = 2;
  cfg.min_separation = 1.5;
  EXPECT_THROW(pretrain_embedder(e, ds, imgs, cfg, 0), PretrainingError);
}
