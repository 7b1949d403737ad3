#include "mswap/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace mswap {

template <typename T>
double identity_similarity(const std::vector<std::pair<Tensor<T>, Tensor<T>>>& pairs, const Embedder<T>& embedder) {
  if (pairs.empty()) throw ContractError("identity_similarity: no pairs");
  double sum = 0;
  for (const auto& [a, b] : pairs) {
    const Tensor<T> ea = embedder.embed(a), eb = embedder.embed(b);
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < ea.numel(); ++i) {
      dot += static_cast<double>(ea[i]) * eb[i];
      na += static_cast<double>(ea[i]) * ea[i];
      nb += static_cast<double>(eb[i]) * eb[i];
    }
    sum += dot / std::sqrt(na * nb);
  }
  return sum / static_cast<double>(pairs.size());
}

std::vector<double> AttributeProbe::features(const Tensor<double>& image) {
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) < kGrid || image.dim(2) < kGrid)
    throw ShapeError("AttributeProbe: expected [3,h,w] with h,w >= 8, got " + shape_str(image.shape()));
  const std::size_t h = image.dim(1), w = image.dim(2);
  std::vector<double> f;
  f.reserve(3 * kGrid * kGrid);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t by = 0; by < kGrid; ++by)
      for (std::size_t bx = 0; bx < kGrid; ++bx) {
        const std::size_t y0 = by * h / kGrid, y1 = (by + 1) * h / kGrid;
        const std::size_t x0 = bx * w / kGrid, x1 = (bx + 1) * w / kGrid;
        double s = 0;
        for (std::size_t y = y0; y < y1; ++y)
          for (std::size_t x = x0; x < x1; ++x) s += image[(c * h + y) * w + x];
        f.push_back(s / static_cast<double>((y1 - y0) * (x1 - x0)));
      }
  return f;
}

void AttributeProbe::fit(const std::vector<Tensor<double>>& images,
                         const std::vector<std::array<double, kAttributeFactors>>& attrs, double ridge) {
  if (images.empty() || images.size() != attrs.size())
    throw ContractError("AttributeProbe::fit: need matching, non-empty image and attribute lists");
  const std::size_t nf = 3 * kGrid * kGrid + 1;
  Eigen::MatrixXd x(images.size(), nf);
  Eigen::MatrixXd y(images.size(), kAttributeFactors);
  mean_.fill(0.0);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto f = features(images[i]);
    for (std::size_t j = 0; j + 1 < nf; ++j) x(i, j) = f[j];
    x(i, nf - 1) = 1.0;
    for (std::size_t k = 0; k < kAttributeFactors; ++k) {
      y(i, k) = attrs[i][k];
      mean_[k] += attrs[i][k] / static_cast<double>(images.size());
    }
  }
  Eigen::MatrixXd gram = x.transpose() * x;
  gram.diagonal().head(nf - 1).array() += ridge * static_cast<double>(images.size());
  const Eigen::MatrixXd w = gram.ldlt().solve(x.transpose() * y);
  weights_.assign(w.size(), 0.0);
  for (std::size_t r = 0; r < nf; ++r)
    for (std::size_t k = 0; k < kAttributeFactors; ++k) weights_[r * kAttributeFactors + k] = w(r, k);
}

void AttributeProbe::set_state(std::vector<double> weights, std::array<double, kAttributeFactors> mean) {
  if (weights.size() != (3 * kGrid * kGrid + 1) * kAttributeFactors)
    throw ShapeError("AttributeProbe: weight table has " + std::to_string(weights.size()) + " entries");
  weights_ = std::move(weights);
  mean_ = mean;
}

std::array<double, kAttributeFactors> AttributeProbe::predict(const Tensor<double>& image) const {
  if (!fitted()) throw ContractError("AttributeProbe: probe has not been fitted");
  const auto f = features(image);
  std::array<double, kAttributeFactors> out{};
  for (std::size_t k = 0; k < kAttributeFactors; ++k) {
    double s = weights_[f.size() * kAttributeFactors + k];
    for (std::size_t j = 0; j < f.size(); ++j) s += f[j] * weights_[j * kAttributeFactors + k];
    out[k] = s;
  }
  return out;
}

double AttributeProbe::consistency(const std::vector<Tensor<double>>& images,
                                   const std::vector<std::array<double, kAttributeFactors>>& truth) const {
  if (!fitted()) throw ContractError("attribute_consistency: probe has not been fitted");
  if (images.empty() || images.size() != truth.size())
    throw ContractError("attribute_consistency: need matching, non-empty image and attribute lists");
  double sse = 0, sst = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto p = predict(images[i]);
    for (std::size_t k = 0; k < kAttributeFactors; ++k) {
      sse += (p[k] - truth[i][k]) * (p[k] - truth[i][k]);
      sst += (truth[i][k] - mean_[k]) * (truth[i][k] - mean_[k]);
    }
  }
  if (sst <= 0) throw DegenerateInputError("attribute_consistency: attribute targets have no spread");
  return std::clamp(1.0 - sse / sst, 0.0, 1.0);
}

double attribute_consistency(const AttributeProbe& probe, const std::vector<Tensor<double>>& images,
                             const std::vector<std::array<double, kAttributeFactors>>& truth) {
  return probe.consistency(images, truth);
}

namespace {

void moments(const FeatureSet& s, std::size_t d, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
  const std::size_t n = s.size();
  Eigen::MatrixXd x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    if (s[i].size() != d) throw ShapeError("frechet_distance: ragged feature rows");
    for (std::size_t j = 0; j < d; ++j) x(i, j) = s[i][j];
  }
  mu = x.colwise().mean();
  const Eigen::MatrixXd c = x.rowwise() - mu.transpose();
  cov = (c.transpose() * c) / static_cast<double>(n - 1);
  cov.diagonal().array() += 1e-6;
}

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const FeatureSet& a, const FeatureSet& b) {
  if (a.size() < 2 || b.size() < 2) throw ContractError("frechet_distance: need at least 2 samples per set");
  const std::size_t d = a[0].size();
  if (d == 0 || b[0].size() != d) throw ShapeError("frechet_distance: feature dimensions differ");
  Eigen::VectorXd mu_a, mu_b;
  Eigen::MatrixXd cov_a, cov_b;
  moments(a, d, mu_a, cov_a);
  moments(b, d, mu_b, cov_b);
  const Eigen::MatrixXd ra = sqrt_psd(cov_a);
  Eigen::MatrixXd inner = ra * cov_b * ra;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner, Eigen::EigenvaluesOnly);
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double v = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt;
  return std::max(v, 0.0);
}

template <typename T>
double frechet_distance(const std::vector<Tensor<T>>& a, const std::vector<Tensor<T>>& b, const Embedder<T>& embedder) {
  auto feats = [&](const std::vector<Tensor<T>>& set) {
    FeatureSet out;
    out.reserve(set.size());
    for (const auto& img : set) {
      const Tensor<T> e = embedder.embed(img);
      out.emplace_back(e.data().begin(), e.data().end());
    }
    return out;
  };
  return frechet_distance(feats(a), feats(b));
}

template double identity_similarity(const std::vector<std::pair<Tensor<float>, Tensor<float>>>&, const Embedder<float>&);
template double identity_similarity(const std::vector<std::pair<Tensor<double>, Tensor<double>>>&,
                                    const Embedder<double>&);
template double frechet_distance(const std::vector<Tensor<float>>&, const std::vector<Tensor<float>>&,
                                 const Embedder<float>&);
template double frechet_distance(const std::vector<Tensor<double>>&, const std::vector<Tensor<double>>&,
                                 const Embedder<double>&);

}  // namespace mswap
