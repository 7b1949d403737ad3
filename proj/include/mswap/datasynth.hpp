#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mswap/tensor.hpp"

namespace mswap {

inline constexpr std::size_t kIdentityFactors = 11;
inline constexpr std::size_t kAttributeFactors = 5;

/// Indices into FaceSpec::identity.
enum IdentityFactor : std::size_t {
  kAspect = 0,
  kEyeSpacing,
  kEyeSize,
  kNoseLength,
  kMouthWidth,
  kSkinR,
  kSkinG,
  kSkinB,
  kHairR,
  kHairG,
  kHairB,
};

/// Indices into FaceSpec::attributes.
enum AttributeFactor : std::size_t {
  kYaw = 0,         // 0..1 maps to -30..30 degrees
  kMouthOpen,       // smile curvature and lip gap
  kLightDirection,  // 0 = lit from the left, 1 = from the right
  kLightStrength,
  kBackground,      // background gray level
};

/// Every factor lives in [0, 1].
struct FaceSpec {
  std::array<double, kIdentityFactors> identity{};
  std::array<double, kAttributeFactors> attributes{};
  std::uint64_t seed = 0;

  /// Throws ContractError naming the first factor outside [0, 1].
  void validate() const;
  bool operator==(const FaceSpec&) const = default;
};

struct Ellipse {
  double cx = 0, cy = 0, rx = 0, ry = 0;
  bool operator==(const Ellipse&) const = default;
};

/// Shapes derived from identity factors alone, in a head-centered frame
/// (x right, y down, face roughly in [-1, 1]).
struct IdentityGeometry {
  Ellipse face;
  double hair_line = 0;  // hair covers the face ellipse above this y
  Ellipse eye_left, eye_right;
  double nose_top = 0, nose_bottom = 0, nose_half_width = 0;
  double mouth_y = 0, mouth_half_width = 0;
  bool operator==(const IdentityGeometry&) const = default;
};

/// How the attribute factors place that geometry in the image.
struct PoseGeometry {
  double outline_shift = 0;  // horizontal offset of face outline and hair
  double feature_shift = 0;  // larger offset of eyes, nose and mouth (yaw)
  double mouth_curvature = 0;
  double mouth_gap = 0;
};

struct FaceGeometry {
  IdentityGeometry identity;
  PoseGeometry pose;
};

FaceGeometry geometry(const FaceSpec& spec);

/// Per-pixel reflectance in [0, 1], planar [3, size, size], before lighting.
/// Includes the per-image texture noise keyed by spec.seed.
Tensor<double> albedo(const FaceSpec& spec, std::size_t size);

/// Per-pixel illumination gain, [size, size]:
/// 0.4 + 0.6 k (0.75 + 0.25 d x), k = strength, d = 2 direction - 1, x in [-1, 1].
/// Strictly increasing in k at every pixel, and at most 1.
Tensor<double> lighting(const FaceSpec& spec, std::size_t size);

/// 2 * albedo * lighting - 1, in [-1, 1]. size >= 16.
Tensor<double> render(const FaceSpec& spec, std::size_t size);

struct LabeledSpec {
  FaceSpec spec;
  std::size_t label = 0;  // identity index
};

struct Dataset {
  std::vector<LabeledSpec> samples;  // grouped by identity, n_per_id each
  std::vector<std::size_t> train_ids;
  std::vector<std::size_t> heldout_ids;
  std::size_t n_per_id = 0;

  const LabeledSpec& sample(std::size_t id, std::size_t k) const { return samples[id * n_per_id + k]; }
};

inline constexpr double kMinIdentityDistance = 0.15;

/// Identity vectors drawn once per id (rejection sampling keeps every pair at
/// least kMinIdentityDistance apart in L2), attributes and noise seeds per
/// image. The last ceil(20%) of ids are held out. Deterministic in seed.
Dataset sample_dataset(std::size_t n_ids, std::size_t n_per_id, std::uint64_t seed);

/// Thrown for unreadable or malformed image files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary P6, maxval 255, byte = round(127.5 (x + 1)) after clamping to [-1, 1].
void write_ppm(const std::string& path, const Tensor<double>& image, const std::string& comment = "");
void write_ppm(const std::string& path, const Tensor<float>& image);
/// Each line of `comment` becomes a `#` header line.
std::vector<unsigned char> encode_ppm(const Tensor<double>& image, const std::string& comment = "");

/// Inverse mapping byte / 127.5 - 1. Returns [3, h, w].
Tensor<double> read_ppm(const std::string& path);
Tensor<double> decode_ppm(const std::vector<unsigned char>& bytes);

}  // namespace mswap
