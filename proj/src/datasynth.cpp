#include "mswap/datasynth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "mswap/rng.hpp"

namespace mswap {

void FaceSpec::validate() const {
  for (std::size_t i = 0; i < identity.size(); ++i)
    if (!(identity[i] >= 0.0 && identity[i] <= 1.0))
      throw ContractError("FaceSpec: identity factor " + std::to_string(i) + " = " + std::to_string(identity[i]) +
                          " outside [0, 1]");
  for (std::size_t i = 0; i < attributes.size(); ++i)
    if (!(attributes[i] >= 0.0 && attributes[i] <= 1.0))
      throw ContractError("FaceSpec: attribute factor " + std::to_string(i) + " = " +
                          std::to_string(attributes[i]) + " outside [0, 1]");
}

FaceGeometry geometry(const FaceSpec& spec) {
  spec.validate();
  const auto& id = spec.identity;
  const auto& at = spec.attributes;
  FaceGeometry g;
  IdentityGeometry& f = g.identity;
  f.face.cx = 0.0;
  f.face.cy = 0.08;
  f.face.ry = 0.78;
  f.face.rx = f.face.ry * (0.62 + 0.3 * id[kAspect]);
  f.hair_line = f.face.cy - 0.5 * f.face.ry;
  const double eye_x = 0.14 + 0.16 * id[kEyeSpacing];
  const double eye_r = 0.045 + 0.055 * id[kEyeSize];
  f.eye_left = {-eye_x, f.face.cy - 0.12, eye_r, 0.75 * eye_r};
  f.eye_right = {eye_x, f.face.cy - 0.12, eye_r, 0.75 * eye_r};
  f.nose_top = f.face.cy - 0.05;
  f.nose_bottom = f.nose_top + 0.12 + 0.18 * id[kNoseLength];
  f.nose_half_width = 0.04;
  f.mouth_y = f.face.cy + 0.4;
  f.mouth_half_width = 0.1 + 0.17 * id[kMouthWidth];

  const double yaw = (2.0 * at[kYaw] - 1.0) * std::numbers::pi / 6.0;
  g.pose.outline_shift = 0.08 * std::sin(yaw);
  g.pose.feature_shift = 0.3 * std::sin(yaw);
  g.pose.mouth_curvature = -0.03 + 0.1 * at[kMouthOpen];
  g.pose.mouth_gap = 0.02 + 0.06 * at[kMouthOpen];
  return g;
}

namespace {

// Signed distance (negative inside) to an axis-aligned ellipse, first-order
// accurate near the boundary, which is all the coverage ramp needs.
double ellipse_distance(const Ellipse& e, double shift, double x, double y) {
  const double dx = x - (e.cx + shift), dy = y - e.cy;
  const double k = std::sqrt((dx * dx) / (e.rx * e.rx) + (dy * dy) / (e.ry * e.ry));
  if (k < 1e-12) return -std::min(e.rx, e.ry);
  const double gx = dx / (e.rx * e.rx * k), gy = dy / (e.ry * e.ry * k);
  return (k - 1.0) / std::sqrt(gx * gx + gy * gy);
}

// Linear ramp over one pixel width centered on the boundary.
double coverage(double d, double px) { return std::clamp(0.5 - d / px, 0.0, 1.0); }

using Rgb = std::array<double, 3>;

void paint(Rgb& c, const Rgb& layer, double a) {
  for (int i = 0; i < 3; ++i) c[i] = c[i] * (1.0 - a) + layer[i] * a;
}

}  // namespace

Tensor<double> albedo(const FaceSpec& spec, std::size_t size) {
  if (size < 16) throw ContractError("render: size must be >= 16, got " + std::to_string(size));
  const FaceGeometry g = geometry(spec);
  const IdentityGeometry& f = g.identity;
  const PoseGeometry& p = g.pose;
  const auto& id = spec.identity;
  const double bg = 0.15 + 0.7 * spec.attributes[kBackground];
  const Rgb background{bg, bg, bg};
  const Rgb skin{0.35 + 0.6 * id[kSkinR], 0.35 + 0.6 * id[kSkinG], 0.35 + 0.6 * id[kSkinB]};
  const Rgb hair{0.05 + 0.75 * id[kHairR], 0.05 + 0.75 * id[kHairG], 0.05 + 0.75 * id[kHairB]};
  const Rgb nose{0.75 * skin[0], 0.75 * skin[1], 0.75 * skin[2]};
  const Rgb eye{0.08, 0.08, 0.12};
  const Rgb lips{0.6, 0.15, 0.2};
  const Ellipse hair_shape{f.face.cx, f.face.cy, f.face.rx * 1.1, f.face.ry * 1.08};
  const double px = 2.0 / static_cast<double>(size);
  const double mx = p.feature_shift;
  const double thick = 0.03 + p.mouth_gap;

  Tensor<double> out(Shape{3, size, size});
  const std::size_t plane = size * size;
  CounterRng noise(derive_seed(spec.seed, 0x7E87));
  for (std::size_t r = 0; r < size; ++r) {
    const double y = (static_cast<double>(r) + 0.5) * px - 1.0;
    for (std::size_t col = 0; col < size; ++col) {
      const double x = (static_cast<double>(col) + 0.5) * px - 1.0;
      Rgb c = background;
      paint(c, skin, coverage(ellipse_distance(f.face, p.outline_shift, x, y), px));
      const double hair_d = std::max(ellipse_distance(hair_shape, p.outline_shift, x, y), y - f.hair_line);
      paint(c, hair, coverage(hair_d, px));
      paint(c, eye, coverage(ellipse_distance(f.eye_left, mx, x, y), px));
      paint(c, eye, coverage(ellipse_distance(f.eye_right, mx, x, y), px));
      const double nose_d =
          std::max({std::abs(x - mx) - f.nose_half_width, f.nose_top - y, y - f.nose_bottom});
      paint(c, nose, coverage(nose_d, px));
      const double u = (x - mx) / f.mouth_half_width;
      const double curve = f.mouth_y - p.mouth_curvature * (1.0 - u * u);
      const double mouth_d = std::max(std::abs(x - mx) - f.mouth_half_width, std::abs(y - curve) - 0.5 * thick);
      paint(c, lips, coverage(mouth_d, px));
      for (std::size_t ch = 0; ch < 3; ++ch)
        out[ch * plane + r * size + col] = std::clamp(c[ch] + 0.03 * (2.0 * noise.uniform() - 1.0), 0.0, 1.0);
    }
  }
  return out;
}

Tensor<double> lighting(const FaceSpec& spec, std::size_t size) {
  if (size < 16) throw ContractError("render: size must be >= 16, got " + std::to_string(size));
  spec.validate();
  const double k = spec.attributes[kLightStrength];
  const double d = 2.0 * spec.attributes[kLightDirection] - 1.0;
  const double px = 2.0 / static_cast<double>(size);
  Tensor<double> out(Shape{size, size});
  for (std::size_t r = 0; r < size; ++r)
    for (std::size_t col = 0; col < size; ++col) {
      const double x = (static_cast<double>(col) + 0.5) * px - 1.0;
      out[r * size + col] = 0.4 + 0.6 * k * (0.75 + 0.25 * d * x);
    }
  return out;
}

Tensor<double> render(const FaceSpec& spec, std::size_t size) {
  Tensor<double> a = albedo(spec, size);
  const Tensor<double> l = lighting(spec, size);
  const std::size_t plane = size * size;
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t i = 0; i < plane; ++i) a[ch * plane + i] = 2.0 * a[ch * plane + i] * l[i] - 1.0;
  return a;
}

Dataset sample_dataset(std::size_t n_ids, std::size_t n_per_id, std::uint64_t seed) {
  if (n_ids < 2) throw ContractError("sample_dataset: need at least 2 identities");
  if (n_per_id < 1) throw ContractError("sample_dataset: need at least 1 image per identity");
  Dataset ds;
  ds.n_per_id = n_per_id;
  CounterRng id_rng(derive_seed(seed, 1));
  std::vector<std::array<double, kIdentityFactors>> ids;
  ids.reserve(n_ids);
  for (std::size_t i = 0; i < n_ids; ++i) {
    for (int attempt = 0;; ++attempt) {
      if (attempt == 10000)
        throw ContractError("sample_dataset: cannot place identity " + std::to_string(i) + " at minimum distance");
      std::array<double, kIdentityFactors> v;
      for (auto& x : v) x = id_rng.uniform();
      const bool ok = std::all_of(ids.begin(), ids.end(), [&](const auto& o) {
        double d2 = 0;
        for (std::size_t k = 0; k < kIdentityFactors; ++k) d2 += (v[k] - o[k]) * (v[k] - o[k]);
        return d2 >= kMinIdentityDistance * kMinIdentityDistance;
      });
      if (ok) {
        ids.push_back(v);
        break;
      }
    }
  }
  const std::uint64_t attr_key = derive_seed(seed, 2), noise_key = derive_seed(seed, 3);
  for (std::size_t i = 0; i < n_ids; ++i)
    for (std::size_t k = 0; k < n_per_id; ++k) {
      const std::size_t index = i * n_per_id + k;
      LabeledSpec s;
      s.label = i;
      s.spec.identity = ids[i];
      CounterRng arng(derive_seed(attr_key, index));
      for (auto& a : s.spec.attributes) a = arng.uniform();
      s.spec.seed = derive_seed(noise_key, index);
      ds.samples.push_back(s);
    }
  const std::size_t held = (n_ids + 4) / 5;
  for (std::size_t i = 0; i < n_ids; ++i) (i < n_ids - held ? ds.train_ids : ds.heldout_ids).push_back(i);
  return ds;
}

std::vector<unsigned char> encode_ppm(const Tensor<double>& image, const std::string& comment) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw ShapeError("write_ppm: expected [3,h,w], got " + shape_str(image.shape()));
  const std::size_t h = image.dim(1), w = image.dim(2), plane = h * w;
  std::string header = "P6\n";
  std::size_t start = 0;
  while (start < comment.size()) {
    const auto nl = comment.find('\n', start);
    header += "# " + comment.substr(start, nl == std::string::npos ? std::string::npos : nl - start) + "\n";
    start = nl == std::string::npos ? comment.size() : nl + 1;
  }
  header += std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(header.size() + 3 * plane);
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const double x = std::clamp(image[ch * plane + i], -1.0, 1.0);
      out.push_back(static_cast<unsigned char>(std::lround(127.5 * (x + 1.0))));
    }
  return out;
}

void write_ppm(const std::string& path, const Tensor<double>& image, const std::string& comment) {
  const auto bytes = encode_ppm(image, comment);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError("failed writing " + path);
}

void write_ppm(const std::string& path, const Tensor<float>& image) { write_ppm(path, image.cast<double>()); }

Tensor<double> decode_ppm(const std::vector<unsigned char>& bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&](const char* what) {
    skip_space();
    std::size_t v = 0, digits = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos]) && digits < 9) v = v * 10 + (bytes[pos++] - '0'), ++digits;
    if (digits == 0) throw FormatError(std::string("PPM: missing ") + what);
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw FormatError("PPM: not a binary P6 file");
  pos = 2;
  const std::size_t w = number("width"), h = number("height"), maxval = number("maxval");
  if (w == 0 || h == 0) throw FormatError("PPM: zero dimension");
  if (maxval != 255) throw FormatError("PPM: only maxval 255 is supported, got " + std::to_string(maxval));
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("PPM: malformed header");
  ++pos;
  const std::size_t plane = w * h;
  if (bytes.size() - pos != 3 * plane)
    throw FormatError("PPM: expected " + std::to_string(3 * plane) + " data bytes, found " +
                      std::to_string(bytes.size() - pos));
  Tensor<double> img(Shape{3, h, w});
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t ch = 0; ch < 3; ++ch) img[ch * plane + i] = bytes[pos + 3 * i + ch] / 127.5 - 1.0;
  return img;
}

Tensor<double> read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_ppm(bytes);
}

}  // namespace mswap
