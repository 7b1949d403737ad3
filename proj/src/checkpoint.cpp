#include "mswap/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace mswap {

namespace {

template <typename U>
void put_le(std::vector<unsigned char>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

template <typename U>
U get_le(const unsigned char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

std::size_t elem_size(DType d) {
  switch (d) {
    case DType::F32: return 4;
    case DType::F64: return 8;
    case DType::U64: return 8;
    case DType::Bytes: return 1;
  }
  throw FormatError("checkpoint: unknown dtype");
}

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& b) : b_(b) {}
  const unsigned char* take(std::size_t n) {
    if (n > b_.size() - pos_) throw FormatError("checkpoint: truncated file");
    const unsigned char* p = b_.data() + pos_;
    pos_ += n;
    return p;
  }
  template <typename U>
  U le() {
    return get_le<U>(take(sizeof(U)));
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  const std::vector<unsigned char>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

void Checkpoint::put(CheckpointRecord r) {
  if (contains(r.name)) throw ContractError("checkpoint: duplicate record " + r.name);
  records_.push_back(std::move(r));
}

void Checkpoint::put_tensor(const std::string& name, const Tensor<float>& t) {
  CheckpointRecord r{name, DType::F32, t.shape(), {}};
  r.data.reserve(4 * t.numel());
  for (float v : t.data()) put_le(r.data, std::bit_cast<std::uint32_t>(v));
  put(std::move(r));
}

void Checkpoint::put_tensor(const std::string& name, const Tensor<double>& t) {
  CheckpointRecord r{name, DType::F64, t.shape(), {}};
  r.data.reserve(8 * t.numel());
  for (double v : t.data()) put_le(r.data, std::bit_cast<std::uint64_t>(v));
  put(std::move(r));
}

void Checkpoint::put_u64(const std::string& name, const std::vector<std::uint64_t>& v) {
  CheckpointRecord r{name, DType::U64, Shape{v.size()}, {}};
  for (auto x : v) put_le(r.data, x);
  put(std::move(r));
}

void Checkpoint::put_text(const std::string& name, const std::string& text) {
  put(CheckpointRecord{name, DType::Bytes, Shape{text.size()}, {text.begin(), text.end()}});
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& r : records_)
    if (r.name == name) return true;
  return false;
}

const CheckpointRecord& Checkpoint::get(const std::string& name) const {
  for (const auto& r : records_)
    if (r.name == name) return r;
  throw FormatError("checkpoint: missing record " + name);
}

namespace {

const CheckpointRecord& typed(const Checkpoint& c, const std::string& name, DType d) {
  const auto& r = c.get(name);
  if (r.dtype != d) throw FormatError("checkpoint: record " + name + " has the wrong dtype");
  return r;
}

}  // namespace

Tensor<float> Checkpoint::tensor_f32(const std::string& name) const {
  const auto& r = typed(*this, name, DType::F32);
  Tensor<float> t(r.shape);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = std::bit_cast<float>(get_le<std::uint32_t>(&r.data[4 * i]));
  return t;
}

Tensor<double> Checkpoint::tensor_f64(const std::string& name) const {
  const auto& r = typed(*this, name, DType::F64);
  Tensor<double> t(r.shape);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = std::bit_cast<double>(get_le<std::uint64_t>(&r.data[8 * i]));
  return t;
}

std::vector<std::uint64_t> Checkpoint::u64(const std::string& name) const {
  const auto& r = typed(*this, name, DType::U64);
  std::vector<std::uint64_t> v(r.data.size() / 8);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = get_le<std::uint64_t>(&r.data[8 * i]);
  return v;
}

std::uint64_t Checkpoint::u64_scalar(const std::string& name) const {
  const auto v = u64(name);
  if (v.size() != 1) throw FormatError("checkpoint: record " + name + " is not a single integer");
  return v[0];
}

std::string Checkpoint::text(const std::string& name) const {
  const auto& r = typed(*this, name, DType::Bytes);
  return {r.data.begin(), r.data.end()};
}

void Checkpoint::put_params(const std::string& prefix, const ParameterStore<float>& store) {
  for (const auto& p : store) put_tensor(prefix + p.name, p.value);
}

void Checkpoint::get_params(const std::string& prefix, ParameterStore<float>& store) const {
  for (auto& p : store) {
    Tensor<float> t = tensor_f32(prefix + p.name);
    if (t.shape() != p.value.shape())
      throw ShapeError("checkpoint: " + prefix + p.name + " is " + shape_str(t.shape()) + ", model expects " +
                       shape_str(p.value.shape()));
    p.value = std::move(t);
  }
}

std::vector<unsigned char> Checkpoint::encode() const {
  std::vector<unsigned char> out{'M', 'S', 'W', 'P'};
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint64_t>(out, records_.size());
  for (const auto& r : records_) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    out.push_back(static_cast<unsigned char>(r.dtype));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.shape.size()));
    for (auto d : r.shape) put_le<std::uint64_t>(out, d);
    put_le<std::uint64_t>(out, r.data.size());
    out.insert(out.end(), r.data.begin(), r.data.end());
  }
  return out;
}

Checkpoint Checkpoint::decode(const std::vector<unsigned char>& bytes) {
  Reader in(bytes);
  if (std::memcmp(in.take(4), "MSWP", 4) != 0) throw FormatError("checkpoint: bad magic");
  const auto version = in.le<std::uint32_t>();
  if (version != kVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  const auto count = in.le<std::uint64_t>();
  Checkpoint c;
  for (std::uint64_t i = 0; i < count; ++i) {
    CheckpointRecord r;
    const auto name_len = in.le<std::uint32_t>();
    const unsigned char* name = in.take(name_len);
    r.name.assign(name, name + name_len);
    const auto dtype = *in.take(1);
    if (dtype > static_cast<unsigned char>(DType::Bytes)) throw FormatError("checkpoint: unknown dtype in " + r.name);
    r.dtype = static_cast<DType>(dtype);
    const auto rank = in.le<std::uint32_t>();
    if (rank > 8) throw FormatError("checkpoint: implausible rank in " + r.name);
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      r.shape.push_back(in.le<std::uint64_t>());
      n *= r.shape.back();
    }
    const auto len = in.le<std::uint64_t>();
    if (len != n * elem_size(r.dtype)) throw FormatError("checkpoint: size mismatch in " + r.name);
    const unsigned char* data = in.take(len);
    r.data.assign(data, data + len);
    c.put(std::move(r));
  }
  if (!in.done()) throw FormatError("checkpoint: trailing bytes");
  return c;
}

void Checkpoint::save(const std::string& path) const {
  const auto bytes = encode();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError("failed writing " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path);
  return decode({std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()});
}

}  // namespace mswap
