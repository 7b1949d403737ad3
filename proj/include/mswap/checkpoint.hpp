#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mswap/datasynth.hpp"
#include "mswap/parameter.hpp"

namespace mswap {

enum class DType : std::uint8_t { F32 = 0, F64 = 1, U64 = 2, Bytes = 3 };

struct CheckpointRecord {
  std::string name;
  DType dtype = DType::Bytes;
  Shape shape;
  std::vector<unsigned char> data;  // little-endian element bytes
};

/// Named tensor table. On disk: "MSWP", u32 version, u64 record count, then
/// per record u32 name length, name, u8 dtype, u32 rank, u64 dims, u64 byte
/// length, bytes. All integers little-endian.
class Checkpoint {
 public:
  static constexpr std::uint32_t kVersion = 1;

  void put(CheckpointRecord r);
  void put_tensor(const std::string& name, const Tensor<float>& t);
  void put_tensor(const std::string& name, const Tensor<double>& t);
  void put_u64(const std::string& name, const std::vector<std::uint64_t>& v);
  void put_text(const std::string& name, const std::string& text);

  bool contains(const std::string& name) const;
  const CheckpointRecord& get(const std::string& name) const;
  Tensor<float> tensor_f32(const std::string& name) const;
  Tensor<double> tensor_f64(const std::string& name) const;
  std::vector<std::uint64_t> u64(const std::string& name) const;
  std::uint64_t u64_scalar(const std::string& name) const;
  std::string text(const std::string& name) const;

  /// Writes every parameter as `<prefix><name>`.
  void put_params(const std::string& prefix, const ParameterStore<float>& store);
  /// Loads every parameter of `store` from `<prefix><name>`; shapes must match.
  void get_params(const std::string& prefix, ParameterStore<float>& store) const;

  const std::vector<CheckpointRecord>& records() const noexcept { return records_; }

  std::vector<unsigned char> encode() const;
  static Checkpoint decode(const std::vector<unsigned char>& bytes);
  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

 private:
  std::vector<CheckpointRecord> records_;
};

}  // namespace mswap
