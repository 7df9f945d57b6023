#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "navdiff/tensor.hpp"

namespace navdiff {

// Versioned binary parameter container.
//
// Layout (all integers little-endian):
//   bytes 0..7   magic "NAVDIFF1"
//   u32          metadata pair count M
//   M x          { u32 key_len, key bytes, u32 val_len, val bytes }
//   u32          manifest entry count N
//   N x          { u32 name_len, name bytes,
//                  u8  dtype (0 = float32, 1 = float64),
//                  u32 ndim, ndim x u64 dims,
//                  u64 byte offset into the data section }
//   u64          data section length in bytes
//   raw little-endian scalar buffers
//
// The manifest is written in insertion order; offsets are relative to the
// start of the data section so readers in other languages can seek directly.
enum class DType : std::uint8_t { kF32 = 0, kF64 = 1 };

struct CheckpointEntry {
  std::string name;
  DType dtype = DType::kF32;
  Shape shape;
  std::uint64_t offset = 0;  // into data section
};

class CheckpointWriter {
 public:
  void set_meta(const std::string& key, const std::string& value);

  void add_f32(const std::string& name, const Shape& shape,
               const std::vector<float>& values);
  void add_f64(const std::string& name, const Shape& shape,
               const std::vector<double>& values);

  template <typename T>
  void add(const std::string& name, const Tensor<T>& t) {
    if constexpr (sizeof(T) == 4) {
      add_f32(name, t.shape, *t.data);
    } else {
      add_f64(name, t.shape, *t.data);
    }
  }

  void save(const std::string& path) const;

 private:
  std::map<std::string, std::string> meta_;
  std::vector<CheckpointEntry> entries_;
  std::vector<unsigned char> blob_;
};

class CheckpointReader {
 public:
  explicit CheckpointReader(const std::string& path);

  const std::map<std::string, std::string>& meta() const { return meta_; }
  const std::vector<CheckpointEntry>& entries() const { return entries_; }
  bool has(const std::string& name) const;

  std::vector<float> read_f32(const std::string& name) const;
  std::vector<double> read_f64(const std::string& name) const;
  const CheckpointEntry& entry(const std::string& name) const;

  // Reads an entry into the scalar type T regardless of stored dtype.
  template <typename T>
  Tensor<T> read_tensor(const std::string& name) const {
    const CheckpointEntry& e = entry(name);
    std::vector<T> out;
    if (e.dtype == DType::kF32) {
      auto v = read_f32(name);
      out.assign(v.begin(), v.end());
    } else {
      auto v = read_f64(name);
      out.assign(v.begin(), v.end());
    }
    return Tensor<T>::from(e.shape, std::move(out));
  }

 private:
  std::map<std::string, std::string> meta_;
  std::vector<CheckpointEntry> entries_;
  std::vector<unsigned char> blob_;
};

}  // namespace navdiff
