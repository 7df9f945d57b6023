#include "navdiff/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "navdiff/error.hpp"
#include "navdiff/version.hpp"

namespace navdiff {

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xff);
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back((v >> (8 * i)) & 0xff);
}

void put_str(std::vector<unsigned char>& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

struct Cursor {
  const std::vector<unsigned char>& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) {
      throw FormatError("checkpoint: truncated file (need " +
                        std::to_string(n) + " bytes at offset " +
                        std::to_string(pos) + ")");
    }
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(buf[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(buf[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  std::uint8_t u8() {
    need(1);
    return buf[pos++];
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(buf.begin() + pos, buf.begin() + pos + n);
    pos += n;
    return s;
  }
};

template <typename T>
void append_scalars(std::vector<unsigned char>& blob,
                    const std::vector<T>& values) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  for (T v : values) {
    typename std::conditional<sizeof(T) == 4, std::uint32_t,
                              std::uint64_t>::type bits;
    std::memcpy(&bits, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T); ++i)
      blob.push_back((bits >> (8 * i)) & 0xff);
  }
}

template <typename T>
std::vector<T> extract_scalars(const std::vector<unsigned char>& blob,
                               std::uint64_t offset, std::size_t count) {
  std::vector<T> out(count);
  if (offset + count * sizeof(T) > blob.size()) {
    throw FormatError("checkpoint: entry data exceeds data section");
  }
  for (std::size_t i = 0; i < count; ++i) {
    typename std::conditional<sizeof(T) == 4, std::uint32_t,
                              std::uint64_t>::type bits = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b)
      bits |= decltype(bits)(blob[offset + i * sizeof(T) + b]) << (8 * b);
    std::memcpy(&out[i], &bits, sizeof(T));
  }
  return out;
}

}  // namespace

void CheckpointWriter::set_meta(const std::string& key,
                                const std::string& value) {
  meta_[key] = value;
}

void CheckpointWriter::add_f32(const std::string& name, const Shape& shape,
                               const std::vector<float>& values) {
  if (values.size() != shape_numel(shape)) {
    throw ShapeError("checkpoint: '" + name + "' has " +
                     std::to_string(values.size()) + " values for shape " +
                     shape_str(shape));
  }
  entries_.push_back({name, DType::kF32, shape, blob_.size()});
  append_scalars(blob_, values);
}

void CheckpointWriter::add_f64(const std::string& name, const Shape& shape,
                               const std::vector<double>& values) {
  if (values.size() != shape_numel(shape)) {
    throw ShapeError("checkpoint: '" + name + "' has " +
                     std::to_string(values.size()) + " values for shape " +
                     shape_str(shape));
  }
  entries_.push_back({name, DType::kF64, shape, blob_.size()});
  append_scalars(blob_, values);
}

void CheckpointWriter::save(const std::string& path) const {
  std::vector<unsigned char> out;
  const char* magic = kCheckpointMagic;
  out.insert(out.end(), magic, magic + 8);
  put_u32(out, static_cast<std::uint32_t>(meta_.size()));
  for (const auto& [k, v] : meta_) {
    put_str(out, k);
    put_str(out, v);
  }
  put_u32(out, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    put_str(out, e.name);
    out.push_back(static_cast<unsigned char>(e.dtype));
    put_u32(out, static_cast<std::uint32_t>(e.shape.size()));
    for (std::size_t d : e.shape) put_u64(out, d);
    put_u64(out, e.offset);
  }
  put_u64(out, blob_.size());
  out.insert(out.end(), blob_.begin(), blob_.end());

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("checkpoint: cannot open '" + path + "' for write");
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) throw FormatError("checkpoint: short write to '" + path + "'");
}

CheckpointReader::CheckpointReader(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("checkpoint: cannot open '" + path + "'");
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 8 || std::memcmp(buf.data(), kCheckpointMagic, 8) != 0) {
    throw FormatError("checkpoint: '" + path + "' lacks NAVDIFF1 magic");
  }
  Cursor c{buf, 8};
  const std::uint32_t m = c.u32();
  for (std::uint32_t i = 0; i < m; ++i) {
    std::string k = c.str();
    std::string v = c.str();
    meta_[k] = v;
  }
  const std::uint32_t n = c.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    CheckpointEntry e;
    e.name = c.str();
    const std::uint8_t dt = c.u8();
    if (dt > 1) {
      throw FormatError("checkpoint: entry '" + e.name +
                        "' has unknown dtype " + std::to_string(dt));
    }
    e.dtype = static_cast<DType>(dt);
    const std::uint32_t nd = c.u32();
    for (std::uint32_t d = 0; d < nd; ++d)
      e.shape.push_back(static_cast<std::size_t>(c.u64()));
    e.offset = c.u64();
    entries_.push_back(std::move(e));
  }
  const std::uint64_t data_len = c.u64();
  c.need(data_len);
  blob_.assign(buf.begin() + c.pos, buf.begin() + c.pos + data_len);
}

bool CheckpointReader::has(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

const CheckpointEntry& CheckpointReader::entry(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e;
  throw FormatError("checkpoint: no entry named '" + name + "'");
}

std::vector<float> CheckpointReader::read_f32(const std::string& name) const {
  const CheckpointEntry& e = entry(name);
  if (e.dtype != DType::kF32) {
    throw FormatError("checkpoint: '" + name + "' is not float32");
  }
  return extract_scalars<float>(blob_, e.offset, shape_numel(e.shape));
}

std::vector<double> CheckpointReader::read_f64(const std::string& name) const {
  const CheckpointEntry& e = entry(name);
  if (e.dtype != DType::kF64) {
    throw FormatError("checkpoint: '" + name + "' is not float64");
  }
  return extract_scalars<double>(blob_, e.offset, shape_numel(e.shape));
}

}  // namespace navdiff
