#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "popbias/error.hpp"

namespace popbias {

// Model container layout (all integers little-endian as stored by the host):
//   magic "PBMODEL\0" | u32 version | u32 tag_len | tag
//   | u32 blob_count | { u32 name_len | name | u64 size | bytes }*
// Doubles are stored as raw IEEE-754 bytes so a save/load cycle is bit-exact.

inline constexpr char kModelMagic[8] = {'P', 'B', 'M', 'O', 'D', 'E', 'L', '\0'};
inline constexpr std::uint32_t kModelVersion = 1;

class BlobWriter {
 public:
  template <typename T>
    requires std::is_trivially_copyable_v<T>
  BlobWriter& put(const T& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
    return *this;
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  BlobWriter& put_array(const T* data, std::size_t n) {
    put<std::uint64_t>(n);
    const auto* p = reinterpret_cast<const char*>(data);
    bytes_.insert(bytes_.end(), p, p + n * sizeof(T));
    return *this;
  }

  template <typename T>
  BlobWriter& put_vector(const std::vector<T>& v) {
    return put_array(v.data(), v.size());
  }

  std::string take() { return std::move(bytes_); }

 private:
  std::string bytes_;
};

class BlobReader {
 public:
  explicit BlobReader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  template <typename T>
  std::vector<T> get_vector() {
    const auto n = get<std::uint64_t>();
    if (n > (bytes_.size() - pos_) / sizeof(T)) throw ValidationError("model blob truncated");
    std::vector<T> v(n);
    std::memcpy(v.data(), bytes_.data() + pos_, n * sizeof(T));
    pos_ += n * sizeof(T);
    return v;
  }

  bool done() const noexcept { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ValidationError("model blob truncated");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

struct ModelContainer {
  struct Blob {
    std::string name;
    std::string bytes;
  };

  std::string tag;
  std::vector<Blob> blobs;

  void add(std::string name, std::string bytes) { blobs.push_back({std::move(name), std::move(bytes)}); }

  const std::string& blob(std::string_view name) const {
    for (const auto& b : blobs)
      if (b.name == name) return b.bytes;
    throw ValidationError("model container has no blob '" + std::string(name) + "'");
  }

  void write(std::ostream& out) const {
    out.write(kModelMagic, sizeof(kModelMagic));
    write_u32(out, kModelVersion);
    write_str(out, tag);
    write_u32(out, static_cast<std::uint32_t>(blobs.size()));
    for (const auto& b : blobs) {
      write_str(out, b.name);
      const std::uint64_t n = b.bytes.size();
      out.write(reinterpret_cast<const char*>(&n), sizeof(n));
      out.write(b.bytes.data(), static_cast<std::streamsize>(n));
    }
    if (!out) throw ValidationError("failed to write model container");
  }

  static ModelContainer read(std::istream& in) {
    char magic[sizeof(kModelMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kModelMagic, sizeof(magic)) != 0)
      throw ValidationError("not a model container");
    const auto version = read_u32(in);
    if (version != kModelVersion)
      throw ValidationError("unsupported model container version " + std::to_string(version));
    ModelContainer c;
    c.tag = read_str(in);
    const auto count = read_u32(in);
    for (std::uint32_t i = 0; i < count; ++i) {
      Blob b;
      b.name = read_str(in);
      std::uint64_t n = 0;
      in.read(reinterpret_cast<char*>(&n), sizeof(n));
      if (!in) throw ValidationError("model container truncated");
      b.bytes.resize(n);
      in.read(b.bytes.data(), static_cast<std::streamsize>(n));
      if (!in) throw ValidationError("model container truncated");
      c.blobs.push_back(std::move(b));
    }
    return c;
  }

 private:
  static void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
  static void write_str(std::ostream& out, const std::string& s) {
    write_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  static std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (!in) throw ValidationError("model container truncated");
    return v;
  }
  static std::string read_str(std::istream& in) {
    const auto n = read_u32(in);
    if (n > (1u << 20)) throw ValidationError("model container string too long");
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw ValidationError("model container truncated");
    return s;
  }
};

}  // namespace popbias
