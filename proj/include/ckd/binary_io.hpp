#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ckd::io {

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes) noexcept;
std::uint64_t fnv1a64(std::string_view text) noexcept;

using Magic = std::array<char, 8>;

/// Little-endian record writer. Layout: magic, u32 version, body, then a
/// trailing u64 FNV-1a checksum of everything before it.
class Writer {
 public:
  Writer(const Magic& magic, std::uint32_t version);

  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void f64s(std::span<const double> values);
  void string(std::string_view s);

  /// Appends the checksum and writes atomically (temp file + rename).
  void save(const std::filesystem::path& path);

 private:
  std::vector<unsigned char> buffer_;
};

class Reader {
 public:
  /// Loads `path`, validates magic, version and checksum. `what` names the
  /// file kind in diagnostics ("checkpoint", "dataset").
  Reader(const std::filesystem::path& path, const Magic& magic, std::uint32_t version,
         std::string_view what);

  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::vector<double> f64s(std::size_t count);
  std::string string();
  /// Throws unless the whole body was consumed.
  void expect_end() const;

 private:
  void need(std::size_t n) const;

  std::vector<unsigned char> bytes_;
  std::size_t pos_ = 0;
  std::size_t end_ = 0;
  std::string what_;
};

}  // namespace ckd::io
