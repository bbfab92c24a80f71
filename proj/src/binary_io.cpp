#include "ckd/binary_io.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <iterator>

#include "ckd/errors.hpp"

namespace ckd::io {

namespace {

constexpr std::size_t kChecksumBytes = 8;

void put_le(std::vector<unsigned char>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint64_t get_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

std::uint64_t fnv1a64(std::span<const unsigned char> bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(std::string_view text) noexcept {
  return fnv1a64(std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

Writer::Writer(const Magic& magic, std::uint32_t version) {
  buffer_.insert(buffer_.end(), magic.begin(), magic.end());
  u32(version);
}

void Writer::u32(std::uint32_t v) { put_le(buffer_, v, 4); }
void Writer::u64(std::uint64_t v) { put_le(buffer_, v, 8); }
void Writer::f64(double v) { put_le(buffer_, std::bit_cast<std::uint64_t>(v), 8); }

void Writer::f64s(std::span<const double> values) {
  for (const double v : values) f64(v);
}

void Writer::string(std::string_view s) {
  u64(s.size());
  buffer_.insert(buffer_.end(), s.begin(), s.end());
}

void Writer::save(const std::filesystem::path& path) {
  std::vector<unsigned char> out = buffer_;
  put_le(out, fnv1a64(buffer_), 8);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
    if (!file) throw Error("cannot open " + tmp.string() + " for writing");
    file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!file) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Reader::Reader(const std::filesystem::path& path, const Magic& magic, std::uint32_t version,
               std::string_view what)
    : what_(what) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw FormatError("cannot open " + what_ + " file " + path.string());
  bytes_.assign(std::istreambuf_iterator<char>(file), std::istreambuf_iterator<char>());

  if (bytes_.size() < magic.size() || !std::equal(magic.begin(), magic.end(), bytes_.begin())) {
    throw FormatError(what_ + " " + path.string() + ": bad magic header");
  }
  if (bytes_.size() < magic.size() + 4 + kChecksumBytes) {
    throw FormatError(what_ + " " + path.string() + ": truncated");
  }
  end_ = bytes_.size() - kChecksumBytes;
  const std::uint64_t stored = get_le(bytes_.data() + end_, 8);
  if (stored != fnv1a64(std::span(bytes_.data(), end_))) {
    throw FormatError(what_ + " " + path.string() + ": checksum mismatch (truncated or corrupt)");
  }
  pos_ = magic.size();
  const std::uint32_t found = u32();
  if (found != version) {
    throw FormatError(what_ + " " + path.string() + ": unsupported format version " +
                      std::to_string(found) + " (expected " + std::to_string(version) + ")");
  }
}

void Reader::need(std::size_t n) const {
  if (n > end_ - pos_) throw FormatError(what_ + ": unexpected end of data");
}

std::uint32_t Reader::u32() {
  need(4);
  const auto v = static_cast<std::uint32_t>(get_le(bytes_.data() + pos_, 4));
  pos_ += 4;
  return v;
}

std::uint64_t Reader::u64() {
  need(8);
  const std::uint64_t v = get_le(bytes_.data() + pos_, 8);
  pos_ += 8;
  return v;
}

double Reader::f64() { return std::bit_cast<double>(u64()); }

std::vector<double> Reader::f64s(std::size_t count) {
  if (count > (end_ - pos_) / 8) throw FormatError(what_ + ": unexpected end of data");
  std::vector<double> out(count);
  for (double& v : out) v = f64();
  return out;
}

std::string Reader::string() {
  const std::uint64_t n = u64();
  need(n);
  std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
  pos_ += n;
  return s;
}

void Reader::expect_end() const {
  if (pos_ != end_) throw FormatError(what_ + ": trailing bytes after payload");
}

}  // namespace ckd::io
