#include "core/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>

#include "core/common.hpp"

namespace mcf::io {

namespace {

// All supported targets are little-endian; fail loudly elsewhere.
static_assert(std::endian::native == std::endian::little, "big-endian hosts unsupported");

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  return in;
}

}  // namespace

void write_f32(const fs::path& path, const std::vector<double>& values) {
  std::vector<float> buf(values.size());
  for (size_t i = 0; i < values.size(); ++i) buf[i] = static_cast<float>(values[i]);
  auto out = open_out(path);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!out) throw IoError("short write: " + path.string());
}

void write_f32_interleaved(const fs::path& path, const std::vector<const std::vector<double>*>& channels) {
  if (channels.empty()) throw InvalidArgument("write_f32_interleaved: no channels");
  const size_t n = channels[0]->size();
  for (const auto* c : channels)
    if (c->size() != n) throw InvalidArgument("write_f32_interleaved: channel length mismatch");
  std::vector<float> buf(n * channels.size());
  for (size_t i = 0; i < n; ++i)
    for (size_t c = 0; c < channels.size(); ++c) buf[i * channels.size() + c] = static_cast<float>((*channels[c])[i]);
  auto out = open_out(path);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!out) throw IoError("short write: " + path.string());
}

std::vector<double> read_f32(const fs::path& path) {
  auto in = open_in(path);
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<size_t>(in.tellg());
  in.seekg(0);
  if (bytes % sizeof(float) != 0) throw IoError("f32 file size not a multiple of 4: " + path.string());
  std::vector<float> buf(bytes / sizeof(float));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw IoError("short read: " + path.string());
  return {buf.begin(), buf.end()};
}

std::vector<std::vector<double>> read_f32_interleaved(const fs::path& path, int stride) {
  if (stride <= 0) throw InvalidArgument("read_f32_interleaved: stride must be positive");
  auto flat = read_f32(path);
  if (flat.size() % static_cast<size_t>(stride) != 0)
    throw IoError("interleaved f32 length not divisible by stride: " + path.string());
  const size_t n = flat.size() / static_cast<size_t>(stride);
  std::vector<std::vector<double>> channels(static_cast<size_t>(stride), std::vector<double>(n));
  for (size_t i = 0; i < n; ++i)
    for (int c = 0; c < stride; ++c) channels[static_cast<size_t>(c)][i] = flat[i * static_cast<size_t>(stride) + static_cast<size_t>(c)];
  return channels;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("short write: " + path.string());
}

std::string read_text(const fs::path& path) {
  auto in = open_in(path);
  in.seekg(0, std::ios::end);
  std::string text(static_cast<size_t>(in.tellg()), '\0');
  in.seekg(0);
  in.read(text.data(), static_cast<std::streamsize>(text.size()));
  if (!in) throw IoError("short read: " + path.string());
  return text;
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw Error("format_double failed");
  return std::string(buf, end);
}

AtomicDir::AtomicDir(const fs::path& target) : target_(target) {
  if (fs::exists(target_)) throw IoError("output already exists: " + target_.string());
  staging_ = target_;
  staging_ += ".partial";
  std::error_code ec;
  fs::remove_all(staging_, ec);  // stale partial from a crashed run
  if (!fs::create_directories(staging_))
    throw IoError("cannot create staging directory: " + staging_.string());
}

AtomicDir::~AtomicDir() {
  if (!committed_) {
    std::error_code ec;
    fs::remove_all(staging_, ec);
  }
}

void AtomicDir::commit() {
  fs::rename(staging_, target_);
  committed_ = true;
}

}  // namespace mcf::io
