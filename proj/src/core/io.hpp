#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mcf::io {

namespace fs = std::filesystem;

// Raw little-endian float32 series, the on-disk format for all channel data.
void write_f32(const fs::path& path, const std::vector<double>& values);
void write_f32_interleaved(const fs::path& path, const std::vector<const std::vector<double>*>& channels);
std::vector<double> read_f32(const fs::path& path);
// Deinterleaves `stride` channels from a flat f32 file.
std::vector<std::vector<double>> read_f32_interleaved(const fs::path& path, int stride);

void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

// Shortest round-trip decimal form; stable across reruns.
std::string format_double(double v);

// Guard that stages output in "<dir>.partial" and renames on commit, so a
// failed command never leaves a half-written artifact directory behind.
class AtomicDir {
 public:
  explicit AtomicDir(const fs::path& target);
  ~AtomicDir();
  AtomicDir(const AtomicDir&) = delete;
  AtomicDir& operator=(const AtomicDir&) = delete;

  const fs::path& path() const { return staging_; }
  void commit();

 private:
  fs::path target_;
  fs::path staging_;
  bool committed_ = false;
};

}  // namespace mcf::io
