#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "core/tensor.hpp"

namespace mcf::ad {

// Checkpoint = ckpt.json (tensor table + free-form meta) + ckpt.bin holding
// the concatenated little-endian values in table order. dtype is "f64" by
// default; "f32" halves the file at reduced precision.
void save_checkpoint(const std::filesystem::path& json_path, const std::filesystem::path& bin_path,
                     const std::vector<Parameter>& params, const nlohmann::json& meta, bool use_f32 = false);

class CheckpointReader {
 public:
  CheckpointReader(const std::filesystem::path& json_path, const std::filesystem::path& bin_path);

  const nlohmann::json& meta() const { return meta_; }

  // Copies stored values into the given parameters, matched by name.
  // Every parameter must be present with an identical shape.
  void fill(std::vector<Parameter>& params) const;

 private:
  struct Entry {
    std::string name;
    Shape shape;
    std::string dtype;
    uint64_t byte_offset;
    uint64_t byte_length;
  };
  std::vector<Entry> entries_;
  nlohmann::json meta_;
  std::vector<char> blob_;
};

}  // namespace mcf::ad
