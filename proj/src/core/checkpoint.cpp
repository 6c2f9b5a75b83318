#include "core/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "core/io.hpp"

namespace mcf::ad {

using nlohmann::json;

void save_checkpoint(const std::filesystem::path& json_path, const std::filesystem::path& bin_path,
                     const std::vector<Parameter>& params, const json& meta, bool use_f32) {
  json table = json::array();
  std::vector<char> blob;
  for (const auto& p : params) {
    const auto& vals = p.tensor.values();
    const size_t elem = use_f32 ? sizeof(float) : sizeof(double);
    const uint64_t offset = blob.size();
    const uint64_t length = vals.size() * elem;
    blob.resize(blob.size() + length);
    if (use_f32) {
      std::vector<float> tmp(vals.begin(), vals.end());
      std::memcpy(blob.data() + offset, tmp.data(), length);
    } else {
      std::memcpy(blob.data() + offset, vals.data(), length);
    }
    table.push_back({{"name", p.name},
                     {"shape", p.tensor.shape()},
                     {"dtype", use_f32 ? "f32" : "f64"},
                     {"byte_offset", offset},
                     {"byte_length", length}});
  }
  json root = {{"format_version", 1}, {"meta", meta}, {"tensors", table}};
  io::write_text(json_path, root.dump(2) + "\n");
  std::ofstream out(bin_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + bin_path.string());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("short write: " + bin_path.string());
}

CheckpointReader::CheckpointReader(const std::filesystem::path& json_path, const std::filesystem::path& bin_path) {
  json root;
  try {
    root = json::parse(io::read_text(json_path));
  } catch (const json::exception& e) {
    throw ParseError("malformed checkpoint json " + json_path.string() + ": " + e.what());
  }
  if (!root.contains("tensors") || !root["tensors"].is_array())
    throw ParseError("checkpoint json missing tensor table: " + json_path.string());
  meta_ = root.value("meta", json::object());
  for (const auto& t : root["tensors"]) {
    Entry e;
    e.name = t.at("name").get<std::string>();
    e.shape = t.at("shape").get<Shape>();
    e.dtype = t.at("dtype").get<std::string>();
    e.byte_offset = t.at("byte_offset").get<uint64_t>();
    e.byte_length = t.at("byte_length").get<uint64_t>();
    if (e.dtype != "f32" && e.dtype != "f64") throw ParseError("unknown checkpoint dtype: " + e.dtype);
    entries_.push_back(std::move(e));
  }
  const std::string text = io::read_text(bin_path);
  blob_.assign(text.begin(), text.end());
  for (const auto& e : entries_)
    if (e.byte_offset + e.byte_length > blob_.size())
      throw ParseError("checkpoint blob too short for tensor " + e.name);
}

void CheckpointReader::fill(std::vector<Parameter>& params) const {
  for (auto& p : params) {
    const Entry* found = nullptr;
    for (const auto& e : entries_)
      if (e.name == p.name) {
        found = &e;
        break;
      }
    if (!found) throw ParseError("checkpoint missing tensor: " + p.name);
    if (found->shape != p.tensor.shape())
      throw ShapeError("checkpoint tensor " + p.name + " has shape " + shape_str(found->shape) +
                       ", expected " + shape_str(p.tensor.shape()));
    auto& vals = p.tensor.values();
    const char* src = blob_.data() + found->byte_offset;
    if (found->dtype == "f64") {
      if (found->byte_length != vals.size() * sizeof(double))
        throw ParseError("checkpoint tensor " + p.name + " has wrong byte length");
      std::memcpy(vals.data(), src, found->byte_length);
    } else {
      if (found->byte_length != vals.size() * sizeof(float))
        throw ParseError("checkpoint tensor " + p.name + " has wrong byte length");
      std::vector<float> tmp(vals.size());
      std::memcpy(tmp.data(), src, found->byte_length);
      for (size_t i = 0; i < vals.size(); ++i) vals[i] = tmp[i];
    }
  }
}

}  // namespace mcf::ad
