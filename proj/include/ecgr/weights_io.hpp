#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ecgr/model.hpp"

namespace ecgr {

inline constexpr std::uint32_t kWeightsFormatVersion = 1;

struct TensorBlob {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

/// Binary container: "ECGR", u32 version, u32 tensor count, then per tensor
/// u32 name length, UTF-8 name, u32 rank, u32 dims[rank], f32 data. All
/// integers and floats little-endian.
void write_tensor_file(const std::filesystem::path& path, std::span<const TensorBlob> tensors);

/// Throws kBadMagic, kVersionMismatch or kCorruptFile (truncation, trailing
/// bytes, sizes that disagree with the dims).
std::vector<TensorBlob> read_tensor_file(const std::filesystem::path& path);

std::vector<TensorBlob> model_blobs(const Model<float>& model);

/// Copies blobs into the model by name. Every model tensor must be present
/// with identical dims; otherwise kShapeMismatch naming the tensor. Blobs the
/// model does not know are ignored when allow_extra is set.
void assign_blobs(Model<float>& model, std::span<const TensorBlob> blobs, bool allow_extra = false);

void save_weights(const Model<float>& model, const std::filesystem::path& path);
Model<float> load_weights(const std::filesystem::path& path, const ModelConfig& config);

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace ecgr
