#pragma once

// JSON container mapping tensor name -> {shape, values}. Doubles are written
// in shortest round-trip form, so save/load is bit-exact.

#include <filesystem>

#include "json.hpp"
#include "flowuq/nn.hpp"

namespace flowuq {

struct TensorFile {
  nn::TensorMap tensors;
  nlohmann::json meta = nlohmann::json::object();
};

nlohmann::json tensors_to_json(const nn::TensorMap& tensors);
nn::TensorMap tensors_from_json(const nlohmann::json& j);

void save_tensor_file(const std::filesystem::path& path, const TensorFile& file);
TensorFile load_tensor_file(const std::filesystem::path& path);

}  // namespace flowuq
