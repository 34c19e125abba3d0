#include "flowuq/checkpoint.hpp"

#include <fstream>

namespace flowuq {

namespace {
constexpr const char* kFormat = "flowuq-tensors";
constexpr int kVersion = 1;
}  // namespace

nlohmann::json tensors_to_json(const nn::TensorMap& tensors) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [name, t] : tensors) {
    if (!t.all_finite()) throw NumericalError("checkpoint: tensor '" + name + "' is not finite");
    out[name] = {{"shape", t.shape()}, {"values", t.storage()}};
  }
  return out;
}

nn::TensorMap tensors_from_json(const nlohmann::json& j) {
  nn::TensorMap out;
  for (const auto& [name, entry] : j.items()) {
    out.emplace(name, Tensor(entry.at("shape").get<Shape>(),
                             entry.at("values").get<std::vector<double>>()));
  }
  return out;
}

void save_tensor_file(const std::filesystem::path& path, const TensorFile& file) {
  nlohmann::json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["meta"] = file.meta;
  j["tensors"] = tensors_to_json(file.tensors);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump() << '\n';
}

TensorFile load_tensor_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read checkpoint " + path.string());
  const auto j = nlohmann::json::parse(is);
  if (j.value("format", "") != kFormat) {
    throw std::runtime_error(path.string() + " is not a tensor checkpoint");
  }
  TensorFile out;
  out.meta = j.value("meta", nlohmann::json::object());
  out.tensors = tensors_from_json(j.at("tensors"));
  return out;
}

}  // namespace flowuq
