#pragma once

#include <filesystem>
#include <stdexcept>

#include <json.hpp>

#include "fuit/model.hpp"

namespace fuit::nn {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  ModelGraph model;
  nlohmann::json metadata = nlohmann::json::object();
};

/// Layout: "FUITCKPT", u32 format version, u64 header length, JSON header
/// (input shape, layer specs, parameter shapes, caller metadata), then every
/// parameter as little-endian IEEE-754 doubles in ModelGraph::parameters()
/// order. All integers little-endian.
void save_checkpoint(const std::filesystem::path& path, const ModelGraph& model,
                     const nlohmann::json& metadata = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json layer_to_json(const Layer& layer);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace fuit::nn
