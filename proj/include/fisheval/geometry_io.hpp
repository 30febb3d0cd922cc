#pragma once

#include <filesystem>
#include <string>

#include "fisheval/geometry.hpp"
#include "fisheval/keyvalue.hpp"

namespace fisheval {

/// Reads `<prefix>kind`, `<prefix>fov`, `<prefix>circle_radius`, `<prefix>cx`,
/// `<prefix>cy` and optional `<prefix>focal`. A missing focal is derived from
/// fov; a present one must agree with it.
FisheyeModeld read_model(const KeyValueFile& kv, const std::string& prefix = "");

/// Serializes with round-trippable precision, one `key = value` per line.
std::string write_model(const FisheyeModeld& model, const std::string& prefix = "");

FisheyeModeld load_model(const std::filesystem::path& path);
void save_model(const std::filesystem::path& path, const FisheyeModeld& model);

/// Stable identifier of a model's serialized parameters.
std::string model_hash(const FisheyeModeld& model);

}  // namespace fisheval
