#pragma once

// On-disk formats. Every file is written deterministically so that
// write -> read -> write reproduces identical bytes.
//
//  Volume / mask: JSON header {format_version, dims, spacing_mm, dtype,
//  units, payload} next to a raw little-endian payload, x fastest, then y,
//  then z. dtype is "f32le" for intensities and "u8" for masks.
//
//  Weights: JSON manifest {format_version, config, payload, payload_bytes,
//  entries: [{name, section, shape, offset}]} next to concatenated
//  little-endian float32 tensors.

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "aaa/training.hpp"
#include "aaa/unet.hpp"
#include "aaa/volume.hpp"

namespace aaa {

inline constexpr int kFormatVersion = 1;

using Json = nlohmann::json;
namespace fs = std::filesystem;

// Payload path for a header path: same stem, ".raw" / ".bin" extension.
fs::path payload_path(const fs::path& header, const std::string& ext);

void write_volume(const fs::path& header, const StudyVolume& volume);
StudyVolume read_volume(const fs::path& header);
void write_mask(const fs::path& header, const MaskVolume& mask);
MaskVolume read_mask(const fs::path& header);

Json to_json(const UNetConfig& c);
UNetConfig unet_config_from_json(const Json& j);

struct LoadedWeights {
  WeightStore<float> weights;
  UNetConfig config;
};

void write_weights(const fs::path& manifest, const WeightStore<float>& weights,
                   const UNetConfig& config);
LoadedWeights read_weights(const fs::path& manifest);

// Text helpers; failures raise DataError naming the path.
std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);
Json read_json(const fs::path& path);
void write_json(const fs::path& path, const Json& j);

}  // namespace aaa
