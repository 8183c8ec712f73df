#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "egoexo/nn/layers.hpp"

namespace egoexo::nn {

inline constexpr char kCheckpointMagic[4] = {'C', 'V', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Named float32 parameter table plus a config echo (JSON text).
///
/// Layout (little-endian): magic "CVCK", version u32, config_len u32, config
/// bytes, count u32, then per parameter name_len u16, name, rows u32, cols u32,
/// rows*cols float32 values in row-major order.
struct Checkpoint {
  std::string config_json;
  std::vector<std::pair<std::string, Matrix>> tensors;

  static Checkpoint from(const ParameterSet& params, std::string config_json);
  /// Copies tensors into `params`; every parameter must be present with the
  /// same shape. Throws FormatError otherwise.
  void restore(ParameterSet& params) const;

  std::vector<std::uint8_t> encode() const;
  static Checkpoint decode(std::span<const std::uint8_t> bytes);
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace egoexo::nn
