#pragma once

#include <filesystem>
#include <stdexcept>

#include "ana/network.hpp"

// Weights file, little-endian:
//
//   magic     4 bytes  "ANAW"
//   version   u32      1
//   layers    u32
//   dim       u32
//   heads     u32
//   soc_form  u32      0 none, 1 cubic, 2 quadratic, 3 linear
//   value     u32      0 projected, 1 raw
//   norm      u32      context normalization on (1) / off (0)
//   count     u32      number of parameter blobs
//   blobs     count x { rows u32, cols u32, rows*cols float32 } in declaration order

namespace ana {

inline constexpr std::uint32_t kWeightsVersion = 1;

class WeightsError : public std::runtime_error {
 public:
  enum class Code { io, corrupt, version, architecture };
  WeightsError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

void save_weights(const ModelParams<float>& params, const std::filesystem::path& path);

/// Architecture taken from the file header.
ModelParams<float> load_weights(const std::filesystem::path& path);

/// Refuses (Code::architecture) a file whose header differs from `expected`.
ModelParams<float> load_weights(const std::filesystem::path& path, const NetConfig& expected);

}  // namespace ana
