#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "uavbeam/geo.hpp"
#include "uavbeam/nn/model.hpp"

namespace uavbeam::nn {

// Everything needed to reproduce inference: parameters with their buffers,
// the feature normalization bounds, and the shaping hyperparameters.
struct Checkpoint {
  std::unique_ptr<ModelParams> params;
  HyperParams hp;
  geo::NormalizationBounds bounds;
  std::uint64_t seed = 0;
  std::string dtype = "float64";  // payload storage, float64 or float32
};

// Text manifest (names, shapes, dtype, feature order, bounds, hyperparams,
// seed, payload checksum) followed by raw little-endian buffers in manifest
// order. float64 payloads round-trip bit exactly.
void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);  // throws ChecksumMismatch, ParseError

}  // namespace uavbeam::nn
