#pragma once

#include <cstdint>
#include <string>

#include "gpf/model.hpp"

// Checkpoint file: magic "GPFN", version u16 = 1, a length-prefixed JSON
// blob (model config, training step, seed), then the named parameter
// tensors as little-endian 64-bit floats.
namespace gpf {

struct Checkpoint {
    ModelConfig config;
    GpfModel model;
    std::uint64_t step = 0;
    std::uint64_t seed = 0;
};

void save_checkpoint(const std::string& path, GpfModel& model, std::uint64_t step,
                     std::uint64_t seed);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace gpf
