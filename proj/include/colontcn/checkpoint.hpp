#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "colontcn/model.hpp"

namespace ctcn {

// Adam moment buffers, index-aligned with the tensor visitation order.
struct OptimState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::int64_t step = 0;
};

// Versioned binary container: magic "CTCNCKPT", u32 version, a JSON metadata
// blob (config echo, iteration, validation wF1, seed), then named tensors in
// lexicographic order, and a trailing FNV-1a checksum. Model parameters are
// stored as little-endian f32 under "param/"; an exact-state section under
// "state/" keeps f64 parameters and optimizer moments so that training can
// resume bitwise and evaluation sees exactly the trained weights.
struct Checkpoint {
    ModelConfig config;
    ModelParams params;
    std::optional<OptimState> optim;
    std::int64_t iteration = 0;
    double validation_wf1 = 0.0;
    std::uint64_t seed = 0;
    std::string extra_meta;  // resolved run config echo (JSON text), optional

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

// JSON round-trip of a ModelConfig (used in checkpoints and run configs).
std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace ctcn
