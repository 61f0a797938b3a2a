#pragma once

#include <cstdint>
#include <string>

#include "colontcn/loss.hpp"
#include "colontcn/model.hpp"
#include "colontcn/synth.hpp"
#include "colontcn/train.hpp"

namespace ctcn {

// Fully-resolved run configuration: JSON file merged with overrides
// (overrides win). Unknown keys are rejected at every level and the resolved
// document is echoed into output directories.
struct RunConfig {
    ModelConfig model;
    LossConfig loss;
    OptimConfig optim;
    SyntheticSpec synth;
    std::uint64_t seed = 12345;
    int threads = 0;
    std::string manifest_path;
    std::string folds_path;
    bool temporal_augment = true;
    double target_fps = 5.0;

    // Parses JSON text; `overrides_json` may be empty.
    static RunConfig parse(const std::string& config_json, const std::string& overrides_json);
    static RunConfig load(const std::string& path, const std::string& overrides_json);

    std::string to_json() const;  // resolved echo, stable key order
};

}  // namespace ctcn
