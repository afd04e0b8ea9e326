#pragma once

#include "s2m/masl.hpp"
#include "s2m/model.hpp"

#include <cstddef>
#include <cstdint>
#include <string>

namespace s2m {

struct TrainConfig {
    double lr = 1e-4;
    std::string optimizer = "rmsprop";
    double rmsprop_alpha = 0.9;  // squared-gradient smoothing
    double rmsprop_eps = 1e-8;
    double grad_clip_norm = 1.0;
    std::size_t batch_size = 4;
    std::size_t epochs = 45;
    std::size_t augment_multiplier = 2;
    /// false feeds the training samples unchanged (multiplier copies still drawn).
    bool augment = true;
    std::size_t early_stop_patience = 15;
    double weight_decay = 1e-4;
    std::uint64_t seed = 0;
    std::string device = "cpu";
    /// Hard cap on optimizer steps; 0 means unlimited.
    std::size_t max_steps = 0;
    double val_fraction = 0.2;
    /// Learn the MASL component weights jointly with the network.
    bool learn_loss_weights = true;
    MaslOptions masl;

    void validate() const;
};

/// Field names mirror the struct members; unknown keys are rejected.
std::string to_json(const ModelConfig& cfg);
std::string to_json(const TrainConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);
TrainConfig train_config_from_json(const std::string& text);

/// Reads a run config file: {"model": {...}, "train": {...}}, either section optional.
struct RunConfig {
    ModelConfig model = ModelConfig::desk();
    TrainConfig train;
};
RunConfig load_run_config(const std::string& path);
std::string to_json(const RunConfig& cfg);

} // namespace s2m
