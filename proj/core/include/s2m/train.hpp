#pragma once

#include "s2m/config.hpp"
#include "s2m/data.hpp"
#include "s2m/error.hpp"
#include "s2m/masl.hpp"
#include "s2m/model.hpp"

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace s2m {

struct MetricsRow {
    std::size_t epoch = 0;
    std::string split;  // "train" or "val"
    double dice = 0.0;
    double iou = 0.0;
    double masl_total = 0.0;
    std::array<double, kMaslComponents> components{};  // mean raw component losses
    std::array<double, kMaslComponents> weights{};     // w_i at the end of the epoch
    double wall_ms = 0.0;
};

std::string metrics_csv_header();
std::string to_csv(const MetricsRow& row);

/// (2|A n B| + eps) / (|A| + |B| + eps) with A = {p >= threshold}, B = {y >= 0.5}.
double dice_score(std::span<const double> y, std::span<const double> p, double threshold = 0.5);
/// (|A n B| + eps) / (|A u B| + eps).
double iou_score(std::span<const double> y, std::span<const double> p, double threshold = 0.5);

struct EvalResult {
    double dice = 0.0;
    double iou = 0.0;
    std::vector<double> per_sample_dice;
    std::vector<double> per_sample_iou;
    double masl_total = 0.0;
    std::array<double, kMaslComponents> components{};
};

/// Hard Dice and IoU averaged over samples, in eval mode without recording.
/// MASL values are filled when weights are given.
EvalResult evaluate(Model& model, const std::vector<Sample>& samples, double threshold = 0.5,
                    const MaslWeights* weights = nullptr, const MaslOptions& options = {}, std::size_t batch_size = 4);

/// Global L2 norm over all gradient buffers. Throws NumericError for non-finite entries.
double global_grad_norm(std::span<const std::span<const double>> grads);
/// Scales every buffer by max_norm / norm when norm > max_norm. Returns the pre-clip norm.
double clip_grad_norm(std::span<const std::span<double>> grads, double max_norm);
/// Value form of clip_grad_norm for a single flat gradient.
std::vector<double> grad_clip(std::vector<double> grads, double max_norm = 1.0);

/// v <- a v + (1 - a) g^2;  theta <- theta - lr g / (sqrt(v) + eps). No momentum.
class RmsProp {
public:
    RmsProp(double alpha, double eps) : alpha_(alpha), eps_(eps) {}
    /// params must keep the same order and shapes between calls.
    void step(const std::vector<Tensor>& params, double lr);

private:
    double alpha_;
    double eps_;
    std::vector<std::vector<double>> square_avg_;
};

/// NaN or infinity during training; carries the failing step and the last finite metrics.
class TrainingAborted : public NumericError {
public:
    TrainingAborted(std::size_t step, MetricsRow last, const std::string& cause);
    std::size_t step() const { return step_; }
    const MetricsRow& last_metrics() const { return last_; }

private:
    std::size_t step_;
    MetricsRow last_;
};

struct StepInfo {
    std::size_t step = 0;
    double loss = 0.0;
    double grad_norm = 0.0;       // before clipping
    double clipped_norm = 0.0;    // after clipping
    std::array<double, kMaslComponents> weights{};
};

struct TrainHooks {
    std::function<void(const MetricsRow&)> on_row;
    std::function<void(const StepInfo&)> on_step;
};

struct TrainResult {
    std::vector<MetricsRow> history;
    double best_val_dice = -1.0;
    std::size_t best_epoch = 0;
    std::size_t steps = 0;
    std::size_t epochs_run = 0;
    bool early_stopped = false;
    MaslWeights weights;  // at the best epoch
};

/// RMSprop over the network parameters and (optionally) the MASL weights with
/// global-norm clipping, decoupled weight decay on weight/spectral tensors and
/// projection of the MASL weights after every step. Each epoch draws
/// augment_multiplier augmented copies of every training sample. Stops early
/// after early_stop_patience epochs without a val Dice improvement and leaves
/// the model at its best-val-Dice state.
TrainResult train(Model& model, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const TrainConfig& cfg, const TrainHooks& hooks = {});

} // namespace s2m
