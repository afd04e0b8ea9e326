#include "s2m/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

namespace s2m {

namespace {

struct Counts {
    double inter = 0.0, a = 0.0, b = 0.0;
};

Counts overlap(std::span<const double> y, std::span<const double> p, double threshold)
{
    if (y.size() != p.size()) {
        throw ShapeError("metrics: mask has " + std::to_string(y.size()) + " values, prediction " +
                         std::to_string(p.size()));
    }
    Counts c;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const bool in_a = p[i] >= threshold, in_b = y[i] >= 0.5;
        c.a += in_a;
        c.b += in_b;
        c.inter += in_a && in_b;
    }
    return c;
}

std::string fmt(double v)
{
    std::ostringstream out;
    out.precision(9);
    out << v;
    return out.str();
}

std::vector<std::span<double>> grad_spans(const std::vector<Tensor>& params)
{
    std::vector<std::span<double>> spans;
    spans.reserve(params.size());
    for (Tensor t : params) spans.push_back(t.mutable_grad());
    return spans;
}

} // namespace

std::string metrics_csv_header()
{
    std::string h = "epoch,split,dice,iou,masl_total";
    for (std::size_t i = 0; i < kMaslComponents; ++i) h += ",l_" + std::string(component_name(i));
    for (std::size_t i = 0; i < kMaslComponents; ++i) h += ",w_" + std::string(component_name(i));
    return h + ",wall_ms";
}

std::string to_csv(const MetricsRow& row)
{
    std::string s = std::to_string(row.epoch) + "," + row.split + "," + fmt(row.dice) + "," + fmt(row.iou) + "," +
                    fmt(row.masl_total);
    for (double c : row.components) s += "," + fmt(c);
    for (double w : row.weights) s += "," + fmt(w);
    return s + "," + fmt(row.wall_ms);
}

double dice_score(std::span<const double> y, std::span<const double> p, double threshold)
{
    const Counts c = overlap(y, p, threshold);
    return (2.0 * c.inter + kMaslEps) / (c.a + c.b + kMaslEps);
}

double iou_score(std::span<const double> y, std::span<const double> p, double threshold)
{
    const Counts c = overlap(y, p, threshold);
    return (c.inter + kMaslEps) / (c.a + c.b - c.inter + kMaslEps);
}

EvalResult evaluate(Model& model, const std::vector<Sample>& samples, double threshold, const MaslWeights* weights,
                    const MaslOptions& options, std::size_t batch_size)
{
    EvalResult r;
    if (samples.empty()) return r;
    const bool was_training = model.training();
    model.eval();
    NoGradGuard no_grad;
    const Dtype dtype = model.config().dtype;
    const std::size_t plane = samples.front().mask.numel();
    for (std::size_t start = 0; start < samples.size(); start += batch_size) {
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < std::min(samples.size(), start + batch_size); ++i) idx.push_back(i);
        auto [x, y] = make_batch(samples, idx, dtype);
        const Tensor p = model.forward(x).prediction;
        auto pd = p.data();
        auto yd = y.data();
        for (std::size_t b = 0; b < idx.size(); ++b) {
            r.per_sample_dice.push_back(dice_score(yd.subspan(b * plane, plane), pd.subspan(b * plane, plane), threshold));
            r.per_sample_iou.push_back(iou_score(yd.subspan(b * plane, plane), pd.subspan(b * plane, plane), threshold));
        }
        if (weights) {
            std::vector<LossBreakdown> bds;
            masl_batch(y, p, *weights, options, &bds);
            for (const auto& bd : bds) {
                r.masl_total += bd.total;
                for (std::size_t i = 0; i < kMaslComponents; ++i) r.components[i] += bd.components[i];
            }
        }
    }
    const double n = static_cast<double>(samples.size());
    for (double d : r.per_sample_dice) r.dice += d / n;
    for (double v : r.per_sample_iou) r.iou += v / n;
    r.masl_total /= n;
    for (double& c : r.components) c /= n;
    if (was_training) model.train();
    return r;
}

double global_grad_norm(std::span<const std::span<const double>> grads)
{
    double sq = 0.0;
    for (auto g : grads) {
        for (double v : g) {
            if (!std::isfinite(v)) throw NumericError("grad_clip: non-finite gradient entry");
            sq += v * v;
        }
    }
    return std::sqrt(sq);
}

double clip_grad_norm(std::span<const std::span<double>> grads, double max_norm)
{
    std::vector<std::span<const double>> view(grads.begin(), grads.end());
    const double norm = global_grad_norm(view);
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (auto g : grads) {
            for (double& v : g) v *= scale;
        }
    }
    return norm;
}

std::vector<double> grad_clip(std::vector<double> grads, double max_norm)
{
    const std::span<double> one(grads);
    clip_grad_norm(std::span<const std::span<double>>(&one, 1), max_norm);
    return grads;
}

void RmsProp::step(const std::vector<Tensor>& params, double lr)
{
    if (square_avg_.empty()) {
        for (const Tensor& p : params) square_avg_.emplace_back(p.numel(), 0.0);
    }
    if (square_avg_.size() != params.size()) throw ConfigError("rmsprop: parameter list changed between steps");
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor p = params[i];
        auto v = std::span<double>(square_avg_[i]);
        auto g = p.grad();
        auto theta = p.mutable_data();
        for (std::size_t j = 0; j < theta.size(); ++j) {
            v[j] = alpha_ * v[j] + (1.0 - alpha_) * g[j] * g[j];
            theta[j] -= lr * g[j] / (std::sqrt(v[j]) + eps_);
        }
        p.normalize_storage();
    }
}

TrainingAborted::TrainingAborted(std::size_t step, MetricsRow last, const std::string& cause)
    : NumericError("training aborted at step " + std::to_string(step) + ": " + cause + " (last finite epoch " +
                   std::to_string(last.epoch) + ", dice " + fmt(last.dice) + ", masl " + fmt(last.masl_total) + ")"),
      step_(step), last_(std::move(last))
{
}

TrainResult train(Model& model, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const TrainConfig& cfg, const TrainHooks& hooks)
{
    cfg.validate();
    if (train_set.empty()) throw DataError("train: empty training split");
    if (val_set.empty()) throw DataError("train: empty validation split");

    using Clock = std::chrono::steady_clock;
    TrainResult result;
    MaslWeights weights = MaslWeights::initial();
    if (cfg.learn_loss_weights) weights.values.set_requires_grad(true);

    std::vector<ParamEntry*> decayed;
    for (auto& e : model.parameters().entries()) {
        if (e.decayed()) decayed.push_back(&e);
    }
    std::vector<Tensor> optimized = model.parameters().trainable();
    if (cfg.learn_loss_weights) optimized.push_back(weights.values);
    RmsProp optimizer(cfg.rmsprop_alpha, cfg.rmsprop_eps);

    Rng data_rng(cfg.seed ^ 0xDA7A5EEDULL);
    const Dtype dtype = model.config().dtype;
    std::vector<std::vector<double>> best_state = model.snapshot();
    std::array<double, kMaslComponents> best_weights = weights.array();
    MetricsRow last_finite;
    std::size_t stale = 0;
    bool stop = false;

    for (std::size_t epoch = 1; epoch <= cfg.epochs && !stop; ++epoch) {
        const auto t0 = Clock::now();
        model.train();
        std::vector<Sample> pool;
        pool.reserve(train_set.size() * cfg.augment_multiplier);
        for (const Sample& s : train_set) {
            for (std::size_t m = 0; m < cfg.augment_multiplier; ++m) pool.push_back(cfg.augment ? augment(s, data_rng) : s);
        }
        for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[data_rng.below(i)]);

        MetricsRow row;
        row.epoch = epoch;
        row.split = "train";
        std::size_t seen = 0;
        for (std::size_t start = 0; start < pool.size(); start += cfg.batch_size) {
            if (cfg.max_steps != 0 && result.steps >= cfg.max_steps) {
                stop = true;
                break;
            }
            std::vector<std::size_t> idx;
            for (std::size_t i = start; i < std::min(pool.size(), start + cfg.batch_size); ++i) idx.push_back(i);
            auto [x, y] = make_batch(pool, idx, dtype);
            const std::size_t step = result.steps + 1;
            StepInfo info;
            info.step = step;
            std::vector<LossBreakdown> bds;
            Tensor prediction;
            try {
                model.parameters().zero_grad();
                weights.values.zero_grad();
                Tape tape;
                prediction = model.forward(x).prediction;
                const Tensor loss = masl_batch(y, prediction, weights, cfg.masl, &bds);
                info.loss = loss.item();
                if (!std::isfinite(info.loss)) throw NumericError("non-finite loss");
                tape.backward(loss);
                const auto grads = grad_spans(optimized);
                info.grad_norm = clip_grad_norm(grads, cfg.grad_clip_norm);
                std::vector<std::span<const double>> view(grads.begin(), grads.end());
                info.clipped_norm = global_grad_norm(view);
            } catch (const TrainingAborted&) {
                throw;
            } catch (const NumericError& e) {
                throw TrainingAborted(step, last_finite, e.what());
            }
            optimizer.step(optimized, cfg.lr);
            if (cfg.weight_decay > 0.0 && cfg.lr > 0.0) {
                for (ParamEntry* e : decayed) {
                    for (double& v : e->tensor.mutable_data()) v -= cfg.lr * cfg.weight_decay * v;
                    e->tensor.normalize_storage();
                }
            }
            clip_weights_inplace(weights);
            result.steps = step;
            info.weights = weights.array();
            if (hooks.on_step) hooks.on_step(info);

            const std::size_t plane = y.numel() / idx.size();
            auto pd = prediction.data();
            auto yd = y.data();
            for (std::size_t b = 0; b < idx.size(); ++b) {
                row.dice += dice_score(yd.subspan(b * plane, plane), pd.subspan(b * plane, plane));
                row.iou += iou_score(yd.subspan(b * plane, plane), pd.subspan(b * plane, plane));
            }
            for (const auto& bd : bds) {
                row.masl_total += bd.total;
                for (std::size_t i = 0; i < kMaslComponents; ++i) row.components[i] += bd.components[i];
            }
            seen += idx.size();
        }
        if (seen == 0) break;
        const double n = static_cast<double>(seen);
        row.dice /= n;
        row.iou /= n;
        row.masl_total /= n;
        for (double& c : row.components) c /= n;
        row.weights = weights.array();
        row.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
        result.history.push_back(row);
        if (hooks.on_row) hooks.on_row(row);
        last_finite = row;

        const auto v0 = Clock::now();
        const EvalResult ev = evaluate(model, val_set, 0.5, &weights, cfg.masl, cfg.batch_size);
        MetricsRow vrow;
        vrow.epoch = epoch;
        vrow.split = "val";
        vrow.dice = ev.dice;
        vrow.iou = ev.iou;
        vrow.masl_total = ev.masl_total;
        vrow.components = ev.components;
        vrow.weights = row.weights;
        vrow.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - v0).count();
        result.history.push_back(vrow);
        if (hooks.on_row) hooks.on_row(vrow);
        result.epochs_run = epoch;

        if (ev.dice > result.best_val_dice) {
            result.best_val_dice = ev.dice;
            result.best_epoch = epoch;
            best_state = model.snapshot();
            best_weights = weights.array();
            stale = 0;
        } else if (++stale >= cfg.early_stop_patience) {
            result.early_stopped = true;
            stop = true;
        }
    }
    model.restore(best_state);
    model.eval();
    result.weights = MaslWeights::from(best_weights);
    return result;
}

} // namespace s2m
