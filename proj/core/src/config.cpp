#include "s2m/config.hpp"

#include "s2m/error.hpp"

#include "json.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace s2m {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& section)
{
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.contains(it.key())) throw ConfigError(section + ": unknown key '" + it.key() + "'");
    }
}

template <typename T>
void read_field(const json& j, const char* key, T& out, const std::string& section)
{
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(section + "." + key + ": " + e.what());
    }
}

json model_json(const ModelConfig& c)
{
    return json{{"height", c.height},
                {"width", c.width},
                {"in_channels", c.in_channels},
                {"stage_channels", c.stage_channels},
                {"k", c.k},
                {"expansion", c.expansion},
                {"kernels", c.kernels},
                {"se_reduction", c.se_reduction},
                {"gate_bottleneck", c.gate_bottleneck},
                {"dropout", c.dropout},
                {"seed", c.seed},
                {"dtype", std::string(dtype_name(c.dtype))},
                {"use_mrfse", c.use_mrfse},
                {"use_sstm", c.use_sstm},
                {"use_boundary_decoder", c.use_boundary_decoder}};
}

ModelConfig model_from(const json& j)
{
    const std::string s = "model";
    if (!j.is_object()) throw ConfigError("model: expected a JSON object");
    reject_unknown(j,
                   {"height", "width", "input_size", "in_channels", "stage_channels", "k", "expansion", "kernels",
                    "se_reduction", "gate_bottleneck", "dropout", "seed", "dtype", "use_mrfse", "use_sstm",
                    "use_boundary_decoder"},
                   s);
    ModelConfig c;
    read_field(j, "height", c.height, s);
    read_field(j, "width", c.width, s);
    if (j.contains("input_size")) {
        std::vector<std::size_t> hw;
        read_field(j, "input_size", hw, s);
        if (hw.size() != 2) throw ConfigError("model.input_size: expected [H, W]");
        c.height = hw[0];
        c.width = hw[1];
    }
    read_field(j, "in_channels", c.in_channels, s);
    read_field(j, "stage_channels", c.stage_channels, s);
    read_field(j, "k", c.k, s);
    read_field(j, "expansion", c.expansion, s);
    read_field(j, "kernels", c.kernels, s);
    read_field(j, "se_reduction", c.se_reduction, s);
    read_field(j, "gate_bottleneck", c.gate_bottleneck, s);
    read_field(j, "dropout", c.dropout, s);
    read_field(j, "seed", c.seed, s);
    if (j.contains("dtype")) {
        std::string d;
        read_field(j, "dtype", d, s);
        c.dtype = parse_dtype(d);
    }
    read_field(j, "use_mrfse", c.use_mrfse, s);
    read_field(j, "use_sstm", c.use_sstm, s);
    read_field(j, "use_boundary_decoder", c.use_boundary_decoder, s);
    c.validate();
    return c;
}

json masl_json(const MaslOptions& m)
{
    return json{{"boundary_lambda", m.boundary_lambda},
                {"enabled", m.enabled},
                {"use_modulation", m.use_modulation}};
}

MaslOptions masl_from(const json& j)
{
    const std::string s = "train.masl";
    if (!j.is_object()) throw ConfigError("train.masl: expected a JSON object");
    reject_unknown(j, {"boundary_lambda", "enabled", "use_modulation"}, s);
    MaslOptions m;
    read_field(j, "boundary_lambda", m.boundary_lambda, s);
    if (j.contains("enabled")) {
        std::vector<bool> en;
        read_field(j, "enabled", en, s);
        if (en.size() != kMaslComponents) throw ConfigError("train.masl.enabled: expected 5 booleans");
        for (std::size_t i = 0; i < kMaslComponents; ++i) m.enabled[i] = en[i];
    }
    read_field(j, "use_modulation", m.use_modulation, s);
    return m;
}

json train_json(const TrainConfig& c)
{
    return json{{"lr", c.lr},
                {"optimizer", c.optimizer},
                {"rmsprop_alpha", c.rmsprop_alpha},
                {"rmsprop_eps", c.rmsprop_eps},
                {"grad_clip_norm", c.grad_clip_norm},
                {"batch_size", c.batch_size},
                {"epochs", c.epochs},
                {"augment_multiplier", c.augment_multiplier},
                {"augment", c.augment},
                {"early_stop_patience", c.early_stop_patience},
                {"weight_decay", c.weight_decay},
                {"seed", c.seed},
                {"device", c.device},
                {"max_steps", c.max_steps},
                {"val_fraction", c.val_fraction},
                {"learn_loss_weights", c.learn_loss_weights},
                {"masl", masl_json(c.masl)}};
}

TrainConfig train_from(const json& j)
{
    const std::string s = "train";
    if (!j.is_object()) throw ConfigError("train: expected a JSON object");
    reject_unknown(j,
                   {"lr", "optimizer", "rmsprop_alpha", "rmsprop_eps", "grad_clip_norm", "batch_size", "epochs",
                    "augment_multiplier", "augment", "early_stop_patience", "weight_decay", "seed", "device", "max_steps",
                    "val_fraction", "learn_loss_weights", "masl"},
                   s);
    TrainConfig c;
    read_field(j, "lr", c.lr, s);
    read_field(j, "optimizer", c.optimizer, s);
    read_field(j, "rmsprop_alpha", c.rmsprop_alpha, s);
    read_field(j, "rmsprop_eps", c.rmsprop_eps, s);
    read_field(j, "grad_clip_norm", c.grad_clip_norm, s);
    read_field(j, "batch_size", c.batch_size, s);
    read_field(j, "epochs", c.epochs, s);
    read_field(j, "augment_multiplier", c.augment_multiplier, s);
    read_field(j, "augment", c.augment, s);
    read_field(j, "early_stop_patience", c.early_stop_patience, s);
    read_field(j, "weight_decay", c.weight_decay, s);
    read_field(j, "seed", c.seed, s);
    read_field(j, "device", c.device, s);
    read_field(j, "max_steps", c.max_steps, s);
    read_field(j, "val_fraction", c.val_fraction, s);
    read_field(j, "learn_loss_weights", c.learn_loss_weights, s);
    if (j.contains("masl")) c.masl = masl_from(j.at("masl"));
    c.validate();
    return c;
}

json parse(const std::string& text, const std::string& what)
{
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(what + ": invalid JSON: " + e.what());
    }
}

} // namespace

void TrainConfig::validate() const
{
    if (!(lr >= 0.0)) throw ConfigError("train.lr must be >= 0");
    if (optimizer != "rmsprop") throw ConfigError("train.optimizer: only 'rmsprop' is supported, got '" + optimizer + "'");
    if (!(rmsprop_alpha > 0.0 && rmsprop_alpha < 1.0)) throw ConfigError("train.rmsprop_alpha must be in (0, 1)");
    if (!(rmsprop_eps > 0.0)) throw ConfigError("train.rmsprop_eps must be > 0");
    if (!(grad_clip_norm > 0.0)) throw ConfigError("train.grad_clip_norm must be > 0");
    if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
    if (epochs == 0) throw ConfigError("train.epochs must be positive");
    if (augment_multiplier == 0) throw ConfigError("train.augment_multiplier must be positive");
    if (early_stop_patience == 0 || early_stop_patience > epochs) {
        throw ConfigError("train.early_stop_patience must be in [1, epochs]");
    }
    if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
    if (device != "cpu") throw ConfigError("train.device: only 'cpu' is supported, got '" + device + "'");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("train.val_fraction must be in (0, 1)");
    if (!(masl.boundary_lambda >= 0.0)) throw ConfigError("train.masl.boundary_lambda must be >= 0");
}

std::string to_json(const ModelConfig& cfg) { return model_json(cfg).dump(2); }
std::string to_json(const TrainConfig& cfg) { return train_json(cfg).dump(2); }

std::string to_json(const RunConfig& cfg)
{
    return json{{"model", model_json(cfg.model)}, {"train", train_json(cfg.train)}}.dump(2);
}

ModelConfig model_config_from_json(const std::string& text) { return model_from(parse(text, "model config")); }
TrainConfig train_config_from_json(const std::string& text) { return train_from(parse(text, "train config")); }

RunConfig load_run_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    const json j = parse(ss.str(), path);
    if (!j.is_object()) throw ConfigError(path + ": expected a JSON object");
    reject_unknown(j, {"model", "train"}, path);
    RunConfig cfg;
    if (j.contains("model")) cfg.model = model_from(j.at("model"));
    if (j.contains("train")) cfg.train = train_from(j.at("train"));
    return cfg;
}

} // namespace s2m
