#include "s2m/checkpoint.hpp"

#include "le_bytes.hpp"

#include "s2m/config.hpp"
#include "s2m/error.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

namespace s2m {

namespace {

constexpr const char* kMagic = "s2m-checkpoint 1";

const char* kind_name(ParamKind kind)
{
    switch (kind) {
    case ParamKind::weight: return "weight";
    case ParamKind::spectral: return "spectral";
    case ParamKind::bias: return "bias";
    case ParamKind::norm: return "norm";
    case ParamKind::buffer: return "buffer";
    }
    return "weight";
}

std::string shape_token(const Shape& shape)
{
    std::string s;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += 'x';
        s += std::to_string(shape[i]);
    }
    return s.empty() ? "scalar" : s;
}

struct TensorLine {
    std::string name;
    std::string kind;
    Dtype dtype = Dtype::f32;
    std::string shape;
    std::size_t offset = 0;
    std::size_t nbytes = 0;
};

} // namespace

void save_checkpoint(const std::string& path, const Model& model, const MaslWeights* weights)
{
    const ModelConfig& cfg = model.config();
    std::vector<unsigned char> blob;
    std::ostringstream manifest;
    manifest << kMagic << '\n';
    std::string config_json = to_json(cfg);
    std::erase(config_json, '\n');
    manifest << "config " << config_json << '\n';
    manifest << "seed " << cfg.seed << '\n';
    manifest << "rng " << model.rng().state() << '\n';

    auto emit = [&](const std::string& name, const char* kind, const Tensor& t) {
        const std::size_t offset = blob.size();
        detail::append_le(blob, t.data(), t.dtype());
        manifest << "tensor " << name << ' ' << kind << ' ' << dtype_name(t.dtype()) << ' ' << shape_token(t.shape())
                 << ' ' << offset << ' ' << blob.size() - offset << '\n';
    };
    for (const auto& e : model.parameters().entries()) emit(e.name, kind_name(e.kind), e.tensor);
    if (weights) emit("masl.weights", "masl", weights->values);
    manifest << "blob " << blob.size() << '\n';
    manifest << "end\n";

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open checkpoint '" + path + "' for writing");
    const std::string text = manifest.str();
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
    if (!out) throw DataError("write failed for checkpoint '" + path + "'");
}

LoadedCheckpoint load_checkpoint(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint '" + path + "'");
    auto bad = [&](const std::string& what) { return DataError("checkpoint '" + path + "': " + what); };

    std::string line;
    if (!std::getline(in, line) || line != kMagic) throw bad("missing format tag");

    std::string config_json, rng_state;
    std::vector<TensorLine> tensors;
    std::size_t blob_size = 0;
    bool ended = false;
    while (std::getline(in, line)) {
        if (line == "end") {
            ended = true;
            break;
        }
        const auto space = line.find(' ');
        const std::string key = line.substr(0, space);
        const std::string rest = space == std::string::npos ? "" : line.substr(space + 1);
        if (key == "config") {
            config_json = rest;
        } else if (key == "seed") {
            // The seed is also part of the config.
        } else if (key == "rng") {
            rng_state = rest;
        } else if (key == "tensor") {
            std::istringstream ls(rest);
            TensorLine t;
            std::string dtype;
            ls >> t.name >> t.kind >> dtype >> t.shape >> t.offset >> t.nbytes;
            if (ls.fail()) throw bad("malformed tensor line '" + line + "'");
            t.dtype = parse_dtype(dtype);
            tensors.push_back(t);
        } else if (key == "blob") {
            blob_size = std::stoull(rest);
        } else {
            throw bad("unknown manifest key '" + key + "'");
        }
    }
    if (!ended) throw bad("manifest not terminated");
    if (config_json.empty()) throw bad("missing config");

    std::vector<unsigned char> blob(blob_size);
    in.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(blob_size));
    if (static_cast<std::size_t>(in.gcount()) != blob_size) throw bad("truncated blob");

    LoadedCheckpoint loaded{Model::build(model_config_from_json(config_json)), std::nullopt};
    if (!rng_state.empty()) loaded.model.rng().set_state(rng_state);

    auto values_of = [&](const TensorLine& t, std::size_t expected_count) {
        const std::size_t width = detail::dtype_width(t.dtype);
        if (t.nbytes != expected_count * width) {
            throw ConfigError("checkpoint '" + path + "': size mismatch for " + t.name);
        }
        if (t.offset + t.nbytes > blob.size()) throw bad("tensor " + t.name + " exceeds the blob");
        return detail::decode_le(blob.data() + t.offset, expected_count, t.dtype);
    };

    auto& entries = loaded.model.parameters().entries();
    std::size_t next = 0;
    for (const TensorLine& t : tensors) {
        if (t.kind == "masl") {
            loaded.weights = MaslWeights{Tensor::from_data({kMaslComponents}, values_of(t, kMaslComponents), t.dtype)};
            continue;
        }
        if (next >= entries.size() || entries[next].name != t.name) {
            throw ConfigError("checkpoint '" + path + "': unexpected tensor " + t.name);
        }
        ParamEntry& e = entries[next++];
        if (shape_token(e.tensor.shape()) != t.shape) {
            throw ConfigError("checkpoint '" + path + "': shape mismatch for " + t.name);
        }
        const std::vector<double> values = values_of(t, e.tensor.numel());
        auto dst = e.tensor.mutable_data();
        std::copy(values.begin(), values.end(), dst.begin());
        e.tensor.normalize_storage();
    }
    if (next != entries.size()) throw ConfigError("checkpoint '" + path + "': missing tensors");
    return loaded;
}

} // namespace s2m
