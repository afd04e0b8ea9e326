#include "CLI11.hpp"

#include "s2m/checkpoint.hpp"
#include "s2m/config.hpp"
#include "s2m/data.hpp"
#include "s2m/error.hpp"
#include "s2m/gradcheck_suite.hpp"
#include "s2m/image_io.hpp"
#include "s2m/masl.hpp"
#include "s2m/spectral.hpp"
#include "s2m/train.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace s2m;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

bool is_image_file(const fs::path& p)
{
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    return ext == ".png" || ext == ".pgm" || ext == ".ppm";
}

/// Image files directly under dir, sorted by path.
std::vector<fs::path> image_files(const fs::path& dir)
{
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

Tensor gray_tensor(const Image& img)
{
    const Image g = to_gray(img);
    return Tensor::from_data({g.height, g.width}, g.values);
}

std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

void write_beta_dumps(Model& model, const std::vector<Sample>& samples, const fs::path& dir, std::size_t count)
{
    fs::create_directories(dir);
    model.eval();
    NoGradGuard guard;
    for (std::size_t i = 0; i < std::min(count, samples.size()); ++i) {
        auto [x, y] = make_batch(samples, {i}, model.config().dtype);
        const ModelOutput out = model.forward(x);
        for (std::size_t s = 0; s < out.betas.size(); ++s) {
            const Tensor& b = out.betas[s];
            Image img{b.dim(3), b.dim(2), 1, {b.data().begin(), b.data().end()}};
            write_pnm((dir / (samples[i].id + "_stage" + std::to_string(out.betas.size() - s) + ".pgm")).string(), img);
        }
    }
}

int cmd_gen_data(const std::string& kind, std::size_t count, std::size_t size, const std::string& out,
                 std::uint64_t seed)
{
    std::vector<GeneratedSample> samples = kind == "mixed" ? generate_mixed_corpus(count, size, size, seed)
                                                           : generate_corpus(parse_shape_kind(kind), count, size, size, seed);
    save_dataset(out, samples);
    std::cout << "wrote " << samples.size() << " samples to " << out << "\n";
    return 0;
}

int cmd_train(const std::string& config, const std::string& data, const std::string& out, std::size_t beta_dumps)
{
    const RunConfig rc = load_run_config(config);
    rc.model.validate();
    rc.train.validate();
    const std::vector<Sample> all = load_dataset(data, rc.model.height, rc.model.width);
    if (all.size() < 2) throw DataError("train: need at least two samples in " + data);
    auto [train_set, val_set] = split_train_val(all, rc.train.val_fraction);

    fs::create_directories(out);
    write_text(fs::path(out) / "config.json", to_json(rc));
    std::ofstream metrics(fs::path(out) / "metrics.csv");
    metrics << metrics_csv_header() << "\n";
    TrainHooks hooks;
    hooks.on_row = [&](const MetricsRow& row) {
        metrics << to_csv(row) << "\n";
        metrics.flush();
        if (row.split == "val") {
            std::cout << "epoch " << row.epoch << " val dice " << num(row.dice) << " iou " << num(row.iou) << "\n";
        }
    };

    Model model = Model::build(rc.model);
    const TrainResult r = train(model, train_set, val_set, rc.train, hooks);
    save_checkpoint((fs::path(out) / "best.ckpt").string(), model, &r.weights);
    if (beta_dumps > 0) write_beta_dumps(model, val_set, fs::path(out) / "beta", beta_dumps);
    std::cout << "best val dice " << num(r.best_val_dice) << " at epoch " << r.best_epoch << " (" << r.epochs_run
              << " epochs, " << r.steps << " steps" << (r.early_stopped ? ", early stop" : "") << ")\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data, double threshold)
{
    LoadedCheckpoint ckpt = load_checkpoint(checkpoint);
    const ModelConfig& cfg = ckpt.model.config();
    const std::vector<Sample> samples = load_dataset(data, cfg.height, cfg.width);
    if (samples.empty()) throw DataError("eval: no samples in " + data);
    const EvalResult r = evaluate(ckpt.model, samples, threshold, ckpt.weights ? &*ckpt.weights : nullptr);
    std::cout << "id,dice,iou\n";
    for (std::size_t i = 0; i < samples.size(); ++i) {
        std::cout << samples[i].id << "," << num(r.per_sample_dice[i]) << "," << num(r.per_sample_iou[i]) << "\n";
    }
    std::cout << "mean," << num(r.dice) << "," << num(r.iou) << "\n";
    return 0;
}

int cmd_analyze_spectrum(const std::string& data, std::size_t k)
{
    const fs::path root(data);
    const std::vector<fs::path> files = image_files(fs::is_directory(root / "images") ? root / "images" : root);
    std::cout << "path,H,W,k,total_energy,retention_ratio\n";
    for (const auto& f : files) {
        const Tensor x = gray_tensor(read_image(f.string()));
        const SpectrumStats s = energy_retention(x, clamp_truncation(k, x.dim(0), x.dim(1)));
        std::cout << f.string() << "," << x.dim(0) << "," << x.dim(1) << "," << s.k << "," << num(s.total_energy)
                  << "," << num(s.retention_ratio) << "\n";
    }
    return 0;
}

int cmd_morph_report(const std::string& masks)
{
    const fs::path root(masks);
    const std::vector<fs::path> files = image_files(fs::is_directory(root / "masks") ? root / "masks" : root);
    std::cout << "path,tau,c,iota,s,alpha1,alpha2,alpha3,alpha4,alpha5\n";
    for (const auto& f : files) {
        Tensor m = gray_tensor(read_image(f.string()));
        for (double& v : m.mutable_data()) v = v >= 0.5 ? 1.0 : 0.0;
        const MorphFeatures mf = morph_features(m);
        std::cout << f.string() << "," << num(mf.tubularity) << "," << num(mf.compactness) << ","
                  << num(mf.irregularity) << "," << num(mf.scale);
        for (double a : modulation(mf)) std::cout << "," << num(a);
        std::cout << "\n";
    }
    return 0;
}

int cmd_gradcheck(const std::string& module)
{
    std::vector<std::string> names;
    if (module == "all") {
        names = gradcheck_modules();
    } else {
        names.push_back(module);
    }
    bool ok = true;
    for (const auto& name : names) {
        const ModuleCheck c = run_module_gradcheck(name);
        const bool pass = c.report.max_rel_err < 1e-4;
        ok = ok && pass;
        std::printf("%s %-8s max_rel_err %.3e over %zu entries (analytic %.6g, numeric %.6g) %.2f s\n",
                    pass ? "PASS" : "FAIL", name.c_str(), c.report.max_rel_err, c.report.checked, c.report.analytic,
                    c.report.numeric, c.seconds);
    }
    return ok ? 0 : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"s2m segmentation toolkit"};
    app.require_subcommand(1);

    std::string kind = "mixed", out, data, config, checkpoint, module = "all", masks;
    std::size_t count = 100, size = 64, k = 32, beta_dumps = 0;
    std::uint64_t seed = 0;
    double threshold = 0.5;

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic shape dataset");
    gen->add_option("--kind", kind, "blob, tube, irregular, multi or mixed")->capture_default_str();
    gen->add_option("--count", count, "Number of samples")->capture_default_str();
    gen->add_option("--size", size, "Square image side in pixels")->capture_default_str();
    gen->add_option("--out", out, "Output directory")->required();
    gen->add_option("--seed", seed, "Base seed")->capture_default_str();

    auto* tr = app.add_subcommand("train", "Train a model and write a run directory");
    tr->add_option("--config", config, "Run config JSON {\"model\": {...}, \"train\": {...}}")->required();
    tr->add_option("--data", data, "Dataset directory with images/ and masks/")->required();
    tr->add_option("--out", out, "Run directory")->required();
    tr->add_option("--beta-dumps", beta_dumps, "Write gate maps of this many val samples to beta/")
        ->capture_default_str();

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    ev->add_option("--data", data, "Dataset directory with images/ and masks/")->required();
    ev->add_option("--threshold", threshold, "Binarization threshold")->capture_default_str();

    auto* spec = app.add_subcommand("analyze-spectrum", "Per-image spectral energy retention");
    spec->add_option("--data", data, "Directory of images (or a dataset root)")->required();
    spec->add_option("--k", k, "Truncation size")->capture_default_str();

    auto* morph = app.add_subcommand("morph-report", "Per-mask morphology features and modulation");
    morph->add_option("--masks", masks, "Directory of masks (or a dataset root)")->required();

    auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
    gc->add_option("--module", module, "all, sstm, decoder, masl or model")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(kind, count, size, out, seed);
        if (tr->parsed()) return cmd_train(config, data, out, beta_dumps);
        if (ev->parsed()) return cmd_eval(checkpoint, data, threshold);
        if (spec->parsed()) return cmd_analyze_spectrum(data, k);
        if (morph->parsed()) return cmd_morph_report(masks);
        if (gc->parsed()) return cmd_gradcheck(module);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const TrainingAborted& e) {
        std::cerr << "training aborted at step " << e.step() << ": " << e.what() << "\n";
        return kExitNumeric;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
