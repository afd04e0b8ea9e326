#include "s2m/data.hpp"

#include "s2m/error.hpp"
#include "s2m/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace s2m {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

using Grid = std::vector<double>;  // row-major H x W

struct Harmonic {
    double amplitude;
    double phase;
    int order;
};

/// Star-shaped region r(theta) = r0 (1 + sum a_k cos(k theta + phi_k)).
struct Radial {
    double cy = 0.0, cx = 0.0, r0 = 1.0;
    std::vector<Harmonic> harmonics;

    double radius(double theta) const
    {
        double f = 1.0;
        for (const auto& h : harmonics) f += h.amplitude * std::cos(h.order * theta + h.phase);
        return r0 * f;
    }
    double max_factor() const
    {
        double f = 1.0;
        for (const auto& h : harmonics) f += std::abs(h.amplitude);
        return f;
    }
};

std::size_t rasterize(const Radial& shape, std::size_t h, std::size_t w, Grid* out)
{
    std::size_t area = 0;
    const double reach = shape.r0 * shape.max_factor() + 1.0;
    const auto lo = [](double v) { return static_cast<std::size_t>(std::max(0.0, std::floor(v))); };
    const auto hi = [](double v, std::size_t n) {
        return static_cast<std::size_t>(std::clamp(std::ceil(v) + 1.0, 0.0, static_cast<double>(n)));
    };
    for (std::size_t y = lo(shape.cy - reach); y < hi(shape.cy + reach, h); ++y) {
        for (std::size_t x = lo(shape.cx - reach); x < hi(shape.cx + reach, w); ++x) {
            const double dy = static_cast<double>(y) - shape.cy, dx = static_cast<double>(x) - shape.cx;
            const bool inside = std::hypot(dy, dx) <= shape.radius(std::atan2(dy, dx));
            if (inside) {
                ++area;
                if (out) (*out)[y * w + x] = 1.0;
            }
        }
    }
    return area;
}

std::vector<Harmonic> draw_harmonics(Rng& rng, int lo, int hi, double total, double decay)
{
    std::vector<Harmonic> hs;
    double sum = 0.0;
    for (int k = lo; k <= hi; ++k) {
        const double a = rng.uniform(0.5, 1.0) / std::pow(static_cast<double>(k), decay);
        hs.push_back({a, rng.uniform(0.0, 2.0 * kPi), k});
        sum += a;
    }
    for (auto& h : hs) h.amplitude *= total / sum;
    return hs;
}

/// Scales r0 until the rasterized area is close to target, then places the
/// shape at a random position where it fits. Returns false when it cannot fit.
bool fit_radial(Radial& shape, double target_area, std::size_t h, std::size_t w, Rng& rng)
{
    shape.r0 = std::sqrt(target_area / kPi);
    shape.cy = (h - 1) / 2.0;
    shape.cx = (w - 1) / 2.0;
    for (int it = 0; it < 6; ++it) {
        const std::size_t area = rasterize(shape, h, w, nullptr);
        if (area == 0) {
            shape.r0 *= 2.0;
            continue;
        }
        shape.r0 *= std::sqrt(target_area / static_cast<double>(area));
    }
    const double reach = shape.r0 * shape.max_factor() + 1.0;
    const double free_y = (h - 1) / 2.0 - reach, free_x = (w - 1) / 2.0 - reach;
    if (free_y < 0.0 || free_x < 0.0) return false;
    shape.cy = (h - 1) / 2.0 + rng.uniform(-free_y, free_y);
    shape.cx = (w - 1) / 2.0 + rng.uniform(-free_x, free_x);
    return true;
}

[[noreturn]] void infeasible(const ShapeSpec& spec, const std::string& why)
{
    throw ConfigError("gen_shape: size_fraction " + std::to_string(spec.size_fraction) + " infeasible for kind " +
                      std::string(shape_kind_name(spec.kind)) + ": " + why);
}

Grid gen_radial(const ShapeSpec& spec, std::size_t h, std::size_t w, Rng& rng, bool irregular)
{
    Radial shape;
    if (irregular) {
        shape.harmonics = draw_harmonics(rng, 2, 20, spec.wiggle, 0.4);
    } else {
        shape.harmonics = draw_harmonics(rng, 2, 3, spec.wiggle, 1.0);
    }
    const double target = spec.size_fraction * static_cast<double>(h * w);
    if (!fit_radial(shape, target, h, w, rng)) infeasible(spec, "shape does not fit the frame");
    Grid g(h * w, 0.0);
    rasterize(shape, h, w, &g);
    return g;
}

Grid gen_multi(const ShapeSpec& spec, std::size_t h, std::size_t w, Rng& rng)
{
    const std::size_t parts = 2 + rng.below(2);
    const double target = spec.size_fraction * static_cast<double>(h * w) / parts;
    // Greedy placement can corner itself; whole layouts are redrawn before giving up.
    for (int layout = 0; layout < 50; ++layout) {
        std::vector<Radial> placed;
        bool ok = true;
        for (std::size_t p = 0; p < parts && ok; ++p) {
            Radial shape;
            shape.harmonics = draw_harmonics(rng, 2, 3, spec.wiggle, 1.0);
            ok = false;
            for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
                if (!fit_radial(shape, target, h, w, rng)) infeasible(spec, "component does not fit the frame");
                ok = std::ranges::all_of(placed, [&](const Radial& o) {
                    return std::hypot(o.cy - shape.cy, o.cx - shape.cx) >
                           o.r0 * o.max_factor() + shape.r0 * shape.max_factor() + 2.0;
                });
            }
            if (ok) placed.push_back(shape);
        }
        if (!ok) continue;
        Grid g(h * w, 0.0);
        for (const Radial& shape : placed) rasterize(shape, h, w, &g);
        return g;
    }
    infeasible(spec, "components cannot be separated");
}

Grid gen_tube(const ShapeSpec& spec, std::size_t h, std::size_t w, Rng& rng)
{
    const double half = spec.tube_width / 2.0;
    const double margin = half + 2.0;
    const auto target = static_cast<std::size_t>(std::lround(spec.size_fraction * static_cast<double>(h * w)));
    Grid g(h * w, 0.0);
    std::size_t area = 0;
    double py = rng.uniform(h * 0.3, h * 0.7), px = rng.uniform(w * 0.3, w * 0.7);
    double heading = rng.uniform(0.0, 2.0 * kPi), curvature = 0.0;
    const std::size_t max_steps = 40 * (h + w) * 16;
    const int reach = static_cast<int>(std::ceil(half));
    for (std::size_t step = 0; area < target; ++step) {
        if (step >= max_steps) infeasible(spec, "curve could not cover the target area");
        for (int dy = -reach; dy <= reach; ++dy) {
            for (int dx = -reach; dx <= reach; ++dx) {
                const long y = std::lround(py) + dy, x = std::lround(px) + dx;
                if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w)) continue;
                if (std::hypot(y - py, x - px) > half) continue;
                double& v = g[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
                if (v == 0.0) {
                    v = 1.0;
                    ++area;
                }
            }
        }
        curvature = std::clamp(curvature + 0.02 * rng.normal(), -0.12, 0.12);
        heading += curvature;
        double ny = py + 0.5 * std::sin(heading), nx = px + 0.5 * std::cos(heading);
        if (ny < margin || ny > h - 1 - margin) {
            heading = -heading;
            ny = py + 0.5 * std::sin(heading);
        }
        if (nx < margin || nx > w - 1 - margin) {
            heading = kPi - heading;
            nx = px + 0.5 * std::cos(heading);
        }
        py = std::clamp(ny, margin, h - 1 - margin);
        px = std::clamp(nx, margin, w - 1 - margin);
    }
    return g;
}

Grid box_blur(const Grid& g, std::size_t h, std::size_t w)
{
    Grid out(h * w, 0.0);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            double s = 0.0;
            int n = 0;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const long yy = static_cast<long>(y) + dy, xx = static_cast<long>(x) + dx;
                    if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
                    s += g[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)];
                    ++n;
                }
            }
            out[y * w + x] = s / n;
        }
    }
    return out;
}

Tensor render_image(const Grid& mask, std::size_t h, std::size_t w, Rng& rng)
{
    const Grid soft = box_blur(box_blur(mask, h, w), h, w);
    struct Wave {
        double fy, fx, phase, amp;
    };
    std::vector<Wave> waves;
    for (int i = 0; i < 3; ++i) {
        waves.push_back({rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0), rng.uniform(0.0, 2.0 * kPi),
                         rng.uniform(0.03, 0.07)});
    }
    const double bg[3] = {0.42 + rng.uniform(-0.05, 0.05), 0.40 + rng.uniform(-0.05, 0.05),
                          0.38 + rng.uniform(-0.05, 0.05)};
    const double contrast = rng.uniform(0.8, 1.2);
    const double tint[3] = {0.30 * contrast, -0.12 * contrast, -0.06 * contrast};
    const double texture_gain[3] = {1.0, 0.8, 0.6};
    std::vector<double> img(3 * h * w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            double t = 0.0;
            for (const auto& wv : waves) {
                t += wv.amp * std::sin(2.0 * kPi * (wv.fy * y / h + wv.fx * x / w) + wv.phase);
            }
            for (std::size_t c = 0; c < 3; ++c) {
                const double v = bg[c] + texture_gain[c] * t + soft[y * w + x] * tint[c] + 0.02 * rng.normal();
                img[(c * h + y) * w + x] = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return Tensor::from_data({3, h, w}, std::move(img));
}

std::uint64_t fnv1a(std::string_view s)
{
    std::uint64_t hash = 1469598103934665603ULL;
    for (unsigned char c : s) {
        hash ^= c;
        hash *= 1099511628211ULL;
    }
    return hash;
}

Image tensor_to_image(const Tensor& t)
{
    const std::size_t c = t.rank() == 3 ? t.dim(0) : 1;
    const std::size_t h = t.dim(t.rank() - 2), w = t.dim(t.rank() - 1);
    auto d = t.data();
    return Image{w, h, c, std::vector<double>(d.begin(), d.end())};
}

std::string csv_number(double v)
{
    std::ostringstream out;
    out.precision(6);
    out << v;
    return out.str();
}

} // namespace

std::string_view shape_kind_name(ShapeKind kind)
{
    switch (kind) {
    case ShapeKind::blob: return "blob";
    case ShapeKind::tube: return "tube";
    case ShapeKind::irregular: return "irregular";
    case ShapeKind::multi: return "multi";
    }
    return "blob";
}

ShapeKind parse_shape_kind(std::string_view name)
{
    for (ShapeKind k : {ShapeKind::blob, ShapeKind::tube, ShapeKind::irregular, ShapeKind::multi}) {
        if (shape_kind_name(k) == name) return k;
    }
    throw ConfigError("unknown shape kind '" + std::string(name) + "' (expected blob, tube, irregular or multi)");
}

ShapeSpec random_spec(ShapeKind kind, std::uint64_t seed)
{
    Rng rng(seed ^ 0x5A3E5EEDULL);
    ShapeSpec spec;
    spec.kind = kind;
    spec.seed = seed;
    switch (kind) {
    case ShapeKind::blob:
        spec.size_fraction = rng.uniform(0.08, 0.30);
        spec.wiggle = rng.uniform(0.02, 0.06);
        break;
    case ShapeKind::tube: spec.size_fraction = rng.uniform(0.03, 0.08); break;
    case ShapeKind::irregular:
        spec.size_fraction = rng.uniform(0.08, 0.30);
        spec.wiggle = rng.uniform(0.35, 0.5);
        break;
    case ShapeKind::multi:
        spec.size_fraction = rng.uniform(0.06, 0.18);
        spec.wiggle = rng.uniform(0.02, 0.08);
        break;
    }
    return spec;
}

Sample gen_shape(const ShapeSpec& spec, std::size_t height, std::size_t width)
{
    if (height < 32 || width < 32) throw ConfigError("gen_shape: height and width must be >= 32");
    if (!(spec.size_fraction > 0.0 && spec.size_fraction < 1.0)) infeasible(spec, "must lie in (0, 1)");
    if (spec.tube_width < 2.0) throw ConfigError("gen_shape: tube_width must be >= 2");
    const double limits[] = {0.6, 0.3, 0.45, 0.3};
    if (spec.size_fraction > limits[static_cast<int>(spec.kind)]) {
        infeasible(spec, "above the kind limit " + csv_number(limits[static_cast<int>(spec.kind)]));
    }
    ShapeSpec s = spec;
    if (s.wiggle == 0.0) s.wiggle = s.kind == ShapeKind::irregular ? 0.45 : 0.04;
    if (s.wiggle < 0.0 || s.wiggle > 0.7) throw ConfigError("gen_shape: wiggle must be in [0, 0.7]");

    Rng rng(s.seed);
    Grid mask;
    switch (s.kind) {
    case ShapeKind::blob: mask = gen_radial(s, height, width, rng, false); break;
    case ShapeKind::irregular: mask = gen_radial(s, height, width, rng, true); break;
    case ShapeKind::tube: mask = gen_tube(s, height, width, rng); break;
    case ShapeKind::multi: mask = gen_multi(s, height, width, rng); break;
    }
    Sample out;
    out.image = render_image(mask, height, width, rng);
    out.mask = Tensor::from_data({height, width}, std::move(mask));
    out.id = std::string(shape_kind_name(s.kind)) + "_" + std::to_string(s.seed);
    return out;
}

std::vector<GeneratedSample> generate_corpus(ShapeKind kind, std::size_t count, std::size_t height, std::size_t width,
                                             std::uint64_t base_seed)
{
    std::vector<GeneratedSample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const ShapeSpec spec = random_spec(kind, base_seed + i);
        Sample s = gen_shape(spec, height, width);
        const MorphFeatures f = morph_features(s.mask);
        out.push_back({std::move(s), spec, f});
    }
    return out;
}

std::vector<GeneratedSample> generate_mixed_corpus(std::size_t count, std::size_t height, std::size_t width,
                                                   std::uint64_t base_seed)
{
    const ShapeKind kinds[] = {ShapeKind::blob, ShapeKind::tube, ShapeKind::irregular, ShapeKind::multi};
    std::vector<GeneratedSample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const ShapeSpec spec = random_spec(kinds[i % 4], base_seed + i);
        Sample s = gen_shape(spec, height, width);
        const MorphFeatures f = morph_features(s.mask);
        out.push_back({std::move(s), spec, f});
    }
    return out;
}

void save_dataset(const std::string& root, const std::vector<GeneratedSample>& samples)
{
    std::error_code ec;
    fs::create_directories(fs::path(root) / "images", ec);
    fs::create_directories(fs::path(root) / "masks", ec);
    if (ec) throw DataError("cannot create dataset directories under '" + root + "': " + ec.message());
    std::ofstream manifest(fs::path(root) / "manifest.csv");
    if (!manifest) throw DataError("cannot write manifest.csv under '" + root + "'");
    manifest << "stem,kind,seed,s,tau,c,iota\n";
    for (const auto& g : samples) {
        write_png((fs::path(root) / "images" / (g.sample.id + ".png")).string(), tensor_to_image(g.sample.image));
        write_png((fs::path(root) / "masks" / (g.sample.id + ".png")).string(), tensor_to_image(g.sample.mask));
        manifest << g.sample.id << ',' << shape_kind_name(g.spec.kind) << ',' << g.spec.seed << ','
                 << csv_number(g.features.scale) << ',' << csv_number(g.features.tubularity) << ','
                 << csv_number(g.features.compactness) << ',' << csv_number(g.features.irregularity) << '\n';
    }
}

std::vector<Sample> load_dataset(const std::string& root, std::size_t height, std::size_t width)
{
    const fs::path images = fs::path(root) / "images", masks = fs::path(root) / "masks";
    const auto is_image = [](const fs::path& p) {
        std::string ext = p.extension().string();
        std::ranges::transform(ext, ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        return ext == ".png" || ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
    };
    const auto scan = [&](const fs::path& dir) {
        std::map<std::string, fs::path> found;
        if (!fs::exists(dir)) return found;
        if (!fs::is_directory(dir)) throw DataError("'" + dir.string() + "' is not a directory");
        for (const auto& e : fs::directory_iterator(dir)) {
            if (e.is_regular_file() && is_image(e.path())) found[e.path().stem().string()] = e.path();
        }
        return found;
    };
    if (!fs::exists(root)) throw DataError("dataset directory '" + root + "' does not exist");
    const auto image_files = scan(images), mask_files = scan(masks);

    std::vector<std::string> unmatched;
    for (const auto& [stem, _] : image_files) {
        if (!mask_files.contains(stem)) unmatched.push_back(stem + " (no mask)");
    }
    for (const auto& [stem, _] : mask_files) {
        if (!image_files.contains(stem)) unmatched.push_back(stem + " (no image)");
    }
    if (!unmatched.empty()) {
        std::string msg = "unmatched dataset stems in '" + root + "':";
        for (const auto& u : unmatched) msg += " " + u;
        throw DataError(msg);
    }

    std::vector<Sample> out;
    for (const auto& [stem, image_path] : image_files) {
        const Image img = resize_bilinear(to_rgb(read_image(image_path.string())), height, width);
        const Image msk = resize_nearest(to_gray(read_image(mask_files.at(stem).string())), height, width);
        std::vector<double> m(msk.values.size());
        std::ranges::transform(msk.values, m.begin(), [](double v) { return v >= 0.5 ? 1.0 : 0.0; });
        out.push_back({Tensor::from_data({3, height, width}, img.values), Tensor::from_data({height, width}, m), stem});
    }
    return out;
}

AugmentDraw draw_augment(Rng& rng, bool square)
{
    AugmentDraw d;
    d.flip_h = rng.bernoulli(0.5);
    d.flip_v = rng.bernoulli(0.5);
    d.rot90 = static_cast<int>(rng.below(4));
    if (!square) d.rot90 &= 2;
    return d;
}

Sample apply_augment(const Sample& s, const AugmentDraw& draw)
{
    const std::size_t h = s.mask.dim(0), w = s.mask.dim(1);
    const int turns = ((draw.rot90 % 4) + 4) % 4;
    if (turns % 2 == 1 && h != w) throw ShapeError("augment: odd quarter turns need a square sample");
    const std::size_t channels = s.image.dim(0);
    // Maps an output pixel back to its source pixel.
    const auto source = [&](std::size_t y, std::size_t x) {
        std::size_t sy = y, sx = x;
        for (int t = 0; t < turns; ++t) {
            // Inverse of one counter-clockwise quarter turn on a square grid.
            const std::size_t ny = sx, nx = w - 1 - sy;
            sy = ny;
            sx = nx;
        }
        if (draw.flip_v) sy = h - 1 - sy;
        if (draw.flip_h) sx = w - 1 - sx;
        return std::pair{sy, sx};
    };
    std::vector<double> img(s.image.numel()), msk(s.mask.numel());
    auto si = s.image.data();
    auto sm = s.mask.data();
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const auto [sy, sx] = source(y, x);
            msk[y * w + x] = sm[sy * w + sx];
            for (std::size_t c = 0; c < channels; ++c) img[(c * h + y) * w + x] = si[(c * h + sy) * w + sx];
        }
    }
    return {Tensor::from_data(s.image.shape(), std::move(img), s.image.dtype()),
            Tensor::from_data(s.mask.shape(), std::move(msk), s.mask.dtype()), s.id};
}

Sample augment(const Sample& s, Rng& rng) { return apply_augment(s, draw_augment(rng, s.mask.dim(0) == s.mask.dim(1))); }

std::pair<std::vector<Sample>, std::vector<Sample>> split_train_val(const std::vector<Sample>& samples,
                                                                    double val_fraction)
{
    if (samples.size() < 2) throw DataError("split: need at least two samples for a train/val split");
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::ranges::sort(order, [&](std::size_t a, std::size_t b) {
        const auto ha = fnv1a(samples[a].id), hb = fnv1a(samples[b].id);
        return ha != hb ? ha < hb : samples[a].id < samples[b].id;
    });
    auto n_val = static_cast<std::size_t>(std::lround(val_fraction * static_cast<double>(samples.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, samples.size() - 1);
    std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    std::ranges::sort(val_idx);
    std::ranges::sort(train_idx);
    std::pair<std::vector<Sample>, std::vector<Sample>> out;
    for (std::size_t i : train_idx) out.first.push_back(samples[i]);
    for (std::size_t i : val_idx) out.second.push_back(samples[i]);
    return out;
}

std::pair<Tensor, Tensor> make_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices,
                                     Dtype dtype)
{
    if (indices.empty()) throw DataError("make_batch: empty batch");
    const Sample& first = samples.at(indices.front());
    const std::size_t c = first.image.dim(0), h = first.mask.dim(0), w = first.mask.dim(1);
    std::vector<double> x, y;
    x.reserve(indices.size() * c * h * w);
    y.reserve(indices.size() * h * w);
    for (std::size_t i : indices) {
        const Sample& s = samples.at(i);
        if (s.image.shape() != Shape{c, h, w} || s.mask.shape() != Shape{h, w}) {
            throw ShapeError("make_batch: sample " + s.id + " has shape " + shape_str(s.image.shape()) +
                             ", expected " + shape_str({c, h, w}));
        }
        auto di = s.image.data();
        auto dm = s.mask.data();
        x.insert(x.end(), di.begin(), di.end());
        y.insert(y.end(), dm.begin(), dm.end());
    }
    return {Tensor::from_data({indices.size(), c, h, w}, std::move(x), dtype),
            Tensor::from_data({indices.size(), 1, h, w}, std::move(y), dtype)};
}

} // namespace s2m
