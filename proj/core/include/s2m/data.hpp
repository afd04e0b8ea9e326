#pragma once

#include "s2m/masl.hpp"
#include "s2m/rng.hpp"
#include "s2m/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace s2m {

enum class ShapeKind { blob, tube, irregular, multi };

std::string_view shape_kind_name(ShapeKind kind);
/// Accepts blob, tube, irregular, multi. Throws ConfigError otherwise.
ShapeKind parse_shape_kind(std::string_view name);

struct ShapeSpec {
    ShapeKind kind = ShapeKind::blob;
    double size_fraction = 0.2;  // target foreground area / HW, in (0, 1)
    double wiggle = 0.0;         // boundary perturbation amplitude; 0 picks the kind default
    std::uint64_t seed = 0;
    double tube_width = 3.0;     // pixels, >= 2 so erosion leaves a core
};

struct Sample {
    Tensor image;  // [3, H, W] in [0, 1]
    Tensor mask;   // [H, W] binary
    std::string id;
};

/// Kind-dependent random size fraction and wiggle, drawn from seed.
ShapeSpec random_spec(ShapeKind kind, std::uint64_t seed);

/// Synthetic sample: mask of the requested morphology, image = smoothed mask
/// tint over a low-frequency textured background plus pixel noise.
/// Deterministic per spec. Throws ConfigError when the size cannot be met.
Sample gen_shape(const ShapeSpec& spec, std::size_t height, std::size_t width);

struct GeneratedSample {
    Sample sample;
    ShapeSpec spec;
    MorphFeatures features;
};

/// count samples of one kind with seeds base_seed, base_seed + 1, ...
std::vector<GeneratedSample> generate_corpus(ShapeKind kind, std::size_t count, std::size_t height, std::size_t width,
                                             std::uint64_t base_seed);
/// Kinds cycle blob, tube, irregular, multi.
std::vector<GeneratedSample> generate_mixed_corpus(std::size_t count, std::size_t height, std::size_t width,
                                                   std::uint64_t base_seed);

/// Writes <root>/images/<id>.png, <root>/masks/<id>.png and <root>/manifest.csv.
void save_dataset(const std::string& root, const std::vector<GeneratedSample>& samples);

/// Reads matching stems from <root>/images and <root>/masks (PNG, PGM or PPM),
/// sorted by stem. Images are resized bilinearly, masks by nearest neighbour
/// and thresholded at 0.5. Throws DataError listing unmatched stems.
std::vector<Sample> load_dataset(const std::string& root, std::size_t height, std::size_t width);

struct AugmentDraw {
    bool flip_h = false;
    bool flip_v = false;
    int rot90 = 0;  // counter-clockwise quarter turns, 0..3
};

/// flip_h and flip_v with p = 0.5, uniform quarter turns (even turns only for non-square inputs).
AugmentDraw draw_augment(Rng& rng, bool square = true);
/// Applies flips then the rotation, identically to image and mask.
Sample apply_augment(const Sample& s, const AugmentDraw& draw);
Sample augment(const Sample& s, Rng& rng);

/// Deterministic split: samples ordered by a hash of their id, the first
/// round(fraction * n) (at least one) go to validation.
std::pair<std::vector<Sample>, std::vector<Sample>> split_train_val(const std::vector<Sample>& samples,
                                                                    double val_fraction);

/// Stacks images to [B,3,H,W] and masks to [B,1,H,W].
std::pair<Tensor, Tensor> make_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices,
                                     Dtype dtype);

} // namespace s2m
