#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "photorisk/rng.hpp"

namespace photorisk::synth {

// Generation ranges and loader bounds.
inline constexpr double kLuxGenMin = 300.0;
inline constexpr double kLuxGenMax = 1200.0;
inline constexpr double kLuxLoadMin = 0.0;
inline constexpr double kLuxLoadMax = 20000.0;
inline constexpr double kVarGenMin = 2.0;
inline constexpr double kVarGenMax = 10.0;
inline constexpr double kVarLoadMax = 100.0;
inline constexpr double kLabelNoiseSigma = 0.05;
inline constexpr std::size_t kImageSize = 128;

// Square grayscale frame in [0,1] plus a boolean mask marking the
// synthesized light-source patches. The mask never changes under
// augmentation; it exists so saliency maps can be scored against the
// known light positions.
struct EnvImage {
    std::size_t size = kImageSize;
    std::vector<double> pixels;       // size*size, row-major
    std::vector<std::uint8_t> light_mask;  // 0/1, same layout

    EnvImage() = default;
    explicit EnvImage(std::size_t n, double fill = 0.0)
        : size(n), pixels(n * n, fill), light_mask(n * n, 0) {}

    double& at(std::size_t row, std::size_t col) { return pixels[row * size + col]; }
    double at(std::size_t row, std::size_t col) const { return pixels[row * size + col]; }
    bool masked(std::size_t row, std::size_t col) const {
        return light_mask[row * size + col] != 0;
    }
    std::size_t mask_count() const;

    bool operator==(const EnvImage&) const = default;
};

struct AugmentConfig {
    double noise_sigma = 0.05;
    double jitter_fraction = 0.10;
    double blur_sigma_min = 0.5;
    double blur_sigma_max = 1.5;
    double blur_probability = 0.5;

    void validate() const;  // throws std::invalid_argument

    bool operator==(const AugmentConfig&) const = default;
};

struct Sample {
    EnvImage image;
    double lux = 0.0;
    double eye_variance = 0.0;
    double risk_label = 0.0;
    // Generation metadata, echoed into the manifest.
    std::uint64_t seed = 0;         // per-sample generator seed
    double noise_sigma = 0.0;
    double jitter_fraction = 0.0;
    double blur_sigma = 0.0;        // 0 when blur was skipped

    bool operator==(const Sample&) const = default;
};

struct Dataset {
    std::vector<Sample> samples;
    std::uint64_t seed = 0;
    AugmentConfig augment;
    double split_fraction = 0.8;    // leading fraction used for training

    std::size_t train_count() const {
        return static_cast<std::size_t>(static_cast<double>(samples.size()) * split_fraction);
    }

    bool operator==(const Dataset&) const = default;
};

// clamp((lux - 300) / 900, 0, 1)
double normalize_brightness(double lux);
// clamp((v - 2) / 8, 0, 1)
double normalize_variance(double eye_variance);
// clamp(0.6*b + 0.4*v + noise, 0, 1); callers draw noise ~ N(0, 0.05).
double risk_label(double b_norm, double v_norm, double noise);

// Background 0.1 + 0.7*normalize_brightness(lux), 1..4 elliptical light
// patches (axis lengths 8-32 px) at background+0.25, then N(0, 0.02)
// texture noise. The draw count is independent of lux, so a fixed rng
// state yields the same geometry at every brightness.
EnvImage gen_image(double lux, Rng& rng);

EnvImage add_gaussian_noise(const EnvImage& img, double sigma, Rng& rng);
// One multiplicative factor from [1-fraction, 1+fraction] for the whole frame.
EnvImage jitter_brightness(const EnvImage& img, double fraction, Rng& rng);
// Separable Gaussian, kernel radius ceil(3*sigma), clamped borders.
EnvImage gaussian_blur(const EnvImage& img, double sigma);

Dataset gen_dataset(std::size_t n, std::uint64_t seed, const AugmentConfig& config = {});

// Directory layout: manifest.csv + one PGM per image (plus *_mask.pgm) +
// dataset.json. Values are quantized at generation (pixels to 1/255,
// reals to 6 decimals) so load(save(ds)) == ds holds bit-exactly.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

// Nearest double to v printed with 6 decimal digits; the CSV quantizer.
double quantize6(double v);

}  // namespace photorisk::synth
