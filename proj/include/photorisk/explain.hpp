#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "photorisk/dualnet.hpp"
#include "photorisk/synthdata.hpp"

namespace photorisk::xai {

// Saliency map over the full image, normalized so max == 1 unless all-zero.
struct Heatmap {
    std::size_t size = 0;
    std::vector<double> values;  // size*size, row-major, in [0,1]
    std::string source_layer;

    double at(std::size_t row, std::size_t col) const { return values[row * size + col]; }
};

struct ShapAttribution {
    double phi_brightness = 0.0;
    double phi_variance = 0.0;
    double base_value = 0.0;
    double prediction = 0.0;
};

// A scorer over the two aggregate inputs (lux, eye variance).
using Scorer = std::function<double(double, double)>;

// Saliency of the risk score wrt the last conv block's activations:
// channel weights are the spatial means of d(score)/dA, the weighted sum is
// ReLU-rectified, bilinearly upsampled to the image size, and max-normalized.
// Leaves the network's gradients zeroed.
Heatmap gradcam(net::DualNet& net, const synth::EnvImage& image, double eye_var_norm);

// Bilinear resize with half-pixel centers; `values` is in_size x in_size.
std::vector<double> upsample_bilinear(const std::vector<double>& values, std::size_t in_size,
                                      std::size_t out_size);

// Exact two-player Shapley attribution of f(b,v) against a baseline (b0,v0):
// four coalition evaluations, no sampling. Efficiency holds to rounding.
ShapAttribution shap_exact(const Scorer& f, double b, double v, double b0, double v0);

// (lux, variance) -> predict(net, lux, variance); deterministic because
// predict synthesizes its image from the canonical seed in the weights.
Scorer model_scorer(net::DualNet& net);

// Mean |phi| per feature over all samples of ds, with the dataset's mean
// (lux, variance) as the Shapley baseline.
std::pair<double, double> mean_abs_shap(net::DualNet& net, const synth::Dataset& ds);

// Gray image blended toward a blue->red ramp by heat, written as binary PPM.
void render_heatmap_overlay(const Heatmap& heatmap, const synth::EnvImage& image,
                            const std::filesystem::path& path);

struct ShapRow {
    std::size_t index = 0;
    double lux = 0.0;
    double eye_variance = 0.0;
    ShapAttribution shap;
};

// CSV with header index,lux,eye_variance,phi_brightness,phi_variance,base_value,prediction
void export_shap_csv(const std::vector<ShapRow>& rows, const std::filesystem::path& path);

}  // namespace photorisk::xai
