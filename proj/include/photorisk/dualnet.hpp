#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "photorisk/layers.hpp"
#include "photorisk/rng.hpp"
#include "photorisk/synthdata.hpp"
#include "photorisk/tensor.hpp"

namespace photorisk::net {

using nn::Mode;
using nn::Param;
using nn::Tensor;

// Seed used by predict() to synthesize the canonical image for a lux value;
// stored in the weight file so saved models keep their exact behavior.
inline constexpr std::uint64_t kCanonicalImageSeed = 424242;

struct ModelConfig {
    std::size_t image_size = synth::kImageSize;        // square, divisible by 8
    std::vector<std::size_t> conv_channels = {8, 16, 32};
    std::size_t image_feature_dim = 32;
    std::size_t eye_input_dim = 1;
    std::vector<std::size_t> eye_hidden = {64, 32};
    std::size_t fusion_hidden = 32;
    double dropout_p = 0.3;
    std::uint64_t seed = 42;

    void validate() const;  // throws std::invalid_argument
    // width after the three 2x2 pools, e.g. 128 -> 16
    std::size_t pooled_size() const { return image_size / 8; }
    std::size_t flatten_dim() const {
        return conv_channels.back() * pooled_size() * pooled_size();
    }

    bool operator==(const ModelConfig&) const = default;
};

// The full dual-branch model: three conv blocks + dense on the image side,
// a two-layer MLP on the eye side, concatenated into the fusion head.
// Construction He-initializes every weight deterministically from config.seed.
class DualNet {
public:
    explicit DualNet(ModelConfig config);

    // images [N,1,S,S], eye [N,1], both already normalized; returns scores [N].
    // Train mode needs N >= 2 (batchnorm) and an rng for dropout.
    Tensor forward(const Tensor& images, const Tensor& eye, Mode mode, Rng* rng = nullptr);

    // grad_scores [N] = d(loss)/d(score). Accumulates parameter gradients and
    // returns (grad_images, grad_eye). Must follow a forward() call.
    std::pair<Tensor, Tensor> backward(const Tensor& grad_scores);

    // Single-sample inference convenience.
    double infer_one(const synth::EnvImage& image, double eye_var_norm);

    std::vector<Param*> params();  // fixed order, matches the forward graph
    // Everything persisted: parameters plus batchnorm running stats.
    std::vector<std::pair<std::string, Tensor*>> named_tensors();
    std::size_t parameter_count();  // trainable doubles
    void zero_grads();

    const ModelConfig& config() const { return config_; }

    // Activations of the last conv block (post-pool, [N, C3, S/8, S/8]) from
    // the most recent forward, and d(score_sum)/d(those activations) from the
    // most recent backward. Used by the saliency code.
    const Tensor& conv_features() const { return conv_features_; }
    const Tensor& conv_feature_grad() const { return conv_feature_grad_; }

    std::uint64_t canonical_image_seed = kCanonicalImageSeed;

private:
    ModelConfig config_;

    nn::Conv2d conv1_, conv2_, conv3_;
    nn::BatchNorm2d bn1_, bn2_, bn3_;
    nn::ReLU relu1_, relu2_, relu3_, img_relu_, eye_relu1_, eye_relu2_, fusion_relu_;
    nn::MaxPool2x2 pool1_, pool2_, pool3_;
    nn::Dense img_dense_, eye_dense1_, eye_dense2_, fusion_dense1_, fusion_dense2_;
    nn::Dropout eye_drop1_, eye_drop2_, fusion_drop_;
    nn::Sigmoid sigmoid_;

    Tensor conv_features_, conv_feature_grad_;
    std::size_t last_batch_ = 0;
};

struct EpochStats {
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_binary_accuracy = 0.0;

    bool operator==(const EpochStats&) const = default;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    std::size_t best_epoch = 0;     // 0-based index of the restored weights
    std::size_t stopped_epoch = 0;  // 0-based index of the last epoch run

    bool operator==(const TrainReport&) const = default;
};

struct TrainOptions {
    std::size_t epochs_max = 100;
    std::size_t batch_size = 32;
    std::size_t patience = 10;
};

// Splits ds by its split_fraction (train prefix, validation suffix), shuffles
// the train split each epoch, minimizes MSE with Adam, early-stops when the
// validation loss has not improved for `patience` consecutive epochs, and
// restores the best epoch's weights. Deterministic given config.seed.
TrainReport train(DualNet& net, const synth::Dataset& ds, const TrainOptions& opts = {});

struct Metrics {
    double mse = 0.0;
    double binary_accuracy = 0.0;
    double band_accuracy = 0.0;
};

// 0: score < 0.4, 1: 0.4 <= score < 0.7, 2: score >= 0.7
int score_band_index(double score);

// Metric definitions shared by evaluate(); exposed so predictions from any
// source can be scored.
Metrics compute_metrics(const std::vector<double>& preds, const std::vector<double>& labels);

Metrics evaluate(DualNet& net, const synth::Dataset& ds);

// Batch inference over dataset samples, in order.
std::vector<double> predict_dataset(DualNet& net, const synth::Dataset& ds);

// Synthesizes the canonical image for `lux` (seed recorded in the weights),
// normalizes both inputs, and runs infer-mode forward.
double predict(DualNet& net, double lux, double eye_var);

// Weight file: u64 little-endian header length, JSON header (format version,
// config, canonical seed, tensor directory, payload checksum), then all named
// tensors as raw little-endian doubles. Round-trips bit-exactly.
void save_weights(DualNet& net, const std::string& path);
DualNet load_weights(const std::string& path);

}  // namespace photorisk::net
