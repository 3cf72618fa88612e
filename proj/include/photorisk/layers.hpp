#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "photorisk/rng.hpp"
#include "photorisk/tensor.hpp"

namespace photorisk::nn {

enum class Mode { Train, Infer };

// One learnable tensor with its gradient and Adam moment buffers.
struct Param {
    std::string name;
    Tensor value, grad, adam_m, adam_v;

    Param(std::string n, Tensor init)
        : name(std::move(n)),
          value(std::move(init)),
          grad(Tensor::zeros(value.shape())),
          adam_m(Tensor::zeros(value.shape())),
          adam_v(Tensor::zeros(value.shape())) {}

    void zero_grad() { grad.fill(0.0); }
};

struct AdamState {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long step_count = 0;
};

// Standard Adam with bias correction; zeroes every gradient afterwards.
void adam_step(const std::vector<Param*>& params, AdamState& state);

// He-normal fill: N(0, sqrt(2/fan_in)).
void he_init(Tensor& t, std::size_t fan_in, Rng& rng);

// ---------------------------------------------------------------------------
// Layers. Spatial ops take [N,C,H,W]; dense ops take [N,F]. Each instance
// caches what its backward pass needs, so forward/backward pairs must run
// on the same instance without interleaving.

// 3x3 cross-correlation, stride 1, zero padding 1 (preserves H and W).
class Conv2d {
public:
    Conv2d(std::size_t in_channels, std::size_t out_channels, std::string name);

    Tensor forward(const Tensor& x);
    // Returns grad wrt input; accumulates weight/bias grads.
    Tensor backward(const Tensor& grad_out);

    void init(Rng& rng);  // He weights, zero bias

    std::size_t in_channels() const { return in_ch_; }
    std::size_t out_channels() const { return out_ch_; }

    Param weight;  // [out, in, 3, 3]
    Param bias;    // [out]

private:
    std::size_t in_ch_, out_ch_;
    Tensor x_;
};

class BatchNorm2d {
public:
    BatchNorm2d(std::size_t channels, std::string name);

    // Train mode normalizes by batch statistics (requires N >= 2) and
    // updates running stats with momentum 0.1; infer mode uses running stats.
    Tensor forward(const Tensor& x, Mode mode);
    Tensor backward(const Tensor& grad_out);

    std::size_t channels() const { return channels_; }

    Param gamma;  // scale [C]
    Param beta;   // shift [C]
    Tensor running_mean, running_var;  // persisted with the weights, not trained
    double momentum = 0.1;
    double eps = 1e-5;

private:
    std::size_t channels_;
    Mode mode_ = Mode::Infer;
    Tensor xhat_;                  // normalized input
    std::vector<double> inv_std_;  // per channel, for the mode used in forward
};

class ReLU {
public:
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out);

private:
    Tensor x_;
};

// 2x2 max pooling, stride 2. Gradient routes to the first-encountered
// maximum (row-major scan within each window).
class MaxPool2x2 {
public:
    Tensor forward(const Tensor& x);  // spatial dims must be even
    Tensor backward(const Tensor& grad_out);

private:
    std::vector<std::size_t> argmax_;     // flat input index per output element
    std::vector<std::size_t> in_shape_;
};

class Dense {
public:
    Dense(std::size_t in_features, std::size_t out_features, std::string name);

    Tensor forward(const Tensor& x);  // [N,in] -> [N,out]
    Tensor backward(const Tensor& grad_out);

    void init(Rng& rng);

    std::size_t in_features() const { return in_; }
    std::size_t out_features() const { return out_; }

    Param weight;  // [out, in]
    Param bias;    // [out]

private:
    std::size_t in_, out_;
    Tensor x_;
};

// Inverted dropout: train mode zeroes with probability p and scales
// survivors by 1/(1-p); infer mode is the identity.
class Dropout {
public:
    explicit Dropout(double p);

    Tensor forward(const Tensor& x, Mode mode, Rng* rng);
    Tensor backward(const Tensor& grad_out);

    double p() const { return p_; }

private:
    double p_;
    bool identity_ = true;
    Tensor scale_mask_;  // per-element multiplier when active
};

class Sigmoid {
public:
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out);

private:
    Tensor y_;
};

// Mean squared error over flat tensors of equal length.
// Returns {loss, d(loss)/d(pred)} with gradient 2*(pred-target)/N.
std::pair<double, Tensor> mse_loss(const Tensor& pred, const Tensor& target);

}  // namespace photorisk::nn
