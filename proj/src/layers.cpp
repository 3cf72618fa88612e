#include "photorisk/layers.hpp"

#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace photorisk::nn {

void adam_step(const std::vector<Param*>& params, AdamState& state) {
    state.step_count += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    for (Param* p : params) {
        double* val = p->value.data();
        double* g = p->grad.data();
        double* m = p->adam_m.data();
        double* v = p->adam_v.data();
        const std::size_t n = p->value.size();
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            val[i] -= state.lr * mhat / (std::sqrt(vhat) + state.epsilon);
        }
        p->zero_grad();
    }
}

void he_init(Tensor& t, std::size_t fan_in, Rng& rng) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    double* d = t.data();
    for (std::size_t i = 0; i < t.size(); ++i) d[i] = rng.normal(0.0, stddev);
}

// ---------------------------------------------------------------------- Conv2d
//
// The hot loops below fuse all three kw taps into one pass per row so each
// loaded element feeds three FMAs; edge columns are peeled off. grad_input
// uses the transposed-correlation form so writes stay independent and the
// compiler can vectorize. Spatial dims must be >= 2.

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::string name)
    : weight(name + ".weight", Tensor::zeros({out_channels, in_channels, 3, 3})),
      bias(name + ".bias", Tensor::zeros({out_channels})),
      in_ch_(in_channels),
      out_ch_(out_channels),
      x_(Tensor::zeros({1})) {}

void Conv2d::init(Rng& rng) {
    he_init(weight.value, in_ch_ * 9, rng);
    bias.value.fill(0.0);
}

Tensor Conv2d::forward(const Tensor& x) {
    if (x.rank() != 4 || x.dim(1) != in_ch_)
        throw std::invalid_argument("conv input must be [N," + std::to_string(in_ch_) + ",H,W]");
    const std::size_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
    if (H < 2 || W < 2) throw std::invalid_argument("conv needs spatial dims >= 2");
    x_ = x;
    Tensor out = Tensor::zeros({N, out_ch_, H, W});

    const double* xd = x.data();
    double* od = out.data();
    const double* wd = weight.value.data();
    const double* bd = bias.value.data();
    const std::size_t plane = H * W;

    for (std::size_t n = 0; n < N; ++n) {
        const double* xn = xd + n * in_ch_ * plane;
        double* on = od + n * out_ch_ * plane;
        for (std::size_t co = 0; co < out_ch_; ++co) {
            double* oplane = on + co * plane;
            const double b = bd[co];
            for (std::size_t i = 0; i < plane; ++i) oplane[i] = b;
            for (std::size_t ci = 0; ci < in_ch_; ++ci) {
                const double* xplane = xn + ci * plane;
                const double* w9 = wd + (co * in_ch_ + ci) * 9;
                for (int kh = 0; kh < 3; ++kh) {
                    // input row ih = oh - 1 + kh must stay in [0, H)
                    const std::size_t oh_lo = (kh == 0) ? 1 : 0;
                    const std::size_t oh_hi = (kh == 2) ? H - 1 : H;
                    const double w0 = w9[kh * 3], w1 = w9[kh * 3 + 1], w2 = w9[kh * 3 + 2];
                    for (std::size_t oh = oh_lo; oh < oh_hi; ++oh) {
                        const double* xrow = xplane + (oh - 1 + kh) * W;
                        double* orow = oplane + oh * W;
                        orow[0] += w1 * xrow[0] + w2 * xrow[1];
                        for (std::size_t ow = 1; ow + 1 < W; ++ow)
                            orow[ow] += w0 * xrow[ow - 1] + w1 * xrow[ow] + w2 * xrow[ow + 1];
                        orow[W - 1] += w0 * xrow[W - 2] + w1 * xrow[W - 1];
                    }
                }
            }
        }
    }
    return out;
}

Tensor Conv2d::backward(const Tensor& grad_out) {
    const std::size_t N = x_.dim(0), H = x_.dim(2), W = x_.dim(3);
    if (grad_out.rank() != 4 || grad_out.dim(0) != N || grad_out.dim(1) != out_ch_ ||
        grad_out.dim(2) != H || grad_out.dim(3) != W)
        throw std::invalid_argument("conv grad_out shape mismatch");

    Tensor grad_in = Tensor::zeros(x_.shape());
    const double* xd = x_.data();
    const double* gd = grad_out.data();
    double* gid = grad_in.data();
    const double* wd = weight.value.data();
    double* gwd = weight.grad.data();
    double* gbd = bias.grad.data();
    const std::size_t plane = H * W;

    for (std::size_t n = 0; n < N; ++n) {
        const double* xn = xd + n * in_ch_ * plane;
        const double* gn = gd + n * out_ch_ * plane;
        double* gin = gid + n * in_ch_ * plane;
        for (std::size_t co = 0; co < out_ch_; ++co) {
            const double* gplane = gn + co * plane;
            double bsum = 0.0;
            for (std::size_t i = 0; i < plane; ++i) bsum += gplane[i];
            gbd[co] += bsum;
            for (std::size_t ci = 0; ci < in_ch_; ++ci) {
                const double* xplane = xn + ci * plane;
                double* giplane = gin + ci * plane;
                const double* w9 = wd + (co * in_ch_ + ci) * 9;
                double* gw9 = gwd + (co * in_ch_ + ci) * 9;
                for (int kh = 0; kh < 3; ++kh) {
                    const double w0 = w9[kh * 3], w1 = w9[kh * 3 + 1], w2 = w9[kh * 3 + 2];
                    // grad_input: gin[ih][iw] += sum_kw w[kh][kw] * gout[ih+1-kh][iw+1-kw]
                    const std::size_t ih_lo = (kh == 2) ? 1 : 0;
                    const std::size_t ih_hi = (kh == 0) ? H - 1 : H;
                    for (std::size_t ih = ih_lo; ih < ih_hi; ++ih) {
                        const double* grow = gplane + (ih + 1 - kh) * W;
                        double* girow = giplane + ih * W;
                        girow[0] += w0 * grow[1] + w1 * grow[0];
                        for (std::size_t iw = 1; iw + 1 < W; ++iw)
                            girow[iw] += w0 * grow[iw + 1] + w1 * grow[iw] + w2 * grow[iw - 1];
                        girow[W - 1] += w1 * grow[W - 1] + w2 * grow[W - 2];
                    }
                    // grad_weight: gw[kh][kw] += sum gout[oh][ow] * x[oh-1+kh][ow-1+kw]
                    const std::size_t oh_lo = (kh == 0) ? 1 : 0;
                    const std::size_t oh_hi = (kh == 2) ? H - 1 : H;
                    double a0 = 0.0, a1 = 0.0, a2 = 0.0;
                    for (std::size_t oh = oh_lo; oh < oh_hi; ++oh) {
                        const double* xrow = xplane + (oh - 1 + kh) * W;
                        const double* grow = gplane + oh * W;
                        for (std::size_t ow = 1; ow + 1 < W; ++ow) {
                            a0 += grow[ow] * xrow[ow - 1];
                            a1 += grow[ow] * xrow[ow];
                            a2 += grow[ow] * xrow[ow + 1];
                        }
                        a0 += grow[W - 1] * xrow[W - 2];
                        a1 += grow[0] * xrow[0] + grow[W - 1] * xrow[W - 1];
                        a2 += grow[0] * xrow[1];
                    }
                    gw9[kh * 3] += a0;
                    gw9[kh * 3 + 1] += a1;
                    gw9[kh * 3 + 2] += a2;
                }
            }
        }
    }
    return grad_in;
}

// ------------------------------------------------------------------ BatchNorm2d

BatchNorm2d::BatchNorm2d(std::size_t channels, std::string name)
    : gamma(name + ".gamma", Tensor({channels}, std::vector<double>(channels, 1.0))),
      beta(name + ".beta", Tensor::zeros({channels})),
      running_mean(Tensor::zeros({channels})),
      running_var(Tensor({channels}, std::vector<double>(channels, 1.0))),
      channels_(channels),
      xhat_(Tensor::zeros({1})) {}

Tensor BatchNorm2d::forward(const Tensor& x, Mode mode) {
    if (x.rank() != 4 || x.dim(1) != channels_)
        throw std::invalid_argument("batchnorm input must be [N,C,H,W]");
    const std::size_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
    if (mode == Mode::Train && N < 2)
        throw std::invalid_argument("batchnorm training needs batch size >= 2");
    mode_ = mode;

    const std::size_t plane = H * W;
    const std::size_t stride = channels_ * plane;
    const double m = static_cast<double>(N * plane);

    xhat_ = Tensor::zeros(x.shape());
    inv_std_.assign(channels_, 0.0);
    Tensor out = Tensor::zeros(x.shape());

    const double* xd = x.data();
    double* xh = xhat_.data();
    double* od = out.data();

    for (std::size_t c = 0; c < channels_; ++c) {
        double mean, var;
        if (mode == Mode::Train) {
            double sum = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                const double* p = xd + n * stride + c * plane;
                for (std::size_t i = 0; i < plane; ++i) sum += p[i];
            }
            mean = sum / m;
            double sq = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                const double* p = xd + n * stride + c * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    const double d = p[i] - mean;
                    sq += d * d;
                }
            }
            var = sq / m;  // biased, matching the running estimate
            running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mean;
            running_var[c] = (1.0 - momentum) * running_var[c] + momentum * var;
        } else {
            mean = running_mean[c];
            var = running_var[c];
        }
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std_[c] = inv;
        const double g = gamma.value[c], b = beta.value[c];
        for (std::size_t n = 0; n < N; ++n) {
            const double* p = xd + n * stride + c * plane;
            double* xo = xh + n * stride + c * plane;
            double* oo = od + n * stride + c * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const double h = (p[i] - mean) * inv;
                xo[i] = h;
                oo[i] = g * h + b;
            }
        }
    }
    return out;
}

Tensor BatchNorm2d::backward(const Tensor& grad_out) {
    if (!grad_out.same_shape(xhat_))
        throw std::invalid_argument("batchnorm grad_out shape mismatch");
    const std::size_t N = grad_out.dim(0), H = grad_out.dim(2), W = grad_out.dim(3);
    const std::size_t plane = H * W;
    const std::size_t stride = channels_ * plane;
    const double m = static_cast<double>(N * plane);

    Tensor grad_in = Tensor::zeros(grad_out.shape());
    const double* gd = grad_out.data();
    const double* xh = xhat_.data();
    double* gi = grad_in.data();

    for (std::size_t c = 0; c < channels_; ++c) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            const double* gp = gd + n * stride + c * plane;
            const double* xp = xh + n * stride + c * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                sum_g += gp[i];
                sum_gx += gp[i] * xp[i];
            }
        }
        gamma.grad[c] += sum_gx;
        beta.grad[c] += sum_g;

        const double g = gamma.value[c];
        const double inv = inv_std_[c];
        if (mode_ == Mode::Train) {
            // dx = gamma*inv/m * (m*dy - sum(dy) - xhat*sum(dy*xhat))
            const double k = g * inv / m;
            for (std::size_t n = 0; n < N; ++n) {
                const double* gp = gd + n * stride + c * plane;
                const double* xp = xh + n * stride + c * plane;
                double* ip = gi + n * stride + c * plane;
                for (std::size_t i = 0; i < plane; ++i)
                    ip[i] = k * (m * gp[i] - sum_g - xp[i] * sum_gx);
            }
        } else {
            // running stats are constants wrt the input
            const double k = g * inv;
            for (std::size_t n = 0; n < N; ++n) {
                const double* gp = gd + n * stride + c * plane;
                double* ip = gi + n * stride + c * plane;
                for (std::size_t i = 0; i < plane; ++i) ip[i] = k * gp[i];
            }
        }
    }
    return grad_in;
}

// --------------------------------------------------------------------- ReLU

Tensor ReLU::forward(const Tensor& x) {
    x_ = x;
    Tensor out = x;
    double* d = out.data();
    for (std::size_t i = 0; i < out.size(); ++i)
        if (d[i] < 0.0) d[i] = 0.0;
    return out;
}

Tensor ReLU::backward(const Tensor& grad_out) {
    if (!grad_out.same_shape(x_)) throw std::invalid_argument("relu grad_out shape mismatch");
    Tensor grad_in = grad_out;
    double* g = grad_in.data();
    const double* x = x_.data();
    for (std::size_t i = 0; i < grad_in.size(); ++i)
        if (x[i] <= 0.0) g[i] = 0.0;
    return grad_in;
}

// ---------------------------------------------------------------- MaxPool2x2

Tensor MaxPool2x2::forward(const Tensor& x) {
    if (x.rank() != 4) throw std::invalid_argument("maxpool input must be [N,C,H,W]");
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H % 2 != 0 || W % 2 != 0)
        throw std::invalid_argument("maxpool needs even spatial dims");
    in_shape_ = x.shape();
    const std::size_t Ho = H / 2, Wo = W / 2;
    Tensor out = Tensor::zeros({N, C, Ho, Wo});
    argmax_.assign(out.size(), 0);

    const double* xd = x.data();
    double* od = out.data();
    std::size_t oi = 0;
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        const double* plane = xd + nc * H * W;
        const std::size_t base = nc * H * W;
        for (std::size_t oh = 0; oh < Ho; ++oh) {
            for (std::size_t ow = 0; ow < Wo; ++ow, ++oi) {
                // row-major scan of the 2x2 window; strict > keeps the first max
                std::size_t best = 2 * oh * W + 2 * ow;
                double bv = plane[best];
                const std::size_t cand[3] = {best + 1, best + W, best + W + 1};
                for (std::size_t k = 0; k < 3; ++k) {
                    if (plane[cand[k]] > bv) {
                        bv = plane[cand[k]];
                        best = cand[k];
                    }
                }
                od[oi] = bv;
                argmax_[oi] = base + best;
            }
        }
    }
    return out;
}

Tensor MaxPool2x2::backward(const Tensor& grad_out) {
    if (grad_out.size() != argmax_.size())
        throw std::invalid_argument("maxpool grad_out shape mismatch");
    Tensor grad_in = Tensor::zeros(in_shape_);
    double* gi = grad_in.data();
    const double* go = grad_out.data();
    for (std::size_t i = 0; i < argmax_.size(); ++i) gi[argmax_[i]] += go[i];
    return grad_in;
}

// -------------------------------------------------------------------- Dense

Dense::Dense(std::size_t in_features, std::size_t out_features, std::string name)
    : weight(name + ".weight", Tensor::zeros({out_features, in_features})),
      bias(name + ".bias", Tensor::zeros({out_features})),
      in_(in_features),
      out_(out_features),
      x_(Tensor::zeros({1})) {}

void Dense::init(Rng& rng) {
    he_init(weight.value, in_, rng);
    bias.value.fill(0.0);
}

Tensor Dense::forward(const Tensor& x) {
    if (x.rank() != 2 || x.dim(1) != in_)
        throw std::invalid_argument("dense input must be [N," + std::to_string(in_) + "]");
    x_ = x;
    const std::size_t N = x.dim(0);
    Tensor out = Tensor::zeros({N, out_});
    const double* xd = x.data();
    double* od = out.data();
    const double* wd = weight.value.data();
    const double* bd = bias.value.data();
    for (std::size_t n = 0; n < N; ++n) {
        const double* xrow = xd + n * in_;
        double* orow = od + n * out_;
        for (std::size_t o = 0; o < out_; ++o) {
            const double* wrow = wd + o * in_;
            double acc = bd[o];
            for (std::size_t i = 0; i < in_; ++i) acc += wrow[i] * xrow[i];
            orow[o] = acc;
        }
    }
    return out;
}

Tensor Dense::backward(const Tensor& grad_out) {
    const std::size_t N = x_.dim(0);
    if (grad_out.rank() != 2 || grad_out.dim(0) != N || grad_out.dim(1) != out_)
        throw std::invalid_argument("dense grad_out shape mismatch");
    Tensor grad_in = Tensor::zeros({N, in_});
    const double* xd = x_.data();
    const double* gd = grad_out.data();
    double* gid = grad_in.data();
    const double* wd = weight.value.data();
    double* gwd = weight.grad.data();
    double* gbd = bias.grad.data();
    for (std::size_t n = 0; n < N; ++n) {
        const double* xrow = xd + n * in_;
        const double* grow = gd + n * out_;
        double* girow = gid + n * in_;
        for (std::size_t o = 0; o < out_; ++o) {
            const double g = grow[o];
            gbd[o] += g;
            const double* wrow = wd + o * in_;
            double* gwrow = gwd + o * in_;
            for (std::size_t i = 0; i < in_; ++i) {
                gwrow[i] += g * xrow[i];
                girow[i] += g * wrow[i];
            }
        }
    }
    return grad_in;
}

// ------------------------------------------------------------------ Dropout

Dropout::Dropout(double p) : p_(p), scale_mask_(Tensor::zeros({1})) {
    if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout p must be in [0,1)");
}

Tensor Dropout::forward(const Tensor& x, Mode mode, Rng* rng) {
    if (mode == Mode::Infer || p_ == 0.0) {
        identity_ = true;
        return x;
    }
    if (rng == nullptr) throw std::invalid_argument("dropout training needs an rng");
    identity_ = false;
    const double scale = 1.0 / (1.0 - p_);
    scale_mask_ = Tensor::zeros(x.shape());
    Tensor out = x;
    double* od = out.data();
    double* md = scale_mask_.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        // one uniform per element in flat order; drop when draw < p
        if (rng->next_double() < p_) {
            md[i] = 0.0;
            od[i] = 0.0;
        } else {
            md[i] = scale;
            od[i] *= scale;
        }
    }
    return out;
}

Tensor Dropout::backward(const Tensor& grad_out) {
    if (identity_) return grad_out;
    if (!grad_out.same_shape(scale_mask_))
        throw std::invalid_argument("dropout grad_out shape mismatch");
    Tensor grad_in = grad_out;
    double* g = grad_in.data();
    const double* m = scale_mask_.data();
    for (std::size_t i = 0; i < grad_in.size(); ++i) g[i] *= m[i];
    return grad_in;
}

// ------------------------------------------------------------------ Sigmoid

Tensor Sigmoid::forward(const Tensor& x) {
    Tensor out = x;
    double* d = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) d[i] = 1.0 / (1.0 + std::exp(-d[i]));
    y_ = out;
    return out;
}

Tensor Sigmoid::backward(const Tensor& grad_out) {
    if (!grad_out.same_shape(y_)) throw std::invalid_argument("sigmoid grad_out shape mismatch");
    Tensor grad_in = grad_out;
    double* g = grad_in.data();
    const double* y = y_.data();
    for (std::size_t i = 0; i < grad_in.size(); ++i) g[i] *= y[i] * (1.0 - y[i]);
    return grad_in;
}

// ---------------------------------------------------------------------- MSE

std::pair<double, Tensor> mse_loss(const Tensor& pred, const Tensor& target) {
    if (pred.size() != target.size())
        throw std::invalid_argument("mse_loss size mismatch");
    const std::size_t n = pred.size();
    const double* p = pred.data();
    const double* t = target.data();
    double loss = 0.0;
    Tensor grad = Tensor::zeros(pred.shape());
    double* g = grad.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double d = p[i] - t[i];
        loss += d * d;
        g[i] = 2.0 * d / static_cast<double>(n);
    }
    return {loss / static_cast<double>(n), std::move(grad)};
}

}  // namespace photorisk::nn
