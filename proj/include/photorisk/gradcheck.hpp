#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace photorisk::nn {

// Central-difference check of an analytic gradient against a scalar loss.
//
// `values` points at the n doubles being differentiated (inputs or weights);
// `analytic` holds d(loss)/d(values[i]); `loss_fn` recomputes the loss from
// the current contents of `values` and must be deterministic. Each element is
// nudged by +/-h in turn and restored. Returns the worst relative error
//   |a - f| / max(|a|, |f|, floor)
// so near-zero gradients compare on an absolute scale.
template <typename F>
double grad_check(double* values, const double* analytic, std::size_t n, F&& loss_fn,
                  double h = 1e-5, double floor = 1e-4) {
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double keep = values[i];
        values[i] = keep + h;
        const double up = loss_fn();
        values[i] = keep - h;
        const double down = loss_fn();
        values[i] = keep;
        const double fd = (up - down) / (2.0 * h);
        const double a = analytic[i];
        const double denom = std::max({std::fabs(a), std::fabs(fd), floor});
        const double rel = std::fabs(a - fd) / denom;
        if (rel > worst) worst = rel;
    }
    return worst;
}

// Same check over a strided sample of indices, for large tensors where
// probing every element would be slow. Stride 1 checks everything.
template <typename F>
double grad_check_sampled(double* values, const double* analytic, std::size_t n, std::size_t stride,
                          F&& loss_fn, double h = 1e-5, double floor = 1e-4) {
    double worst = 0.0;
    if (stride == 0) stride = 1;
    for (std::size_t i = 0; i < n; i += stride) {
        const double keep = values[i];
        values[i] = keep + h;
        const double up = loss_fn();
        values[i] = keep - h;
        const double down = loss_fn();
        values[i] = keep;
        const double fd = (up - down) / (2.0 * h);
        const double a = analytic[i];
        const double denom = std::max({std::fabs(a), std::fabs(fd), floor});
        const double rel = std::fabs(a - fd) / denom;
        if (rel > worst) worst = rel;
    }
    return worst;
}

}  // namespace photorisk::nn
