#include "photorisk/explain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "photorisk/netpbm.hpp"

namespace photorisk::xai {

std::vector<double> upsample_bilinear(const std::vector<double>& values, std::size_t in_size,
                                      std::size_t out_size) {
    if (in_size == 0 || values.size() != in_size * in_size)
        throw std::invalid_argument("upsample input must be in_size x in_size");
    std::vector<double> out(out_size * out_size, 0.0);
    const double scale = static_cast<double>(in_size) / static_cast<double>(out_size);
    for (std::size_t r = 0; r < out_size; ++r) {
        // half-pixel centers, clamped at the borders
        double y = (static_cast<double>(r) + 0.5) * scale - 0.5;
        y = std::clamp(y, 0.0, static_cast<double>(in_size - 1));
        const std::size_t y0 = static_cast<std::size_t>(y);
        const std::size_t y1 = std::min(y0 + 1, in_size - 1);
        const double fy = y - static_cast<double>(y0);
        for (std::size_t c = 0; c < out_size; ++c) {
            double x = (static_cast<double>(c) + 0.5) * scale - 0.5;
            x = std::clamp(x, 0.0, static_cast<double>(in_size - 1));
            const std::size_t x0 = static_cast<std::size_t>(x);
            const std::size_t x1 = std::min(x0 + 1, in_size - 1);
            const double fx = x - static_cast<double>(x0);
            const double top = values[y0 * in_size + x0] * (1.0 - fx) +
                               values[y0 * in_size + x1] * fx;
            const double bot = values[y1 * in_size + x0] * (1.0 - fx) +
                               values[y1 * in_size + x1] * fx;
            out[r * out_size + c] = top * (1.0 - fy) + bot * fy;
        }
    }
    return out;
}

Heatmap gradcam(net::DualNet& net, const synth::EnvImage& image, double eye_var_norm) {
    const std::size_t S = net.config().image_size;
    if (image.size != S) throw std::invalid_argument("image size does not match the model");

    net::Tensor img({1, 1, S, S}, image.pixels);
    net::Tensor eye({1, 1}, {eye_var_norm});
    net.forward(img, eye, net::Mode::Infer);
    net.backward(net::Tensor({1}, {1.0}));

    const net::Tensor& acts = net.conv_features();       // [1, C, ps, ps]
    const net::Tensor& grads = net.conv_feature_grad();  // d(score)/d(acts)
    net.zero_grads();

    const std::size_t C = acts.dim(1), ps = acts.dim(2);
    const std::size_t plane = ps * ps;
    std::vector<double> raw(plane, 0.0);
    for (std::size_t k = 0; k < C; ++k) {
        const double* gp = grads.data() + k * plane;
        double alpha = 0.0;
        for (std::size_t i = 0; i < plane; ++i) alpha += gp[i];
        alpha /= static_cast<double>(plane);
        const double* ap = acts.data() + k * plane;
        for (std::size_t i = 0; i < plane; ++i) raw[i] += alpha * ap[i];
    }
    for (double& v : raw) v = std::max(v, 0.0);

    Heatmap hm;
    hm.size = S;
    hm.source_layer = "conv3";
    hm.values = upsample_bilinear(raw, ps, S);
    const double mx = *std::max_element(hm.values.begin(), hm.values.end());
    if (mx > 0.0)
        for (double& v : hm.values) v /= mx;
    return hm;
}

ShapAttribution shap_exact(const Scorer& f, double b, double v, double b0, double v0) {
    const double f_bv = f(b, v);
    const double f_b0v = f(b0, v);
    const double f_bv0 = f(b, v0);
    const double f_b0v0 = f(b0, v0);
    ShapAttribution a;
    a.phi_brightness = 0.5 * (f_bv - f_b0v) + 0.5 * (f_bv0 - f_b0v0);
    a.phi_variance = 0.5 * (f_bv - f_bv0) + 0.5 * (f_b0v - f_b0v0);
    a.base_value = f_b0v0;
    a.prediction = f_bv;
    return a;
}

Scorer model_scorer(net::DualNet& net) {
    return [&net](double lux, double eye_var) { return net::predict(net, lux, eye_var); };
}

std::pair<double, double> mean_abs_shap(net::DualNet& net, const synth::Dataset& ds) {
    if (ds.samples.empty()) throw std::invalid_argument("dataset is empty");
    double lux0 = 0.0, var0 = 0.0;
    for (const synth::Sample& s : ds.samples) {
        lux0 += s.lux;
        var0 += s.eye_variance;
    }
    const double n = static_cast<double>(ds.samples.size());
    lux0 /= n;
    var0 /= n;

    Scorer f = model_scorer(net);
    double sum_b = 0.0, sum_v = 0.0;
    for (const synth::Sample& s : ds.samples) {
        ShapAttribution a = shap_exact(f, s.lux, s.eye_variance, lux0, var0);
        sum_b += std::fabs(a.phi_brightness);
        sum_v += std::fabs(a.phi_variance);
    }
    return {sum_b / n, sum_v / n};
}

void render_heatmap_overlay(const Heatmap& heatmap, const synth::EnvImage& image,
                            const std::filesystem::path& path) {
    if (heatmap.size != image.size || heatmap.values.size() != image.pixels.size())
        throw std::invalid_argument("heatmap and image sizes differ");
    const std::size_t S = image.size;
    netpbm::RgbImage rgb;
    rgb.width = S;
    rgb.height = S;
    rgb.pixels.resize(3 * S * S);
    for (std::size_t i = 0; i < S * S; ++i) {
        const double h = std::clamp(heatmap.values[i], 0.0, 1.0);
        const double gray = std::clamp(image.pixels[i], 0.0, 1.0);
        // warm ramp: blue at h=0 through to red at h=1
        const double rr = (1.0 - h) * gray + h * h;
        const double gg = (1.0 - h) * gray;
        const double bb = (1.0 - h) * gray + h * (1.0 - h);
        rgb.pixels[3 * i] = static_cast<std::uint8_t>(std::lround(std::clamp(rr, 0.0, 1.0) * 255.0));
        rgb.pixels[3 * i + 1] =
            static_cast<std::uint8_t>(std::lround(std::clamp(gg, 0.0, 1.0) * 255.0));
        rgb.pixels[3 * i + 2] =
            static_cast<std::uint8_t>(std::lround(std::clamp(bb, 0.0, 1.0) * 255.0));
    }
    netpbm::write_ppm(rgb, path);
}

void export_shap_csv(const std::vector<ShapRow>& rows, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "index,lux,eye_variance,phi_brightness,phi_variance,base_value,prediction\n";
    char buf[256];
    for (const ShapRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.index, r.lux,
                      r.eye_variance, r.shap.phi_brightness, r.shap.phi_variance,
                      r.shap.base_value, r.shap.prediction);
        out << buf;
    }
    if (!out) throw std::runtime_error("short write to " + path.string());
}

}  // namespace photorisk::xai
