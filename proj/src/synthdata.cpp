#include "photorisk/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "photorisk/errors.hpp"
#include "photorisk/hash.hpp"
#include "photorisk/netpbm.hpp"

namespace photorisk::synth {

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

std::string image_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "img_%05zu.pgm", index);
    return buf;
}

std::string mask_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "img_%05zu_mask.pgm", index);
    return buf;
}

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

// Snap pixels onto the 8-bit grid used by the PGM container.
void quantize_pixels(EnvImage& img) {
    for (double& p : img.pixels)
        p = std::round(p * 255.0) / 255.0;
}

GrayImage to_pgm(const EnvImage& img) {
    GrayImage g;
    g.width = g.height = img.size;
    g.pixels.resize(img.pixels.size());
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        g.pixels[i] = static_cast<std::uint8_t>(std::lround(clamp01(img.pixels[i]) * 255.0));
    return g;
}

GrayImage mask_to_pgm(const EnvImage& img) {
    GrayImage g;
    g.width = g.height = img.size;
    g.pixels.resize(img.light_mask.size());
    for (std::size_t i = 0; i < img.light_mask.size(); ++i)
        g.pixels[i] = img.light_mask[i] ? 255 : 0;
    return g;
}

}  // namespace

std::size_t EnvImage::mask_count() const {
    std::size_t n = 0;
    for (std::uint8_t m : light_mask) n += (m != 0);
    return n;
}

void AugmentConfig::validate() const {
    if (noise_sigma < 0.0)
        throw std::invalid_argument("AugmentConfig: noise_sigma must be >= 0");
    if (jitter_fraction < 0.0 || jitter_fraction >= 1.0)
        throw std::invalid_argument("AugmentConfig: jitter_fraction must be in [0,1)");
    if (blur_sigma_min < 0.0 || blur_sigma_max < blur_sigma_min)
        throw std::invalid_argument("AugmentConfig: blur_sigma_range must be non-negative and ordered");
    if (blur_probability < 0.0 || blur_probability > 1.0)
        throw std::invalid_argument("AugmentConfig: blur_probability must be in [0,1]");
}

double normalize_brightness(double lux) { return clamp01((lux - 300.0) / 900.0); }

double normalize_variance(double eye_variance) { return clamp01((eye_variance - 2.0) / 8.0); }

double risk_label(double b_norm, double v_norm, double noise) {
    return clamp01(0.6 * b_norm + 0.4 * v_norm + noise);
}

double quantize6(double v) {
    return std::strtod(fmt6(v).c_str(), nullptr);
}

EnvImage gen_image(double lux, Rng& rng) {
    const double background = 0.1 + 0.7 * normalize_brightness(lux);
    EnvImage img(kImageSize, background);
    const double patch_value = clamp01(background + 0.25);
    const int n = static_cast<int>(img.size);

    const int patches = 1 + static_cast<int>(rng.next_double() * 4.0);  // 1..4
    for (int k = 0; k < patches; ++k) {
        // Axis lengths 8..32 px; centers placed so the ellipse stays inside.
        const double semi_x = 0.5 * rng.uniform(8.0, 32.0);
        const double semi_y = 0.5 * rng.uniform(8.0, 32.0);
        const double cx = rng.uniform(semi_x, static_cast<double>(n) - semi_x);
        const double cy = rng.uniform(semi_y, static_cast<double>(n) - semi_y);

        const int y0 = std::max(0, static_cast<int>(std::floor(cy - semi_y)));
        const int y1 = std::min(n - 1, static_cast<int>(std::ceil(cy + semi_y)));
        const int x0 = std::max(0, static_cast<int>(std::floor(cx - semi_x)));
        const int x1 = std::min(n - 1, static_cast<int>(std::ceil(cx + semi_x)));
        for (int y = y0; y <= y1; ++y) {
            const double dy = (static_cast<double>(y) - cy) / semi_y;
            for (int x = x0; x <= x1; ++x) {
                const double dx = (static_cast<double>(x) - cx) / semi_x;
                if (dx * dx + dy * dy <= 1.0) {
                    img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = patch_value;
                    img.light_mask[static_cast<std::size_t>(y) * img.size +
                                   static_cast<std::size_t>(x)] = 1;
                }
            }
        }
    }

    for (double& p : img.pixels)
        p = clamp01(p + rng.normal(0.0, 0.02));
    return img;
}

EnvImage add_gaussian_noise(const EnvImage& img, double sigma, Rng& rng) {
    if (sigma < 0.0) throw std::invalid_argument("add_gaussian_noise: sigma must be >= 0");
    EnvImage out = img;
    for (double& p : out.pixels)
        p = clamp01(p + rng.normal(0.0, sigma));
    return out;
}

EnvImage jitter_brightness(const EnvImage& img, double fraction, Rng& rng) {
    if (fraction < 0.0 || fraction >= 1.0)
        throw std::invalid_argument("jitter_brightness: fraction must be in [0,1)");
    const double factor = rng.uniform(1.0 - fraction, 1.0 + fraction);
    EnvImage out = img;
    for (double& p : out.pixels)
        p = clamp01(p * factor);
    return out;
}

EnvImage gaussian_blur(const EnvImage& img, double sigma) {
    if (sigma < 0.0) throw std::invalid_argument("gaussian_blur: sigma must be >= 0");
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    if (radius == 0) return img;

    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double w = std::exp(-0.5 * (static_cast<double>(i) * i) / (sigma * sigma));
        kernel[static_cast<std::size_t>(i + radius)] = w;
        sum += w;
    }
    for (double& w : kernel) w /= sum;

    const int n = static_cast<int>(img.size);
    EnvImage out = img;
    std::vector<double> tmp(img.pixels.size());

    // Horizontal pass, clamped coordinates.
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int xx = std::clamp(x + i, 0, n - 1);
                acc += kernel[static_cast<std::size_t>(i + radius)] *
                       img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(xx));
            }
            tmp[static_cast<std::size_t>(y) * img.size + static_cast<std::size_t>(x)] = acc;
        }
    }
    // Vertical pass.
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int yy = std::clamp(y + i, 0, n - 1);
                acc += kernel[static_cast<std::size_t>(i + radius)] *
                       tmp[static_cast<std::size_t>(yy) * img.size + static_cast<std::size_t>(x)];
            }
            out.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = clamp01(acc);
        }
    }
    return out;
}

Dataset gen_dataset(std::size_t n, std::uint64_t seed, const AugmentConfig& config) {
    if (n == 0) throw std::invalid_argument("gen_dataset: n must be >= 1");
    config.validate();

    Dataset ds;
    ds.seed = seed;
    ds.augment = config;
    ds.samples.reserve(n);

    Rng master(seed);
    for (std::size_t i = 0; i < n; ++i) {
        Sample s;
        s.seed = master.next_u64();
        Rng rng(s.seed);

        s.lux = quantize6(rng.uniform(kLuxGenMin, kLuxGenMax));
        s.eye_variance = quantize6(rng.uniform(kVarGenMin, kVarGenMax));

        EnvImage img = gen_image(s.lux, rng);
        img = add_gaussian_noise(img, config.noise_sigma, rng);
        img = jitter_brightness(img, config.jitter_fraction, rng);
        if (rng.next_double() < config.blur_probability) {
            s.blur_sigma = quantize6(rng.uniform(config.blur_sigma_min, config.blur_sigma_max));
            img = gaussian_blur(img, s.blur_sigma);
        }

        const double noise = rng.normal(0.0, kLabelNoiseSigma);
        s.risk_label = quantize6(
            risk_label(normalize_brightness(s.lux), normalize_variance(s.eye_variance), noise));

        quantize_pixels(img);
        s.image = std::move(img);
        s.noise_sigma = quantize6(config.noise_sigma);
        s.jitter_fraction = quantize6(config.jitter_fraction);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    if (ds.samples.empty()) throw std::invalid_argument("save_dataset: empty dataset");
    std::filesystem::create_directories(dir);

    std::ostringstream manifest;
    manifest << "index,lux,eye_variance,risk_label,image_file,seed,"
                "noise_sigma,jitter_fraction,blur_sigma\n";
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const Sample& s = ds.samples[i];
        write_pgm(dir / image_name(i), to_pgm(s.image));
        write_pgm(dir / mask_name(i), mask_to_pgm(s.image));
        manifest << i << ',' << fmt6(s.lux) << ',' << fmt6(s.eye_variance) << ','
                 << fmt6(s.risk_label) << ',' << image_name(i) << ',' << s.seed << ','
                 << fmt6(s.noise_sigma) << ',' << fmt6(s.jitter_fraction) << ','
                 << fmt6(s.blur_sigma) << '\n';
    }
    const std::string manifest_text = manifest.str();
    {
        std::ofstream out(dir / "manifest.csv", std::ios::binary | std::ios::trunc);
        out << manifest_text;
        if (!out) throw DatasetError("save_dataset: cannot write manifest.csv");
    }

    nlohmann::json meta;
    meta["format_version"] = "1";
    meta["seed"] = ds.seed;
    meta["sample_count"] = ds.samples.size();
    meta["split_fraction"] = ds.split_fraction;
    meta["augment_config"] = {
        {"noise_sigma", ds.augment.noise_sigma},
        {"jitter_fraction", ds.augment.jitter_fraction},
        {"blur_sigma_range", {ds.augment.blur_sigma_min, ds.augment.blur_sigma_max}},
        {"blur_probability", ds.augment.blur_probability},
    };
    meta["rng"] = "splitmix64+box-muller";
    meta["manifest_checksum"] = to_hex(fnv1a64(manifest_text.data(), manifest_text.size()));
    std::ofstream out(dir / "dataset.json", std::ios::binary | std::ios::trunc);
    out << meta.dump(2) << '\n';
    if (!out) throw DatasetError("save_dataset: cannot write dataset.json");
}

namespace {

std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

double parse_real(const std::string& s, const char* what) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || s.empty())
        throw DatasetError(std::string("load_dataset: bad ") + what + " value '" + s + "'");
    return v;
}

std::uint64_t parse_u64(const std::string& s, const char* what) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (end != s.c_str() + s.size() || s.empty())
        throw DatasetError(std::string("load_dataset: bad ") + what + " value '" + s + "'");
    return v;
}

EnvImage image_from_pgm(const GrayImage& g, const GrayImage& m, const std::string& name) {
    if (g.width != g.height)
        throw ImageFormatError("load_dataset: " + name + " is not square");
    if (m.width != g.width || m.height != g.height)
        throw ImageFormatError("load_dataset: mask size mismatch for " + name);
    EnvImage img(g.width);
    for (std::size_t i = 0; i < g.pixels.size(); ++i)
        img.pixels[i] = static_cast<double>(g.pixels[i]) / 255.0;
    for (std::size_t i = 0; i < m.pixels.size(); ++i)
        img.light_mask[i] = m.pixels[i] > 0 ? 1 : 0;
    return img;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& dir) {
    const auto meta_path = dir / "dataset.json";
    std::ifstream meta_in(meta_path, std::ios::binary);
    if (!meta_in) throw DatasetError("load_dataset: missing " + meta_path.string());
    nlohmann::json meta;
    try {
        meta_in >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw DatasetError("load_dataset: malformed dataset.json: " + std::string(e.what()));
    }

    Dataset ds;
    try {
        if (meta.at("format_version").get<std::string>() != "1")
            throw DatasetError("load_dataset: unsupported format_version");
        ds.seed = meta.at("seed").get<std::uint64_t>();
        ds.split_fraction = meta.at("split_fraction").get<double>();
        const auto& ac = meta.at("augment_config");
        ds.augment.noise_sigma = ac.at("noise_sigma").get<double>();
        ds.augment.jitter_fraction = ac.at("jitter_fraction").get<double>();
        ds.augment.blur_sigma_min = ac.at("blur_sigma_range").at(0).get<double>();
        ds.augment.blur_sigma_max = ac.at("blur_sigma_range").at(1).get<double>();
        ds.augment.blur_probability = ac.at("blur_probability").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw DatasetError("load_dataset: malformed dataset.json: " + std::string(e.what()));
    }
    const std::size_t expected_count = meta.at("sample_count").get<std::size_t>();

    const auto manifest_path = dir / "manifest.csv";
    std::ifstream manifest_in(manifest_path, std::ios::binary);
    if (!manifest_in)
        throw ManifestMissingError("load_dataset: missing " + manifest_path.string());
    std::stringstream manifest_buf;
    manifest_buf << manifest_in.rdbuf();
    const std::string manifest_text = manifest_buf.str();

    const std::string want_sum = meta.at("manifest_checksum").get<std::string>();
    const std::string got_sum = to_hex(fnv1a64(manifest_text.data(), manifest_text.size()));
    if (want_sum != got_sum)
        throw ChecksumError("load_dataset: manifest checksum mismatch (expected " + want_sum +
                            ", got " + got_sum + ")");

    std::istringstream rows(manifest_text);
    std::string line;
    if (!std::getline(rows, line) || !line.starts_with("index,"))
        throw DatasetError("load_dataset: manifest header missing");

    while (std::getline(rows, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_row(line);
        if (f.size() != 9)
            throw DatasetError("load_dataset: manifest row has " + std::to_string(f.size()) +
                               " fields, expected 9");
        Sample s;
        const std::size_t index = static_cast<std::size_t>(parse_u64(f[0], "index"));
        if (index != ds.samples.size())
            throw DatasetError("load_dataset: manifest rows out of order at index " + f[0]);
        s.lux = parse_real(f[1], "lux");
        s.eye_variance = parse_real(f[2], "eye_variance");
        s.risk_label = parse_real(f[3], "risk_label");
        s.seed = parse_u64(f[5], "seed");
        s.noise_sigma = parse_real(f[6], "noise_sigma");
        s.jitter_fraction = parse_real(f[7], "jitter_fraction");
        s.blur_sigma = parse_real(f[8], "blur_sigma");

        if (s.lux < kLuxLoadMin || s.lux > kLuxLoadMax)
            throw DatasetError("load_dataset: lux " + f[1] + " outside [0, 20000]");
        if (s.eye_variance < 0.0 || s.eye_variance > kVarLoadMax)
            throw DatasetError("load_dataset: eye_variance " + f[2] + " outside [0, 100]");
        if (s.risk_label < 0.0 || s.risk_label > 1.0)
            throw DatasetError("load_dataset: risk_label " + f[3] + " outside [0, 1]");

        const std::string& image_file = f[4];
        const GrayImage g = read_pgm(dir / image_file);
        std::string mask_file = image_file;
        const auto dot = mask_file.rfind(".pgm");
        if (dot == std::string::npos)
            throw DatasetError("load_dataset: image_file '" + image_file + "' is not a .pgm");
        mask_file.insert(dot, "_mask");
        const GrayImage m = read_pgm(dir / mask_file);
        s.image = image_from_pgm(g, m, image_file);
        ds.samples.push_back(std::move(s));
    }

    if (ds.samples.size() != expected_count)
        throw DatasetError("load_dataset: sample_count mismatch (json says " +
                           std::to_string(expected_count) + ", manifest has " +
                           std::to_string(ds.samples.size()) + ")");
    if (ds.samples.empty()) throw DatasetError("load_dataset: dataset is empty");
    return ds;
}

}  // namespace photorisk::synth
