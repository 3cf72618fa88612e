#include "photorisk/dualnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <utility>

#include "json.hpp"
#include "photorisk/errors.hpp"
#include "photorisk/hash.hpp"

namespace photorisk::net {

namespace {

// Salt so the training stream (shuffles + dropout) is independent of the
// init stream even though both derive from config.seed.
constexpr std::uint64_t kTrainStreamSalt = 0x747261696e726e67ULL;
constexpr std::size_t kInferChunk = 64;

ModelConfig validated(ModelConfig c) {
    c.validate();
    return c;
}

}  // namespace

void ModelConfig::validate() const {
    if (image_size < 8 || image_size % 8 != 0)
        throw std::invalid_argument("image_size must be a positive multiple of 8");
    if (conv_channels.size() != 3)
        throw std::invalid_argument("expected exactly 3 conv channel counts");
    for (std::size_t c : conv_channels)
        if (c == 0) throw std::invalid_argument("conv channel counts must be positive");
    if (eye_input_dim != 1)
        throw std::invalid_argument("eye branch takes a single scalar input");
    if (eye_hidden.size() != 2)
        throw std::invalid_argument("eye branch has exactly 2 hidden layers");
    for (std::size_t h : eye_hidden)
        if (h == 0) throw std::invalid_argument("eye hidden widths must be positive");
    if (image_feature_dim == 0 || fusion_hidden == 0)
        throw std::invalid_argument("feature widths must be positive");
    if (image_feature_dim + eye_hidden.back() != 64)
        throw std::invalid_argument("fusion input must concatenate to 64 features");
    if (dropout_p < 0.0 || dropout_p >= 1.0)
        throw std::invalid_argument("dropout_p must be in [0,1)");
}

DualNet::DualNet(ModelConfig config)
    : config_(validated(std::move(config))),
      conv1_(1, config_.conv_channels[0], "conv1"),
      conv2_(config_.conv_channels[0], config_.conv_channels[1], "conv2"),
      conv3_(config_.conv_channels[1], config_.conv_channels[2], "conv3"),
      bn1_(config_.conv_channels[0], "bn1"),
      bn2_(config_.conv_channels[1], "bn2"),
      bn3_(config_.conv_channels[2], "bn3"),
      img_dense_(config_.flatten_dim(), config_.image_feature_dim, "img_dense"),
      eye_dense1_(config_.eye_input_dim, config_.eye_hidden[0], "eye_dense1"),
      eye_dense2_(config_.eye_hidden[0], config_.eye_hidden[1], "eye_dense2"),
      fusion_dense1_(config_.image_feature_dim + config_.eye_hidden[1], config_.fusion_hidden,
                     "fusion_dense1"),
      fusion_dense2_(config_.fusion_hidden, 1, "fusion_dense2"),
      eye_drop1_(config_.dropout_p),
      eye_drop2_(config_.dropout_p),
      fusion_drop_(config_.dropout_p),
      conv_features_(Tensor::zeros({1})),
      conv_feature_grad_(Tensor::zeros({1})) {
    Rng rng(config_.seed);
    conv1_.init(rng);
    conv2_.init(rng);
    conv3_.init(rng);
    img_dense_.init(rng);
    eye_dense1_.init(rng);
    eye_dense2_.init(rng);
    fusion_dense1_.init(rng);
    fusion_dense2_.init(rng);
}

Tensor DualNet::forward(const Tensor& images, const Tensor& eye, Mode mode, Rng* rng) {
    const std::size_t S = config_.image_size;
    if (images.rank() != 4 || images.dim(1) != 1 || images.dim(2) != S || images.dim(3) != S)
        throw std::invalid_argument("image batch must be [N,1," + std::to_string(S) + "," +
                                    std::to_string(S) + "]");
    const std::size_t N = images.dim(0);
    if (eye.rank() != 2 || eye.dim(0) != N || eye.dim(1) != config_.eye_input_dim)
        throw std::invalid_argument("eye batch must be [N,1]");
    last_batch_ = N;

    Tensor t = conv1_.forward(images);
    t = bn1_.forward(t, mode);
    t = relu1_.forward(t);
    t = pool1_.forward(t);
    t = conv2_.forward(t);
    t = bn2_.forward(t, mode);
    t = relu2_.forward(t);
    t = pool2_.forward(t);
    t = conv3_.forward(t);
    t = bn3_.forward(t, mode);
    t = relu3_.forward(t);
    t = pool3_.forward(t);
    conv_features_ = t;  // [N, C3, S/8, S/8], kept for saliency maps

    Tensor img_feat = img_relu_.forward(
        img_dense_.forward(t.reshaped({N, config_.flatten_dim()})));

    Tensor e = eye_dense1_.forward(eye);
    e = eye_relu1_.forward(e);
    e = eye_drop1_.forward(e, mode, rng);
    e = eye_dense2_.forward(e);
    e = eye_relu2_.forward(e);
    e = eye_drop2_.forward(e, mode, rng);

    const std::size_t fi = config_.image_feature_dim;
    const std::size_t fe = config_.eye_hidden[1];
    Tensor fused = Tensor::zeros({N, fi + fe});
    for (std::size_t n = 0; n < N; ++n) {
        double* row = fused.data() + n * (fi + fe);
        const double* irow = img_feat.data() + n * fi;
        const double* erow = e.data() + n * fe;
        std::copy(irow, irow + fi, row);
        std::copy(erow, erow + fe, row + fi);
    }

    Tensor h = fusion_dense1_.forward(fused);
    h = fusion_relu_.forward(h);
    h = fusion_drop_.forward(h, mode, rng);
    h = fusion_dense2_.forward(h);
    h = sigmoid_.forward(h);
    return h.reshaped({N});
}

std::pair<Tensor, Tensor> DualNet::backward(const Tensor& grad_scores) {
    const std::size_t N = last_batch_;
    if (grad_scores.size() != N)
        throw std::invalid_argument("grad_scores must have one entry per sample");

    Tensor g = sigmoid_.backward(grad_scores.reshaped({N, 1}));
    g = fusion_dense2_.backward(g);
    g = fusion_drop_.backward(g);
    g = fusion_relu_.backward(g);
    g = fusion_dense1_.backward(g);  // [N, 64]

    const std::size_t fi = config_.image_feature_dim;
    const std::size_t fe = config_.eye_hidden[1];
    Tensor g_img = Tensor::zeros({N, fi});
    Tensor g_eye = Tensor::zeros({N, fe});
    for (std::size_t n = 0; n < N; ++n) {
        const double* row = g.data() + n * (fi + fe);
        std::copy(row, row + fi, g_img.data() + n * fi);
        std::copy(row + fi, row + fi + fe, g_eye.data() + n * fe);
    }

    Tensor ge = eye_drop2_.backward(g_eye);
    ge = eye_relu2_.backward(ge);
    ge = eye_dense2_.backward(ge);
    ge = eye_drop1_.backward(ge);
    ge = eye_relu1_.backward(ge);
    ge = eye_dense1_.backward(ge);  // [N, 1]

    Tensor gi = img_relu_.backward(g_img);
    gi = img_dense_.backward(gi);  // [N, flatten]
    const std::size_t ps = config_.pooled_size();
    gi = gi.reshaped({N, config_.conv_channels[2], ps, ps});
    conv_feature_grad_ = gi;
    gi = pool3_.backward(gi);
    gi = relu3_.backward(gi);
    gi = bn3_.backward(gi);
    gi = conv3_.backward(gi);
    gi = pool2_.backward(gi);
    gi = relu2_.backward(gi);
    gi = bn2_.backward(gi);
    gi = conv2_.backward(gi);
    gi = pool1_.backward(gi);
    gi = relu1_.backward(gi);
    gi = bn1_.backward(gi);
    gi = conv1_.backward(gi);
    return {std::move(gi), std::move(ge)};
}

double DualNet::infer_one(const synth::EnvImage& image, double eye_var_norm) {
    const std::size_t S = config_.image_size;
    if (image.size != S)
        throw std::invalid_argument("image is not " + std::to_string(S) + "x" + std::to_string(S));
    Tensor img({1, 1, S, S}, image.pixels);
    Tensor eye({1, 1}, {eye_var_norm});
    return forward(img, eye, Mode::Infer)[0];
}

std::vector<Param*> DualNet::params() {
    return {&conv1_.weight,        &conv1_.bias,   &bn1_.gamma,          &bn1_.beta,
            &conv2_.weight,        &conv2_.bias,   &bn2_.gamma,          &bn2_.beta,
            &conv3_.weight,        &conv3_.bias,   &bn3_.gamma,          &bn3_.beta,
            &img_dense_.weight,    &img_dense_.bias,
            &eye_dense1_.weight,   &eye_dense1_.bias,
            &eye_dense2_.weight,   &eye_dense2_.bias,
            &fusion_dense1_.weight, &fusion_dense1_.bias,
            &fusion_dense2_.weight, &fusion_dense2_.bias};
}

std::vector<std::pair<std::string, Tensor*>> DualNet::named_tensors() {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (Param* p : params()) out.emplace_back(p->name, &p->value);
    out.emplace_back("bn1.running_mean", &bn1_.running_mean);
    out.emplace_back("bn1.running_var", &bn1_.running_var);
    out.emplace_back("bn2.running_mean", &bn2_.running_mean);
    out.emplace_back("bn2.running_var", &bn2_.running_var);
    out.emplace_back("bn3.running_mean", &bn3_.running_mean);
    out.emplace_back("bn3.running_var", &bn3_.running_var);
    return out;
}

std::size_t DualNet::parameter_count() {
    std::size_t n = 0;
    for (Param* p : params()) n += p->value.size();
    return n;
}

void DualNet::zero_grads() {
    for (Param* p : params()) p->zero_grad();
}

// ------------------------------------------------------------------- training

namespace {

struct BatchView {
    Tensor images, eye, labels;
};

BatchView gather_batch(const synth::Dataset& ds, const std::vector<std::size_t>& order,
                       std::size_t start, std::size_t count, std::size_t image_size) {
    BatchView b{Tensor::zeros({count, 1, image_size, image_size}), Tensor::zeros({count, 1}),
                Tensor::zeros({count})};
    const std::size_t plane = image_size * image_size;
    for (std::size_t k = 0; k < count; ++k) {
        const synth::Sample& s = ds.samples[order[start + k]];
        std::copy(s.image.pixels.begin(), s.image.pixels.end(), b.images.data() + k * plane);
        b.eye[k] = synth::normalize_variance(s.eye_variance);
        b.labels[k] = s.risk_label;
    }
    return b;
}

void fisher_yates(std::vector<std::size_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[rng.next_below(i)]);
}

// Deterministic infer-mode pass over samples [begin, end) of ds, in order.
std::vector<double> infer_range(DualNet& net, const synth::Dataset& ds, std::size_t begin,
                                std::size_t end) {
    std::vector<double> preds;
    preds.reserve(end - begin);
    std::vector<std::size_t> order(end - begin);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = begin + i;
    const std::size_t S = net.config().image_size;
    for (std::size_t start = 0; start < order.size(); start += kInferChunk) {
        const std::size_t count = std::min(kInferChunk, order.size() - start);
        BatchView b = gather_batch(ds, order, start, count, S);
        Tensor scores = net.forward(b.images, b.eye, Mode::Infer);
        for (std::size_t k = 0; k < count; ++k) preds.push_back(scores[k]);
    }
    return preds;
}

}  // namespace

TrainReport train(DualNet& net, const synth::Dataset& ds, const TrainOptions& opts) {
    if (opts.batch_size < 2) throw std::invalid_argument("batch_size must be >= 2");
    if (ds.samples.size() < 2 * opts.batch_size)
        throw std::invalid_argument("dataset too small: need at least 2*batch_size samples");
    const std::size_t n_train = ds.train_count();
    const std::size_t n_val = ds.samples.size() - n_train;
    if (n_train < 2 || n_val < 1)
        throw std::invalid_argument("split leaves an unusable train or validation set");

    std::vector<double> val_labels(n_val);
    for (std::size_t i = 0; i < n_val; ++i) val_labels[i] = ds.samples[n_train + i].risk_label;

    Rng train_rng(net.config().seed ^ kTrainStreamSalt);
    std::vector<Param*> params = net.params();
    nn::AdamState adam;

    TrainReport report;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<Tensor> best_snapshot;
    std::size_t bad_epochs = 0;
    const std::size_t patience = std::max<std::size_t>(opts.patience, 1);
    const std::size_t S = net.config().image_size;

    std::vector<std::size_t> order(n_train);
    for (std::size_t e = 0; e < opts.epochs_max; ++e) {
        for (std::size_t i = 0; i < n_train; ++i) order[i] = i;
        fisher_yates(order, train_rng);

        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < n_train; start += opts.batch_size) {
            const std::size_t count = std::min(opts.batch_size, n_train - start);
            if (count < 2) break;  // batchnorm cannot use a singleton tail
            BatchView b = gather_batch(ds, order, start, count, S);
            Tensor scores = net.forward(b.images, b.eye, Mode::Train, &train_rng);
            auto [loss, grad] = nn::mse_loss(scores, b.labels);
            net.backward(grad);
            nn::adam_step(params, adam);
            loss_sum += loss * static_cast<double>(count);
            seen += count;
        }

        std::vector<double> preds = infer_range(net, ds, n_train, ds.samples.size());
        double val_loss = 0.0;
        std::size_t val_hits = 0;
        for (std::size_t i = 0; i < n_val; ++i) {
            const double d = preds[i] - val_labels[i];
            val_loss += d * d;
            if ((preds[i] >= 0.5) == (val_labels[i] >= 0.5)) ++val_hits;
        }
        val_loss /= static_cast<double>(n_val);

        EpochStats stats;
        stats.train_loss = loss_sum / static_cast<double>(seen);
        stats.val_loss = val_loss;
        stats.val_binary_accuracy = static_cast<double>(val_hits) / static_cast<double>(n_val);
        report.epochs.push_back(stats);
        report.stopped_epoch = e;

        if (val_loss < best_val) {
            best_val = val_loss;
            report.best_epoch = e;
            bad_epochs = 0;
            best_snapshot.clear();
            for (auto& [name, t] : net.named_tensors()) best_snapshot.push_back(*t);
        } else {
            ++bad_epochs;
            if (bad_epochs >= patience) break;
        }
    }

    auto named = net.named_tensors();
    for (std::size_t i = 0; i < named.size(); ++i) *named[i].second = best_snapshot[i];
    return report;
}

// -------------------------------------------------------------------- metrics

int score_band_index(double score) {
    if (score >= 0.7) return 2;
    if (score >= 0.4) return 1;
    return 0;
}

Metrics compute_metrics(const std::vector<double>& preds, const std::vector<double>& labels) {
    if (preds.empty() || preds.size() != labels.size())
        throw std::invalid_argument("metrics need matching non-empty prediction/label lists");
    Metrics m;
    std::size_t bin_hits = 0, band_hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double d = preds[i] - labels[i];
        m.mse += d * d;
        if ((preds[i] >= 0.5) == (labels[i] >= 0.5)) ++bin_hits;
        if (score_band_index(preds[i]) == score_band_index(labels[i])) ++band_hits;
    }
    const double n = static_cast<double>(preds.size());
    m.mse /= n;
    m.binary_accuracy = static_cast<double>(bin_hits) / n;
    m.band_accuracy = static_cast<double>(band_hits) / n;
    return m;
}

std::vector<double> predict_dataset(DualNet& net, const synth::Dataset& ds) {
    if (ds.samples.empty()) throw std::invalid_argument("dataset is empty");
    return infer_range(net, ds, 0, ds.samples.size());
}

Metrics evaluate(DualNet& net, const synth::Dataset& ds) {
    std::vector<double> preds = predict_dataset(net, ds);
    std::vector<double> labels(ds.samples.size());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = ds.samples[i].risk_label;
    return compute_metrics(preds, labels);
}

double predict(DualNet& net, double lux, double eye_var) {
    Rng rng(net.canonical_image_seed);
    synth::EnvImage img = synth::gen_image(lux, rng);
    return net.infer_one(img, synth::normalize_variance(eye_var));
}

// ------------------------------------------------------------------ weight IO

namespace {

void put_u64le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

}  // namespace

void save_weights(DualNet& net, const std::string& path) {
    auto named = net.named_tensors();

    std::string payload;
    nlohmann::json dir = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (auto& [name, t] : named) {
        nlohmann::json entry;
        entry["name"] = name;
        entry["shape"] = t->shape();
        entry["offset"] = offset;
        entry["count"] = t->size();
        dir.push_back(entry);
        const double* d = t->data();
        for (std::size_t i = 0; i < t->size(); ++i) {
            std::uint64_t bits;
            std::memcpy(&bits, &d[i], 8);
            put_u64le(payload, bits);
        }
        offset += t->size() * 8;
    }

    const ModelConfig& c = net.config();
    nlohmann::json header;
    header["format_version"] = "1";
    header["canonical_image_seed"] = net.canonical_image_seed;
    header["config"] = {{"image_size", c.image_size},
                        {"conv_channels", c.conv_channels},
                        {"image_feature_dim", c.image_feature_dim},
                        {"eye_input_dim", c.eye_input_dim},
                        {"eye_hidden", c.eye_hidden},
                        {"fusion_hidden", c.fusion_hidden},
                        {"dropout_p", c.dropout_p},
                        {"seed", c.seed}};
    header["tensors"] = dir;
    header["payload_checksum"] = to_hex(fnv1a64(payload.data(), payload.size()));

    const std::string header_text = header.dump();
    std::string file_bytes;
    put_u64le(file_bytes, header_text.size());
    file_bytes += header_text;
    file_bytes += payload;

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw WeightsError("cannot open weight file for writing: " + path);
    out.write(file_bytes.data(), static_cast<std::streamsize>(file_bytes.size()));
    if (!out) throw WeightsError("short write to weight file: " + path);
}

DualNet load_weights(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw WeightsError("cannot open weight file: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (bytes.size() < 8) throw WeightsTruncatedError("weight file shorter than its length field");
    const std::uint64_t header_len =
        get_u64le(reinterpret_cast<const unsigned char*>(bytes.data()));
    if (8 + header_len > bytes.size())
        throw WeightsTruncatedError("weight file shorter than its declared header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(8, header_len));
    } catch (const nlohmann::json::exception&) {
        throw WeightsError("weight file header is not valid JSON");
    }

    if (!header.contains("format_version") || !header["format_version"].is_string() ||
        header["format_version"].get<std::string>() != "1")
        throw WeightsVersionError("unsupported weight file format version");

    ModelConfig cfg;
    std::uint64_t canonical_seed = kCanonicalImageSeed;
    try {
        const nlohmann::json& jc = header.at("config");
        cfg.image_size = jc.at("image_size").get<std::size_t>();
        cfg.conv_channels = jc.at("conv_channels").get<std::vector<std::size_t>>();
        cfg.image_feature_dim = jc.at("image_feature_dim").get<std::size_t>();
        cfg.eye_input_dim = jc.at("eye_input_dim").get<std::size_t>();
        cfg.eye_hidden = jc.at("eye_hidden").get<std::vector<std::size_t>>();
        cfg.fusion_hidden = jc.at("fusion_hidden").get<std::size_t>();
        cfg.dropout_p = jc.at("dropout_p").get<double>();
        cfg.seed = jc.at("seed").get<std::uint64_t>();
        canonical_seed = header.at("canonical_image_seed").get<std::uint64_t>();
        cfg.validate();
    } catch (const nlohmann::json::exception&) {
        throw WeightsError("weight file header is missing config fields");
    } catch (const std::invalid_argument& e) {
        throw WeightsError(std::string("weight file config is invalid: ") + e.what());
    }

    DualNet net(cfg);
    net.canonical_image_seed = canonical_seed;

    if (!header.contains("tensors") || !header["tensors"].is_array())
        throw WeightsError("weight file header has no tensor directory");
    struct DirEntry {
        std::vector<std::size_t> shape;
        std::uint64_t offset = 0;
        std::uint64_t count = 0;
    };
    std::vector<std::pair<std::string, DirEntry>> entries;
    try {
        for (const auto& e : header["tensors"]) {
            DirEntry d;
            d.shape = e.at("shape").get<std::vector<std::size_t>>();
            d.offset = e.at("offset").get<std::uint64_t>();
            d.count = e.at("count").get<std::uint64_t>();
            entries.emplace_back(e.at("name").get<std::string>(), d);
        }
    } catch (const nlohmann::json::exception&) {
        throw WeightsError("weight file tensor directory is malformed");
    }

    auto named = net.named_tensors();
    if (entries.size() != named.size())
        throw WeightsShapeError("weight file tensor directory does not match the architecture");
    for (std::size_t i = 0; i < named.size(); ++i) {
        const auto& [name, tensor] = named[i];
        const auto& [dname, dir] = entries[i];
        if (dname != name)
            throw WeightsShapeError("unexpected tensor '" + dname + "', wanted '" + name + "'");
        if (dir.shape != tensor->shape() || dir.count != tensor->size())
            throw WeightsShapeError("tensor '" + name + "' has the wrong shape");
    }

    const std::string payload = bytes.substr(8 + header_len);
    for (const auto& [name, dir] : entries) {
        if (dir.offset + dir.count * 8 > payload.size())
            throw WeightsTruncatedError("weight file payload is truncated at tensor '" + name +
                                        "'");
    }

    std::string expect;
    try {
        expect = header.at("payload_checksum").get<std::string>();
    } catch (const nlohmann::json::exception&) {
        throw WeightsError("weight file header has no payload checksum");
    }
    if (to_hex(fnv1a64(payload.data(), payload.size())) != expect)
        throw WeightsChecksumError("weight file payload checksum mismatch");

    for (std::size_t i = 0; i < named.size(); ++i) {
        double* out = named[i].second->data();
        const unsigned char* src =
            reinterpret_cast<const unsigned char*>(payload.data()) + entries[i].second.offset;
        for (std::size_t k = 0; k < entries[i].second.count; ++k) {
            const std::uint64_t bits = get_u64le(src + k * 8);
            std::memcpy(&out[k], &bits, 8);
        }
    }
    return net;
}

}  // namespace photorisk::net
