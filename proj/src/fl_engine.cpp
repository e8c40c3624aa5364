#include "fedsao/fl_engine.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <unordered_set>

#include "fedsao/errors.hpp"
#include "fedsao/rng.hpp"

namespace fedsao {

const LayerRange& ModelWeights::layer(std::string_view name) const {
    for (const auto& r : layer_map)
        if (r.name == name) return r;
    throw DomainError("unknown layer '" + std::string(name) + "'");
}

void ModelWeights::validate() const {
    std::size_t next = 0;
    std::unordered_set<std::string> names;
    for (const auto& r : layer_map) {
        if (!names.insert(r.name).second) throw DomainError("duplicate layer name '" + r.name + "'");
        if (r.offset != next) throw DomainError("layer '" + r.name + "' is not contiguous");
        next += r.length;
    }
    if (next != values.size()) throw DomainError("layer map does not cover the weight vector");
}

ModelWeights make_layout(const std::vector<std::pair<std::string, std::size_t>>& layers) {
    ModelWeights w;
    std::size_t offset = 0;
    for (const auto& [name, length] : layers) {
        w.layer_map.push_back({name, offset, length});
        offset += length;
    }
    w.values.assign(offset, 0.0);
    w.validate();
    return w;
}

ModelWeights mnist_cnn_layout() {
    return make_layout({{"c1", 1 * 15 * 5 * 5},
                        {"c1_bias", 15},
                        {"c2", 15 * 28 * 5 * 5},
                        {"c2_bias", 28},
                        {"fc1", 448 * 224},
                        {"fc1_bias", 224},
                        {"fc2", 224 * 10},
                        {"fc2_bias", 10}});
}

void LayerSpec::validate() const {
    if (input_dim < 1 || output_dim < 1) throw DomainError("layer spec: dims must be >= 1");
    for (auto h : hidden_dims)
        if (h < 1) throw DomainError("layer spec: hidden dims must be >= 1");
}

namespace {

std::vector<std::size_t> widths(const LayerSpec& spec) {
    std::vector<std::size_t> out{spec.input_dim};
    out.insert(out.end(), spec.hidden_dims.begin(), spec.hidden_dims.end());
    out.push_back(spec.output_dim);
    return out;
}

std::string weight_name(std::size_t layer, std::size_t count) {
    return layer + 1 == count ? "fc_last" : "fc" + std::to_string(layer + 1);
}

}  // namespace

std::size_t LayerSpec::parameter_count() const {
    const auto dims = widths(*this);
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) n += dims[l] * dims[l + 1] + dims[l + 1];
    return n;
}

void TrainConfig::validate() const {
    if (local_iters < 1) throw DomainError("train config: local_iters must be >= 1");
    if (!(learning_rate > 0)) throw DomainError("train config: learning rate must be > 0");
}

ModelWeights init_model(const LayerSpec& spec, std::uint64_t seed) {
    spec.validate();
    const auto dims = widths(spec);
    const std::size_t layers = dims.size() - 1;
    std::vector<std::pair<std::string, std::size_t>> layout;
    for (std::size_t l = 0; l < layers; ++l) {
        const auto name = weight_name(l, layers);
        layout.emplace_back(name, dims[l] * dims[l + 1]);
        layout.emplace_back(name + "_bias", dims[l + 1]);
    }
    ModelWeights w = make_layout(layout);

    Rng rng = make_rng(seed, {stream::model_init});
    for (std::size_t l = 0; l < layers; ++l) {
        const double limit = std::sqrt(6.0 / static_cast<double>(dims[l] + dims[l + 1]));
        std::uniform_real_distribution<double> dist(-limit, limit);
        const auto& r = w.layer_map[2 * l];
        for (std::size_t i = 0; i < r.length; ++i) w.values[r.offset + i] = dist(rng);
    }
    return w;
}

namespace {

// Forward/backward pass over a set of sample indices. Accumulates the mean
// loss and, when `grad` is non-null, the mean gradient.
class Network {
public:
    Network(const LayerSpec& spec, const ModelWeights& w) : dims_(widths(spec)), w_(w) {
        spec.validate();
        if (w.size() != spec.parameter_count()) throw DomainError("model weights do not match the layer spec");
        acts_.resize(dims_.size());
        deltas_.resize(dims_.size());
        for (std::size_t l = 0; l < dims_.size(); ++l) {
            acts_[l].resize(dims_[l]);
            deltas_[l].resize(dims_[l]);
        }
    }

    std::span<const double> forward(std::span<const double> x) {
        std::copy(x.begin(), x.end(), acts_[0].begin());
        std::size_t offset = 0;
        const std::size_t layers = dims_.size() - 1;
        for (std::size_t l = 0; l < layers; ++l) {
            const std::size_t in = dims_[l], out = dims_[l + 1];
            const double* W = w_.values.data() + offset;
            const double* b = W + in * out;
            for (std::size_t o = 0; o < out; ++o) {
                double z = b[o];
                const double* row = W + o * in;
                for (std::size_t i = 0; i < in; ++i) z += row[i] * acts_[l][i];
                acts_[l + 1][o] = l + 1 < layers ? std::tanh(z) : z;
            }
            offset += in * out + out;
        }
        return acts_.back();
    }

    // Adds this sample's gradient (scaled by `scale`) into grad; returns the loss.
    double backward(int label, double scale, std::vector<double>* grad) {
        auto& logits = acts_.back();
        const double peak = *std::max_element(logits.begin(), logits.end());
        double total = 0;
        for (double z : logits) total += std::exp(z - peak);
        const double log_norm = peak + std::log(total);
        const double loss = log_norm - logits[static_cast<std::size_t>(label)];
        if (!grad) return loss;

        auto& top = deltas_.back();
        for (std::size_t k = 0; k < top.size(); ++k) top[k] = std::exp(logits[k] - log_norm);
        top[static_cast<std::size_t>(label)] -= 1.0;

        std::size_t offset = w_.size();
        for (std::size_t l = dims_.size() - 1; l >= 1; --l) {
            const std::size_t in = dims_[l - 1], out = dims_[l];
            offset -= in * out + out;
            const double* W = w_.values.data() + offset;
            double* gW = grad->data() + offset;
            double* gb = gW + in * out;
            const auto& delta = deltas_[l];
            const auto& a = acts_[l - 1];
            for (std::size_t o = 0; o < out; ++o) {
                const double d = delta[o] * scale;
                gb[o] += d;
                double* grow = gW + o * in;
                for (std::size_t i = 0; i < in; ++i) grow[i] += d * a[i];
            }
            if (l > 1) {
                auto& below = deltas_[l - 1];
                for (std::size_t i = 0; i < in; ++i) {
                    double s = 0;
                    for (std::size_t o = 0; o < out; ++o) s += W[o * in + i] * delta[o];
                    below[i] = s * (1.0 - a[i] * a[i]);
                }
            }
        }
        return loss;
    }

private:
    std::vector<std::size_t> dims_;
    const ModelWeights& w_;
    std::vector<std::vector<double>> acts_;
    std::vector<std::vector<double>> deltas_;
};

void check_data(const LayerSpec& spec, const LabeledDataset& data) {
    if (data.size() == 0) throw DomainError("dataset is empty");
    if (data.dim != spec.input_dim) throw DomainError("dataset feature dim does not match the model input");
    for (int y : data.labels)
        if (y < 0 || static_cast<std::size_t>(y) >= spec.output_dim)
            throw DomainError("label out of range for the model output");
}

double batch_gradient(Network& net, const LabeledDataset& data, std::span<const std::size_t> batch,
                      std::vector<double>* grad) {
    const double scale = 1.0 / static_cast<double>(batch.size());
    double loss = 0;
    for (auto i : batch) {
        net.forward(data.row(i));
        loss += net.backward(data.labels[i], scale, grad);
    }
    return loss * scale;
}

std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
}

}  // namespace

double mean_loss(const LayerSpec& spec, const ModelWeights& w, const LabeledDataset& data) {
    check_data(spec, data);
    Network net(spec, w);
    return batch_gradient(net, data, all_indices(data.size()), nullptr);
}

std::vector<double> loss_gradient(const LayerSpec& spec, const ModelWeights& w, const LabeledDataset& data) {
    check_data(spec, data);
    Network net(spec, w);
    std::vector<double> grad(w.size(), 0.0);
    batch_gradient(net, data, all_indices(data.size()), &grad);
    return grad;
}

ModelWeights local_update(const LayerSpec& spec, const ModelWeights& w, const LabeledDataset& data,
                          const TrainConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    check_data(spec, data);
    ModelWeights out = w;
    Network net(spec, out);
    std::vector<double> grad(out.size());

    const bool full = cfg.batch_size == 0 || cfg.batch_size >= data.size();
    auto order = all_indices(data.size());
    Rng rng = make_rng(seed, {stream::local_train});
    std::size_t cursor = order.size();

    for (int step = 0; step < cfg.local_iters; ++step) {
        std::span<const std::size_t> batch(order);
        if (!full) {
            if (cursor + cfg.batch_size > order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            batch = batch.subspan(cursor, cfg.batch_size);
            cursor += cfg.batch_size;
        }
        std::fill(grad.begin(), grad.end(), 0.0);
        batch_gradient(net, data, batch, &grad);
        for (std::size_t i = 0; i < grad.size(); ++i) out.values[i] -= cfg.learning_rate * grad[i];
    }
    return out;
}

ModelWeights aggregate(std::span<const ModelWeights> weights, std::span<const double> sizes) {
    if (weights.empty()) throw DomainError("aggregate: no models");
    if (weights.size() != sizes.size()) throw DomainError("aggregate: one size per model required");
    double total = 0;
    for (std::size_t n = 0; n < weights.size(); ++n) {
        if (!weights[n].same_layout(weights[0]) || weights[n].size() != weights[0].size())
            throw DomainError("aggregate: layer maps differ");
        if (!(sizes[n] > 0)) throw DomainError("aggregate: sizes must be > 0");
    }
    std::vector<double> sorted_sizes(sizes.begin(), sizes.end());
    std::sort(sorted_sizes.begin(), sorted_sizes.end());
    for (double s : sorted_sizes) total += s;
    // Per coordinate: offsets from the smallest input, summed in ascending
    // order. The result does not depend on input order, and identical inputs
    // come back unchanged.
    ModelWeights out = weights[0];
    std::vector<double> terms(weights.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double low = weights[0].values[i];
        for (const auto& w : weights) low = std::min(low, w.values[i]);
        for (std::size_t n = 0; n < weights.size(); ++n) terms[n] = sizes[n] * (weights[n].values[i] - low);
        std::sort(terms.begin(), terms.end());
        double sum = 0;
        for (double t : terms) sum += t;
        out.values[i] = low + sum / total;
    }
    return out;
}

std::vector<double> predict_logits(const LayerSpec& spec, const ModelWeights& w, std::span<const double> x) {
    if (x.size() != spec.input_dim) throw DomainError("input dim does not match the model");
    Network net(spec, w);
    const auto out = net.forward(x);
    return {out.begin(), out.end()};
}

double evaluate(const LayerSpec& spec, const ModelWeights& w, const LabeledDataset& data) {
    check_data(spec, data);
    Network net(spec, w);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto logits = net.forward(data.row(i));
        // max_element returns the first maximum, i.e. the lowest class index.
        const auto best = std::max_element(logits.begin(), logits.end()) - logits.begin();
        if (best == data.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::span<const double> layer_slice(const ModelWeights& w, std::string_view layer_name) {
    const auto& r = w.layer(layer_name);
    return std::span<const double>(w.values).subspan(r.offset, r.length);
}

namespace {

constexpr char kMagic[8] = {'F', 'S', 'A', 'O', 'C', 'K', 'P', 'T'};

template <typename T>
void put_le(std::ofstream& out, T v) {
    char bytes[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(bytes, sizeof(T));
}

class Reader {
public:
    explicit Reader(std::vector<unsigned char> buf) : buf_(std::move(buf)) {}

    template <typename T>
    T le() {
        need(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(T{buf_[pos_ + i]} << (8 * i));
        pos_ += sizeof(T);
        return v;
    }

    std::string bytes(std::size_t n) {
        need(n);
        std::string s(buf_.begin() + static_cast<std::ptrdiff_t>(pos_),
                      buf_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return s;
    }

    std::size_t pos() const { return pos_; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > buf_.size()) throw ParseError(pos_, "checkpoint truncated");
    }

    std::vector<unsigned char> buf_;
    std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const LayerSpec& spec, const ModelWeights& w) {
    w.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DomainError("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof kMagic);
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(spec.input_dim));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(spec.output_dim));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(spec.hidden_dims.size()));
    for (auto h : spec.hidden_dims) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(h));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.layer_map.size()));
    for (const auto& r : w.layer_map) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.name.size()));
        out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
        put_le<std::uint64_t>(out, r.offset);
        put_le<std::uint64_t>(out, r.length);
    }
    put_le<std::uint64_t>(out, w.values.size());
    for (double v : w.values) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(0, "cannot open checkpoint " + path.string());
    Reader r({std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()});

    if (r.bytes(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) throw ParseError(0, "not a checkpoint file");
    const auto version_at = r.pos();
    if (r.le<std::uint32_t>() != kCheckpointVersion) throw ParseError(version_at, "unsupported checkpoint version");

    Checkpoint ck;
    ck.spec.input_dim = r.le<std::uint32_t>();
    ck.spec.output_dim = r.le<std::uint32_t>();
    const auto hidden = r.le<std::uint32_t>();
    for (std::uint32_t i = 0; i < hidden; ++i) ck.spec.hidden_dims.push_back(r.le<std::uint32_t>());
    const auto layers = r.le<std::uint32_t>();
    for (std::uint32_t i = 0; i < layers; ++i) {
        LayerRange range;
        range.name = r.bytes(r.le<std::uint32_t>());
        range.offset = r.le<std::uint64_t>();
        range.length = r.le<std::uint64_t>();
        ck.weights.layer_map.push_back(std::move(range));
    }
    const auto count_at = r.pos();
    const auto count = r.le<std::uint64_t>();
    if (count != ck.spec.parameter_count()) throw ParseError(count_at, "value count does not match the layer spec");
    ck.weights.values.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) ck.weights.values.push_back(std::bit_cast<double>(r.le<std::uint64_t>()));
    try {
        ck.weights.validate();
    } catch (const DomainError& e) {
        throw ParseError(count_at, e.what());
    }
    return ck;
}

}  // namespace fedsao
