#include "fedsao/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <string>


#include "fedsao/errors.hpp"
#include "fedsao/rng.hpp"

namespace fedsao {

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
    LabeledDataset out;
    out.dim = dim;
    out.num_classes = num_classes;
    out.features.reserve(indices.size() * dim);
    out.labels.reserve(indices.size());
    for (auto i : indices) {
        const auto r = row(i);
        out.features.insert(out.features.end(), r.begin(), r.end());
        out.labels.push_back(labels[i]);
    }
    return out;
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
    for (int y : labels) ++counts[static_cast<std::size_t>(y)];
    return counts;
}

void LabeledDataset::validate() const {
    if (features.size() != labels.size() * dim) throw DomainError("dataset: feature/label count mismatch");
    for (int y : labels)
        if (y < 0 || y >= num_classes) throw DomainError("dataset: label out of range");
}

LabeledDataset gen_synthetic(int num_classes, std::size_t per_class, std::size_t dim, double separation,
                             std::uint64_t seed) {
    if (num_classes < 1 || per_class < 1 || dim < 1) throw DomainError("gen_synthetic: counts must be >= 1");
    Rng rng = make_rng(seed, {stream::dataset});
    std::normal_distribution<double> normal(0.0, 1.0);

    // Orthogonal axes scaled by s/sqrt(2) are pairwise s apart. With fewer
    // dimensions than classes, random unit directions are used instead.
    const double scale = separation / std::sqrt(2.0);
    std::vector<std::vector<double>> means(static_cast<std::size_t>(num_classes), std::vector<double>(dim, 0.0));
    for (std::size_t c = 0; c < means.size(); ++c) {
        if (dim >= means.size()) {
            means[c][c] = scale;
        } else {
            double norm = 0;
            for (auto& v : means[c]) {
                v = normal(rng);
                norm += v * v;
            }
            norm = std::sqrt(norm);
            for (auto& v : means[c]) v *= scale / norm;
        }
    }

    LabeledDataset out;
    out.dim = dim;
    out.num_classes = num_classes;
    out.features.reserve(static_cast<std::size_t>(num_classes) * per_class * dim);
    for (int c = 0; c < num_classes; ++c) {
        for (std::size_t i = 0; i < per_class; ++i) {
            for (std::size_t k = 0; k < dim; ++k) out.features.push_back(means[static_cast<std::size_t>(c)][k] + normal(rng));
            out.labels.push_back(c);
        }
    }
    return out;
}

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(0, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset, const std::string& what) {
    if (offset + 4 > buf.size()) throw ParseError(offset, what + ": truncated header");
    return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
           (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                           static_cast<char>(v)};
    out.write(bytes, 4);
}

}  // namespace

LabeledDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
    const auto images = read_file(images_path);
    const auto labels = read_file(labels_path);

    if (read_be32(images, 0, "images") != 0x00000803) throw ParseError(0, "images: bad magic number");
    if (read_be32(labels, 0, "labels") != 0x00000801) throw ParseError(0, "labels: bad magic number");
    const std::size_t count = read_be32(images, 4, "images");
    const std::size_t rows = read_be32(images, 8, "images");
    const std::size_t cols = read_be32(images, 12, "images");
    const std::size_t label_count = read_be32(labels, 4, "labels");
    if (label_count != count) throw ParseError(4, "labels: count does not match the image file");

    const std::size_t dim = rows * cols;
    if (images.size() < 16 + count * dim) throw ParseError(images.size(), "images: truncated pixel data");
    if (labels.size() < 8 + count) throw ParseError(labels.size(), "labels: truncated label data");

    LabeledDataset out;
    out.dim = dim;
    out.features.resize(count * dim);
    out.labels.resize(count);
    for (std::size_t i = 0; i < count * dim; ++i) out.features[i] = images[16 + i] / 255.0;
    int max_label = 0;
    for (std::size_t i = 0; i < count; ++i) {
        out.labels[i] = labels[8 + i];
        max_label = std::max(max_label, out.labels[i]);
    }
    out.num_classes = count > 0 ? max_label + 1 : 0;
    return out;
}

void write_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
               const LabeledDataset& data, std::uint32_t rows, std::uint32_t cols) {
    if (std::size_t{rows} * cols != data.dim) throw DomainError("write_idx: rows * cols must equal the feature dim");
    std::ofstream img(images_path, std::ios::binary);
    std::ofstream lab(labels_path, std::ios::binary);
    if (!img || !lab) throw DomainError("write_idx: cannot open output files");
    put_be32(img, 0x00000803);
    put_be32(img, static_cast<std::uint32_t>(data.size()));
    put_be32(img, rows);
    put_be32(img, cols);
    for (double v : data.features)
        img.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)))));
    put_be32(lab, 0x00000801);
    put_be32(lab, static_cast<std::uint32_t>(data.size()));
    for (int y : data.labels) lab.put(static_cast<char>(static_cast<unsigned char>(y)));
}

namespace {

// Shuffled per-class index pools handed out without replacement.
class ClassPools {
public:
    ClassPools(const LabeledDataset& data, Rng& rng) : pools_(static_cast<std::size_t>(data.num_classes)) {
        for (std::size_t i = 0; i < data.size(); ++i) pools_[static_cast<std::size_t>(data.labels[i])].push_back(i);
        for (auto& p : pools_) std::shuffle(p.begin(), p.end(), rng);
        cursor_.assign(pools_.size(), 0);
    }

    void take(int cls, std::size_t count, std::vector<std::size_t>& into) {
        auto& pool = pools_[static_cast<std::size_t>(cls)];
        auto& cur = cursor_[static_cast<std::size_t>(cls)];
        if (cur + count > pool.size())
            throw DomainError("partition: class " + std::to_string(cls) + " has too few samples (" +
                              std::to_string(pool.size()) + " available)");
        into.insert(into.end(), pool.begin() + static_cast<std::ptrdiff_t>(cur),
                    pool.begin() + static_cast<std::ptrdiff_t>(cur + count));
        cur += count;
    }

private:
    std::vector<std::vector<std::size_t>> pools_;
    std::vector<std::size_t> cursor_;
};

std::size_t resolve_device_size(const LabeledDataset& data, int num_devices, std::size_t requested) {
    if (num_devices < 1) throw DomainError("partition: need at least one device");
    if (data.num_classes < 2) throw DomainError("partition: need at least two classes");
    const std::size_t size = requested > 0 ? requested : data.size() / static_cast<std::size_t>(num_devices);
    if (size == 0) throw DomainError("partition: zero samples per device");
    return size;
}

void finish_device(const LabeledDataset& data, PartitionedData& out, std::vector<std::size_t> indices, int majority,
                   int secondary) {
    out.per_device.push_back(data.subset(indices));
    out.source_indices.push_back(std::move(indices));
    out.majority_class.push_back(majority);
    out.secondary_class.push_back(secondary);
}

}  // namespace

PartitionedData partition_noniid(const LabeledDataset& data, int num_devices, double sigma, std::uint64_t seed,
                                 std::size_t samples_per_device) {
    data.validate();
    if (!(sigma >= 0 && sigma <= 1)) throw DomainError("partition_noniid: sigma must lie in [0, 1]");
    const std::size_t per_device = resolve_device_size(data, num_devices, samples_per_device);
    const int classes = data.num_classes;

    Rng rng = make_rng(seed, {stream::partition});
    ClassPools pools(data, rng);
    PartitionedData out;
    for (int i = 0; i < num_devices; ++i) {
        const int majority = i % classes;
        const auto n_major = static_cast<std::size_t>(std::floor(static_cast<double>(per_device) * sigma));
        const std::size_t rest = per_device - n_major;
        const std::size_t others = static_cast<std::size_t>(classes - 1);
        const std::size_t base = rest / others;
        const std::size_t extra = rest % others;
        // Leftover samples rotate over the other classes so that the demand
        // on each class stays balanced across devices.
        const std::size_t rotation = static_cast<std::size_t>(i / classes) % others;

        std::vector<std::size_t> indices;
        indices.reserve(per_device);
        pools.take(majority, n_major, indices);
        for (std::size_t k = 0; k < others; ++k) {
            const int cls = (majority + 1 + static_cast<int>(k)) % classes;
            const std::size_t slot = (k + others - rotation) % others;
            pools.take(cls, base + (slot < extra ? 1 : 0), indices);
        }
        finish_device(data, out, std::move(indices), majority, -1);
    }
    return out;
}

PartitionedData partition_two_class(const LabeledDataset& data, int num_devices, std::uint64_t seed,
                                    std::size_t samples_per_device, double majority_fraction) {
    data.validate();
    if (!(majority_fraction > 0 && majority_fraction <= 1))
        throw DomainError("partition_two_class: majority fraction must lie in (0, 1]");
    const std::size_t per_device = resolve_device_size(data, num_devices, samples_per_device);
    const int classes = data.num_classes;

    Rng rng = make_rng(seed, {stream::partition});
    ClassPools pools(data, rng);
    std::uniform_int_distribution<int> shift_dist(1, classes - 1);
    PartitionedData out;
    int shift = 1;
    for (int i = 0; i < num_devices; ++i) {
        // One random shift per block of `classes` devices keeps every class
        // used exactly once as majority and once as secondary per block.
        if (i % classes == 0) shift = shift_dist(rng);
        const int majority = i % classes;
        const int secondary = (majority + shift) % classes;
        const auto n_major = static_cast<std::size_t>(std::lround(static_cast<double>(per_device) * majority_fraction));
        std::vector<std::size_t> indices;
        indices.reserve(per_device);
        pools.take(majority, n_major, indices);
        pools.take(secondary, per_device - n_major, indices);
        finish_device(data, out, std::move(indices), majority, secondary);
    }
    return out;
}

nlohmann::json partition_manifest(const PartitionedData& parts) {
    nlohmann::json devices = nlohmann::json::array();
    for (std::size_t i = 0; i < parts.per_device.size(); ++i) {
        nlohmann::json d;
        d["device"] = i;
        d["majority_class"] = parts.majority_class[i];
        if (parts.secondary_class[i] >= 0) d["secondary_class"] = parts.secondary_class[i];
        d["indices"] = parts.source_indices[i];
        devices.push_back(std::move(d));
    }
    return {{"num_devices", parts.per_device.size()}, {"devices", std::move(devices)}};
}

}  // namespace fedsao
