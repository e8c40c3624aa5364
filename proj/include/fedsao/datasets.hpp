#pragma once

// Labeled data: synthetic Gaussian blobs, IDX-format files, and label-skew
// (non-iid) partitioning across devices.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

namespace fedsao {

struct LabeledDataset {
    std::size_t dim = 0;
    int num_classes = 0;
    std::vector<double> features;  // row-major, size() * dim
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }
    LabeledDataset subset(std::span<const std::size_t> indices) const;
    std::vector<std::size_t> class_counts() const;
    void validate() const;
};

struct PartitionedData {
    std::vector<LabeledDataset> per_device;
    std::vector<std::vector<std::size_t>> source_indices;  // into the partitioned source
    std::vector<int> majority_class;
    std::vector<int> secondary_class;  // two-class mode only; -1 otherwise
};

// num_classes blobs of per_class points each, unit-variance isotropic noise,
// class means pairwise `separation` apart (exactly when dim >= num_classes).
LabeledDataset gen_synthetic(int num_classes, std::size_t per_class, std::size_t dim, double separation,
                             std::uint64_t seed);

// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
// Pixels are scaled to [0, 1].
LabeledDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

// Writes `data` as an IDX pair with rows x cols images; features are
// quantized to bytes as round(255 * clamp(x, 0, 1)).
void write_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
               const LabeledDataset& data, std::uint32_t rows, std::uint32_t cols);

// Each device gets floor(D * sigma) samples of its majority class (device i
// -> class i mod C) and the rest spread evenly over the other classes.
// samples_per_device == 0 means an equal split of the source.
PartitionedData partition_noniid(const LabeledDataset& data, int num_devices, double sigma, std::uint64_t seed,
                                 std::size_t samples_per_device = 0);

// Each device holds exactly two labels: `majority_fraction` of its samples
// from the majority class and the rest from one secondary class.
PartitionedData partition_two_class(const LabeledDataset& data, int num_devices, std::uint64_t seed,
                                    std::size_t samples_per_device = 0, double majority_fraction = 0.8);

// Audit manifest: device -> sample indices and majority class.
nlohmann::json partition_manifest(const PartitionedData& parts);

}  // namespace fedsao
