#pragma once

// A small multilayer perceptron (tanh hidden layers, softmax output) trained
// with hand-written backprop, plus federated aggregation and checkpoints.
//
// Parameters live in one flat vector. Layer l stores its weight matrix
// row-major (out x in) followed by its bias. Hidden layers are named "fc1",
// "fc1_bias", "fc2", ...; the output layer is "fc_last" / "fc_last_bias".

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedsao/datasets.hpp"

namespace fedsao {

struct LayerRange {
    std::string name;
    std::size_t offset = 0;
    std::size_t length = 0;

    bool operator==(const LayerRange&) const = default;
};

struct ModelWeights {
    std::vector<double> values;
    std::vector<LayerRange> layer_map;

    std::size_t size() const { return values.size(); }
    const LayerRange& layer(std::string_view name) const;
    // Ranges must be unique, contiguous from 0, and cover `values` exactly.
    void validate() const;
    bool same_layout(const ModelWeights& other) const { return layer_map == other.layer_map; }
};

// Builds zero-filled weights for an arbitrary ordered list of (name, length).
// Useful for describing layouts of models this library does not run.
ModelWeights make_layout(const std::vector<std::pair<std::string, std::size_t>>& layers);

// Layer sizes of the reference MNIST CNN: two 5x5 conv layers with 15 and
// 28 channels, then 448 -> 224 -> 10 fully connected (113744 parameters).
ModelWeights mnist_cnn_layout();

struct LayerSpec {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden_dims;
    std::size_t output_dim = 0;

    void validate() const;
    std::size_t parameter_count() const;
    bool operator==(const LayerSpec&) const = default;
};

struct TrainConfig {
    int local_iters = 5;
    double learning_rate = 0.1;
    std::size_t batch_size = 0;  // 0 = full batch

    void validate() const;
};

ModelWeights init_model(const LayerSpec& spec, std::uint64_t seed);

// Mean cross-entropy over `data`.
double mean_loss(const LayerSpec& spec, const ModelWeights& w, const LabeledDataset& data);

// Gradient of mean_loss with respect to w.values.
std::vector<double> loss_gradient(const LayerSpec& spec, const ModelWeights& w, const LabeledDataset& data);

// L gradient steps from w. `seed` drives mini-batch shuffling only.
ModelWeights local_update(const LayerSpec& spec, const ModelWeights& w, const LabeledDataset& data,
                          const TrainConfig& cfg, std::uint64_t seed);

// Sample-weighted mean of the inputs.
ModelWeights aggregate(std::span<const ModelWeights> weights, std::span<const double> sizes);

// Class scores for one input (pre-softmax).
std::vector<double> predict_logits(const LayerSpec& spec, const ModelWeights& w, std::span<const double> x);

// Fraction of samples whose argmax logit (lowest index on ties) is correct.
double evaluate(const LayerSpec& spec, const ModelWeights& w, const LabeledDataset& data);

std::span<const double> layer_slice(const ModelWeights& w, std::string_view layer_name);

// Binary checkpoint, all integers and floats little-endian:
//   8 bytes   magic "FSAOCKPT"
//   u32       format version (1)
//   u32       input_dim, u32 output_dim, u32 hidden count, u32 x count hidden dims
//   u32       layer count, then per layer: u32 name length, name bytes, u64 offset, u64 length
//   u64       value count, then that many IEEE-754 binary64 values
struct Checkpoint {
    LayerSpec spec;
    ModelWeights weights;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const LayerSpec& spec, const ModelWeights& w);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fedsao
