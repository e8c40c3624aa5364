#pragma once

// End-to-end FL simulation: cluster once, then per round select devices,
// allocate bandwidth and CPU frequency, train, aggregate and evaluate.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsao/allocator.hpp"
#include "fedsao/clustering.hpp"
#include "fedsao/datasets.hpp"
#include "fedsao/fl_engine.hpp"
#include "fedsao/net_model.hpp"
#include "fedsao/selection.hpp"

namespace fedsao {

enum class AllocatorKind { sao, equal_bandwidth, fedl };

struct DataConfig {
    int num_classes = 5;
    std::size_t dim = 20;
    double separation = 3.0;
    std::size_t train_per_class = 2000;
    std::size_t test_per_class = 200;
    bool two_class = false;  // two labels per device instead of sigma skew
    double sigma = 0.8;
    std::size_t samples_per_device = 0;  // 0 = equal split
    // When set, these IDX files replace the synthetic generator.
    std::string idx_train_images, idx_train_labels, idx_test_images, idx_test_labels;
};

struct SelectionConfig {
    SelectionStrategy strategy = SelectionStrategy::weight_divergence;
    int num_selected = 10;  // S; cluster strategies take S / c per cluster
    int num_clusters = 0;   // 0 = number of classes
    std::string cluster_layer = "fc_last";
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    NetworkConfig network;
    DeviceTemplate devices{.model_size_bits = 16 * kBitsPerKilobyte};
    int num_devices = 50;
    DataConfig data;
    std::vector<std::size_t> hidden_dims{16};
    TrainConfig train{.local_iters = 5, .learning_rate = 0.2, .batch_size = 0};
    SelectionConfig selection;
    AllocatorKind allocator = AllocatorKind::sao;
    SolverTolerances solver;
    double target_accuracy = 0.75;
    int max_rounds = 100;
    bool include_round0_cost = false;

    void validate() const;
    int resolved_clusters() const;
    int per_cluster() const;  // s
};

// Reads a JSON config; absent keys keep their defaults, unknown keys are errors.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

struct DeviceRoundRecord {
    int device = 0;
    double bandwidth_hz = 0;
    double cpu_hz = 0;
    double delay_s = 0;
    double energy_j = 0;
};

struct RoundMetrics {
    int round = 0;
    double delay_s = 0;   // T_k
    double energy_j = 0;  // E_k
    double accuracy = 0;  // A_k
    std::vector<int> selected;
    std::vector<std::string> flags;
    std::vector<DeviceRoundRecord> devices;
};

struct ExperimentState {
    ExperimentConfig cfg;
    std::vector<PlacedDevice> cell;
    LabeledDataset test;
    PartitionedData parts;
    LayerSpec spec;
    ModelWeights global;
    std::vector<ModelWeights> device_weights;  // last locally trained weights per device
    std::vector<ModelWeights> round0_weights;  // local models from round 0, the clustering input
    KmeansFit clustering;
    std::vector<std::vector<int>> groups;
    double cluster_ari = 0;
    RoundMetrics round0;
    int round = 0;
};

// Builds the cell, data and model, then runs round 0 (all devices train,
// the server aggregates and clusters).
ExperimentState init_experiment(const ExperimentConfig& cfg);

// One selection round. Allocation infeasibility is rethrown naming the round.
RoundMetrics run_round(ExperimentState& state);

// Allocation for a device subset under the configured allocator.
AllocationResult allocate_round(const ExperimentConfig& cfg, std::span<const DeviceProfile> devices);

struct ExperimentResult {
    std::vector<RoundMetrics> rounds;  // selection rounds only
    RoundMetrics round0;
    bool round0_counted = false;  // round 0 cost included in the totals
    double total_delay_s = 0;   // T, sum over rounds (plus round 0 if configured)
    double total_energy_j = 0;  // E
    int rounds_run = 0;         // K
    bool reached_target = false;
    double final_accuracy = 0;
    double cluster_ari = 0;
};

// Runs rounds until the target accuracy or the round cap.
ExperimentResult run_experiment(const ExperimentConfig& cfg, ExperimentState* final_state = nullptr);

struct ImprovementScore {
    double literal = 0;   // eval / fedavg - 1
    double inverted = 0;  // fedavg / eval - 1
};

ImprovementScore improvement_score(double r_eval, double r_fedavg);

inline constexpr const char* kMetricsHeader = "# fedsao metrics v1";
inline constexpr const char* kSelectionsHeader = "# fedsao selections v1";
inline constexpr const char* kSweepHeader = "# fedsao sweep v1";

void write_metrics_csv(std::ostream& out, const ExperimentResult& result);
void write_selections_csv(std::ostream& out, const ExperimentResult& result);
nlohmann::json summary_json(const ExperimentResult& result);

// Reads rows of a metrics CSV back: (delay, energy) per round.
std::vector<std::pair<double, double>> read_metrics_costs(std::istream& in);

enum class SweepParam { transmit_power, energy_budget, bandwidth, num_selected };

SweepParam parse_sweep_param(std::string_view name);

struct SweepRow {
    double value = 0;
    std::vector<double> columns;  // NaN where the point failed
    std::string error;
};

struct SweepTable {
    std::vector<std::string> column_names;
    std::vector<SweepRow> rows;
};

// Power, budget and bandwidth sweeps allocate one round for
// `selection.num_selected` devices under all three allocators (power in dBm
// and budget in mJ applied to every device, total bandwidth in MHz). The S
// sweep runs a full experiment per value.
SweepTable sweep(const ExperimentConfig& cfg, SweepParam param, const std::vector<double>& values);
void write_sweep_csv(std::ostream& out, const SweepTable& table);

// A standalone allocation problem: network plus explicit device profiles.
// JSON: {"network": {...}, "devices": [{...}, ...]} with the same units as
// the experiment config, or {"network": ..., "generate": {"count": n,
// "seed": s, ...device template keys}} to draw a random cell.
struct AllocationInstance {
    NetworkConfig network;
    std::vector<DeviceProfile> devices;
};

AllocationInstance instance_from_json(const nlohmann::json& j);
nlohmann::json instance_to_json(const AllocationInstance& inst);
nlohmann::json allocation_to_json(const AllocationResult& r);
AllocationResult allocation_from_json(const nlohmann::json& j);
nlohmann::json kkt_to_json(const KktReport& r);

// Shortest round-trip decimal form, used for every CSV number.
std::string format_number(double v);

}  // namespace fedsao
