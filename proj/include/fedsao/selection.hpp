#pragma once

// Per-round device selection strategies.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "fedsao/fl_engine.hpp"

namespace fedsao {

struct SelectionSet {
    std::vector<int> device_ids;  // ascending, no duplicates
    int round = 0;
    bool short_cluster = false;  // some cluster had fewer than s members
};

enum class SelectionStrategy { random, cluster_random, weight_divergence };

SelectionStrategy parse_strategy(std::string_view name);
std::string_view strategy_name(SelectionStrategy s);

// S of N devices uniformly without replacement; deterministic in (seed, round).
SelectionSet select_random(int num_devices, int num_selected, std::uint64_t seed, int round);

// s uniform picks from each non-empty cluster (all members if fewer).
SelectionSet select_cluster_random(const std::vector<std::vector<int>>& clusters, int s, std::uint64_t seed,
                                   int round);

// Euclidean distance over all layers.
double weight_divergence(const ModelWeights& local, const ModelWeights& global);

// Top-s members of each cluster by divergence from the global model; ties
// go to the lower device id. `device_weights` is indexed by device id.
SelectionSet select_weight_divergence(const std::vector<std::vector<int>>& clusters,
                                      std::span<const ModelWeights> device_weights, const ModelWeights& global, int s,
                                      int round);

}  // namespace fedsao
