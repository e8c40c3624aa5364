#pragma once

// K-means over per-device weight slices and the adjusted Rand index.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedsao/fl_engine.hpp"

namespace fedsao {

using FeatureSet = std::vector<std::vector<double>>;

struct ClusterModel {
    FeatureSet centroids;
    std::string feature_layer;
};

struct ClusterAssignment {
    std::vector<int> labels;  // per point, in [0, num_clusters)
    int num_clusters = 0;

    // Member ids per cluster, ascending. Empty clusters stay empty.
    std::vector<std::vector<int>> groups() const;
};

struct KmeansOptions {
    int max_iters = 300;
    int restarts = 10;
};

struct KmeansFit {
    ClusterModel model;
    ClusterAssignment assignment;
    double inertia = 0;                // within-cluster sum of squares
    int iterations = 0;                // of the winning restart
    std::vector<double> inertia_trace;  // after each assignment step of the winning restart
};

double squared_distance(std::span<const double> a, std::span<const double> b);

// Best of `restarts` Lloyd runs with k-means++ seeding.
KmeansFit kmeans_fit(const FeatureSet& features, int c, std::uint64_t seed, const KmeansOptions& opts = {});

// Clusters devices on one layer of their weights ("fc_last" by default).
KmeansFit cluster_devices(std::span<const ModelWeights> device_weights, std::string_view layer_name, int c,
                          std::uint64_t seed, const KmeansOptions& opts = {});

double adjusted_rand_index(std::span<const int> pred, std::span<const int> truth);

}  // namespace fedsao
