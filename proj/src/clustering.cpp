#include "fedsao/clustering.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <random>

#include "fedsao/errors.hpp"
#include "fedsao/rng.hpp"

namespace fedsao {

std::vector<std::vector<int>> ClusterAssignment::groups() const {
    std::vector<std::vector<int>> out(static_cast<std::size_t>(num_clusters));
    for (std::size_t i = 0; i < labels.size(); ++i) out[static_cast<std::size_t>(labels[i])].push_back(static_cast<int>(i));
    return out;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

namespace {

struct Run {
    FeatureSet centroids;
    std::vector<int> labels;
    double inertia = 0;
    int iterations = 0;
    std::vector<double> trace;
};

FeatureSet plus_plus_seeds(const FeatureSet& x, int c, Rng& rng) {
    FeatureSet centroids;
    std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
    centroids.push_back(x[pick(rng)]);
    std::vector<double> d2(x.size(), std::numeric_limits<double>::infinity());
    while (static_cast<int>(centroids.size()) < c) {
        double total = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            d2[i] = std::min(d2[i], squared_distance(x[i], centroids.back()));
            total += d2[i];
        }
        std::size_t next = 0;
        if (total > 0) {
            std::discrete_distribution<std::size_t> weighted(d2.begin(), d2.end());
            next = weighted(rng);
        } else {
            next = pick(rng);  // all points coincide with a centroid already
        }
        centroids.push_back(x[next]);
    }
    return centroids;
}

double assign(const FeatureSet& x, const FeatureSet& centroids, std::vector<int>& labels) {
    double inertia = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (std::size_t k = 0; k < centroids.size(); ++k) {
            const double d = squared_distance(x[i], centroids[k]);
            if (d < best) {
                best = d;
                arg = static_cast<int>(k);
            }
        }
        labels[i] = arg;
        inertia += best;
    }
    return inertia;
}

// Centroid update; an empty cluster takes the point farthest from its own
// centroid, which is then reassigned to it. Points sitting on their centroid
// are never moved, so coincident data leaves the extra clusters empty.
void update(const FeatureSet& x, FeatureSet& centroids, std::vector<int>& labels) {
    const std::size_t dim = x[0].size();
    std::vector<std::size_t> counts(centroids.size(), 0);
    FeatureSet sums(centroids.size(), std::vector<double>(dim, 0.0));
    for (std::size_t i = 0; i < x.size(); ++i) {
        const auto k = static_cast<std::size_t>(labels[i]);
        ++counts[k];
        for (std::size_t j = 0; j < dim; ++j) sums[k][j] += x[i][j];
    }
    for (std::size_t k = 0; k < centroids.size(); ++k) {
        if (counts[k] > 0) {
            for (std::size_t j = 0; j < dim; ++j) centroids[k][j] = sums[k][j] / static_cast<double>(counts[k]);
            continue;
        }
        std::size_t far = 0;
        double far_d = -1;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const auto own = static_cast<std::size_t>(labels[i]);
            if (counts[own] <= 1) continue;  // do not empty another cluster
            const double d = squared_distance(x[i], centroids[own]);
            if (d > far_d) {
                far_d = d;
                far = i;
            }
        }
        if (far_d <= 0) continue;
        --counts[static_cast<std::size_t>(labels[far])];
        labels[far] = static_cast<int>(k);
        counts[k] = 1;
        centroids[k] = x[far];
    }
}

Run lloyd(const FeatureSet& x, int c, int max_iters, Rng& rng) {
    Run run;
    run.centroids = plus_plus_seeds(x, c, rng);
    run.labels.assign(x.size(), -1);
    std::vector<int> previous;
    for (run.iterations = 1; run.iterations <= max_iters; ++run.iterations) {
        previous = run.labels;
        run.inertia = assign(x, run.centroids, run.labels);
        run.trace.push_back(run.inertia);
        if (run.labels == previous) break;
        update(x, run.centroids, run.labels);
    }
    run.iterations = std::min(run.iterations, max_iters);
    return run;
}

}  // namespace

KmeansFit kmeans_fit(const FeatureSet& features, int c, std::uint64_t seed, const KmeansOptions& opts) {
    if (c < 1) throw DomainError("kmeans: need at least one cluster");
    if (features.size() < static_cast<std::size_t>(c)) throw DomainError("kmeans: more clusters than points");
    for (const auto& f : features)
        if (f.size() != features[0].size()) throw DomainError("kmeans: feature dims differ");
    if (opts.max_iters < 1 || opts.restarts < 1) throw DomainError("kmeans: max_iters and restarts must be >= 1");

    Rng rng = make_rng(seed, {stream::clustering});
    Run best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int r = 0; r < opts.restarts; ++r) {
        Run run = lloyd(features, c, opts.max_iters, rng);
        if (run.inertia < best.inertia) best = std::move(run);
    }

    KmeansFit fit;
    fit.model.centroids = std::move(best.centroids);
    fit.assignment.labels = std::move(best.labels);
    fit.assignment.num_clusters = c;
    fit.inertia = best.inertia;
    fit.iterations = best.iterations;
    fit.inertia_trace = std::move(best.trace);
    return fit;
}

KmeansFit cluster_devices(std::span<const ModelWeights> device_weights, std::string_view layer_name, int c,
                          std::uint64_t seed, const KmeansOptions& opts) {
    FeatureSet features;
    features.reserve(device_weights.size());
    for (const auto& w : device_weights) {
        const auto slice = layer_slice(w, layer_name);
        features.emplace_back(slice.begin(), slice.end());
    }
    auto fit = kmeans_fit(features, c, seed, opts);
    fit.model.feature_layer = std::string(layer_name);
    return fit;
}

namespace {

double pairs(double n) { return n * (n - 1) / 2; }

}  // namespace

double adjusted_rand_index(std::span<const int> pred, std::span<const int> truth) {
    if (pred.size() != truth.size()) throw DomainError("ARI: label vectors differ in length");
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> rows, cols;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        joint[{pred[i], truth[i]}] += 1;
        rows[pred[i]] += 1;
        cols[truth[i]] += 1;
    }
    // b01 counts pairs together in pred but apart in truth, b10 the reverse.
    double same_both = 0, same_pred = 0, same_truth = 0;
    for (const auto& [key, n] : joint) same_both += pairs(n);
    for (const auto& [key, n] : rows) same_pred += pairs(n);
    for (const auto& [key, n] : cols) same_truth += pairs(n);
    const double b11 = same_both;
    const double b01 = same_pred - same_both;
    const double b10 = same_truth - same_both;
    const double b00 = pairs(static_cast<double>(pred.size())) - b11 - b10 - b01;

    const double denom = (b00 + b01) * (b01 + b11) + (b00 + b10) * (b10 + b11);
    // Both partitions trivial (all-in-one or all-singletons alike): they agree.
    if (denom == 0) return 1.0;
    return 2.0 * (b00 * b11 - b01 * b10) / denom;
}

}  // namespace fedsao
