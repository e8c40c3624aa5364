#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fedsao/clustering.hpp"
#include "fedsao/errors.hpp"

using namespace fedsao;

namespace {

// Adjusted Rand index by enumerating every pair of points.
double ari_by_pairs(const std::vector<int>& pred, const std::vector<int>& truth) {
    double b11 = 0, b10 = 0, b01 = 0, b00 = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        for (std::size_t j = i + 1; j < pred.size(); ++j) {
            const bool p = pred[i] == pred[j];
            const bool t = truth[i] == truth[j];
            if (p && t) b11 += 1;
            else if (p) b01 += 1;
            else if (t) b10 += 1;
            else b00 += 1;
        }
    return 2 * (b00 * b11 - b01 * b10) / ((b00 + b01) * (b01 + b11) + (b00 + b10) * (b10 + b11));
}

FeatureSet blobs(int per_blob, const std::vector<std::vector<double>>& centers, double spread, std::uint64_t seed,
                 std::vector<int>* truth) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0, spread);
    FeatureSet x;
    for (std::size_t c = 0; c < centers.size(); ++c)
        for (int i = 0; i < per_blob; ++i) {
            auto p = centers[c];
            for (auto& v : p) v += g(rng);
            x.push_back(p);
            if (truth) truth->push_back(static_cast<int>(c));
        }
    return x;
}

// Lowest within-cluster sum of squares over every labeling with no empty
// cluster.
double brute_force_inertia(const FeatureSet& x, int c) {
    const std::size_t n = x.size();
    std::vector<int> label(n, 0);
    double best = 1e300;
    while (true) {
        std::vector<int> used(static_cast<std::size_t>(c), 0);
        for (int l : label) used[static_cast<std::size_t>(l)] = 1;
        if (std::count(used.begin(), used.end(), 1) == c) {
            double total = 0;
            for (int k = 0; k < c; ++k) {
                std::vector<double> mean(x[0].size(), 0);
                double cnt = 0;
                for (std::size_t i = 0; i < n; ++i)
                    if (label[i] == k) {
                        for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += x[i][j];
                        cnt += 1;
                    }
                for (auto& v : mean) v /= cnt;
                for (std::size_t i = 0; i < n; ++i)
                    if (label[i] == k) total += squared_distance(x[i], mean);
            }
            best = std::min(best, total);
        }
        std::size_t pos = 0;
        while (pos < n && ++label[pos] == c) label[pos++] = 0;
        if (pos == n) break;
    }
    return best;
}

}  // namespace

TEST_CASE("ARI hand cases") {
    const std::vector<int> a{0, 0, 1, 1, 2, 2};
    CHECK(adjusted_rand_index(a, a) == 1.0);
    const std::vector<int> relabeled{5, 5, 3, 3, 9, 9};
    CHECK(adjusted_rand_index(relabeled, a) == doctest::Approx(1.0));
    // one giant cluster against 2 + 2: pairs are b11=2, b01=4, b10=b00=0
    const std::vector<int> giant{0, 0, 0, 0}, halves{0, 0, 1, 1};
    CHECK(adjusted_rand_index(giant, halves) == doctest::Approx(0.0));
    CHECK(ari_by_pairs(giant, halves) == doctest::Approx(0.0));
    CHECK_THROWS_AS(adjusted_rand_index(giant, a), DomainError);
    // two trivial partitions agree
    CHECK(adjusted_rand_index(std::vector<int>{0, 0, 0}, std::vector<int>{1, 1, 1}) == 1.0);
}

TEST_CASE("ARI agrees with pair enumeration") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 200; ++t) {
        const int n = 5 + t % 30;
        std::uniform_int_distribution<int> kp(0, 1 + t % 5), kt(0, 1 + t % 4);
        std::vector<int> p, q;
        for (int i = 0; i < n; ++i) {
            p.push_back(kp(rng));
            q.push_back(kt(rng));
        }
        const double ref = ari_by_pairs(p, q);
        if (!std::isfinite(ref)) continue;
        CHECK(adjusted_rand_index(p, q) == doctest::Approx(ref).epsilon(1e-12));
    }
}

TEST_CASE("ARI of independent labelings is near zero") {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> k(0, 4);
    double sum = 0;
    for (int s = 0; s < 50; ++s) {
        std::vector<int> p(200), q(200);
        for (auto& v : p) v = k(rng);
        for (auto& v : q) v = k(rng);
        sum += adjusted_rand_index(p, q);
    }
    CHECK(std::abs(sum / 50) <= 0.05);
}

TEST_CASE("k-means trivial and separated cases") {
    std::vector<int> truth;
    const auto x = blobs(10, {{0, 0}, {100, 100}}, 1.0, 1, &truth);
    const auto fit = kmeans_fit(x, 2, 1);
    CHECK(adjusted_rand_index(fit.assignment.labels, truth) == 1.0);

    const auto each = kmeans_fit(x, static_cast<int>(x.size()), 2);
    CHECK(each.inertia == 0.0);
    auto sorted = each.assignment.labels;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::unique(sorted.begin(), sorted.end()) == sorted.end());

    CHECK_THROWS_AS(kmeans_fit(x, 21, 1), DomainError);
    CHECK_THROWS_AS(kmeans_fit(x, 0, 1), DomainError);
    CHECK(kmeans_fit(x, 3, 9).assignment.labels == kmeans_fit(x, 3, 9).assignment.labels);
}

TEST_CASE("k-means matches exhaustive search on small sets") {
    for (std::uint64_t s = 0; s < 5; ++s) {
        std::vector<int> truth;
        const auto x = blobs(s % 2 ? 2 : 3, {{0, 0}, {6, 0}, {0, 6}}, 1.5, 10 + s, &truth);
        REQUIRE(x.size() <= 9);
        const auto small = FeatureSet(x.begin(), x.begin() + std::min<std::ptrdiff_t>(8, static_cast<std::ptrdiff_t>(x.size())));
        const auto fit = kmeans_fit(small, 3, s);
        CHECK(fit.inertia == doctest::Approx(brute_force_inertia(small, 3)).epsilon(1e-9));
    }
}

TEST_CASE("k-means inertia never increases") {
    const auto x = blobs(40, {{0, 0, 0}, {2, 1, 0}, {0, 2, 2}, {1, 1, 1}}, 1.0, 4, nullptr);
    const auto fit = kmeans_fit(x, 4, 3);
    for (std::size_t i = 1; i < fit.inertia_trace.size(); ++i)
        CHECK(fit.inertia_trace[i] <= fit.inertia_trace[i - 1] * (1 + 1e-12));
    CHECK(fit.inertia == fit.inertia_trace.back());
}

TEST_CASE("clustering devices on one layer") {
    const LayerSpec spec{3, {4}, 2};
    std::vector<ModelWeights> devs(6, init_model(spec, 1));
    auto fit = cluster_devices(devs, "fc_last", 3, 1);
    const auto groups = fit.assignment.groups();
    const auto occupied = std::count_if(groups.begin(), groups.end(), [](const auto& g) { return !g.empty(); });
    CHECK(occupied == 1);
    CHECK(fit.model.feature_layer == "fc_last");
    CHECK(fit.model.centroids[0].size() == devs[0].layer("fc_last").length);

    for (std::size_t i = 3; i < 6; ++i)
        for (auto& v : devs[i].values) v += 5.0;
    fit = cluster_devices(devs, "fc1_bias", 2, 1);
    CHECK(adjusted_rand_index(fit.assignment.labels, std::vector<int>{0, 0, 0, 1, 1, 1}) == 1.0);
    CHECK_THROWS_AS(cluster_devices(devs, "nope", 2, 1), DomainError);
}
