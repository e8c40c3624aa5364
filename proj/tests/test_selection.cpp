#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "fedsao/errors.hpp"
#include "fedsao/selection.hpp"

using namespace fedsao;

namespace {

ModelWeights flat(std::vector<double> v) {
    auto w = make_layout({{"a", v.size()}});
    w.values = std::move(v);
    return w;
}

}  // namespace

TEST_CASE("strategy names") {
    for (auto s : {SelectionStrategy::random, SelectionStrategy::cluster_random, SelectionStrategy::weight_divergence})
        CHECK(parse_strategy(strategy_name(s)) == s);
    CHECK_THROWS_AS(parse_strategy("best"), DomainError);
}

TEST_CASE("random selection") {
    const auto all = select_random(7, 7, 1, 3);
    CHECK(all.device_ids == std::vector<int>{0, 1, 2, 3, 4, 5, 6});
    CHECK(select_random(50, 10, 4, 2).device_ids == select_random(50, 10, 4, 2).device_ids);
    CHECK(select_random(50, 10, 4, 2).device_ids != select_random(50, 10, 4, 3).device_ids);
    CHECK_THROWS_AS(select_random(5, 6, 1, 1), DomainError);

    const auto s = select_random(50, 10, 9, 1);
    CHECK(std::is_sorted(s.device_ids.begin(), s.device_ids.end()));
    CHECK(std::set<int>(s.device_ids.begin(), s.device_ids.end()).size() == 10);
}

TEST_CASE("random selection frequency") {
    const int n = 20, k = 5, rounds = 10000;
    std::vector<int> hits(n, 0);
    for (int r = 0; r < rounds; ++r)
        for (int id : select_random(n, k, 77, r).device_ids) ++hits[static_cast<std::size_t>(id)];
    for (int h : hits) CHECK(std::abs(static_cast<double>(h) / rounds - 0.25) <= 0.02);
}

TEST_CASE("cluster-random selection") {
    const std::vector<std::vector<int>> clusters{{0, 3, 6}, {1, 4}, {2, 5, 7, 8}};
    const auto one = select_cluster_random(clusters, 1, 5, 1);
    REQUIRE(one.device_ids.size() == 3);
    for (const auto& c : clusters)
        CHECK(std::count_if(one.device_ids.begin(), one.device_ids.end(),
                            [&](int id) { return std::find(c.begin(), c.end(), id) != c.end(); }) == 1);
    CHECK_FALSE(one.short_cluster);

    const auto two = select_cluster_random(clusters, 2, 5, 1);
    CHECK(two.device_ids.size() == 6);
    const auto three = select_cluster_random(clusters, 3, 5, 1);
    CHECK(three.device_ids.size() == 8);  // cluster {1,4} contributes both
    CHECK(three.short_cluster);
    CHECK(std::binary_search(three.device_ids.begin(), three.device_ids.end(), 1));
    CHECK(std::binary_search(three.device_ids.begin(), three.device_ids.end(), 4));

    CHECK_THROWS_AS(select_cluster_random({}, 1, 1, 1), DomainError);
    CHECK_THROWS_AS(select_cluster_random(clusters, 0, 1, 1), DomainError);
}

TEST_CASE("cluster-random covers every class with a perfect clustering") {
    // devices 0..49, majority class = id mod 5, clusters equal the classes
    std::vector<std::vector<int>> clusters(5);
    for (int i = 0; i < 50; ++i) clusters[static_cast<std::size_t>(i % 5)].push_back(i);
    for (int r = 1; r <= 20; ++r) {
        const auto s = select_cluster_random(clusters, 2, 3, r);
        std::set<int> classes;
        for (int id : s.device_ids) classes.insert(id % 5);
        CHECK(classes.size() == 5);
    }
}

TEST_CASE("weight divergence") {
    CHECK(weight_divergence(flat({1, 2, 3}), flat({1, 2, 3})) == 0.0);
    CHECK(weight_divergence(flat({3, 4, 0, 1}), flat({0, 0, 0, 1})) == 5.0);
    CHECK_THROWS_AS(weight_divergence(flat({1}), flat({1, 2})), DomainError);
}

TEST_CASE("top divergence is picked") {
    // one cluster; divergences 5.09, 5.33, 16.92, 7.5 for devices 20..23
    std::vector<ModelWeights> devs(24, flat({0, 0}));
    devs[20] = flat({5.09, 0});
    devs[21] = flat({0, 5.33});
    devs[22] = flat({16.92, 0});
    devs[23] = flat({6, 4.5});
    const auto pick = select_weight_divergence({{20, 21, 22, 23}}, devs, flat({0, 0}), 1, 4);
    CHECK(pick.device_ids == std::vector<int>{22});
    CHECK(pick.round == 4);

    // equal divergences: lowest ids win
    std::vector<ModelWeights> ties(6, flat({1, 1}));
    const auto t = select_weight_divergence({{5, 2, 4, 0}}, ties, flat({0, 0}), 2, 1);
    CHECK(t.device_ids == std::vector<int>{0, 2});

    CHECK_THROWS_AS(select_weight_divergence({{30}}, devs, flat({0, 0}), 1, 1), DomainError);
}

TEST_CASE("divergence selection matches a full sort") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g(0, 1);
    for (int t = 0; t < 30; ++t) {
        const int n = 40;
        std::vector<ModelWeights> devs;
        for (int i = 0; i < n; ++i) {
            // quantized so ties occur
            devs.push_back(flat({std::round(g(rng) * 2) / 2, std::round(g(rng) * 2) / 2}));
        }
        const auto global = flat({0, 0});
        std::vector<std::vector<int>> clusters(4);
        for (int i = 0; i < n; ++i) clusters[static_cast<std::size_t>((i * 7 + t) % 4)].push_back(i);
        const int s = 1 + t % 4;
        const auto got = select_weight_divergence(clusters, devs, global, s, 1);

        std::vector<int> expect;
        for (const auto& c : clusters) {
            auto sorted = c;
            std::sort(sorted.begin(), sorted.end(), [&](int a, int b) {
                const double da = weight_divergence(devs[static_cast<std::size_t>(a)], global);
                const double db = weight_divergence(devs[static_cast<std::size_t>(b)], global);
                return da != db ? da > db : a < b;
            });
            expect.insert(expect.end(), sorted.begin(), sorted.begin() + s);
        }
        std::sort(expect.begin(), expect.end());
        CHECK(got.device_ids == expect);
    }
}
