#include "fedsao/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "fedsao/errors.hpp"
#include "fedsao/rng.hpp"

namespace fedsao {

SelectionStrategy parse_strategy(std::string_view name) {
    if (name == "random") return SelectionStrategy::random;
    if (name == "cluster_random") return SelectionStrategy::cluster_random;
    if (name == "weight_divergence") return SelectionStrategy::weight_divergence;
    throw DomainError("unknown selection strategy '" + std::string(name) + "'");
}

std::string_view strategy_name(SelectionStrategy s) {
    switch (s) {
        case SelectionStrategy::random: return "random";
        case SelectionStrategy::cluster_random: return "cluster_random";
        case SelectionStrategy::weight_divergence: return "weight_divergence";
    }
    return "unknown";
}

namespace {

// First k entries of a partial Fisher-Yates shuffle.
std::vector<int> sample_without_replacement(std::vector<int> pool, std::size_t k, Rng& rng) {
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(k);
    return pool;
}

void check_clusters(const std::vector<std::vector<int>>& clusters, int s) {
    if (clusters.empty()) throw DomainError("selection: no clusters");
    if (s < 1) throw DomainError("selection: s must be >= 1");
}

}  // namespace

SelectionSet select_random(int num_devices, int num_selected, std::uint64_t seed, int round) {
    if (num_selected < 0 || num_selected > num_devices) throw DomainError("select_random: need 0 <= S <= N");
    Rng rng = make_rng(seed, {stream::selection, static_cast<std::uint64_t>(round)});
    std::vector<int> all(static_cast<std::size_t>(num_devices));
    std::iota(all.begin(), all.end(), 0);
    SelectionSet out;
    out.round = round;
    out.device_ids = sample_without_replacement(std::move(all), static_cast<std::size_t>(num_selected), rng);
    std::sort(out.device_ids.begin(), out.device_ids.end());
    return out;
}

SelectionSet select_cluster_random(const std::vector<std::vector<int>>& clusters, int s, std::uint64_t seed,
                                   int round) {
    check_clusters(clusters, s);
    Rng rng = make_rng(seed, {stream::selection, static_cast<std::uint64_t>(round)});
    SelectionSet out;
    out.round = round;
    for (const auto& members : clusters) {
        if (members.empty()) continue;
        const auto take = std::min(members.size(), static_cast<std::size_t>(s));
        if (take < static_cast<std::size_t>(s)) out.short_cluster = true;
        const auto picked = sample_without_replacement(members, take, rng);
        out.device_ids.insert(out.device_ids.end(), picked.begin(), picked.end());
    }
    std::sort(out.device_ids.begin(), out.device_ids.end());
    return out;
}

double weight_divergence(const ModelWeights& local, const ModelWeights& global) {
    if (!local.same_layout(global) || local.size() != global.size())
        throw DomainError("weight_divergence: layer maps differ");
    double s = 0;
    for (std::size_t i = 0; i < local.size(); ++i) {
        const double d = local.values[i] - global.values[i];
        s += d * d;
    }
    return std::sqrt(s);
}

SelectionSet select_weight_divergence(const std::vector<std::vector<int>>& clusters,
                                      std::span<const ModelWeights> device_weights, const ModelWeights& global, int s,
                                      int round) {
    check_clusters(clusters, s);
    SelectionSet out;
    out.round = round;
    for (const auto& members : clusters) {
        if (members.empty()) continue;
        std::vector<std::pair<double, int>> scored;
        scored.reserve(members.size());
        for (int id : members) {
            if (id < 0 || static_cast<std::size_t>(id) >= device_weights.size())
                throw DomainError("select_weight_divergence: device id out of range");
            scored.emplace_back(weight_divergence(device_weights[static_cast<std::size_t>(id)], global), id);
        }
        const auto take = std::min(scored.size(), static_cast<std::size_t>(s));
        if (take < static_cast<std::size_t>(s)) out.short_cluster = true;
        std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(),
                          [](const auto& a, const auto& b) {
                              return a.first != b.first ? a.first > b.first : a.second < b.second;
                          });
        for (std::size_t i = 0; i < take; ++i) out.device_ids.push_back(scored[i].second);
    }
    std::sort(out.device_ids.begin(), out.device_ids.end());
    return out;
}

}  // namespace fedsao
