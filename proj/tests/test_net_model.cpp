#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fedsao/errors.hpp"
#include "fedsao/net_model.hpp"

using namespace fedsao;
using doctest::Approx;

namespace {

DeviceProfile unit_device() {
    DeviceProfile d;
    d.cycles_per_sample = 1;
    d.num_samples = 1;
    d.local_iters = 1;
    d.capacitance_alpha = 2;
    d.f_min_hz = 0.5;
    d.f_max_hz = 10;
    return d;
}

}  // namespace

TEST_CASE("unit conversions") {
    CHECK(dbm_to_watt(30) == Approx(1.0));
    CHECK(dbm_to_watt(23) == Approx(0.19952623149688796).epsilon(1e-14));
    CHECK(watt_to_dbm(dbm_to_watt(-174)) == Approx(-174).epsilon(1e-14));
    CHECK(kb_to_bits(448) == 3670016.0);
    CHECK(NetworkConfig{}.noise_psd_w_per_hz == Approx(dbm_to_watt(-174)).epsilon(1e-14));
}

TEST_CASE("path loss") {
    NetworkConfig cfg;
    CHECK(path_loss_db(1.0, cfg) == Approx(128.1).epsilon(1e-14));
    CHECK(path_loss_db(10.0, cfg) == Approx(165.7).epsilon(1e-14));
    // evaluated independently at 30 significant digits
    CHECK(path_loss_db(0.3, cfg) == Approx(108.43975917745930764).epsilon(1e-14));
    CHECK_THROWS_AS(path_loss_db(0.0, cfg), DomainError);
    CHECK_THROWS_AS(path_loss_db(-1.0, cfg), DomainError);
}

TEST_CASE("channel gain sampling") {
    NetworkConfig flat;
    flat.shadow_sigma_db = 0;
    CHECK(sample_channel_gain(1.0, flat, 5) == Approx(std::pow(10.0, -12.81)).epsilon(1e-13));

    NetworkConfig cfg;
    CHECK(sample_channel_gain(0.2, cfg, 42) == sample_channel_gain(0.2, cfg, 42));
    CHECK(sample_channel_gain(0.2, cfg, 42) != sample_channel_gain(0.2, cfg, 43));
    CHECK_THROWS_AS(sample_channel_gain(0.0, cfg, 1), DomainError);

    // The shadowing term recovered from h has an 8 dB standard deviation.
    const double pl = path_loss_db(0.2, cfg);
    const int n = 100000;
    double sum = 0, sum_sq = 0;
    for (int s = 0; s < n; ++s) {
        const double x = -10 * std::log10(sample_channel_gain(0.2, cfg, static_cast<std::uint64_t>(s))) - pl;
        sum += x;
        sum_sq += x * x;
    }
    const double mean = sum / n;
    const double sd = std::sqrt(sum_sq / n - mean * mean);
    CHECK(std::abs(sd - 8.0) <= 0.1);
    CHECK(std::abs(mean) <= 0.1);
}

TEST_CASE("achievable rate") {
    NetworkConfig cfg;
    DeviceProfile d;
    d.transmit_power_w = 1.0;
    d.channel_gain = cfg.noise_psd_w_per_hz * 1e6;  // hp/N0 = 1 MHz
    CHECK(achievable_rate(1e6, d, cfg) == Approx(1e6).epsilon(1e-12));
    CHECK_THROWS_AS(achievable_rate(0.0, d, cfg), DomainError);

    d.transmit_power_w = dbm_to_watt(23);
    d.channel_gain = std::pow(10.0, -path_loss_db(0.1, cfg) / 10);
    CHECK(d.channel_gain == Approx(8.9125093813374552995e-10).epsilon(1e-12));
    CHECK(achievable_rate(1e6, d, cfg) == Approx(15446997.938783555603).epsilon(1e-12));
}

TEST_CASE("achievable rate is zero without a channel") {
    NetworkConfig cfg;
    DeviceProfile d;
    d.channel_gain = 0;
    CHECK(achievable_rate(1e6, d, cfg) == 0.0);
}

TEST_CASE("derived constants") {
    NetworkConfig cfg;
    const auto u = derived_constants(unit_device(), cfg);
    CHECK(u.energy_coeff == Approx(1.0));
    CHECK(u.cycles == Approx(1.0));

    DeviceProfile d;
    d.model_size_bits = kb_to_bits(448);
    d.transmit_power_w = dbm_to_watt(23);
    const auto c = derived_constants(d, cfg);
    CHECK(c.tx_energy_rate == Approx(732264.4620132827639).epsilon(1e-13));
    CHECK(c.snr_bandwidth == Approx(d.channel_gain * d.transmit_power_w / cfg.noise_psd_w_per_hz).epsilon(1e-14));

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u01(0.1, 10);
    for (int i = 0; i < 20; ++i) {
        DeviceProfile r;
        r.cycles_per_sample *= u01(rng);
        r.num_samples *= u01(rng);
        r.local_iters = 1 + i % 7;
        r.capacitance_alpha *= u01(rng);
        const auto k = derived_constants(r, cfg);
        CHECK(k.energy_coeff / k.cycles == Approx(r.capacitance_alpha / 2).epsilon(1e-12));
    }
}

TEST_CASE("round cost") {
    NetworkConfig cfg;
    auto d = unit_device();
    d.f_min_hz = 0.1;
    const auto c1 = round_cost(d, 1e6, 1.0, cfg);
    CHECK(c1.t_cmp == Approx(1.0));
    const auto c2 = round_cost(d, 1e6, 2.0, cfg);
    CHECK(c2.t_cmp == Approx(c1.t_cmp / 2));
    CHECK(c2.e_cmp == Approx(c1.e_cmp * 4));

    // Defaults at f = 1 GHz, b = 2 MHz, h = 1e-10, z = 448 KB, evaluated independently.
    DeviceProfile full;
    full.channel_gain = 1e-10;
    full.model_size_bits = kb_to_bits(448);
    const auto c = round_cost(full, 2e6, 1e9, cfg);
    CHECK(c.t_cmp == Approx(0.05).epsilon(1e-13));
    CHECK(c.e_cmp == Approx(0.005).epsilon(1e-13));
    CHECK(c.t_com == Approx(0.16250931644325635835).epsilon(1e-12));
    CHECK(c.e_com == Approx(0.032424871493058189298).epsilon(1e-12));

    full.channel_gain = 0;
    const auto dead = round_cost(full, 2e6, 1e9, cfg);
    CHECK(std::isinf(dead.t_com));
}

TEST_CASE("costs scale with L, C and D") {
    NetworkConfig cfg;
    DeviceProfile d;
    const auto base = round_cost(d, 1e6, 1e9, cfg);
    for (int which = 0; which < 3; ++which) {
        DeviceProfile x = d;
        if (which == 0) x.local_iters *= 2;
        if (which == 1) x.cycles_per_sample *= 2;
        if (which == 2) x.num_samples *= 2;
        const auto c = round_cost(x, 1e6, 1e9, cfg);
        CHECK(c.t_cmp == Approx(2 * base.t_cmp));
        CHECK(c.e_cmp == Approx(2 * base.e_cmp));
        CHECK(c.t_com == base.t_com);
    }
}

TEST_CASE("computation delay falls and energy rises with frequency") {
    NetworkConfig cfg;
    DeviceProfile d;
    double prev_t = INFINITY, prev_e = 0;
    for (double f = 0.2e9; f <= 2e9; f += 0.1e9) {
        const auto c = round_cost(d, 1e6, f, cfg);
        CHECK(c.t_cmp < prev_t);
        CHECK(c.e_cmp > prev_e);
        prev_t = c.t_cmp;
        prev_e = c.e_cmp;
    }
}

TEST_CASE("rate stays below its bandwidth-unlimited bound") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> log_u(-3, 9);
    NetworkConfig cfg;
    for (int i = 0; i < 10000; ++i) {
        DeviceProfile d;
        d.transmit_power_w = 1;
        d.channel_gain = cfg.noise_psd_w_per_hz * std::pow(10.0, log_u(rng));
        const double j = d.channel_gain / cfg.noise_psd_w_per_hz;
        const double b = std::pow(10.0, log_u(rng));
        REQUIRE(achievable_rate(b, d, cfg) <= j / std::log(2.0));
    }
}

TEST_CASE("round aggregate") {
    CHECK_THROWS_AS(round_aggregate({}), DomainError);
    std::vector<RoundCost> one{{0.5, 0.25, 0.1, 0.2}};
    CHECK(round_aggregate(one).delay == 0.75);
    std::vector<RoundCost> two{{1.0, 0.0, 0.1, 0.0}, {1.5, 0.5, 0.2, 0.3}};
    CHECK(round_aggregate(two).delay == 2.0);

    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<RoundCost> ten;
    double energy = 0, delay = 0;
    for (int i = 0; i < 10; ++i) {
        ten.push_back({u(rng), u(rng), u(rng), u(rng)});
        energy += ten.back().e_cmp + ten.back().e_com;
        delay = std::max(delay, ten.back().t_cmp + ten.back().t_com);
    }
    CHECK(round_aggregate(ten).energy == Approx(energy).epsilon(1e-14));
    CHECK(round_aggregate(ten).delay == delay);
    std::shuffle(ten.begin(), ten.end(), rng);
    CHECK(round_aggregate(ten).energy == Approx(energy).epsilon(1e-14));
    CHECK(round_aggregate(ten).delay == delay);
}

TEST_CASE("cell generation") {
    NetworkConfig cfg;
    DeviceTemplate t;
    const auto a = generate_cell(cfg, t, 200, 9);
    const auto b = generate_cell(cfg, t, 200, 9);
    REQUIRE(a.size() == 200);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].profile.channel_gain == b[i].profile.channel_gain);
        CHECK(a[i].profile.id == static_cast<int>(i));
        CHECK(a[i].distance_m >= t.min_distance_m);
        CHECK(a[i].distance_m <= cfg.cell_radius_m);
        CHECK(a[i].profile.energy_budget_j >= t.budget_min_j);
        CHECK(a[i].profile.energy_budget_j <= t.budget_max_j);
    }
    // Uniform over the disc: about a quarter of devices within R/2.
    const auto inner = std::count_if(a.begin(), a.end(), [&](const PlacedDevice& d) { return d.distance_m < 150; });
    CHECK(inner > 25);
    CHECK(inner < 75);
}

TEST_CASE("profile validation") {
    DeviceProfile d;
    d.f_min_hz = 3e9;
    CHECK_THROWS_AS(d.validate(), DomainError);
    NetworkConfig cfg;
    cfg.total_bandwidth_hz = 0;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
}
