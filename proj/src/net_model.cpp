#include "fedsao/net_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "fedsao/errors.hpp"
#include "fedsao/rng.hpp"

namespace fedsao {

double dbm_to_watt(double dbm) { return std::pow(10.0, dbm / 10.0) * 1e-3; }

double watt_to_dbm(double watt) { return 10.0 * std::log10(watt * 1e3); }

double kb_to_bits(double kb) { return kb * kBitsPerKilobyte; }

void NetworkConfig::validate() const {
    if (!(total_bandwidth_hz > 0)) throw DomainError("network: total bandwidth must be positive");
    if (!(noise_psd_w_per_hz > 0)) throw DomainError("network: noise PSD must be positive");
    if (!(cell_radius_m > 0)) throw DomainError("network: cell radius must be positive");
    if (!(shadow_sigma_db >= 0)) throw DomainError("network: shadow sigma must be non-negative");
}

void DeviceProfile::validate() const {
    auto require = [this](bool ok, const char* what) {
        if (!ok) throw DomainError("device " + std::to_string(id) + ": " + what);
    };
    require(f_min_hz > 0 && f_min_hz <= f_max_hz, "need 0 < f_min <= f_max");
    require(cycles_per_sample > 0, "cycles per sample must be positive");
    require(num_samples > 0, "sample count must be positive");
    require(transmit_power_w > 0, "transmit power must be positive");
    require(channel_gain > 0, "channel gain must be positive");
    require(model_size_bits > 0, "model size must be positive");
    require(energy_budget_j > 0, "energy budget must be positive");
    require(capacitance_alpha > 0, "capacitance must be positive");
    require(local_iters >= 1, "local iterations must be >= 1");
}

double path_loss_db(double distance_km, const NetworkConfig& cfg) {
    if (!(distance_km > 0)) throw DomainError("path_loss_db: distance must be positive");
    return cfg.pathloss_intercept_db + cfg.pathloss_slope_db * std::log10(distance_km);
}

double sample_channel_gain(double distance_km, const NetworkConfig& cfg, std::uint64_t rng_seed) {
    const double pl = path_loss_db(distance_km, cfg);
    double shadow = 0.0;
    if (cfg.shadow_sigma_db > 0) {
        Rng rng(rng_seed);
        std::normal_distribution<double> normal(0.0, cfg.shadow_sigma_db);
        shadow = normal(rng);
    }
    return std::pow(10.0, -(pl + shadow) / 10.0);
}

double achievable_rate(double bandwidth_hz, const DeviceProfile& dev, const NetworkConfig& cfg) {
    if (!(bandwidth_hz > 0)) throw DomainError("achievable_rate: bandwidth must be positive");
    const double snr_bw = dev.channel_gain * dev.transmit_power_w / cfg.noise_psd_w_per_hz;
    return bandwidth_hz * std::log1p(snr_bw / bandwidth_hz) / std::numbers::ln2;
}

DerivedConstants derived_constants(const DeviceProfile& dev, const NetworkConfig& cfg) {
    const double cycles = dev.local_iters * dev.cycles_per_sample * dev.num_samples;
    return DerivedConstants{
        .snr_bandwidth = dev.channel_gain * dev.transmit_power_w / cfg.noise_psd_w_per_hz,
        .cycles = cycles,
        .energy_coeff = 0.5 * dev.capacitance_alpha * cycles,
        .tx_energy_rate = dev.model_size_bits * dev.transmit_power_w,
    };
}

RoundCost round_cost(const DeviceProfile& dev, double bandwidth_hz, double cpu_hz, const NetworkConfig& cfg) {
    if (!(cpu_hz > 0)) throw DomainError("round_cost: CPU frequency must be positive");
    const double cycles = dev.local_iters * dev.cycles_per_sample * dev.num_samples;
    const double rate = achievable_rate(bandwidth_hz, dev, cfg);
    RoundCost c;
    c.t_cmp = cycles / cpu_hz;
    c.e_cmp = 0.5 * dev.capacitance_alpha * cycles * cpu_hz * cpu_hz;
    c.t_com = rate > 0 ? dev.model_size_bits / rate : std::numeric_limits<double>::infinity();
    c.e_com = c.t_com * dev.transmit_power_w;
    return c;
}

RoundTotals round_aggregate(std::span<const RoundCost> costs) {
    if (costs.empty()) throw DomainError("round_aggregate: empty device set");
    RoundTotals t;
    for (const auto& c : costs) {
        t.delay = std::max(t.delay, c.delay());
        t.energy += c.energy();
    }
    return t;
}

std::vector<PlacedDevice> generate_cell(const NetworkConfig& cfg, const DeviceTemplate& tmpl, int count,
                                        std::uint64_t seed) {
    cfg.validate();
    const double r_min = std::min(tmpl.min_distance_m, cfg.cell_radius_m);
    const double r2_lo = r_min * r_min;
    const double r2_hi = cfg.cell_radius_m * cfg.cell_radius_m;

    Rng place = make_rng(seed, {stream::placement});
    Rng budgets = make_rng(seed, {stream::budgets});
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<PlacedDevice> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        // uniform over area of the annulus
        const double r = std::sqrt(r2_lo + unit(place) * (r2_hi - r2_lo));
        PlacedDevice d;
        d.distance_m = r;
        auto& p = d.profile;
        p.id = i;
        p.cycles_per_sample = tmpl.cycles_per_sample;
        p.num_samples = tmpl.num_samples;
        p.f_min_hz = tmpl.f_min_hz;
        p.f_max_hz = tmpl.f_max_hz;
        p.transmit_power_w = tmpl.transmit_power_w;
        p.model_size_bits = tmpl.model_size_bits;
        p.capacitance_alpha = tmpl.capacitance_alpha;
        p.local_iters = tmpl.local_iters;
        p.energy_budget_j = tmpl.budget_min_j + unit(budgets) * (tmpl.budget_max_j - tmpl.budget_min_j);
        p.channel_gain = sample_channel_gain(r / 1000.0, cfg,
                                             derive_seed(seed, {stream::shadowing, static_cast<std::uint64_t>(i)}));
        out.push_back(d);
    }
    return out;
}

std::vector<DeviceProfile> profiles_of(std::span<const PlacedDevice> placed) {
    std::vector<DeviceProfile> out;
    out.reserve(placed.size());
    for (const auto& p : placed) out.push_back(p.profile);
    return out;
}

}  // namespace fedsao
