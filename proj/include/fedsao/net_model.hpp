#pragma once

// Wireless cell and per-round computation/communication cost model.
// All quantities are SI internally: W, Hz, J, s, bits.

#include <cstdint>
#include <span>
#include <vector>

namespace fedsao {

inline constexpr double kBitsPerKilobyte = 8192.0;

double dbm_to_watt(double dbm);
double watt_to_dbm(double watt);
double kb_to_bits(double kb);

struct NetworkConfig {
    double total_bandwidth_hz = 20e6;
    double noise_psd_w_per_hz = 3.981071705534972e-21;  // -174 dBm/Hz
    double cell_radius_m = 300.0;
    double pathloss_intercept_db = 128.1;
    double pathloss_slope_db = 37.6;
    double shadow_sigma_db = 8.0;

    void validate() const;
};

struct DeviceProfile {
    int id = 0;
    double cycles_per_sample = 2e4;
    double num_samples = 500;
    double f_min_hz = 0.2e9;
    double f_max_hz = 2e9;
    double transmit_power_w = 0.19952623149688797;  // 23 dBm
    double channel_gain = 1e-10;
    double model_size_bits = 448 * kBitsPerKilobyte;
    double energy_budget_j = 0.03;
    double capacitance_alpha = 2e-28;
    int local_iters = 5;

    void validate() const;
};

// Per-device constants that fold the profile into the allocator's algebra:
//   snr_bandwidth  J = h p / N0      (Hz; SNR per Hz times bandwidth)
//   cycles         U = L C D
//   energy_coeff   G = (alpha/2) L C D
//   tx_energy_rate H = z p
struct DerivedConstants {
    double snr_bandwidth = 0;
    double cycles = 0;
    double energy_coeff = 0;
    double tx_energy_rate = 0;
};

struct RoundCost {
    double t_cmp = 0;
    double t_com = 0;
    double e_cmp = 0;
    double e_com = 0;

    double delay() const { return t_cmp + t_com; }
    double energy() const { return e_cmp + e_com; }
};

struct RoundTotals {
    double delay = 0;   // T_k, max over devices
    double energy = 0;  // E_k, sum over devices
};

double path_loss_db(double distance_km, const NetworkConfig& cfg);

// Linear channel gain with log-normal shadowing drawn from `rng_seed`.
double sample_channel_gain(double distance_km, const NetworkConfig& cfg, std::uint64_t rng_seed);

double achievable_rate(double bandwidth_hz, const DeviceProfile& dev, const NetworkConfig& cfg);

DerivedConstants derived_constants(const DeviceProfile& dev, const NetworkConfig& cfg);

// t_com is +infinity when the rate is zero.
RoundCost round_cost(const DeviceProfile& dev, double bandwidth_hz, double cpu_hz, const NetworkConfig& cfg);

RoundTotals round_aggregate(std::span<const RoundCost> costs);

// Template used when populating a cell with devices. Energy budgets are drawn
// uniformly from [budget_min_j, budget_max_j].
struct DeviceTemplate {
    double cycles_per_sample = 2e4;
    double num_samples = 500;
    double f_min_hz = 0.2e9;
    double f_max_hz = 2e9;
    double transmit_power_w = 0.19952623149688797;
    double model_size_bits = 448 * kBitsPerKilobyte;
    double budget_min_j = 0.015;
    double budget_max_j = 0.03;
    double capacitance_alpha = 2e-28;
    int local_iters = 5;
    double min_distance_m = 10.0;
};

struct PlacedDevice {
    DeviceProfile profile;
    double distance_m = 0;
};

// Places `count` devices uniformly in the cell disc (at least
// min_distance_m from the server) and draws one static channel gain each.
std::vector<PlacedDevice> generate_cell(const NetworkConfig& cfg, const DeviceTemplate& tmpl, int count,
                                        std::uint64_t seed);

std::vector<DeviceProfile> profiles_of(std::span<const PlacedDevice> placed);

}  // namespace fedsao
