#pragma once

// Shared helpers for the unit and acceptance tests: random instances and
// brute-force oracles written without reference to the solver code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "fedsao/datasets.hpp"
#include "fedsao/fl_engine.hpp"
#include "fedsao/net_model.hpp"

namespace testsupport {

using fedsao::DeviceProfile;
using fedsao::NetworkConfig;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Model size for which most random 10-device cells are feasible under the
// default budgets (15-30 mJ).
inline constexpr double kTestModelKb = 79;

inline std::vector<DeviceProfile> random_instance(int count, std::uint64_t seed, double model_kb = kTestModelKb) {
    fedsao::DeviceTemplate t;
    t.model_size_bits = model_kb * 8192.0;
    return fedsao::profiles_of(fedsao::generate_cell(NetworkConfig{}, t, count, seed));
}

// Shannon rate written out directly.
inline double rate(double bw, const DeviceProfile& d, const NetworkConfig& cfg) {
    return bw * std::log2(1.0 + d.channel_gain * d.transmit_power_w / (cfg.noise_psd_w_per_hz * bw));
}

inline double device_delay(const DeviceProfile& d, double bw, double f, const NetworkConfig& cfg) {
    return d.local_iters * d.cycles_per_sample * d.num_samples / f + d.model_size_bits / rate(bw, d, cfg);
}

inline double device_energy(const DeviceProfile& d, double bw, double f, const NetworkConfig& cfg) {
    const double cycles = d.local_iters * d.cycles_per_sample * d.num_samples;
    return 0.5 * d.capacitance_alpha * cycles * f * f + d.transmit_power_w * d.model_size_bits / rate(bw, d, cfg);
}

inline std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
    return v;
}

// Smallest round delay over the grid b1 in (0, B), b2 = B - b1, f1 and f2 on
// `points`-point grids over [f_min, f_max], subject to both energy budgets.
// Each device's delay falls and its energy rises with f, so for a given b1
// the best grid f per device is the largest one within budget; this gives
// the exact minimum of the full three-axis enumeration.
inline double grid_min_delay_two(const std::vector<DeviceProfile>& devs, const NetworkConfig& cfg, int points) {
    const double total = cfg.total_bandwidth_hz;
    double best = kInf;
    std::vector<std::vector<double>> f_grid;
    for (const auto& d : devs) f_grid.push_back(linspace(d.f_min_hz, d.f_max_hz, points));
    for (int i = 1; i <= points; ++i) {
        const double b1 = total * i / (points + 1);
        const double bws[2] = {b1, total - b1};
        double worst = 0;
        for (int n = 0; n < 2; ++n) {
            double dev_best = kInf;
            for (double f : f_grid[static_cast<std::size_t>(n)]) {
                if (device_energy(devs[static_cast<std::size_t>(n)], bws[n], f, cfg) >
                    devs[static_cast<std::size_t>(n)].energy_budget_j)
                    break;
                dev_best = device_delay(devs[static_cast<std::size_t>(n)], bws[n], f, cfg);
            }
            worst = std::max(worst, dev_best);
        }
        best = std::min(best, worst);
    }
    return best;
}

// Positive root of f^3 + X f - Y by scanning for sign changes and zooming into
// the bracket. Reports how many sign changes the first scan saw.
struct ScanRoot {
    double root = 0;
    int sign_changes = 0;
};

inline ScanRoot scan_cubic_root(double x, double y, double tol, int points = 10000) {
    auto m = [&](double f) { return (f * f + x) * f - y; };
    double hi = 2 * std::max(std::cbrt(y), std::sqrt(std::abs(x)));
    double lo = 0;
    ScanRoot out;
    bool first = true;
    while (hi - lo > tol) {
        const double step = (hi - lo) / points;
        double prev = m(lo);
        double new_lo = lo, new_hi = hi;
        int changes = 0;
        for (int i = 1; i <= points; ++i) {
            const double f = lo + step * i;
            const double cur = m(f);
            if ((prev <= 0) != (cur <= 0)) {
                if (changes == 0) {
                    new_lo = f - step;
                    new_hi = f;
                }
                ++changes;
            }
            prev = cur;
        }
        if (first) out.sign_changes = changes;
        first = false;
        if (changes == 0 || (new_lo == lo && new_hi == hi)) break;
        lo = new_lo;
        hi = new_hi;
    }
    out.root = 0.5 * (lo + hi);
    return out;
}

// Straightforward forward pass and mean cross-entropy, written from the
// layout description only.
inline double reference_loss(const fedsao::LayerSpec& spec, const std::vector<double>& w,
                             const fedsao::LabeledDataset& data) {
    std::vector<std::size_t> dims{spec.input_dim};
    dims.insert(dims.end(), spec.hidden_dims.begin(), spec.hidden_dims.end());
    dims.push_back(spec.output_dim);
    double total = 0;
    for (std::size_t s = 0; s < data.size(); ++s) {
        std::vector<double> a(data.row(s).begin(), data.row(s).end());
        std::size_t off = 0;
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
            std::vector<double> z(dims[l + 1]);
            for (std::size_t o = 0; o < dims[l + 1]; ++o) {
                double acc = w[off + dims[l] * dims[l + 1] + o];
                for (std::size_t i = 0; i < dims[l]; ++i) acc += w[off + o * dims[l] + i] * a[i];
                z[o] = (l + 2 < dims.size()) ? std::tanh(acc) : acc;
            }
            off += dims[l] * dims[l + 1] + dims[l + 1];
            a = z;
        }
        double norm = 0;
        for (double v : a) norm += std::exp(v);
        total += std::log(norm) - a[static_cast<std::size_t>(data.labels[s])];
    }
    return total / static_cast<double>(data.size());
}

}  // namespace testsupport
