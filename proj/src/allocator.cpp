#include "fedsao/allocator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "fedsao/errors.hpp"

namespace fedsao {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string device_tag(const DeviceProfile& d) { return "device " + std::to_string(d.id); }

void validate_devices(std::span<const DeviceProfile> devices, const NetworkConfig& cfg) {
    cfg.validate();
    if (devices.empty()) throw DomainError("allocator: empty device set");
    for (const auto& d : devices) d.validate();
}

double resolve_b_max(const SolverTolerances& tol, const NetworkConfig& cfg) {
    return tol.b_max > 0 ? tol.b_max : cfg.total_bandwidth_hz;
}

// Per-device state of the inner solve at a fixed round delay.
struct InnerSolve {
    double cpu_hz = 0;
    double bandwidth_hz = 0;
    ClipFlags flags;
};

}  // namespace

void SolverTolerances::validate() const {
    if (!(eps0 > 0 && eps0 < 1)) throw DomainError("tolerances: need 0 < eps0 < 1");
    if (!(eps1 > 0) || !(eps2 > 0) || !(eps3 > 0)) throw DomainError("tolerances: eps1..eps3 must be positive");
    if (b_max < 0) throw DomainError("tolerances: b_max must be non-negative");
    if (!(t_max_factor > 1)) throw DomainError("tolerances: t_max_factor must exceed 1");
    if (max_outer_iters < 1) throw DomainError("tolerances: max_outer_iters must be >= 1");
}

bool AllocationResult::any_clipped() const {
    return std::any_of(clips.begin(), clips.end(), [](const ClipFlags& c) { return c.any(); });
}

double q_function(double x, double snr_bandwidth) {
    if (!(x > 0)) throw DomainError("q_function: x must be positive");
    if (snr_bandwidth < 0) throw DomainError("q_function: J must be non-negative");
    return x * std::log1p(snr_bandwidth / x) / std::numbers::ln2;
}

double q_derivative(double x, double snr_bandwidth) {
    if (!(x > 0)) throw DomainError("q_derivative: x must be positive");
    return (std::log1p(snr_bandwidth / x) - snr_bandwidth / (x + snr_bandwidth)) / std::numbers::ln2;
}

double solve_depressed_cubic(double x_coeff, double y_coeff, double tol) {
    if (!(y_coeff > 0)) throw DomainError("solve_depressed_cubic: Y must be positive");
    if (!(tol > 0)) throw DomainError("solve_depressed_cubic: tolerance must be positive");
    auto m = [&](double f) { return (f * f + x_coeff) * f - y_coeff; };

    // M is negative on (0, sqrt(-X/3)] when X < 0, so the root lies above it.
    double lo = x_coeff < 0 ? std::sqrt(-x_coeff / 3.0) : 0.0;
    double hi = std::max(1.0, 2.0 * lo);
    while (m(hi) <= 0) {
        lo = hi;
        hi *= 2.0;
    }
    while (hi - lo > tol) {
        const double mid = lo + 0.5 * (hi - lo);
        if (mid <= lo || mid >= hi) break;
        if (m(mid) > 0)
            hi = mid;
        else
            lo = mid;
    }
    return lo + 0.5 * (hi - lo);
}

double solve_f_cubic(double round_delay, const DerivedConstants& c, double energy_budget, double model_bits,
                     double eps2) {
    if (!(round_delay > 0)) throw DomainError("solve_f_cubic: round delay must be positive");
    const double zg = model_bits * c.energy_coeff;
    const double x_coeff = c.tx_energy_rate * round_delay / zg - energy_budget / c.energy_coeff;
    const double y_coeff = c.tx_energy_rate * c.cycles / zg;
    return solve_depressed_cubic(x_coeff, y_coeff, eps2);
}

BandwidthSolve invert_q(double target_rate, double snr_bandwidth, double eps1, double b_max) {
    if (!(b_max > 0)) throw DomainError("invert_q: b_max must be positive");
    if (target_rate <= 0) return {0.0, false};
    if (target_rate >= snr_bandwidth / std::numbers::ln2 || q_function(b_max, snr_bandwidth) < target_rate)
        return {b_max, true};
    double lo = 0.0;
    double hi = b_max;
    while (hi - lo > eps1) {
        const double mid = lo + 0.5 * (hi - lo);
        if (mid <= lo || mid >= hi) break;
        if (q_function(mid, snr_bandwidth) >= target_rate)
            hi = mid;
        else
            lo = mid;
    }
    return {hi, false};
}

BandwidthSolve solve_b_from_energy(double cpu_hz, const DerivedConstants& c, double energy_budget, double eps1,
                                   double b_max) {
    const double remaining = energy_budget - c.energy_coeff * cpu_hz * cpu_hz;
    if (!(remaining > 0))
        throw InfeasibleError("energy", "computation at the given frequency exhausts the energy budget");
    return invert_q(c.tx_energy_rate / remaining, c.snr_bandwidth, eps1, b_max);
}

AllocationResult sao_allocate(std::span<const DeviceProfile> devices, const NetworkConfig& cfg,
                              const SolverTolerances& tol) {
    validate_devices(devices, cfg);
    tol.validate();
    const std::size_t count = devices.size();
    const double total_bw = cfg.total_bandwidth_hz;
    const double b_max = resolve_b_max(tol, cfg);

    std::vector<DerivedConstants> consts(count);
    for (std::size_t n = 0; n < count; ++n) consts[n] = derived_constants(devices[n], cfg);

    // Bandwidth each device needs when it has unlimited time: CPU at f_min and
    // the whole remaining budget spent on the upload.
    double floor_sum = 0;
    for (std::size_t n = 0; n < count; ++n) {
        const auto& d = devices[n];
        const auto& c = consts[n];
        const double remaining = d.energy_budget_j - c.energy_coeff * d.f_min_hz * d.f_min_hz;
        if (!(remaining > 0))
            throw InfeasibleError("energy", device_tag(d) + ": computing at f_min alone exceeds the energy budget");
        const double need = c.tx_energy_rate / remaining;
        if (need >= c.snr_bandwidth / std::numbers::ln2)
            throw InfeasibleError("energy", device_tag(d) + ": upload energy exceeds the budget at any bandwidth");
        const auto floor_bw = invert_q(need, c.snr_bandwidth, tol.eps1, b_max);
        if (floor_bw.clipped)
            throw InfeasibleError("bandwidth", device_tag(d) + ": energy budget needs more than b_max");
        floor_sum += floor_bw.bandwidth_hz;
    }
    if (floor_sum > total_bw)
        throw InfeasibleError("bandwidth", "energy budgets need more than the total bandwidth B");

    auto solve_device = [&](std::size_t n, double round_delay) {
        const auto& d = devices[n];
        const auto& c = consts[n];
        InnerSolve s;
        double f = solve_f_cubic(round_delay, c, d.energy_budget_j, d.model_size_bits, tol.eps2);
        if (f < d.f_min_hz) {
            f = d.f_min_hz;
            s.flags.f_min_clipped = true;
        } else if (f > d.f_max_hz) {
            f = d.f_max_hz;
            s.flags.f_max_clipped = true;
        }
        // Rate needed to finish within round_delay, and rate needed to stay
        // within the energy budget; at an unclipped root they coincide.
        const double slack = round_delay - c.cycles / f;
        const double delay_rate = slack > 0 ? d.model_size_bits / slack : kInf;
        const double remaining = d.energy_budget_j - c.energy_coeff * f * f;
        const double energy_rate = remaining > 0 ? c.tx_energy_rate / remaining : kInf;
        const auto bw = invert_q(std::max(delay_rate, energy_rate), c.snr_bandwidth, tol.eps1, b_max);
        s.cpu_hz = f;
        s.bandwidth_hz = bw.bandwidth_hz;
        s.flags.b_clipped = bw.clipped;
        return s;
    };

    std::vector<InnerSolve> state(count);
    auto evaluate = [&](double round_delay) {
        double sum = 0;
        for (std::size_t n = 0; n < count; ++n) {
            state[n] = solve_device(n, round_delay);
            sum += state[n].bandwidth_hz;
        }
        return sum / total_bw;
    };

    double t_min = 0;
    for (std::size_t n = 0; n < count; ++n) {
        const auto& c = consts[n];
        t_min = std::max(t_min, std::numbers::ln2 * devices[n].model_size_bits / c.snr_bandwidth +
                                    c.cycles / devices[n].f_max_hz);
    }
    double t_max = tol.t_max_factor * t_min;
    for (int grow = 0; evaluate(t_max) > 1.0; ++grow) {
        if (grow >= 200) throw InfeasibleError("bandwidth", "no round delay fits the total bandwidth");
        t_max *= 2.0;
    }
    const double t_max_feasible = t_max;

    double round_delay = 0.5 * (t_min + t_max);
    double ratio = 0;
    int iters = 0;
    double best_delay = kInf;
    std::vector<InnerSolve> best;
    while (!(ratio >= 1.0 - tol.eps0 && ratio <= 1.0)) {
        if (iters >= tol.max_outer_iters) break;
        ratio = evaluate(round_delay);
        ++iters;
        if (ratio <= 1.0 && round_delay < best_delay) {
            best_delay = round_delay;
            best = state;
        }
        if (ratio > 1.0) {
            t_min = round_delay;
            round_delay = 0.5 * (t_max + round_delay);
        } else if (ratio < 1.0 - tol.eps0) {
            t_max = round_delay;
            round_delay = 0.5 * (t_min + round_delay);
        }
    }
    if (!(ratio >= 1.0 - tol.eps0 && ratio <= 1.0)) {
        if (best.empty()) {
            evaluate(t_max_feasible);
            best = state;
        }
        state = best;
    }

    // Re-derive f from the energy equality at the final bandwidths, then the
    // round delay as the slowest device.
    AllocationResult out;
    out.outer_iterations = iters;
    out.bandwidth_hz.resize(count);
    out.cpu_hz.resize(count);
    out.clips.resize(count);
    for (std::size_t n = 0; n < count; ++n) {
        const auto& d = devices[n];
        const auto& c = consts[n];
        const double bw = state[n].bandwidth_hz;
        ClipFlags flags = state[n].flags;
        const double rate = q_function(bw, c.snr_bandwidth);
        const double remaining = d.energy_budget_j - c.tx_energy_rate / rate;
        double f = remaining > 0 ? std::sqrt(remaining / c.energy_coeff) : 0.0;
        if (f > d.f_max_hz) {
            if (f > d.f_max_hz * (1 + 1e-12)) flags.f_reclipped = true;
            f = d.f_max_hz;
        } else if (f < d.f_min_hz) {
            if (f < d.f_min_hz * (1 - 1e-12)) {
                flags.f_reclipped = true;
                out.feasible = false;
            }
            f = d.f_min_hz;
        }
        out.bandwidth_hz[n] = bw;
        out.cpu_hz[n] = f;
        out.clips[n] = flags;
        out.round_delay_s = std::max(out.round_delay_s, d.model_size_bits / rate + c.cycles / f);
    }
    return out;
}

KktReport kkt_residuals(const AllocationResult& result, std::span<const DeviceProfile> devices,
                        const NetworkConfig& cfg) {
    if (result.bandwidth_hz.size() != devices.size() || result.cpu_hz.size() != devices.size())
        throw DomainError("kkt_residuals: allocation does not match device count");
    KktReport r;
    double sum_bw = 0;
    for (std::size_t n = 0; n < devices.size(); ++n) {
        const auto& d = devices[n];
        const auto c = derived_constants(d, cfg);
        const double bw = result.bandwidth_hz[n];
        const double f = result.cpu_hz[n];
        const double rate = q_function(bw, c.snr_bandwidth);
        r.delay_residuals.push_back(d.model_size_bits / rate + c.cycles / f - result.round_delay_s);
        r.energy_residuals.push_back(c.energy_coeff * f * f + c.tx_energy_rate / rate - d.energy_budget_j);
        sum_bw += bw;
    }
    r.bandwidth_residual = sum_bw - cfg.total_bandwidth_hz;
    return r;
}

std::vector<RoundCost> allocation_costs(const AllocationResult& result, std::span<const DeviceProfile> devices,
                                        const NetworkConfig& cfg) {
    std::vector<RoundCost> costs;
    costs.reserve(devices.size());
    for (std::size_t n = 0; n < devices.size(); ++n)
        costs.push_back(round_cost(devices[n], result.bandwidth_hz.at(n), result.cpu_hz.at(n), cfg));
    return costs;
}

double max_energy_excess(const AllocationResult& result, std::span<const DeviceProfile> devices,
                         const NetworkConfig& cfg) {
    const auto costs = allocation_costs(result, devices, cfg);
    double worst = -kInf;
    for (std::size_t n = 0; n < devices.size(); ++n)
        worst = std::max(worst, costs[n].energy() - devices[n].energy_budget_j);
    return worst;
}

AllocationResult baseline_equal_bandwidth(std::span<const DeviceProfile> devices, const NetworkConfig& cfg) {
    validate_devices(devices, cfg);
    const double share = cfg.total_bandwidth_hz / static_cast<double>(devices.size());
    AllocationResult out;
    for (const auto& d : devices) {
        const auto c = derived_constants(d, cfg);
        const double rate = q_function(share, c.snr_bandwidth);
        const double remaining = d.energy_budget_j - c.tx_energy_rate / rate;
        if (!(remaining >= c.energy_coeff * d.f_min_hz * d.f_min_hz))
            throw InfeasibleError("energy", device_tag(d) + ": budget not met at an equal bandwidth share");
        ClipFlags flags;
        double f = std::sqrt(remaining / c.energy_coeff);
        if (f > d.f_max_hz) {
            f = d.f_max_hz;
            flags.f_max_clipped = true;
        }
        out.bandwidth_hz.push_back(share);
        out.cpu_hz.push_back(f);
        out.clips.push_back(flags);
    }
    out.round_delay_s = round_aggregate(allocation_costs(out, devices, cfg)).delay;
    return out;
}

// ---------------------------------------------------------------------------
// Baseline 2. For a fixed round delay T the remaining problem is
//   min sum_n e_n(b_n)  s.t.  sum b_n <= B,
// where e_n(b) runs the CPU at the slowest frequency that still meets T. Each
// e_n is convex and decreasing, so it is solved by water-filling on the
// bandwidth price. The outer objective V(T) + lambda*T is convex in T and is
// minimized by golden-section search.

namespace {

struct FedlDevice {
    DerivedConstants c;
    double bits = 0;
    double f_min = 0;
    double f_max = 0;
};

// Root of a monotone function bracketed by lo and hi, in either order
// (Illinois variant of regula falsi). Returns the bracket end on the same
// side of the root as `lo`.
template <typename F>
double bracketed_root(F&& fn, double lo, double hi, double f_lo, double f_hi, double x_tol) {
    if (f_lo == 0) return lo;
    if (f_hi == 0) return hi;
    int last = 0;
    for (int i = 0; i < 200 && std::abs(hi - lo) > x_tol; ++i) {
        double x = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        if (!(x > std::min(lo, hi) && x < std::max(lo, hi))) x = 0.5 * (lo + hi);
        const double fx = fn(x);
        if (fx == 0) return x;
        if ((fx < 0) == (f_lo < 0)) {
            lo = x;
            f_lo = fx;
            if (last < 0) f_hi /= 2;
            last = -1;
        } else {
            hi = x;
            f_hi = fx;
            if (last > 0) f_lo /= 2;
            last = 1;
        }
    }
    return lo;
}

class FedlSolver {
public:
    FedlSolver(std::span<const DeviceProfile> devices, const NetworkConfig& cfg) : total_bw_(cfg.total_bandwidth_hz) {
        for (const auto& d : devices)
            devs_.push_back({derived_constants(d, cfg), d.model_size_bits, d.f_min_hz, d.f_max_hz});
        b_lo_.resize(devs_.size());
        b_.resize(devs_.size());
    }

    // Minimum feasible round delay: every device at f_max with just enough
    // bandwidth, and the bandwidths sum to B.
    double min_delay() {
        double lo = 0;
        for (const auto& d : devs_)
            lo = std::max(lo, d.c.cycles / d.f_max + std::numbers::ln2 * d.bits / d.c.snr_bandwidth);
        double hi = 2 * lo;
        for (int i = 0; !lower_bounds(hi); ++i) {
            if (i > 200) throw InfeasibleError("bandwidth", "baseline 2: no round delay fits the bandwidth");
            lo = hi;
            hi *= 2;
        }
        for (int i = 0; i < 200 && hi - lo > 1e-13 * hi; ++i) {
            const double mid = 0.5 * (lo + hi);
            (lower_bounds(mid) ? hi : lo) = mid;
        }
        return hi;
    }

    // Minimum total energy at round delay T; +inf when T is infeasible.
    double energy_at(double round_delay) {
        if (!lower_bounds(round_delay)) return kInf;
        const double slack_bw = total_bw_;
        double g_hi = 0;
        double g_lo = kInf;
        for (std::size_t n = 0; n < devs_.size(); ++n) {
            g_hi = std::max(g_hi, price(n, b_lo_[n], round_delay));
            g_lo = std::min(g_lo, price(n, slack_bw, round_delay));
        }
        g_lo = std::max(g_lo, 1e-300);
        if (g_hi <= g_lo) {
            fill(g_hi, round_delay);
        } else {
            // Excess bandwidth as a function of log(price); decreasing. The
            // returned end keeps the sum within B.
            auto excess = [&](double u) { return fill(std::exp(u), round_delay) - total_bw_; };
            const double u_hi = std::log(g_hi);
            const double u_lo = std::log(g_lo);
            const double u = bracketed_root(excess, u_hi, u_lo, excess(u_hi), excess(u_lo), 1e-12);
            fill(std::exp(u), round_delay);
        }
        double e = 0;
        for (std::size_t n = 0; n < devs_.size(); ++n) e += energy(n, b_[n], round_delay);
        return e;
    }

    // Allocation left by the last energy_at call.
    AllocationResult allocation(double round_delay) const {
        AllocationResult out;
        for (std::size_t n = 0; n < devs_.size(); ++n) {
            const auto& d = devs_[n];
            ClipFlags flags;
            double f = cpu_for(n, b_[n], round_delay);
            if (f <= d.f_min) {
                f = d.f_min;
                flags.f_min_clipped = true;
            } else if (f >= d.f_max) {
                f = d.f_max;
                flags.f_max_clipped = true;
            }
            out.bandwidth_hz.push_back(b_[n]);
            out.cpu_hz.push_back(f);
            out.clips.push_back(flags);
            out.round_delay_s =
                std::max(out.round_delay_s, d.bits / q_function(b_[n], d.c.snr_bandwidth) + d.c.cycles / f);
        }
        return out;
    }

private:
    bool lower_bounds(double round_delay) {
        double sum = 0;
        for (std::size_t n = 0; n < devs_.size(); ++n) {
            const auto& d = devs_[n];
            const double slack = round_delay - d.c.cycles / d.f_max;
            if (slack <= 0) return false;
            const auto bw = invert_q(d.bits / slack, d.c.snr_bandwidth, 1e-10 * total_bw_, total_bw_);
            if (bw.clipped) return false;
            b_lo_[n] = bw.bandwidth_hz;
            sum += bw.bandwidth_hz;
        }
        return sum <= total_bw_;
    }

    double cpu_for(std::size_t n, double bw, double round_delay) const {
        const auto& d = devs_[n];
        const double slack = round_delay - d.bits / q_function(bw, d.c.snr_bandwidth);
        return slack > 0 ? d.c.cycles / slack : kInf;
    }

    double energy(std::size_t n, double bw, double round_delay) const {
        const auto& d = devs_[n];
        const double f = std::clamp(cpu_for(n, bw, round_delay), d.f_min, d.f_max);
        return d.c.energy_coeff * f * f + d.c.tx_energy_rate / q_function(bw, d.c.snr_bandwidth);
    }

    // -de/db: marginal energy saved per extra Hz.
    double price(std::size_t n, double bw, double round_delay) const {
        const auto& d = devs_[n];
        const double q = q_function(bw, d.c.snr_bandwidth);
        const double dq = q_derivative(bw, d.c.snr_bandwidth);
        const double slack = round_delay - d.bits / q;
        double weight = d.c.tx_energy_rate;
        if (d.c.cycles / slack > d.f_min)
            weight += 2 * d.c.energy_coeff * d.c.cycles * d.c.cycles * d.bits / (slack * slack * slack);
        return dq / (q * q) * weight;
    }

    double fill(double gamma, double round_delay) {
        double sum = 0;
        for (std::size_t n = 0; n < devs_.size(); ++n) {
            double lo = b_lo_[n];
            double hi = total_bw_;
            if (price(n, lo, round_delay) <= gamma) {
                b_[n] = lo;
            } else if (price(n, hi, round_delay) >= gamma) {
                b_[n] = hi;
            } else {
                const double log_gamma = std::log(gamma);
                auto gap = [&](double bw) { return std::log(price(n, bw, round_delay)) - log_gamma; };
                b_[n] = bracketed_root(gap, lo, hi, gap(lo), gap(hi), 1e-9 * total_bw_);
            }
            sum += b_[n];
        }
        return sum;
    }

    double total_bw_;
    std::vector<FedlDevice> devs_;
    std::vector<double> b_lo_;
    std::vector<double> b_;
};

}  // namespace

FedlResult baseline_fedl(std::span<const DeviceProfile> devices, const NetworkConfig& cfg, double lambda) {
    validate_devices(devices, cfg);
    if (!(lambda > 0)) throw DomainError("baseline_fedl: lambda must be positive");
    FedlSolver solver(devices, cfg);

    const double t_lo = solver.min_delay();
    auto objective = [&](double t) { return solver.energy_at(t) + lambda * t; };

    // Bracket the minimum of the convex objective by doubling.
    double prev = t_lo;
    double prev_val = objective(prev);
    double lower = t_lo;
    double upper = 2 * t_lo;
    for (int i = 0;; ++i) {
        if (i > 200) throw ConvergenceError("baseline_fedl: objective did not turn upward");
        const double val = objective(upper);
        if (val >= prev_val) break;
        lower = std::max(t_lo, prev / 2);
        prev = upper;
        prev_val = val;
        upper *= 2;
    }

    const double inv_phi = (std::sqrt(5.0) - 1) / 2;
    double a = lower;
    double b = upper;
    double x1 = b - inv_phi * (b - a);
    double x2 = a + inv_phi * (b - a);
    double f1 = objective(x1);
    double f2 = objective(x2);
    for (int i = 0; i < 300 && b - a > 1e-9 * b; ++i) {
        if (f1 <= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = objective(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = objective(x2);
        }
    }
    double t_best = f1 <= f2 ? x1 : x2;
    if (prev_val < std::min(f1, f2) && prev >= a && prev <= b) t_best = prev;
    if (objective(t_lo) < objective(t_best)) t_best = t_lo;

    solver.energy_at(t_best);
    FedlResult out;
    out.allocation = solver.allocation(t_best);
    const auto totals = round_aggregate(allocation_costs(out.allocation, devices, cfg));
    out.allocation.round_delay_s = totals.delay;
    out.energy_j = totals.energy;
    out.objective = totals.energy + lambda * totals.delay;
    return out;
}

LambdaTuning tune_lambda(std::span<const DeviceProfile> devices, const NetworkConfig& cfg) {
    auto excess = [&](double lambda) {
        return max_energy_excess(baseline_fedl(devices, cfg, lambda).allocation, devices, cfg);
    };
    if (excess(kLambdaSearchMax) <= 0) return {kLambdaSearchMax, true};
    if (excess(kLambdaSearchMin) > 0)
        throw InfeasibleError("energy", "baseline 2: no lambda keeps every device within its budget");
    double lo = kLambdaSearchMin;
    double hi = kLambdaSearchMax;
    while (hi / lo - 1 > 1e-3) {
        const double mid = std::sqrt(lo * hi);
        (excess(mid) <= 0 ? lo : hi) = mid;
    }
    return {lo, false};
}

PowerSearchResult optimize_power(std::span<const DeviceProfile> devices, const NetworkConfig& cfg, double p_min_w,
                                 double p_max_w, const SolverTolerances& tol) {
    if (!(p_min_w > 0) || p_min_w > p_max_w) throw DomainError("optimize_power: need 0 < p_min <= p_max");
    tol.validate();
    std::vector<DeviceProfile> trial(devices.begin(), devices.end());
    auto delay_at = [&](double p) {
        for (auto& d : trial) d.transmit_power_w = p;
        try {
            return sao_allocate(trial, cfg, tol).round_delay_s;
        } catch (const InfeasibleError&) {
            return kInf;
        }
    };

    PowerSearchResult out;
    out.power_w = p_min_w;
    out.delay_s = kInf;
    double p_up = p_max_w;
    double p_low = p_min_w;
    double p = p_low;
    double best = kInf;
    for (int epoch = 0; 1 - p_low / p_up > tol.eps3; ++epoch) {
        const double t = delay_at(p);
        out.probes.push_back({p, t});
        if (epoch > 0) {
            if (std::isfinite(t) && t <= best)
                p_low = p;
            else
                p_up = p;
        }
        if (t < best) {
            best = t;
            out.power_w = p;
            out.delay_s = t;
        }
        p = 0.5 * (p_up + p_low);
    }
    if (out.probes.empty()) {
        out.delay_s = delay_at(p_min_w);
        out.probes.push_back({p_min_w, out.delay_s});
    }
    if (!std::isfinite(out.delay_s))
        throw InfeasibleError("energy", "power search: every probed transmit power is infeasible");
    return out;
}

}  // namespace fedsao
