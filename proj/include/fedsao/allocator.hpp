#pragma once

// Delay-minimizing bandwidth / CPU-frequency allocation under per-device
// energy budgets (KKT conditions + nested bisection), the two comparison
// baselines, and the transmit-power search built on top of it.

#include <span>
#include <vector>

#include "fedsao/net_model.hpp"

namespace fedsao {

struct SolverTolerances {
    double eps0 = 1e-3;  // accepted band for sum(b)/B: [1 - eps0, 1]
    double eps1 = 1.0;   // Hz, bandwidth bisection
    double eps2 = 1e3;   // Hz, frequency bisection
    double eps3 = 1e-3;  // power search stops when 1 - p_low/p_up <= eps3
    double b_max = 0.0;  // Hz; 0 means "total bandwidth B"
    double t_max_factor = 100.0;  // initial T_max = factor * T_min
    int max_outer_iters = 200;

    void validate() const;
};

struct ClipFlags {
    bool f_min_clipped = false;
    bool f_max_clipped = false;
    bool b_clipped = false;
    bool f_reclipped = false;  // final energy-based recompute left [f_min, f_max]

    bool any() const { return f_min_clipped || f_max_clipped || b_clipped || f_reclipped; }
};

struct AllocationResult {
    std::vector<double> bandwidth_hz;
    std::vector<double> cpu_hz;
    double round_delay_s = 0;  // T*
    std::vector<ClipFlags> clips;
    bool feasible = true;
    int outer_iterations = 0;

    bool any_clipped() const;
};

struct KktReport {
    std::vector<double> delay_residuals;   // z/Q(b) + U/f - T*
    std::vector<double> energy_residuals;  // G f^2 + H/Q(b) - e_cons
    double bandwidth_residual = 0;         // sum(b) - B
};

// Q(x) = x log2(1 + J/x). Increasing in x and bounded above by J/ln2.
double q_function(double x, double snr_bandwidth);

// Derivative of q_function in x.
double q_derivative(double x, double snr_bandwidth);

// Unique positive root of f^3 + X f - Y (Y > 0), by bisection until the
// bracket is narrower than `tol`.
double solve_depressed_cubic(double x_coeff, double y_coeff, double tol);

// Frequency that makes the delay and energy equalities hold simultaneously at
// round delay `round_delay`.
double solve_f_cubic(double round_delay, const DerivedConstants& c, double energy_budget, double model_bits,
                     double eps2);

struct BandwidthSolve {
    double bandwidth_hz = 0;
    bool clipped = false;
};

// Smallest b (within eps1) with Q(b) >= target_rate, capped at b_max. A target
// at or above the upper bound J/ln2 is unreachable and clips to b_max.
BandwidthSolve invert_q(double target_rate, double snr_bandwidth, double eps1, double b_max);

// Bandwidth that spends exactly the energy left after computing at `cpu_hz`.
// Throws InfeasibleError when computation alone exhausts the budget.
BandwidthSolve solve_b_from_energy(double cpu_hz, const DerivedConstants& c, double energy_budget, double eps1,
                                   double b_max);

AllocationResult sao_allocate(std::span<const DeviceProfile> devices, const NetworkConfig& cfg,
                              const SolverTolerances& tol = {});

KktReport kkt_residuals(const AllocationResult& result, std::span<const DeviceProfile> devices,
                        const NetworkConfig& cfg);

// Per-device costs of a concrete allocation.
std::vector<RoundCost> allocation_costs(const AllocationResult& result, std::span<const DeviceProfile> devices,
                                        const NetworkConfig& cfg);

// Baseline 1: every device gets B/S; each runs at the fastest CPU frequency
// its energy budget allows.
AllocationResult baseline_equal_bandwidth(std::span<const DeviceProfile> devices, const NetworkConfig& cfg);

struct FedlResult {
    AllocationResult allocation;
    double energy_j = 0;
    double objective = 0;  // E + lambda * T
};

// Baseline 2: minimizes E + lambda*T under the bandwidth and frequency limits
// only. Per-device energy budgets are ignored.
FedlResult baseline_fedl(std::span<const DeviceProfile> devices, const NetworkConfig& cfg, double lambda);

struct LambdaTuning {
    double lambda = 0;
    bool at_upper_bound = false;  // no budget binds anywhere in the search range
};

inline constexpr double kLambdaSearchMin = 1e-6;
inline constexpr double kLambdaSearchMax = 1e6;

// Largest lambda for which Baseline 2 keeps every device within its budget.
LambdaTuning tune_lambda(std::span<const DeviceProfile> devices, const NetworkConfig& cfg);

// Largest per-device energy overrun of an allocation (negative when all fit).
double max_energy_excess(const AllocationResult& result, std::span<const DeviceProfile> devices,
                         const NetworkConfig& cfg);

struct PowerProbe {
    double power_w = 0;
    double delay_s = 0;  // +inf when the allocator reported infeasibility
};

struct PowerSearchResult {
    double power_w = 0;
    double delay_s = 0;
    std::vector<PowerProbe> probes;
};

// Bisection over a common transmit power, evaluating each candidate with
// sao_allocate and moving toward whichever side improved the running minimum.
PowerSearchResult optimize_power(std::span<const DeviceProfile> devices, const NetworkConfig& cfg, double p_min_w,
                                 double p_max_w, const SolverTolerances& tol = {});

}  // namespace fedsao
