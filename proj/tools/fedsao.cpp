// Command-line front end: allocation problems, sweeps, clustering of saved
// device models, and full training runs.
//
// Exit codes: 0 success, 1 bad input or I/O failure, 2 usage error,
// 3 infeasible allocation, 4 target accuracy not reached (or a solver gave
// up), 5 kkt-check found violations.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedsao/errors.hpp"
#include "fedsao/harness.hpp"

using namespace fedsao;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitInput = 1;
constexpr int kExitUsage = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitNoConvergence = 4;
constexpr int kExitCheckFailed = 5;

json read_json_file(const std::string& path) {
    std::ifstream file;
    std::istream* in = &std::cin;
    if (path != "-") {
        file.open(path);
        if (!file) throw DomainError("cannot open " + path);
        in = &file;
    }
    try {
        return json::parse(*in);
    } catch (const json::parse_error& e) {
        throw ParseError(e.byte, path + ": " + e.what());
    }
}

// Writes to `path`, or stdout when it is empty or "-".
void emit(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DomainError("cannot write " + path);
    out << text;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DomainError("cannot write " + path.string());
    out << text;
}

// ------------------------------------------------------------------ allocate

struct AllocateOpts {
    std::string instance;
    std::string out;
    std::string allocator = "sao";
    double eps0 = SolverTolerances{}.eps0;
    double eps1 = SolverTolerances{}.eps1;
    double eps2 = SolverTolerances{}.eps2;
    double eps3 = SolverTolerances{}.eps3;
    double bmax = 0;
    double lambda = 0;
    bool optimize_power = false;
    double p_min_dbm = 10;
    double p_max_dbm = 23;
};

int run_allocate(const AllocateOpts& o) {
    auto inst = instance_from_json(read_json_file(o.instance));
    SolverTolerances tol;
    tol.eps0 = o.eps0;
    tol.eps1 = o.eps1;
    tol.eps2 = o.eps2;
    tol.eps3 = o.eps3;
    tol.b_max = o.bmax;
    tol.validate();

    json out;
    out["allocator"] = o.allocator;
    if (o.optimize_power) {
        if (o.allocator != "sao") throw DomainError("--optimize-power works with the sao allocator only");
        const auto search =
            optimize_power(inst.devices, inst.network, dbm_to_watt(o.p_min_dbm), dbm_to_watt(o.p_max_dbm), tol);
        json probes = json::array();
        for (const auto& p : search.probes)
            probes.push_back({{"power_dbm", watt_to_dbm(p.power_w)},
                              {"delay_s", std::isfinite(p.delay_s) ? json(p.delay_s) : json(nullptr)}});
        out["power_search"] = {{"power_dbm", watt_to_dbm(search.power_w)},
                               {"delay_s", search.delay_s},
                               {"probes", std::move(probes)}};
        for (auto& d : inst.devices) d.transmit_power_w = search.power_w;
    }

    AllocationResult result;
    if (o.allocator == "sao") {
        result = sao_allocate(inst.devices, inst.network, tol);
    } else if (o.allocator == "equal_bandwidth") {
        result = baseline_equal_bandwidth(inst.devices, inst.network);
    } else if (o.allocator == "fedl") {
        double lambda = o.lambda;
        if (lambda <= 0) {
            const auto tuned = tune_lambda(inst.devices, inst.network);
            lambda = tuned.lambda;
            out["lambda_at_upper_bound"] = tuned.at_upper_bound;
        }
        out["lambda"] = lambda;
        result = baseline_fedl(inst.devices, inst.network, lambda).allocation;
    } else {
        throw CLI::ValidationError("--allocator", "must be sao, equal_bandwidth or fedl");
    }
    const auto totals = round_aggregate(allocation_costs(result, inst.devices, inst.network));
    out["round_delay_s"] = totals.delay;
    out["energy_j"] = totals.energy;
    out["allocation"] = allocation_to_json(result);
    out["kkt"] = kkt_to_json(kkt_residuals(result, inst.devices, inst.network));
    emit(o.out, out.dump(2) + "\n");
    return 0;
}

// ----------------------------------------------------------------- kkt-check

struct KktOpts {
    std::string instance;
    std::string allocation;
    std::string out;
    double tol = 1e-3;
};

int run_kkt_check(const KktOpts& o) {
    const auto inst = instance_from_json(read_json_file(o.instance));
    auto aj = read_json_file(o.allocation);
    if (aj.contains("allocation")) aj = aj.at("allocation");
    const auto alloc = allocation_from_json(aj);
    if (alloc.bandwidth_hz.size() != inst.devices.size())
        throw DomainError("allocation has " + std::to_string(alloc.bandwidth_hz.size()) + " devices, instance has " +
                          std::to_string(inst.devices.size()));
    const auto k = kkt_residuals(alloc, inst.devices, inst.network);
    const double total = inst.network.total_bandwidth_hz;

    // Feasibility of the logged (b, f, T), then the optimality equalities on
    // devices the solver did not clip.
    json violations = json::array();
    for (std::size_t n = 0; n < inst.devices.size(); ++n) {
        const auto& d = inst.devices[n];
        const double f = alloc.cpu_hz[n];
        const auto add = [&](const std::string& what, double value) {
            violations.push_back({{"device", d.id}, {"check", what}, {"value", value}});
        };
        if (f < d.f_min_hz * (1 - o.tol) || f > d.f_max_hz * (1 + o.tol)) add("cpu_bounds", f);
        if (!(alloc.bandwidth_hz[n] > 0)) add("bandwidth_positive", alloc.bandwidth_hz[n]);
        if (k.delay_residuals[n] > o.tol * alloc.round_delay_s) add("delay", k.delay_residuals[n]);
        if (k.energy_residuals[n] > o.tol * d.energy_budget_j) add("energy", k.energy_residuals[n]);
        const bool clipped = n < alloc.clips.size() && alloc.clips[n].any();
        if (!clipped) {
            if (std::abs(k.delay_residuals[n]) > o.tol * alloc.round_delay_s) add("delay_equality", k.delay_residuals[n]);
            if (std::abs(k.energy_residuals[n]) > o.tol * d.energy_budget_j) add("energy_equality", k.energy_residuals[n]);
        }
    }
    if (k.bandwidth_residual > o.tol * total) violations.push_back({{"check", "bandwidth_total"}, {"value", k.bandwidth_residual}});
    if (!alloc.any_clipped() && std::abs(k.bandwidth_residual) > o.tol * total)
        violations.push_back({{"check", "bandwidth_equality"}, {"value", k.bandwidth_residual}});

    const bool ok = violations.empty();
    json out = kkt_to_json(k);
    out["tolerance"] = o.tol;
    out["ok"] = ok;
    out["violations"] = std::move(violations);
    emit(o.out, out.dump(2) + "\n");
    return ok ? 0 : kExitCheckFailed;
}

// --------------------------------------------------------------------- sweep

struct SweepOpts {
    std::string param;
    std::vector<double> values;
    std::optional<double> from, to;
    int steps = 0;
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

ExperimentConfig config_or_default(const std::string& path, const std::optional<std::uint64_t>& seed) {
    ExperimentConfig cfg = path.empty() ? ExperimentConfig{} : load_config(path);
    if (seed) cfg.seed = *seed;
    cfg.validate();
    return cfg;
}

int run_sweep(const SweepOpts& o) {
    const auto param = parse_sweep_param(o.param);
    std::vector<double> values = o.values;
    if (values.empty()) {
        if (!o.from || !o.to || o.steps < 1)
            throw CLI::ValidationError("sweep", "give --values, or --from, --to and --steps");
        for (int i = 0; i < o.steps; ++i)
            values.push_back(o.steps == 1 ? *o.from : *o.from + (*o.to - *o.from) * i / (o.steps - 1));
    }
    const auto cfg = config_or_default(o.config, o.seed);
    const auto table = sweep(cfg, param, values);
    std::ostringstream csv;
    write_sweep_csv(csv, table);
    emit(o.out, csv.str());
    return 0;
}

// ------------------------------------------------------------------- cluster

struct ClusterOpts {
    std::string checkpoints;
    std::string manifest;
    std::string layer = "fc_last";
    int clusters = 0;
    std::uint64_t seed = 1;
    std::string out;
    std::string layers_csv;
};

int run_cluster(const ClusterOpts& o) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(o.checkpoints))
        if (entry.is_regular_file() && entry.path().extension() == ".ckpt") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DomainError("no .ckpt files in " + o.checkpoints);

    std::vector<ModelWeights> models;
    for (const auto& f : files) models.push_back(load_checkpoint(f).weights);

    std::string manifest_path = o.manifest;
    if (manifest_path.empty() && fs::exists(fs::path(o.checkpoints) / "manifest.json"))
        manifest_path = (fs::path(o.checkpoints) / "manifest.json").string();
    std::vector<int> truth;
    if (!manifest_path.empty()) {
        const auto m = read_json_file(manifest_path);
        for (const auto& d : m.at("devices")) truth.push_back(d.at("majority_class").get<int>());
        if (truth.size() != models.size())
            throw DomainError("manifest lists " + std::to_string(truth.size()) + " devices but " +
                              std::to_string(models.size()) + " checkpoints were found");
    }
    int c = o.clusters;
    if (c <= 0) {
        if (truth.empty()) throw CLI::ValidationError("--clusters", "required when no manifest is available");
        std::vector<int> distinct = truth;
        std::sort(distinct.begin(), distinct.end());
        c = static_cast<int>(std::unique(distinct.begin(), distinct.end()) - distinct.begin());
    }

    const auto fit = cluster_devices(models, o.layer, c, o.seed);
    json out{{"layer", o.layer},
             {"num_clusters", c},
             {"labels", fit.assignment.labels},
             {"inertia", fit.inertia},
             {"ari_vs_manifest", truth.empty() ? json(nullptr) : json(adjusted_rand_index(fit.assignment.labels, truth))}};
    emit(o.out, out.dump(2) + "\n");

    if (!o.layers_csv.empty()) {
        std::ostringstream csv;
        csv << "# fedsao cluster-layers v1\nlayer,feature_dim,train_time_s,ari,inertia\n";
        for (const auto& range : models[0].layer_map) {
            const auto start = std::chrono::steady_clock::now();
            const auto layer_fit = cluster_devices(models, range.name, c, o.seed);
            const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;
            const double ari = truth.empty() ? std::nan("") : adjusted_rand_index(layer_fit.assignment.labels, truth);
            csv << range.name << ',' << range.length << ',' << format_number(took.count()) << ',' << format_number(ari)
                << ',' << format_number(layer_fit.inertia) << '\n';
        }
        write_file(o.layers_csv, csv.str());
    }
    return 0;
}

// --------------------------------------------------------------------- train

struct TrainOpts {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool no_device_models = false;
};

int run_train(const TrainOpts& o) {
    const auto cfg = config_or_default(o.config, o.seed);
    const fs::path dir(o.out);
    fs::create_directories(dir);

    ExperimentState state;
    const auto result = run_experiment(cfg, &state);

    std::ostringstream metrics, selections;
    write_metrics_csv(metrics, result);
    write_selections_csv(selections, result);
    write_file(dir / "metrics.csv", metrics.str());
    write_file(dir / "selections.csv", selections.str());
    write_file(dir / "summary.json", summary_json(result).dump(2) + "\n");
    write_file(dir / "config.json", config_to_json(cfg).dump(2) + "\n");
    save_checkpoint(dir / "final.ckpt", state.spec, state.global);

    // Round-0 local models, the input to clustering, for the `cluster` command.
    if (!o.no_device_models) {
        const fs::path devices = dir / "devices";
        fs::create_directories(devices);
        char name[32];
        for (std::size_t i = 0; i < state.device_weights.size(); ++i) {
            std::snprintf(name, sizeof name, "device_%05zu.ckpt", i);
            save_checkpoint(devices / name, state.spec, state.round0_weights[i]);
        }
        write_file(devices / "manifest.json", partition_manifest(state.parts).dump(2) + "\n");
    }

    std::cerr << "rounds " << result.rounds_run << ", accuracy " << result.final_accuracy << ", T "
              << result.total_delay_s << " s, E " << result.total_energy_j << " J, cluster ARI " << result.cluster_ari
              << '\n';
    if (!result.reached_target) {
        std::cerr << "target accuracy " << cfg.target_accuracy << " not reached within " << cfg.max_rounds
                  << " rounds\n";
        return kExitNoConvergence;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated learning over a wireless cell: allocation, clustering, selection and training"};
    app.require_subcommand(1);

    AllocateOpts alloc;
    auto* a = app.add_subcommand("allocate", "Solve one bandwidth/CPU allocation problem");
    a->add_option("instance", alloc.instance, "Instance JSON ('-' for stdin)")->required();
    a->add_option("-o,--out", alloc.out, "Output JSON (default stdout)");
    a->add_option("--allocator", alloc.allocator, "sao, equal_bandwidth or fedl")
        ->check(CLI::IsMember({"sao", "equal_bandwidth", "fedl"}));
    a->add_option("--eps0", alloc.eps0, "Accepted band for sum(b)/B");
    a->add_option("--eps1", alloc.eps1, "Bandwidth tolerance (Hz)");
    a->add_option("--eps2", alloc.eps2, "Frequency tolerance (Hz)");
    a->add_option("--eps3", alloc.eps3, "Power search tolerance");
    a->add_option("--bmax", alloc.bmax, "Per-device bandwidth cap (Hz, 0 = B)");
    a->add_option("--lambda", alloc.lambda, "Delay weight for fedl (default: tuned to the budgets)");
    a->add_flag("--optimize-power", alloc.optimize_power, "Search a common transmit power first");
    a->add_option("--p-min-dbm", alloc.p_min_dbm, "Power search lower bound");
    a->add_option("--p-max-dbm", alloc.p_max_dbm, "Power search upper bound");

    KktOpts kkt;
    auto* k = app.add_subcommand("kkt-check", "Check an allocation against the optimality conditions");
    k->add_option("instance", kkt.instance, "Instance JSON")->required();
    k->add_option("allocation", kkt.allocation, "Allocation JSON (output of allocate)")->required();
    k->add_option("-o,--out", kkt.out, "Output JSON (default stdout)");
    k->add_option("--tol", kkt.tol, "Relative tolerance");

    SweepOpts sw;
    auto* s = app.add_subcommand("sweep", "Sweep one parameter and write a CSV");
    s->add_option("--param", sw.param, "power, energy, bandwidth or S")->required();
    s->add_option("--values", sw.values, "Comma-separated values")->delimiter(',');
    s->add_option("--from", sw.from, "First value");
    s->add_option("--to", sw.to, "Last value");
    s->add_option("--steps", sw.steps, "Number of evenly spaced values");
    s->add_option("--config", sw.config, "Experiment config JSON");
    s->add_option("--seed", sw.seed, "Overrides the config seed");
    s->add_option("-o,--out", sw.out, "Output CSV (default stdout)");

    ClusterOpts cl;
    auto* c = app.add_subcommand("cluster", "Cluster saved device models on one layer");
    c->add_option("checkpoints", cl.checkpoints, "Directory of per-device .ckpt files")->required()->check(CLI::ExistingDirectory);
    c->add_option("--manifest", cl.manifest, "Partition manifest (default: manifest.json in the directory)");
    c->add_option("--layer", cl.layer, "Feature layer");
    c->add_option("--clusters", cl.clusters, "Cluster count (default: classes in the manifest)");
    c->add_option("--seed", cl.seed, "K-means seed");
    c->add_option("-o,--out", cl.out, "Output JSON (default stdout)");
    c->add_option("--layers-csv", cl.layers_csv, "Also cluster on every layer and write timings and ARI here");

    TrainOpts tr;
    auto* t = app.add_subcommand("train", "Run a full experiment");
    t->add_option("--config", tr.config, "Experiment config JSON (default settings otherwise)");
    t->add_option("--seed", tr.seed, "Overrides the config seed");
    t->add_option("--out", tr.out, "Output directory")->required();
    t->add_flag("--no-device-models", tr.no_device_models, "Skip writing per-device round-0 checkpoints");

    std::string config_out;
    auto* d = app.add_subcommand("config", "Print the default experiment config");
    d->add_option("-o,--out", config_out, "Output JSON (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*a) return run_allocate(alloc);
        if (*k) return run_kkt_check(kkt);
        if (*s) return run_sweep(sw);
        if (*c) return run_cluster(cl);
        if (*t) return run_train(tr);
        if (*d) {
            emit(config_out, config_to_json(ExperimentConfig{}).dump(2) + "\n");
            return 0;
        }
    } catch (const CLI::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const InfeasibleError& e) {
        std::cerr << "infeasible (" << e.constraint() << "): " << e.what() << '\n';
        return kExitInfeasible;
    } catch (const ConvergenceError& e) {
        std::cerr << "did not converge: " << e.what() << '\n';
        return kExitNoConvergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    }
    return kExitUsage;
}
