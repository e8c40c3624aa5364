#include "fedsao/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "fedsao/errors.hpp"
#include "fedsao/rng.hpp"

namespace fedsao {

void ExperimentConfig::validate() const {
    network.validate();
    if (num_devices < 1) throw DomainError("config: num_devices must be >= 1");
    if (!(target_accuracy > 0 && target_accuracy <= 1) && target_accuracy != 0)
        throw DomainError("config: target_accuracy must lie in [0, 1]");
    if (max_rounds < 1) throw DomainError("config: max_rounds must be >= 1");
    train.validate();
    solver.validate();
    if (data.num_classes < 2) throw DomainError("config: need at least two classes");
    const int s = selection.num_selected;
    if (s < 1 || s > num_devices) throw DomainError("config: num_selected must lie in [1, num_devices]");
    if (selection.strategy != SelectionStrategy::random && s % resolved_clusters() != 0)
        throw DomainError("config: cluster strategies need num_selected divisible by the cluster count");
    if (resolved_clusters() > num_devices) throw DomainError("config: more clusters than devices");
}

int ExperimentConfig::resolved_clusters() const {
    return selection.num_clusters > 0 ? selection.num_clusters : data.num_classes;
}

int ExperimentConfig::per_cluster() const { return std::max(1, selection.num_selected / resolved_clusters()); }

// ---------------------------------------------------------------- config I/O

namespace {

using nlohmann::json;

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw DomainError("config: '" + where + "' must be an object");
    for (const auto& [key, value] : j.items()) {
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end())
            throw DomainError("config: unknown key '" + key + "' in " + where);
    }
}

template <typename T>
void read(const json& j, const char* key, T& into) {
    if (j.contains(key)) into = j.at(key).get<T>();
}

AllocatorKind parse_allocator(const std::string& s) {
    if (s == "sao") return AllocatorKind::sao;
    if (s == "equal_bandwidth") return AllocatorKind::equal_bandwidth;
    if (s == "fedl") return AllocatorKind::fedl;
    throw DomainError("config: unknown allocator '" + s + "'");
}

const char* allocator_name(AllocatorKind k) {
    switch (k) {
        case AllocatorKind::sao: return "sao";
        case AllocatorKind::equal_bandwidth: return "equal_bandwidth";
        case AllocatorKind::fedl: return "fedl";
    }
    return "sao";
}

void read_network(const json& n, NetworkConfig& net) {
    check_keys(n,
               {"total_bandwidth_mhz", "noise_psd_dbm_per_hz", "cell_radius_m", "pathloss_intercept_db",
                "pathloss_slope_db", "shadow_sigma_db"},
               "network");
    if (n.contains("total_bandwidth_mhz")) net.total_bandwidth_hz = n.at("total_bandwidth_mhz").get<double>() * 1e6;
    if (n.contains("noise_psd_dbm_per_hz")) net.noise_psd_w_per_hz = dbm_to_watt(n.at("noise_psd_dbm_per_hz").get<double>());
    read(n, "cell_radius_m", net.cell_radius_m);
    read(n, "pathloss_intercept_db", net.pathloss_intercept_db);
    read(n, "pathloss_slope_db", net.pathloss_slope_db);
    read(n, "shadow_sigma_db", net.shadow_sigma_db);
    net.validate();
}

json network_json(const NetworkConfig& net) {
    return {{"total_bandwidth_mhz", net.total_bandwidth_hz / 1e6},
            {"noise_psd_dbm_per_hz", watt_to_dbm(net.noise_psd_w_per_hz)},
            {"cell_radius_m", net.cell_radius_m},
            {"pathloss_intercept_db", net.pathloss_intercept_db},
            {"pathloss_slope_db", net.pathloss_slope_db},
            {"shadow_sigma_db", net.shadow_sigma_db}};
}

// Device keys shared by templates and explicit profiles.
void read_device_common(const json& d, double& cycles, double& f_min, double& f_max, double& power, double& bits,
                        double& alpha) {
    read(d, "cycles_per_sample", cycles);
    if (d.contains("cpu_min_ghz")) f_min = d.at("cpu_min_ghz").get<double>() * 1e9;
    if (d.contains("cpu_max_ghz")) f_max = d.at("cpu_max_ghz").get<double>() * 1e9;
    if (d.contains("transmit_power_dbm")) power = dbm_to_watt(d.at("transmit_power_dbm").get<double>());
    if (d.contains("model_size_kb")) bits = kb_to_bits(d.at("model_size_kb").get<double>());
    read(d, "capacitance_alpha", alpha);
}

void read_device_template(const json& d, DeviceTemplate& t) {
    check_keys(d,
               {"cycles_per_sample", "num_samples", "cpu_min_ghz", "cpu_max_ghz", "transmit_power_dbm",
                "model_size_kb", "energy_budget_mj", "capacitance_alpha", "local_iters", "min_distance_m"},
               "devices");
    read_device_common(d, t.cycles_per_sample, t.f_min_hz, t.f_max_hz, t.transmit_power_w, t.model_size_bits,
                       t.capacitance_alpha);
    read(d, "num_samples", t.num_samples);
    read(d, "local_iters", t.local_iters);
    read(d, "min_distance_m", t.min_distance_m);
    if (d.contains("energy_budget_mj")) {
        const auto range = d.at("energy_budget_mj").get<std::vector<double>>();
        if (range.size() != 2) throw DomainError("config: energy_budget_mj must be [min, max]");
        t.budget_min_j = range[0] * 1e-3;
        t.budget_max_j = range[1] * 1e-3;
    }
}

json device_template_json(const DeviceTemplate& t) {
    return {{"cycles_per_sample", t.cycles_per_sample},
            {"num_samples", t.num_samples},
            {"cpu_min_ghz", t.f_min_hz / 1e9},
            {"cpu_max_ghz", t.f_max_hz / 1e9},
            {"transmit_power_dbm", watt_to_dbm(t.transmit_power_w)},
            {"model_size_kb", t.model_size_bits / kBitsPerKilobyte},
            {"energy_budget_mj", {t.budget_min_j * 1e3, t.budget_max_j * 1e3}},
            {"capacitance_alpha", t.capacitance_alpha},
            {"local_iters", t.local_iters},
            {"min_distance_m", t.min_distance_m}};
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    check_keys(j,
               {"seed", "num_devices", "target_accuracy", "max_rounds", "include_round0_cost", "allocator", "network",
                "devices", "data", "model", "train", "selection", "solver"},
               "config");
    read(j, "seed", c.seed);
    read(j, "num_devices", c.num_devices);
    read(j, "target_accuracy", c.target_accuracy);
    read(j, "max_rounds", c.max_rounds);
    read(j, "include_round0_cost", c.include_round0_cost);
    if (j.contains("allocator")) c.allocator = parse_allocator(j.at("allocator").get<std::string>());

    if (j.contains("network")) read_network(j.at("network"), c.network);
    if (j.contains("devices")) read_device_template(j.at("devices"), c.devices);
    if (j.contains("data")) {
        const auto& d = j.at("data");
        check_keys(d,
                   {"num_classes", "dim", "separation", "train_per_class", "test_per_class", "partition", "sigma",
                    "samples_per_device", "idx_train_images", "idx_train_labels", "idx_test_images",
                    "idx_test_labels"},
                   "data");
        read(d, "num_classes", c.data.num_classes);
        read(d, "dim", c.data.dim);
        read(d, "separation", c.data.separation);
        read(d, "train_per_class", c.data.train_per_class);
        read(d, "test_per_class", c.data.test_per_class);
        if (d.contains("partition")) {
            const auto p = d.at("partition").get<std::string>();
            if (p != "sigma" && p != "two_class") throw DomainError("config: partition must be 'sigma' or 'two_class'");
            c.data.two_class = p == "two_class";
        }
        read(d, "sigma", c.data.sigma);
        read(d, "samples_per_device", c.data.samples_per_device);
        read(d, "idx_train_images", c.data.idx_train_images);
        read(d, "idx_train_labels", c.data.idx_train_labels);
        read(d, "idx_test_images", c.data.idx_test_images);
        read(d, "idx_test_labels", c.data.idx_test_labels);
    }
    if (j.contains("model")) {
        check_keys(j.at("model"), {"hidden"}, "model");
        read(j.at("model"), "hidden", c.hidden_dims);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        check_keys(t, {"local_iters", "learning_rate", "batch_size"}, "train");
        read(t, "local_iters", c.train.local_iters);
        read(t, "learning_rate", c.train.learning_rate);
        if (t.contains("batch_size")) {
            const auto& b = t.at("batch_size");
            if (b.is_string()) {
                if (b.get<std::string>() != "full") throw DomainError("config: batch_size must be 'full' or a count");
                c.train.batch_size = 0;
            } else {
                c.train.batch_size = b.get<std::size_t>();
            }
        }
    }
    if (j.contains("selection")) {
        const auto& s = j.at("selection");
        check_keys(s, {"strategy", "num_selected", "num_clusters", "cluster_layer"}, "selection");
        if (s.contains("strategy")) c.selection.strategy = parse_strategy(s.at("strategy").get<std::string>());
        read(s, "num_selected", c.selection.num_selected);
        read(s, "num_clusters", c.selection.num_clusters);
        read(s, "cluster_layer", c.selection.cluster_layer);
    }
    if (j.contains("solver")) {
        const auto& s = j.at("solver");
        check_keys(s, {"eps0", "eps1_hz", "eps2_hz", "eps3", "b_max_hz", "t_max_factor", "max_outer_iters"}, "solver");
        read(s, "eps0", c.solver.eps0);
        read(s, "eps1_hz", c.solver.eps1);
        read(s, "eps2_hz", c.solver.eps2);
        read(s, "eps3", c.solver.eps3);
        read(s, "b_max_hz", c.solver.b_max);
        read(s, "t_max_factor", c.solver.t_max_factor);
        read(s, "max_outer_iters", c.solver.max_outer_iters);
    }
    c.devices.local_iters = c.train.local_iters;
    c.validate();
    return c;
}

AllocationInstance instance_from_json(const json& j) {
    check_keys(j, {"network", "devices", "generate"}, "instance");
    AllocationInstance inst;
    if (j.contains("network")) read_network(j.at("network"), inst.network);
    if (j.contains("generate") == j.contains("devices"))
        throw DomainError("instance: give exactly one of 'devices' and 'generate'");
    if (j.contains("generate")) {
        json g = j.at("generate");
        const int count = g.at("count").get<int>();
        const auto seed = g.value("seed", std::uint64_t{1});
        g.erase("count");
        g.erase("seed");
        DeviceTemplate t;
        read_device_template(g, t);
        inst.devices = profiles_of(generate_cell(inst.network, t, count, seed));
        return inst;
    }
    for (const auto& d : j.at("devices")) {
        check_keys(d,
                   {"id", "cycles_per_sample", "num_samples", "cpu_min_ghz", "cpu_max_ghz", "transmit_power_dbm",
                    "model_size_kb", "energy_budget_mj", "capacitance_alpha", "local_iters", "channel_gain",
                    "distance_m"},
                   "device");
        DeviceProfile p;
        p.id = static_cast<int>(inst.devices.size());
        read(d, "id", p.id);
        read_device_common(d, p.cycles_per_sample, p.f_min_hz, p.f_max_hz, p.transmit_power_w, p.model_size_bits,
                           p.capacitance_alpha);
        read(d, "num_samples", p.num_samples);
        read(d, "local_iters", p.local_iters);
        if (d.contains("energy_budget_mj")) p.energy_budget_j = d.at("energy_budget_mj").get<double>() * 1e-3;
        if (d.contains("channel_gain") == d.contains("distance_m"))
            throw DomainError("instance: each device needs exactly one of channel_gain and distance_m");
        if (d.contains("channel_gain"))
            p.channel_gain = d.at("channel_gain").get<double>();
        else  // path loss only; shadowing needs a seed and belongs to `generate`
            p.channel_gain = std::pow(10.0, -path_loss_db(d.at("distance_m").get<double>() / 1000.0, inst.network) / 10.0);
        p.validate();
        inst.devices.push_back(p);
    }
    return inst;
}

json instance_to_json(const AllocationInstance& inst) {
    json devices = json::array();
    for (const auto& p : inst.devices)
        devices.push_back({{"id", p.id},
                           {"cycles_per_sample", p.cycles_per_sample},
                           {"num_samples", p.num_samples},
                           {"cpu_min_ghz", p.f_min_hz / 1e9},
                           {"cpu_max_ghz", p.f_max_hz / 1e9},
                           {"transmit_power_dbm", watt_to_dbm(p.transmit_power_w)},
                           {"model_size_kb", p.model_size_bits / kBitsPerKilobyte},
                           {"energy_budget_mj", p.energy_budget_j * 1e3},
                           {"capacitance_alpha", p.capacitance_alpha},
                           {"local_iters", p.local_iters},
                           {"channel_gain", p.channel_gain}});
    return {{"network", network_json(inst.network)}, {"devices", std::move(devices)}};
}

json allocation_to_json(const AllocationResult& r) {
    json clips = json::array();
    for (const auto& c : r.clips)
        clips.push_back({{"f_min_clipped", c.f_min_clipped},
                         {"f_max_clipped", c.f_max_clipped},
                         {"b_clipped", c.b_clipped},
                         {"f_reclipped", c.f_reclipped}});
    return {{"bandwidth_hz", r.bandwidth_hz}, {"cpu_hz", r.cpu_hz},       {"round_delay_s", r.round_delay_s},
            {"feasible", r.feasible},         {"clips", std::move(clips)}, {"outer_iterations", r.outer_iterations}};
}

AllocationResult allocation_from_json(const json& j) {
    AllocationResult r;
    r.bandwidth_hz = j.at("bandwidth_hz").get<std::vector<double>>();
    r.cpu_hz = j.at("cpu_hz").get<std::vector<double>>();
    r.round_delay_s = j.at("round_delay_s").get<double>();
    r.feasible = j.value("feasible", true);
    r.outer_iterations = j.value("outer_iterations", 0);
    r.clips.resize(r.bandwidth_hz.size());
    if (j.contains("clips")) {
        const auto& clips = j.at("clips");
        for (std::size_t i = 0; i < clips.size() && i < r.clips.size(); ++i) {
            r.clips[i].f_min_clipped = clips[i].value("f_min_clipped", false);
            r.clips[i].f_max_clipped = clips[i].value("f_max_clipped", false);
            r.clips[i].b_clipped = clips[i].value("b_clipped", false);
            r.clips[i].f_reclipped = clips[i].value("f_reclipped", false);
        }
    }
    if (r.cpu_hz.size() != r.bandwidth_hz.size()) throw DomainError("allocation: bandwidth and cpu lists differ in length");
    return r;
}

json kkt_to_json(const KktReport& r) {
    return {{"delay_residuals_s", r.delay_residuals},
            {"energy_residuals_j", r.energy_residuals},
            {"bandwidth_residual_hz", r.bandwidth_residual}};
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(e.byte, "config " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

json config_to_json(const ExperimentConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["num_devices"] = c.num_devices;
    j["target_accuracy"] = c.target_accuracy;
    j["max_rounds"] = c.max_rounds;
    j["include_round0_cost"] = c.include_round0_cost;
    j["allocator"] = allocator_name(c.allocator);
    j["network"] = network_json(c.network);
    j["devices"] = device_template_json(c.devices);
    j["data"] = {{"num_classes", c.data.num_classes},
                 {"dim", c.data.dim},
                 {"separation", c.data.separation},
                 {"train_per_class", c.data.train_per_class},
                 {"test_per_class", c.data.test_per_class},
                 {"partition", c.data.two_class ? "two_class" : "sigma"},
                 {"sigma", c.data.sigma},
                 {"samples_per_device", c.data.samples_per_device},
                 {"idx_train_images", c.data.idx_train_images},
                 {"idx_train_labels", c.data.idx_train_labels},
                 {"idx_test_images", c.data.idx_test_images},
                 {"idx_test_labels", c.data.idx_test_labels}};
    j["model"] = {{"hidden", c.hidden_dims}};
    j["train"] = {{"local_iters", c.train.local_iters}, {"learning_rate", c.train.learning_rate}};
    if (c.train.batch_size == 0)
        j["train"]["batch_size"] = "full";
    else
        j["train"]["batch_size"] = c.train.batch_size;
    j["selection"] = {{"strategy", std::string(strategy_name(c.selection.strategy))},
                      {"num_selected", c.selection.num_selected},
                      {"num_clusters", c.selection.num_clusters},
                      {"cluster_layer", c.selection.cluster_layer}};
    j["solver"] = {{"eps0", c.solver.eps0},       {"eps1_hz", c.solver.eps1},
                   {"eps2_hz", c.solver.eps2},     {"eps3", c.solver.eps3},
                   {"b_max_hz", c.solver.b_max},   {"t_max_factor", c.solver.t_max_factor},
                   {"max_outer_iters", c.solver.max_outer_iters}};
    return j;
}

// ---------------------------------------------------------------- simulation

namespace {

bool uses_idx(const DataConfig& d) { return !d.idx_train_images.empty(); }

std::pair<LabeledDataset, LabeledDataset> make_data(const ExperimentConfig& cfg) {
    const auto& d = cfg.data;
    if (uses_idx(d)) {
        auto train = load_idx(d.idx_train_images, d.idx_train_labels);
        auto test = load_idx(d.idx_test_images, d.idx_test_labels);
        test.num_classes = train.num_classes = std::max(train.num_classes, test.num_classes);
        return {std::move(train), std::move(test)};
    }
    // One draw per class, split so train and test share class means.
    const auto all = gen_synthetic(d.num_classes, d.train_per_class + d.test_per_class, d.dim, d.separation, cfg.seed);
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < all.size(); ++i) {
        const std::size_t within = i % (d.train_per_class + d.test_per_class);
        (within < d.train_per_class ? train_idx : test_idx).push_back(i);
    }
    return {all.subset(train_idx), all.subset(test_idx)};
}

std::uint64_t train_seed(const ExperimentConfig& cfg, int device, int round) {
    return derive_seed(cfg.seed, {stream::local_train, static_cast<std::uint64_t>(device), static_cast<std::uint64_t>(round)});
}

std::vector<DeviceProfile> profiles_for(const ExperimentState& state, const std::vector<int>& ids) {
    std::vector<DeviceProfile> out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(state.cell[static_cast<std::size_t>(id)].profile);
    return out;
}

// Trains `ids` from the current global model, aggregates them, and fills in
// costs and accuracy.
RoundMetrics execute_round(ExperimentState& state, int round, std::vector<int> ids, std::vector<std::string> flags) {
    const auto& cfg = state.cfg;
    RoundMetrics m;
    m.round = round;
    m.selected = std::move(ids);
    m.flags = std::move(flags);

    const auto profiles = profiles_for(state, m.selected);
    AllocationResult alloc;
    try {
        alloc = allocate_round(cfg, profiles);
    } catch (const InfeasibleError& e) {
        throw InfeasibleError(e.constraint(), "round " + std::to_string(round) + ": " + e.what());
    }
    const auto costs = allocation_costs(alloc, profiles, cfg.network);
    const auto totals = round_aggregate(costs);
    m.delay_s = totals.delay;
    m.energy_j = totals.energy;
    if (alloc.any_clipped()) m.flags.push_back("clipped");
    for (std::size_t i = 0; i < m.selected.size(); ++i)
        m.devices.push_back({m.selected[i], alloc.bandwidth_hz[i], alloc.cpu_hz[i], costs[i].delay(), costs[i].energy()});

    std::vector<ModelWeights> trained;
    std::vector<double> sizes;
    trained.reserve(m.selected.size());
    for (int id : m.selected) {
        const auto& data = state.parts.per_device[static_cast<std::size_t>(id)];
        auto w = local_update(state.spec, state.global, data, cfg.train, train_seed(cfg, id, round));
        state.device_weights[static_cast<std::size_t>(id)] = w;
        trained.push_back(std::move(w));
        sizes.push_back(static_cast<double>(data.size()));
    }
    state.global = aggregate(trained, sizes);
    m.accuracy = evaluate(state.spec, state.global, state.test);
    return m;
}

}  // namespace

AllocationResult allocate_round(const ExperimentConfig& cfg, std::span<const DeviceProfile> devices) {
    switch (cfg.allocator) {
        case AllocatorKind::sao: return sao_allocate(devices, cfg.network, cfg.solver);
        case AllocatorKind::equal_bandwidth: return baseline_equal_bandwidth(devices, cfg.network);
        case AllocatorKind::fedl: {
            const auto lambda = tune_lambda(devices, cfg.network);
            return baseline_fedl(devices, cfg.network, lambda.lambda).allocation;
        }
    }
    throw DomainError("unknown allocator");
}

ExperimentState init_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    ExperimentState state;
    state.cfg = cfg;
    auto [train, test] = make_data(cfg);
    state.test = std::move(test);
    state.parts = cfg.data.two_class
                      ? partition_two_class(train, cfg.num_devices, cfg.seed, cfg.data.samples_per_device)
                      : partition_noniid(train, cfg.num_devices, cfg.data.sigma, cfg.seed, cfg.data.samples_per_device);

    DeviceTemplate tmpl = cfg.devices;
    tmpl.local_iters = cfg.train.local_iters;
    state.cell = generate_cell(cfg.network, tmpl, cfg.num_devices, cfg.seed);
    for (std::size_t i = 0; i < state.cell.size(); ++i)
        state.cell[i].profile.num_samples = static_cast<double>(state.parts.per_device[i].size());

    state.spec = {train.dim, cfg.hidden_dims, static_cast<std::size_t>(train.num_classes)};
    state.global = init_model(state.spec, cfg.seed);
    state.device_weights.assign(state.cell.size(), state.global);

    std::vector<int> everyone(state.cell.size());
    for (std::size_t i = 0; i < everyone.size(); ++i) everyone[i] = static_cast<int>(i);
    state.round0 = execute_round(state, 0, everyone, {});
    state.round0_weights = state.device_weights;

    state.clustering = cluster_devices(state.round0_weights, cfg.selection.cluster_layer, cfg.resolved_clusters(),
                                       derive_seed(cfg.seed, {stream::clustering}));
    state.groups = state.clustering.assignment.groups();
    state.cluster_ari = adjusted_rand_index(state.clustering.assignment.labels, state.parts.majority_class);
    return state;
}

RoundMetrics run_round(ExperimentState& state) {
    const auto& cfg = state.cfg;
    const int round = ++state.round;
    SelectionSet sel;
    switch (cfg.selection.strategy) {
        case SelectionStrategy::random:
            sel = select_random(cfg.num_devices, cfg.selection.num_selected, cfg.seed, round);
            break;
        case SelectionStrategy::cluster_random:
            sel = select_cluster_random(state.groups, cfg.per_cluster(), cfg.seed, round);
            break;
        case SelectionStrategy::weight_divergence:
            sel = select_weight_divergence(state.groups, state.device_weights, state.global, cfg.per_cluster(), round);
            break;
    }
    std::vector<std::string> flags;
    if (sel.short_cluster) flags.push_back("short_cluster");
    return execute_round(state, round, std::move(sel.device_ids), std::move(flags));
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, ExperimentState* final_state) {
    ExperimentState state = init_experiment(cfg);
    ExperimentResult out;
    out.round0 = state.round0;
    out.cluster_ari = state.cluster_ari;
    out.round0_counted = cfg.include_round0_cost;
    if (cfg.include_round0_cost) {
        out.total_delay_s += state.round0.delay_s;
        out.total_energy_j += state.round0.energy_j;
    }
    while (out.rounds_run < cfg.max_rounds) {
        out.rounds.push_back(run_round(state));
        const auto& m = out.rounds.back();
        ++out.rounds_run;
        out.total_delay_s += m.delay_s;
        out.total_energy_j += m.energy_j;
        out.final_accuracy = m.accuracy;
        if (m.accuracy >= cfg.target_accuracy) {
            out.reached_target = true;
            break;
        }
    }
    if (final_state) *final_state = std::move(state);
    return out;
}

ImprovementScore improvement_score(double r_eval, double r_fedavg) {
    if (r_fedavg == 0 || r_eval == 0) throw DomainError("improvement_score: zero denominator");
    return {r_eval / r_fedavg - 1.0, r_fedavg / r_eval - 1.0};
}

// ---------------------------------------------------------------- output

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace {

template <typename T, typename F>
std::string join(const std::vector<T>& items, F&& fmt) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ';';
        out += fmt(items[i]);
    }
    return out;
}

void metrics_row(std::ostream& out, const RoundMetrics& m) {
    out << m.round << ',' << format_number(m.delay_s) << ',' << format_number(m.energy_j) << ','
        << format_number(m.accuracy) << ',' << join(m.selected, [](int id) { return std::to_string(id); }) << ','
        << join(m.flags, [](const std::string& s) { return s; }) << '\n';
}

void selection_rows(std::ostream& out, const RoundMetrics& m) {
    for (const auto& d : m.devices)
        out << m.round << ',' << d.device << ',' << format_number(d.bandwidth_hz) << ',' << format_number(d.cpu_hz)
            << ',' << format_number(d.delay_s) << ',' << format_number(d.energy_j) << '\n';
}

}  // namespace

// Round 0 appears in the metrics only when its cost counts toward the totals,
// so that the delay and energy columns always sum to T and E.
void write_metrics_csv(std::ostream& out, const ExperimentResult& result) {
    out << kMetricsHeader << '\n' << "round,delay_s,energy_j,accuracy,selected,flags\n";
    if (result.round0_counted) metrics_row(out, result.round0);
    for (const auto& m : result.rounds) metrics_row(out, m);
}

void write_selections_csv(std::ostream& out, const ExperimentResult& result) {
    out << kSelectionsHeader << '\n' << "round,device,bandwidth_hz,cpu_hz,delay_s,energy_j\n";
    selection_rows(out, result.round0);
    for (const auto& m : result.rounds) selection_rows(out, m);
}

nlohmann::json summary_json(const ExperimentResult& r) {
    return {{"rounds", r.rounds_run},
            {"reached_target", r.reached_target},
            {"final_accuracy", r.final_accuracy},
            {"total_delay_s", r.total_delay_s},
            {"total_energy_j", r.total_energy_j},
            {"cluster_ari", r.cluster_ari},
            {"round0", {{"delay_s", r.round0.delay_s}, {"energy_j", r.round0.energy_j}, {"accuracy", r.round0.accuracy}}}};
}

std::vector<std::pair<double, double>> read_metrics_costs(std::istream& in) {
    std::vector<std::pair<double, double>> out;
    std::string line;
    if (!std::getline(in, line) || line != kMetricsHeader) throw DomainError("metrics csv: missing schema header");
    std::getline(in, line);  // column names
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string round, delay, energy;
        std::getline(row, round, ',');
        std::getline(row, delay, ',');
        std::getline(row, energy, ',');
        out.emplace_back(std::stod(delay), std::stod(energy));
    }
    return out;
}

// ---------------------------------------------------------------- sweeps

SweepParam parse_sweep_param(std::string_view name) {
    if (name == "transmit_power" || name == "power") return SweepParam::transmit_power;
    if (name == "energy_budget" || name == "energy") return SweepParam::energy_budget;
    if (name == "bandwidth") return SweepParam::bandwidth;
    if (name == "num_selected" || name == "S") return SweepParam::num_selected;
    throw DomainError("unknown sweep parameter '" + std::string(name) + "'");
}

namespace {

SweepRow allocator_point(const ExperimentConfig& base, std::vector<DeviceProfile> devices, double value,
                         SweepParam param) {
    ExperimentConfig cfg = base;
    for (auto& d : devices) {
        if (param == SweepParam::transmit_power) d.transmit_power_w = dbm_to_watt(value);
        if (param == SweepParam::energy_budget) d.energy_budget_j = value * 1e-3;
    }
    if (param == SweepParam::bandwidth) cfg.network.total_bandwidth_hz = value * 1e6;
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    SweepRow row{value, std::vector<double>(6, nan), ""};
    auto attempt = [&](int slot, const char* label, auto&& solve) {
        try {
            const AllocationResult a = solve();
            const auto totals = round_aggregate(allocation_costs(a, devices, cfg.network));
            row.columns[static_cast<std::size_t>(slot)] = totals.delay;
            row.columns[static_cast<std::size_t>(slot + 3)] = totals.energy;
        } catch (const std::exception& e) {
            if (!row.error.empty()) row.error += "; ";
            row.error += std::string(label) + ": " + e.what();
        }
    };
    attempt(0, "sao", [&] { return sao_allocate(devices, cfg.network, cfg.solver); });
    attempt(1, "equal_bandwidth", [&] { return baseline_equal_bandwidth(devices, cfg.network); });
    attempt(2, "fedl", [&] {
        const auto lambda = tune_lambda(devices, cfg.network);
        return baseline_fedl(devices, cfg.network, lambda.lambda).allocation;
    });
    return row;
}

}  // namespace

SweepTable sweep(const ExperimentConfig& cfg, SweepParam param, const std::vector<double>& values) {
    if (values.empty()) throw DomainError("sweep: no values");
    SweepTable table;
    if (param == SweepParam::num_selected) {
        table.column_names = {"rounds", "reached_target", "total_delay_s", "total_energy_j",
                              "mean_delay_s", "mean_energy_j", "final_accuracy"};
        for (double v : values) {
            SweepRow row{v, std::vector<double>(table.column_names.size(), std::numeric_limits<double>::quiet_NaN()), ""};
            try {
                ExperimentConfig c = cfg;
                c.selection.num_selected = static_cast<int>(v);
                const auto r = run_experiment(c);
                double sum_t = 0, sum_e = 0;
                for (const auto& m : r.rounds) {
                    sum_t += m.delay_s;
                    sum_e += m.energy_j;
                }
                const double k = static_cast<double>(r.rounds_run);
                row.columns = {k, r.reached_target ? 1.0 : 0.0, r.total_delay_s, r.total_energy_j,
                               sum_t / k, sum_e / k, r.final_accuracy};
            } catch (const std::exception& e) {
                row.error = e.what();
            }
            table.rows.push_back(std::move(row));
        }
        return table;
    }

    table.column_names = {"T_sao", "T_b1", "T_b2", "E_sao", "E_b1", "E_b2"};
    DeviceTemplate tmpl = cfg.devices;
    tmpl.local_iters = cfg.train.local_iters;
    const std::size_t per_device = cfg.data.samples_per_device > 0
                                       ? cfg.data.samples_per_device
                                       : cfg.data.train_per_class * static_cast<std::size_t>(cfg.data.num_classes) /
                                             static_cast<std::size_t>(cfg.num_devices);
    tmpl.num_samples = static_cast<double>(per_device);
    const auto devices = profiles_of(generate_cell(cfg.network, tmpl, cfg.selection.num_selected, cfg.seed));
    for (double v : values) table.rows.push_back(allocator_point(cfg, devices, v, param));
    return table;
}

void write_sweep_csv(std::ostream& out, const SweepTable& table) {
    out << kSweepHeader << '\n' << "param_value";
    for (const auto& c : table.column_names) out << ',' << c;
    out << ",error\n";
    for (const auto& row : table.rows) {
        out << format_number(row.value);
        for (double v : row.columns) out << ',' << format_number(v);
        std::string err = row.error;
        std::replace(err.begin(), err.end(), ',', ' ');
        std::replace(err.begin(), err.end(), '\n', ' ');
        out << ',' << err << '\n';
    }
}

}  // namespace fedsao
