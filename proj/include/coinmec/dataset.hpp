#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "coinmec/model.hpp"
#include "coinmec/rng.hpp"
#include "coinmec/scenario_io.hpp"
#include "coinmec/solvers.hpp"

namespace coinmec {

// Simulation parameter ranges. Capacities, task sizes, bandwidth, transmit
// power, noise PSD, and the 500 m square follow the evaluated small-scale
// setup; instruction counts and arrival rates are desk-scale choices
// documented here.
namespace params {
inline constexpr double kCoinCapacityLo = 5e8;   // cycles/s
inline constexpr double kCoinCapacityHi = 1e9;   // cycles/s
inline constexpr double kMecCapacity = 1e10;     // cycles/s
inline constexpr double kWdLocalCapacity = 2e7;  // cycles/s
inline constexpr double kTaskSizeLoBits = 8e6;   // 1 MB
inline constexpr double kTaskSizeHiBits = 8e7;   // 10 MB
inline constexpr double kBandwidthHz = 18e6;     // per AP
inline constexpr double kTransmitPowerLoW = 1e-6;
inline constexpr double kTransmitPowerHiW = 0.1;
inline constexpr double kAreaSideM = 500.0;
inline constexpr double kPathLossExponent = 4.0;
inline constexpr double kInstructionsLo = 5e7;   // cycles, local and per slice
inline constexpr double kInstructionsHi = 2e8;   // cycles
inline constexpr double kArrivalRateLo = 0.25;   // tasks/s
inline constexpr double kArrivalRateHi = 1.0;    // tasks/s

inline double noise_psd_w_per_hz() { return std::pow(10.0, -20.4); }  // -174 dBm/Hz
}  // namespace params

struct ScenarioConfig {
    int slices = 3;
    int aps = 3;
    int coins = 8;
    int mecs = 1;
    int wd_min = 2;
    int wd_max = 12;
};

// Samples a scenario from per-entity child seeds, so raising an entity count
// leaves the existing entities bit-identical (sweeps stay nested per seed).
inline Scenario sample_scenario(const ScenarioConfig& cfg, std::uint64_t seed) {
    if (cfg.slices < 1 || cfg.aps < 1 || cfg.coins + cfg.mecs < 1 || cfg.wd_min < 1 ||
        cfg.wd_max < cfg.wd_min)
        throw std::invalid_argument("sample_scenario: bad scenario config");

    Scenario s;
    s.slices = cfg.slices;
    s.seed = seed;
    s.noise_psd_w_per_hz = params::noise_psd_w_per_hz();
    s.path_loss_exponent = params::kPathLossExponent;

    for (int a = 0; a < cfg.aps; ++a) {
        Rng rng(derive_seed(seed, "ap", a));
        ApRecord ap;
        ap.bandwidth_hz = params::kBandwidthHz;
        ap.position_m = {rng.uniform(0.0, params::kAreaSideM), rng.uniform(0.0, params::kAreaSideM)};
        s.aps.push_back(ap);
    }
    for (int c = 0; c < cfg.coins; ++c) {
        Rng rng(derive_seed(seed, "coin", c));
        NodeRecord node;
        node.kind = NodeKind::Coin;
        for (int n = 0; n < cfg.slices; ++n)
            node.capacity_cycles_per_s.push_back(
                rng.uniform(params::kCoinCapacityLo, params::kCoinCapacityHi));
        s.nodes.push_back(node);
    }
    for (int m = 0; m < cfg.mecs; ++m) {
        NodeRecord node;
        node.kind = NodeKind::Mec;
        node.capacity_cycles_per_s.assign(cfg.slices, params::kMecCapacity);
        s.nodes.push_back(node);
    }

    const int wd_count =
        cfg.wd_min +
        static_cast<int>(Rng(derive_seed(seed, "wd_count")).uniform_int(cfg.wd_max - cfg.wd_min + 1));
    for (int i = 0; i < wd_count; ++i) {
        Rng rng(derive_seed(seed, "wd", i));
        WdRecord wd;
        wd.input_size_bits = rng.uniform(params::kTaskSizeLoBits, params::kTaskSizeHiBits);
        wd.local_instructions_cycles = rng.uniform(params::kInstructionsLo, params::kInstructionsHi);
        for (int n = 0; n < cfg.slices; ++n)
            wd.slice_instructions_cycles.push_back(
                rng.uniform(params::kInstructionsLo, params::kInstructionsHi));
        wd.arrival_rate_per_s = rng.uniform(params::kArrivalRateLo, params::kArrivalRateHi);
        wd.local_capacity_cycles_per_s = params::kWdLocalCapacity;
        wd.transmit_power_w = rng.uniform(params::kTransmitPowerLoW, params::kTransmitPowerHiW);
        for (;;) {
            wd.position_m = {rng.uniform(0.0, params::kAreaSideM),
                             rng.uniform(0.0, params::kAreaSideM)};
            bool degenerate = false;
            for (const auto& ap : s.aps) {
                const double dx = wd.position_m[0] - ap.position_m[0];
                const double dy = wd.position_m[1] - ap.position_m[1];
                if (dx * dx + dy * dy < 1e-12) degenerate = true;
            }
            if (!degenerate) break;
        }
        s.wds.push_back(wd);
    }
    return derive_rates(s);
}

// Feature layout, per WD row:
//   [task bits, local cycles, per-slice cycles (N), arrival rate, local capacity,
//    per-AP physical rate (A)]
// followed by network status tiled into every row:
//   [per-(node, slice) capacity (J*N, node-major), per-node current aggregate
//    arrival rate (J; zero at scenario creation)]
inline int feature_count(const Topology& t) {
    return 4 + t.slices + t.aps + t.nodes * t.slices + t.nodes;
}

inline std::vector<std::string> feature_layout_names(const Topology& t) {
    std::vector<std::string> names;
    names.push_back("input_size_bits");
    names.push_back("local_instructions_cycles");
    for (int n = 0; n < t.slices; ++n)
        names.push_back("slice_instructions_cycles[" + std::to_string(n) + "]");
    names.push_back("arrival_rate_per_s");
    names.push_back("local_capacity_cycles_per_s");
    for (int a = 0; a < t.aps; ++a) names.push_back("phys_rate_bits_per_s[" + std::to_string(a) + "]");
    for (int j = 0; j < t.nodes; ++j)
        for (int n = 0; n < t.slices; ++n)
            names.push_back("node_capacity_cycles_per_s[" + std::to_string(j) + "][" +
                            std::to_string(n) + "]");
    for (int j = 0; j < t.nodes; ++j)
        names.push_back("node_arrival_rate_per_s[" + std::to_string(j) + "]");
    return names;
}

inline std::vector<std::vector<double>> build_features(const Scenario& s) {
    const Topology topo = s.topology();
    std::vector<std::vector<double>> rows;
    rows.reserve(s.wds.size());
    for (const auto& wd : s.wds) {
        std::vector<double> row;
        row.reserve(feature_count(topo));
        row.push_back(wd.input_size_bits);
        row.push_back(wd.local_instructions_cycles);
        for (double l : wd.slice_instructions_cycles) row.push_back(l);
        row.push_back(wd.arrival_rate_per_s);
        row.push_back(wd.local_capacity_cycles_per_s);
        for (double r : wd.phys_rate_bits_per_s) row.push_back(r);
        for (const auto& node : s.nodes)
            for (double f : node.capacity_cycles_per_s) row.push_back(f);
        for (std::size_t j = 0; j < s.nodes.size(); ++j) row.push_back(0.0);
        rows.push_back(std::move(row));
    }
    return rows;
}

// Padded feature matrix with the padding mask; padded rows stay all-zero
// through standardization.
struct PaddedBatch {
    int i_max = 0;
    int features = 0;
    int real_count = 0;
    std::vector<double> x;     // row-major i_max x features
    std::vector<double> mask;  // i_max, 1 = real WD, 0 = padding
    bool standardized = false;

    double at(int i, int f) const { return x[static_cast<std::size_t>(i) * features + f]; }
    double& at(int i, int f) { return x[static_cast<std::size_t>(i) * features + f]; }
};

inline PaddedBatch pad_and_mask(const std::vector<std::vector<double>>& rows, int i_max) {
    if (rows.empty()) throw std::invalid_argument("pad_and_mask: need at least one WD row");
    if (static_cast<int>(rows.size()) > i_max)
        throw std::invalid_argument("pad_and_mask: WD count " + std::to_string(rows.size()) +
                                    " exceeds capacity " + std::to_string(i_max));
    PaddedBatch batch;
    batch.i_max = i_max;
    batch.features = static_cast<int>(rows.front().size());
    batch.real_count = static_cast<int>(rows.size());
    batch.x.assign(static_cast<std::size_t>(i_max) * batch.features, 0.0);
    batch.mask.assign(i_max, 0.0);
    for (int i = 0; i < batch.real_count; ++i) {
        if (static_cast<int>(rows[i].size()) != batch.features)
            throw std::invalid_argument("pad_and_mask: ragged feature rows");
        batch.mask[i] = 1.0;
        for (int f = 0; f < batch.features; ++f) batch.at(i, f) = rows[i][f];
    }
    return batch;
}

inline constexpr double kSigmaFloor = 1e-12;

struct FeatureStats {
    std::vector<double> mu;
    std::vector<double> sigma;  // floored at kSigmaFloor
};

// Per-feature mean/stddev over the real rows of the given batches (training
// split only, by contract).
inline FeatureStats compute_feature_stats(const std::vector<const PaddedBatch*>& batches) {
    if (batches.empty()) throw std::invalid_argument("compute_feature_stats: no batches");
    const int f_count = batches.front()->features;
    FeatureStats stats;
    stats.mu.assign(f_count, 0.0);
    stats.sigma.assign(f_count, 0.0);
    double count = 0.0;
    for (const auto* b : batches)
        for (int i = 0; i < b->real_count; ++i) {
            count += 1.0;
            for (int f = 0; f < f_count; ++f) stats.mu[f] += b->at(i, f);
        }
    for (double& m : stats.mu) m /= count;
    for (const auto* b : batches)
        for (int i = 0; i < b->real_count; ++i)
            for (int f = 0; f < f_count; ++f) {
                const double d = b->at(i, f) - stats.mu[f];
                stats.sigma[f] += d * d;
            }
    for (double& s : stats.sigma) s = std::max(std::sqrt(s / count), kSigmaFloor);
    return stats;
}

inline void standardize(PaddedBatch& batch, const std::vector<double>& mu,
                        const std::vector<double>& sigma) {
    if (static_cast<int>(mu.size()) != batch.features ||
        static_cast<int>(sigma.size()) != batch.features)
        throw std::invalid_argument("standardize: stats shape mismatch");
    for (int i = 0; i < batch.real_count; ++i)
        for (int f = 0; f < batch.features; ++f)
            batch.at(i, f) = (batch.at(i, f) - mu[f]) / std::max(sigma[f], kSigmaFloor);
    batch.standardized = true;
}

// SP1 soft labels: per capacity pool, user rows carry the solver's phi and row
// 0 carries the slack max{0, 1 - sum phi}; every column sums to 1.
struct Sp1Labels {
    int i_max = 0;
    int pools = 0;
    std::vector<double> y;  // (i_max + 1) x pools, row 0 = slack

    double at(int row, int pool) const { return y[static_cast<std::size_t>(row) * pools + pool]; }
    double& at(int row, int pool) { return y[static_cast<std::size_t>(row) * pools + pool]; }
};

inline Sp1Labels make_sp1_labels(const Scenario& s, const SolveResult& solve, int i_max) {
    const Topology topo = s.topology();
    Sp1Labels labels;
    labels.i_max = i_max;
    labels.pools = topo.pools();
    labels.y.assign(static_cast<std::size_t>(i_max + 1) * labels.pools, 0.0);
    for (std::size_t i = 0; i < solve.decision.size(); ++i) {
        const Decision& d = solve.decision[i];
        if (d.is_local()) continue;
        labels.at(static_cast<int>(i) + 1, topo.radio_pool(d.ap, d.slice)) =
            solve.policy.phi_radio(static_cast<int>(i), d.ap, d.slice);
        labels.at(static_cast<int>(i) + 1, topo.compute_pool(d.node, d.slice)) =
            solve.policy.phi_compute(static_cast<int>(i), d.node, d.slice);
    }
    for (int e = 0; e < labels.pools; ++e) {
        double sum = 0.0;
        for (int i = 1; i <= i_max; ++i) sum += labels.at(i, e);
        labels.at(0, e) = std::max(0.0, 1.0 - sum);
    }
    return labels;
}

// SP2 soft labels: per AP, slice rows carry omega and row 0 the slack.
struct Sp2Labels {
    int slices = 0;
    int aps = 0;
    std::vector<double> y;  // (slices + 1) x aps, row 0 = slack

    double at(int row, int ap) const { return y[static_cast<std::size_t>(row) * aps + ap]; }
    double& at(int row, int ap) { return y[static_cast<std::size_t>(row) * aps + ap]; }
};

inline Sp2Labels make_sp2_labels(const Scenario& s, const SolveResult& solve) {
    const Topology topo = s.topology();
    Sp2Labels labels;
    labels.slices = topo.slices;
    labels.aps = topo.aps;
    labels.y.assign(static_cast<std::size_t>(topo.slices + 1) * topo.aps, 0.0);
    for (int a = 0; a < topo.aps; ++a) {
        double sum = 0.0;
        for (int n = 0; n < topo.slices; ++n) {
            labels.at(n + 1, a) = solve.policy.omega(a, n);
            sum += solve.policy.omega(a, n);
        }
        labels.at(0, a) = std::max(0.0, 1.0 - sum);
    }
    return labels;
}

// SP3 labels: joint class (0 = local, then lexicographic (slice, ap, node)),
// the binary local/offload flag, and factored indices (-1 when local).
struct Sp3Labels {
    std::vector<int> joint_class;
    std::vector<int> bin;
    std::vector<int> slice_idx;
    std::vector<int> ap_idx;
    std::vector<int> node_idx;
};

inline Sp3Labels make_sp3_labels(const Scenario& s, const SolveResult& solve) {
    const Topology topo = s.topology();
    Sp3Labels labels;
    for (const Decision& d : solve.decision) {
        labels.joint_class.push_back(class_of(topo, d));
        labels.bin.push_back(d.is_local() ? 0 : 1);
        labels.slice_idx.push_back(d.is_local() ? -1 : d.slice);
        labels.ap_idx.push_back(d.is_local() ? -1 : d.ap);
        labels.node_idx.push_back(d.is_local() ? -1 : d.node);
    }
    return labels;
}

struct DatasetRecord {
    std::string id;
    std::uint64_t scenario_seed = 0;
    std::string method;  // solver that produced the labels
    std::vector<std::vector<double>> features;
    Sp1Labels sp1;
    Sp2Labels sp2;
    Sp3Labels sp3;
};

struct DatasetHeader {
    Topology topology;
    int i_max = 0;
    std::vector<std::string> feature_layout;
    // Full-set stats, informational; training recomputes from its own split.
    std::vector<double> mu;
    std::vector<double> sigma;
    std::string generator_version = "1";
    std::string config_hash;
};

struct Dataset {
    DatasetHeader header;
    std::vector<DatasetRecord> records;
    std::vector<Scenario> scenarios;   // aligned with records
    std::vector<SolveResult> solves;   // aligned with records
};

struct GenerationConfig {
    ScenarioConfig scenario;
    int dataset_size = 500;
    int i_max = 16;
    std::uint64_t seed = 1;
    std::uint64_t exhaustive_budget = 2'000'000;
    int workers = 1;
    std::string config_hash;
};

inline std::string record_id(int index) {
    std::ostringstream out;
    out << "s" << std::setw(5) << std::setfill('0') << index;
    return out.str();
}

// Samples and solver-labels the whole dataset. Work parallelizes over
// scenario indices; results are stored by index, so output is identical for
// any worker count.
inline Dataset generate_dataset(const GenerationConfig& cfg) {
    if (cfg.dataset_size < 1) throw std::invalid_argument("generate_dataset: dataset_size >= 1");
    if (cfg.i_max < cfg.scenario.wd_max)
        throw std::invalid_argument("generate_dataset: i_max smaller than wd_max");

    Dataset ds;
    ds.scenarios.resize(cfg.dataset_size);
    ds.solves.resize(cfg.dataset_size);
    ds.records.resize(cfg.dataset_size);

    const auto worker = [&](int begin, int end) {
        for (int i = begin; i < end; ++i) {
            const std::uint64_t seed = derive_seed(cfg.seed, "scenario", i);
            Scenario scenario = sample_scenario(cfg.scenario, seed);
            SolveOptions opts;
            opts.exhaustive_budget = cfg.exhaustive_budget;
            SolveResult solve = sp3_solve(scenario, Sp3Mode::Auto, opts);
            DatasetRecord record;
            record.id = record_id(i);
            record.scenario_seed = seed;
            record.method = to_string(solve.method);
            record.features = build_features(scenario);
            record.sp1 = make_sp1_labels(scenario, solve, cfg.i_max);
            record.sp2 = make_sp2_labels(scenario, solve);
            record.sp3 = make_sp3_labels(scenario, solve);
            ds.scenarios[i] = std::move(scenario);
            ds.solves[i] = std::move(solve);
            ds.records[i] = std::move(record);
        }
    };

    const int workers = std::max(1, cfg.workers);
    if (workers == 1) {
        worker(0, cfg.dataset_size);
    } else {
        std::vector<std::thread> threads;
        const int chunk = (cfg.dataset_size + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            const int begin = std::min(w * chunk, cfg.dataset_size);
            const int end = std::min(begin + chunk, cfg.dataset_size);
            if (begin < end) threads.emplace_back(worker, begin, end);
        }
        for (auto& t : threads) t.join();
    }

    ds.header.topology = ds.scenarios.front().topology();
    ds.header.i_max = cfg.i_max;
    ds.header.feature_layout = feature_layout_names(ds.header.topology);
    ds.header.config_hash = cfg.config_hash;

    std::vector<PaddedBatch> batches;
    batches.reserve(ds.records.size());
    std::vector<const PaddedBatch*> views;
    for (const auto& r : ds.records) {
        batches.push_back(pad_and_mask(r.features, cfg.i_max));
        views.push_back(&batches.back());
    }
    const FeatureStats stats = compute_feature_stats(views);
    ds.header.mu = stats.mu;
    ds.header.sigma = stats.sigma;
    return ds;
}

// Scenario-level k-fold split: disjoint, exhaustive, seeded.
struct Fold {
    std::vector<int> train_ids;
    std::vector<int> test_ids;
};

inline std::vector<Fold> kfold_split(int record_count, int k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("kfold_split: k must be >= 2");
    if (record_count < k) throw std::invalid_argument("kfold_split: fewer records than folds");
    std::vector<int> ids(record_count);
    std::iota(ids.begin(), ids.end(), 0);
    Rng rng(derive_seed(seed, "kfold"));
    for (int i = record_count - 1; i > 0; --i)
        std::swap(ids[i], ids[rng.uniform_int(static_cast<std::uint64_t>(i) + 1)]);
    std::vector<Fold> folds(k);
    for (int i = 0; i < record_count; ++i) folds[i % k].test_ids.push_back(ids[i]);
    for (int f = 0; f < k; ++f) {
        std::sort(folds[f].test_ids.begin(), folds[f].test_ids.end());
        for (int i = 0; i < record_count; ++i)
            if (!std::binary_search(folds[f].test_ids.begin(), folds[f].test_ids.end(), i))
                folds[f].train_ids.push_back(i);
    }
    return folds;
}

}  // namespace coinmec
