#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace coinmec {

using Seconds = double;

// Infeasible paths evaluate to this sentinel instead of throwing, so search
// code can rank them out with plain comparisons.
inline constexpr Seconds kInfeasibleTime = std::numeric_limits<double>::infinity();

inline bool is_feasible_time(Seconds t) { return std::isfinite(t); }

// Queue-stability margin required by the solvers: service rate must exceed
// the aggregate arrival rate by at least this many tasks/s.
inline constexpr double kQueueStabilityMargin = 1e-6;

// Relative slack used when checking <=-style constraints on floats.
inline constexpr double kFeasibilityTol = 1e-9;

enum class NodeKind { Coin, Mec };

inline const char* to_string(NodeKind k) { return k == NodeKind::Coin ? "coin" : "mec"; }

struct ApRecord {
    double bandwidth_hz = 0.0;
    std::array<double, 2> position_m{0.0, 0.0};
};

struct NodeRecord {
    NodeKind kind = NodeKind::Coin;
    std::vector<double> capacity_cycles_per_s;  // one entry per slice
};

struct WdRecord {
    double input_size_bits = 0.0;
    double local_instructions_cycles = 0.0;
    std::vector<double> slice_instructions_cycles;  // one entry per slice
    double arrival_rate_per_s = 0.0;
    double local_capacity_cycles_per_s = 0.0;
    double transmit_power_w = 0.0;
    std::array<double, 2> position_m{0.0, 0.0};
    std::vector<double> phys_rate_bits_per_s;  // one entry per AP, see derive_rates
};

// Counts of the index sets plus the flat orderings shared by solver labels,
// dataset columns, and decoder heads.
struct Topology {
    int slices = 0;
    int aps = 0;
    int nodes = 0;

    int radio_pools() const { return aps * slices; }
    int compute_pools() const { return nodes * slices; }
    // Capacity pools: one per (AP, slice), then one per (node, slice).
    int pools() const { return radio_pools() + compute_pools(); }
    int radio_pool(int ap, int slice) const { return ap * slices + slice; }
    int compute_pool(int node, int slice) const { return radio_pools() + node * slices + slice; }

    // Per-WD decision classes: 0 = local, then lexicographic (slice, ap, node).
    int joint_classes() const { return 1 + aps * nodes * slices; }

    bool operator==(const Topology&) const = default;
};

// delta_i: local execution or an (AP, node, slice) offload path.
struct Decision {
    int ap = -1;
    int node = -1;
    int slice = -1;

    static Decision local() { return Decision{}; }
    static Decision offload(int ap, int node, int slice) { return Decision{ap, node, slice}; }

    bool is_local() const { return ap < 0; }
    bool operator==(const Decision&) const = default;
};

using DecisionVector = std::vector<Decision>;

inline int class_of(const Topology& t, const Decision& d) {
    if (d.is_local()) return 0;
    return 1 + (d.slice * t.aps + d.ap) * t.nodes + d.node;
}

inline Decision decision_of(const Topology& t, int cls) {
    if (cls == 0) return Decision::local();
    int rest = cls - 1;
    const int node = rest % t.nodes;
    rest /= t.nodes;
    const int ap = rest % t.aps;
    const int slice = rest / t.aps;
    return Decision::offload(ap, node, slice);
}

struct Scenario {
    int slices = 0;
    std::vector<ApRecord> aps;
    std::vector<NodeRecord> nodes;
    std::vector<WdRecord> wds;
    double noise_psd_w_per_hz = 0.0;
    double path_loss_exponent = 4.0;
    std::uint64_t seed = 0;

    int slice_count() const { return slices; }
    int ap_count() const { return static_cast<int>(aps.size()); }
    int node_count() const { return static_cast<int>(nodes.size()); }
    int wd_count() const { return static_cast<int>(wds.size()); }

    Topology topology() const { return Topology{slices, ap_count(), node_count()}; }
};

inline void validate(const Scenario& s) {
    if (s.slices < 1) throw std::invalid_argument("scenario: slice count must be >= 1");
    if (s.wds.empty()) throw std::invalid_argument("scenario: WD count must be >= 1");
    if (s.aps.empty()) throw std::invalid_argument("scenario: AP count must be >= 1");
    if (s.noise_psd_w_per_hz <= 0.0) throw std::invalid_argument("scenario: noise PSD must be > 0");
    for (const auto& ap : s.aps)
        if (ap.bandwidth_hz <= 0.0) throw std::invalid_argument("scenario: AP bandwidth must be > 0");
    for (const auto& node : s.nodes) {
        if (static_cast<int>(node.capacity_cycles_per_s.size()) != s.slices)
            throw std::invalid_argument("scenario: node needs a capacity entry for every slice");
        for (double f : node.capacity_cycles_per_s)
            if (f <= 0.0) throw std::invalid_argument("scenario: node capacity must be > 0");
    }
    for (const auto& wd : s.wds) {
        if (wd.input_size_bits <= 0.0) throw std::invalid_argument("scenario: task size must be > 0");
        if (wd.local_instructions_cycles <= 0.0)
            throw std::invalid_argument("scenario: local instruction count must be > 0");
        if (static_cast<int>(wd.slice_instructions_cycles.size()) != s.slices)
            throw std::invalid_argument("scenario: WD needs an instruction count for every slice");
        for (double l : wd.slice_instructions_cycles)
            if (l <= 0.0) throw std::invalid_argument("scenario: slice instruction count must be > 0");
        if (wd.arrival_rate_per_s <= 0.0)
            throw std::invalid_argument("scenario: arrival rate must be > 0");
        if (wd.local_capacity_cycles_per_s <= 0.0)
            throw std::invalid_argument("scenario: local capacity must be > 0");
    }
}

// R_{i,a} = B_a * log2(1 + P_t * d^-gamma / (N0 * B_a)). Rejects degenerate
// placements (zero distance) and scenarios whose rates are not all positive.
inline Scenario derive_rates(Scenario s) {
    validate(s);
    for (auto& wd : s.wds) {
        wd.phys_rate_bits_per_s.assign(s.aps.size(), 0.0);
        for (std::size_t a = 0; a < s.aps.size(); ++a) {
            const double dx = wd.position_m[0] - s.aps[a].position_m[0];
            const double dy = wd.position_m[1] - s.aps[a].position_m[1];
            const double dist = std::sqrt(dx * dx + dy * dy);
            if (dist <= 0.0)
                throw std::invalid_argument("derive_rates: WD placed exactly on an AP");
            const double bandwidth = s.aps[a].bandwidth_hz;
            const double snr = wd.transmit_power_w * std::pow(dist, -s.path_loss_exponent) /
                               (s.noise_psd_w_per_hz * bandwidth);
            const double rate = bandwidth * std::log2(1.0 + snr);
            if (!(rate > 0.0) || !std::isfinite(rate))
                throw std::invalid_argument("derive_rates: nonpositive physical rate (check transmit power)");
            wd.phys_rate_bits_per_s[a] = rate;
        }
    }
    return s;
}

// omega * phi * R_{i,a}
inline double uplink_rate(double omega, double phi, double phys_rate) {
    return omega * phi * phys_rate;
}

inline Seconds transmission_time(double input_size_bits, double uplink_bits_per_s) {
    if (uplink_bits_per_s <= 0.0) return kInfeasibleTime;
    return input_size_bits / uplink_bits_per_s;
}

// M/M/1 sojourn time 1 / (F/L - lambda); the queue must be strictly stable.
inline Seconds execution_time(double capacity_cycles_per_s, double instructions_cycles,
                              double total_arrivals_per_s) {
    const double service_rate = capacity_cycles_per_s / instructions_cycles;
    const double margin = service_rate - total_arrivals_per_s;
    if (margin <= 0.0) return kInfeasibleTime;
    return 1.0 / margin;
}

inline Seconds local_latency(double instructions_cycles, double local_capacity_cycles_per_s) {
    return instructions_cycles / local_capacity_cycles_per_s;
}

inline Seconds local_latency(const Scenario& s, int wd) {
    const auto& w = s.wds[wd];
    return local_latency(w.local_instructions_cycles, w.local_capacity_cycles_per_s);
}

// Derived index sets O_{a,n}, O_{j,n}, O_a, O_j, O_l for a decision vector.
struct AssignmentSets {
    int slices = 0, aps = 0, nodes = 0;
    std::vector<std::vector<int>> by_radio_pool;    // (ap, slice) -> WD ids
    std::vector<std::vector<int>> by_compute_pool;  // (node, slice) -> WD ids
    std::vector<std::vector<int>> by_ap;
    std::vector<std::vector<int>> by_node;
    std::vector<int> locals;

    const std::vector<int>& radio_pool(int ap, int slice) const {
        return by_radio_pool[ap * slices + slice];
    }
    const std::vector<int>& compute_pool(int node, int slice) const {
        return by_compute_pool[node * slices + slice];
    }
};

inline AssignmentSets assignment_sets(const Topology& t, const DecisionVector& dv) {
    AssignmentSets sets;
    sets.slices = t.slices;
    sets.aps = t.aps;
    sets.nodes = t.nodes;
    sets.by_radio_pool.resize(static_cast<std::size_t>(t.aps) * t.slices);
    sets.by_compute_pool.resize(static_cast<std::size_t>(t.nodes) * t.slices);
    sets.by_ap.resize(t.aps);
    sets.by_node.resize(t.nodes);
    for (int i = 0; i < static_cast<int>(dv.size()); ++i) {
        const Decision& d = dv[i];
        if (d.is_local()) {
            sets.locals.push_back(i);
            continue;
        }
        sets.by_radio_pool[d.ap * t.slices + d.slice].push_back(i);
        sets.by_compute_pool[d.node * t.slices + d.slice].push_back(i);
        sets.by_ap[d.ap].push_back(i);
        sets.by_node[d.node].push_back(i);
    }
    return sets;
}

// Total request arrival rate per node, sum of alpha_i over WDs offloaded there.
inline std::vector<double> node_arrival_rates(const Scenario& s, const DecisionVector& dv) {
    std::vector<double> rates(s.nodes.size(), 0.0);
    for (std::size_t i = 0; i < dv.size(); ++i)
        if (!dv[i].is_local()) rates[dv[i].node] += s.wds[i].arrival_rate_per_s;
    return rates;
}

struct ResourceRef {
    enum Kind { Radio, Compute } kind = Radio;
    int index = 0;  // AP index or node index

    static ResourceRef radio(int ap) { return {Radio, ap}; }
    static ResourceRef compute(int node) { return {Compute, node}; }
};

// Minimal completion time T_{i,e}^n: the time WD i would need on resource e in
// slice n if it were the only occupant (full bandwidth share / full capacity,
// queue arrivals taken from the decision vector).
inline Seconds minimal_time(const Scenario& s, const DecisionVector& dv, int wd, ResourceRef e,
                            int slice) {
    const auto& w = s.wds[wd];
    if (e.kind == ResourceRef::Radio) {
        return transmission_time(w.input_size_bits, w.phys_rate_bits_per_s[e.index]);
    }
    const auto arrivals = node_arrival_rates(s, dv);
    return execution_time(s.nodes[e.index].capacity_cycles_per_s[slice],
                          w.slice_instructions_cycles[slice], arrivals[e.index]);
}

// Inter-slice coefficients omega plus intra-slice coefficients phi for both
// resource kinds. Entries are only meaningful for WDs assigned to the matching
// resource under the companion decision vector.
struct AllocationPolicy {
    int slices = 0, aps = 0, nodes = 0, wds = 0;
    std::vector<double> omega_;        // (ap, slice)
    std::vector<double> phi_radio_;    // (wd, ap, slice)
    std::vector<double> phi_compute_;  // (wd, node, slice)

    AllocationPolicy() = default;
    AllocationPolicy(int slices_, int aps_, int nodes_, int wds_)
        : slices(slices_),
          aps(aps_),
          nodes(nodes_),
          wds(wds_),
          omega_(static_cast<std::size_t>(aps_) * slices_, 0.0),
          phi_radio_(static_cast<std::size_t>(wds_) * aps_ * slices_, 0.0),
          phi_compute_(static_cast<std::size_t>(wds_) * nodes_ * slices_, 0.0) {}

    double& omega(int ap, int slice) { return omega_[ap * slices + slice]; }
    double omega(int ap, int slice) const { return omega_[ap * slices + slice]; }
    double& phi_radio(int wd, int ap, int slice) {
        return phi_radio_[(static_cast<std::size_t>(wd) * aps + ap) * slices + slice];
    }
    double phi_radio(int wd, int ap, int slice) const {
        return phi_radio_[(static_cast<std::size_t>(wd) * aps + ap) * slices + slice];
    }
    double& phi_compute(int wd, int node, int slice) {
        return phi_compute_[(static_cast<std::size_t>(wd) * nodes + node) * slices + slice];
    }
    double phi_compute(int wd, int node, int slice) const {
        return phi_compute_[(static_cast<std::size_t>(wd) * nodes + node) * slices + slice];
    }
};

// Completion time of WD i: local latency, or transmission plus execution with
// the allocated shares on its offload path.
inline Seconds wd_cost(const Scenario& s, const DecisionVector& dv, const AllocationPolicy& policy,
                       int wd) {
    const Decision& d = dv[wd];
    if (d.is_local()) return local_latency(s, wd);
    const Seconds t_tx = minimal_time(s, dv, wd, ResourceRef::radio(d.ap), d.slice);
    const Seconds t_ex = minimal_time(s, dv, wd, ResourceRef::compute(d.node), d.slice);
    if (!is_feasible_time(t_tx) || !is_feasible_time(t_ex)) return kInfeasibleTime;
    const double radio_share = policy.omega(d.ap, d.slice) * policy.phi_radio(wd, d.ap, d.slice);
    const double compute_share = policy.phi_compute(wd, d.node, d.slice);
    if (radio_share <= 0.0 || compute_share <= 0.0) return kInfeasibleTime;
    return t_tx / radio_share + t_ex / compute_share;
}

// Slice cost: sum of T/(omega*phi) over the slice's occupied resources, with
// omega fixed to 1 on computing resources.
inline Seconds slice_cost(const Scenario& s, const DecisionVector& dv,
                          const AllocationPolicy& policy, int slice) {
    Seconds total = 0.0;
    for (std::size_t i = 0; i < dv.size(); ++i) {
        const Decision& d = dv[i];
        if (d.is_local() || d.slice != slice) continue;
        const Seconds t_tx = minimal_time(s, dv, static_cast<int>(i), ResourceRef::radio(d.ap), slice);
        const Seconds t_ex =
            minimal_time(s, dv, static_cast<int>(i), ResourceRef::compute(d.node), slice);
        if (!is_feasible_time(t_tx) || !is_feasible_time(t_ex)) return kInfeasibleTime;
        const double radio_share = policy.omega(d.ap, slice) * policy.phi_radio(i, d.ap, slice);
        const double compute_share = policy.phi_compute(i, d.node, slice);
        if (radio_share <= 0.0 || compute_share <= 0.0) return kInfeasibleTime;
        total += t_tx / radio_share + t_ex / compute_share;
    }
    return total;
}

// System cost: sum of per-WD costs plus per-slice costs. Offloaded terms
// appear in both sums; that is the stated cost model, kept literal. Node
// arrival rates are computed once, so this is O(I) per call.
inline Seconds system_cost(const Scenario& s, const DecisionVector& dv,
                           const AllocationPolicy& policy) {
    const auto arrivals = node_arrival_rates(s, dv);
    Seconds total = 0.0;
    for (std::size_t i = 0; i < dv.size(); ++i) {
        const Decision& d = dv[i];
        if (d.is_local()) {
            total += local_latency(s, static_cast<int>(i));
            continue;
        }
        const auto& wd = s.wds[i];
        const Seconds t_tx = transmission_time(wd.input_size_bits, wd.phys_rate_bits_per_s[d.ap]);
        const Seconds t_ex = execution_time(s.nodes[d.node].capacity_cycles_per_s[d.slice],
                                            wd.slice_instructions_cycles[d.slice], arrivals[d.node]);
        if (!is_feasible_time(t_tx) || !is_feasible_time(t_ex)) return kInfeasibleTime;
        const double radio_share = policy.omega(d.ap, d.slice) * policy.phi_radio(i, d.ap, d.slice);
        const double compute_share = policy.phi_compute(i, d.node, d.slice);
        if (radio_share <= 0.0 || compute_share <= 0.0) return kInfeasibleTime;
        // once for the WD cost, once for its slice's cost
        total += 2.0 * (t_tx / radio_share + t_ex / compute_share);
    }
    return total;
}

enum class Constraint { C13a, C13b, C13c, C13d, C13e, C13f, C13g };

inline const char* to_string(Constraint c) {
    switch (c) {
        case Constraint::C13a: return "13a";
        case Constraint::C13b: return "13b";
        case Constraint::C13c: return "13c";
        case Constraint::C13d: return "13d";
        case Constraint::C13e: return "13e";
        case Constraint::C13f: return "13f";
        case Constraint::C13g: return "13g";
    }
    return "?";
}

struct FeasibilityReport {
    std::vector<Constraint> violated;  // sorted, unique

    bool feasible() const { return violated.empty(); }
    bool has(Constraint c) const {
        for (Constraint v : violated)
            if (v == c) return true;
        return false;
    }
    std::string to_string() const {
        std::string out;
        for (Constraint v : violated) {
            if (!out.empty()) out += ",";
            out += coinmec::to_string(v);
        }
        return out.empty() ? "feasible" : out;
    }
};

// Checks a (decision vector, policy) pair against constraints 13a-13g and
// reports exactly the violated labels.
inline FeasibilityReport check_feasibility(const Scenario& s, const DecisionVector& dv,
                                           const AllocationPolicy& policy) {
    FeasibilityReport report;
    const Topology topo = s.topology();
    auto add = [&report](Constraint c) {
        if (!report.has(c)) report.violated.push_back(c);
    };

    // 13a: one decision per WD, indices in range.
    if (static_cast<int>(dv.size()) != s.wd_count()) {
        add(Constraint::C13a);
        return report;
    }
    for (const Decision& d : dv) {
        if (d.is_local()) continue;
        if (d.ap < 0 || d.ap >= topo.aps || d.node < 0 || d.node >= topo.nodes || d.slice < 0 ||
            d.slice >= topo.slices)
            add(Constraint::C13a);
    }
    if (!report.feasible()) return report;

    // 13c: strict queue stability at every occupied (node, slice); 13b: offload
    // completion no slower than local execution, judged per WD on stable paths.
    const auto arrivals = node_arrival_rates(s, dv);
    for (std::size_t i = 0; i < dv.size(); ++i) {
        const Decision& d = dv[i];
        if (d.is_local()) continue;
        const double service_rate = s.nodes[d.node].capacity_cycles_per_s[d.slice] /
                                    s.wds[i].slice_instructions_cycles[d.slice];
        if (service_rate - arrivals[d.node] <= 0.0) {
            add(Constraint::C13c);
            continue;
        }
        const Seconds offload = wd_cost(s, dv, policy, static_cast<int>(i));
        const Seconds local = local_latency(s, static_cast<int>(i));
        if (!is_feasible_time(offload) || offload > local * (1.0 + kFeasibilityTol))
            add(Constraint::C13b);
    }

    // 13d: per-AP inter-slice shares sum to at most 1.
    for (int a = 0; a < topo.aps; ++a) {
        double sum = 0.0;
        for (int n = 0; n < topo.slices; ++n) sum += policy.omega(a, n);
        if (sum > 1.0 + kFeasibilityTol) add(Constraint::C13d);
    }

    // 13e: per-pool intra-slice shares over the assigned set sum to at most 1.
    const AssignmentSets sets = assignment_sets(topo, dv);
    for (int a = 0; a < topo.aps; ++a)
        for (int n = 0; n < topo.slices; ++n) {
            double sum = 0.0;
            for (int i : sets.radio_pool(a, n)) sum += policy.phi_radio(i, a, n);
            if (sum > 1.0 + kFeasibilityTol) add(Constraint::C13e);
        }
    for (int j = 0; j < topo.nodes; ++j)
        for (int n = 0; n < topo.slices; ++n) {
            double sum = 0.0;
            for (int i : sets.compute_pool(j, n)) sum += policy.phi_compute(i, j, n);
            if (sum > 1.0 + kFeasibilityTol) add(Constraint::C13e);
        }

    // 13f / 13g: non-negativity.
    for (double w : policy.omega_)
        if (w < 0.0) add(Constraint::C13f);
    for (double p : policy.phi_radio_)
        if (p < 0.0) add(Constraint::C13g);
    for (double p : policy.phi_compute_)
        if (p < 0.0) add(Constraint::C13g);

    return report;
}

}  // namespace coinmec
