#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "coinmec/model.hpp"

namespace coinmec {

enum class SolveMethod { Exhaustive, Greedy, Erap, Prap };

inline const char* to_string(SolveMethod m) {
    switch (m) {
        case SolveMethod::Exhaustive: return "exhaustive";
        case SolveMethod::Greedy: return "greedy";
        case SolveMethod::Erap: return "erap";
        case SolveMethod::Prap: return "prap";
    }
    return "?";
}

inline SolveMethod solve_method_from_string(const std::string& s) {
    if (s == "exhaustive") return SolveMethod::Exhaustive;
    if (s == "greedy") return SolveMethod::Greedy;
    if (s == "erap") return SolveMethod::Erap;
    if (s == "prap") return SolveMethod::Prap;
    throw std::invalid_argument("unknown solve method: " + s);
}

struct SolveResult {
    DecisionVector decision;
    AllocationPolicy policy;
    Seconds cost_s = kInfeasibleTime;
    double solver_wall_time_s = 0.0;
    SolveMethod method = SolveMethod::Exhaustive;
};

// Closed-form minimizer of sum(T_i / phi_i) subject to sum(phi) <= 1, phi >= 0:
// phi_i = sqrt(T_i) / sum_k sqrt(T_k), optimum (sum sqrt(T))^2. Shares are
// invariant to scaling all T by a positive constant.
struct SqrtShareAllocation {
    std::vector<double> shares;
    double objective = 0.0;
};

inline SqrtShareAllocation sqrt_share_allocation(std::span<const double> minimal_times) {
    SqrtShareAllocation out;
    out.shares.resize(minimal_times.size(), 0.0);
    double denom = 0.0;
    for (double t : minimal_times) denom += std::sqrt(t);
    if (denom <= 0.0) return out;
    for (std::size_t i = 0; i < minimal_times.size(); ++i)
        out.shares[i] = std::sqrt(minimal_times[i]) / denom;
    out.objective = denom * denom;
    return out;
}

struct IntraSlicePolicy {
    std::vector<double> phi_radio;    // (wd, ap, slice), same layout as AllocationPolicy
    std::vector<double> phi_compute;  // (wd, node, slice)
    bool queue_stable = true;
    // WDs whose best-case offload completion already exceeds local latency;
    // SP3 owns constraint 13b and reconsiders these decisions.
    std::vector<int> slower_than_local;
};

// SP1: optimal intra-slice shares for a fixed decision vector. The inter-slice
// matrix omega is part of the subproblem statement but does not move the
// argmin (shares are scale-invariant in it), so it is accepted and unused.
inline IntraSlicePolicy sp1_solve(const Scenario& s, const DecisionVector& dv,
                                  const std::vector<double>& omega = {}) {
    (void)omega;
    const Topology topo = s.topology();
    IntraSlicePolicy out;
    out.phi_radio.assign(static_cast<std::size_t>(s.wd_count()) * topo.aps * topo.slices, 0.0);
    out.phi_compute.assign(static_cast<std::size_t>(s.wd_count()) * topo.nodes * topo.slices, 0.0);

    const AssignmentSets sets = assignment_sets(topo, dv);
    const auto arrivals = node_arrival_rates(s, dv);

    std::vector<double> times;
    for (int a = 0; a < topo.aps; ++a)
        for (int n = 0; n < topo.slices; ++n) {
            const auto& members = sets.radio_pool(a, n);
            if (members.empty()) continue;
            times.clear();
            for (int i : members)
                times.push_back(s.wds[i].input_size_bits / s.wds[i].phys_rate_bits_per_s[a]);
            const auto alloc = sqrt_share_allocation(times);
            for (std::size_t k = 0; k < members.size(); ++k)
                out.phi_radio[(static_cast<std::size_t>(members[k]) * topo.aps + a) * topo.slices + n] =
                    alloc.shares[k];
        }

    for (int j = 0; j < topo.nodes; ++j)
        for (int n = 0; n < topo.slices; ++n) {
            const auto& members = sets.compute_pool(j, n);
            if (members.empty()) continue;
            times.clear();
            bool stable = true;
            for (int i : members) {
                const double service_rate = s.nodes[j].capacity_cycles_per_s[n] /
                                            s.wds[i].slice_instructions_cycles[n];
                const double margin = service_rate - arrivals[j];
                if (margin < kQueueStabilityMargin) {
                    stable = false;
                    break;
                }
                times.push_back(1.0 / margin);
            }
            if (!stable) {
                out.queue_stable = false;
                continue;
            }
            const auto alloc = sqrt_share_allocation(times);
            for (std::size_t k = 0; k < members.size(); ++k)
                out.phi_compute[(static_cast<std::size_t>(members[k]) * topo.nodes + j) * topo.slices +
                                n] = alloc.shares[k];
        }

    return out;
}

// SP2: optimal inter-slice radio shares for fixed decisions and intra-slice
// shares. Per AP, with c_n = (sum_i sqrt(T_tx))^2 over the slice's users,
// omega_a^n = sqrt(c_n) / sum_m sqrt(c_m). APs with no offloading WDs keep
// full slack (all-zero row). The intra-slice collection is part of the
// subproblem statement; the optimum depends on it only through the per-slice
// sqrt sums, which the closed form recomputes.
inline std::vector<double> sp2_solve(const Scenario& s, const DecisionVector& dv,
                                     const IntraSlicePolicy& intra = {}) {
    (void)intra;
    const Topology topo = s.topology();
    const AssignmentSets sets = assignment_sets(topo, dv);
    std::vector<double> omega(static_cast<std::size_t>(topo.aps) * topo.slices, 0.0);
    for (int a = 0; a < topo.aps; ++a) {
        std::vector<double> sqrt_c(topo.slices, 0.0);
        double total = 0.0;
        for (int n = 0; n < topo.slices; ++n) {
            for (int i : sets.radio_pool(a, n))
                sqrt_c[n] += std::sqrt(s.wds[i].input_size_bits / s.wds[i].phys_rate_bits_per_s[a]);
            total += sqrt_c[n];
        }
        if (total <= 0.0) continue;
        for (int n = 0; n < topo.slices; ++n) omega[a * topo.slices + n] = sqrt_c[n] / total;
    }
    return omega;
}

// One SP1 -> SP2 pass is a fixed point because the SP1 argmin is
// scale-invariant in omega; assembles the optimal policy for a fixed delta.
inline AllocationPolicy make_optimal_policy(const Scenario& s, const DecisionVector& dv) {
    const Topology topo = s.topology();
    AllocationPolicy policy(topo.slices, topo.aps, topo.nodes, s.wd_count());
    IntraSlicePolicy intra = sp1_solve(s, dv);
    policy.phi_radio_ = std::move(intra.phi_radio);
    policy.phi_compute_ = std::move(intra.phi_compute);
    policy.omega_ = sp2_solve(s, dv);
    return policy;
}

// Evaluates candidate decision vectors (as per-WD class ids) under the optimal
// policy without materializing it. Uses the collapsed forms
//   cost = sum_local L/F + sum_a 2*(sum sqrt(T_tx))^2 + sum_(j,n) 2*(sum sqrt(T_ex))^2
//   completion_i = sqrt(T_tx_i)*S_ap + sqrt(T_ex_i)*S_pool   (13b screen)
// which follow from substituting the SP1/SP2 closed forms into the cost.
class DecisionEvaluator {
public:
    explicit DecisionEvaluator(const Scenario& s) : s_(&s), topo_(s.topology()) {
        const int wd_count = s.wd_count();
        local_cost_.resize(wd_count);
        sqrt_t_tx_.resize(static_cast<std::size_t>(wd_count) * topo_.aps);
        service_rate_.resize(static_cast<std::size_t>(wd_count) * topo_.nodes * topo_.slices);
        for (int i = 0; i < wd_count; ++i) {
            const auto& wd = s.wds[i];
            local_cost_[i] = local_latency(s, i);
            for (int a = 0; a < topo_.aps; ++a)
                sqrt_t_tx_[static_cast<std::size_t>(i) * topo_.aps + a] =
                    std::sqrt(wd.input_size_bits / wd.phys_rate_bits_per_s[a]);
            for (int j = 0; j < topo_.nodes; ++j)
                for (int n = 0; n < topo_.slices; ++n)
                    service_rate_[(static_cast<std::size_t>(i) * topo_.nodes + j) * topo_.slices + n] =
                        s.nodes[j].capacity_cycles_per_s[n] / wd.slice_instructions_cycles[n];
        }
        lambda_.resize(topo_.nodes);
        sum_ap_.resize(topo_.aps);
        sum_pool_.resize(static_cast<std::size_t>(topo_.nodes) * topo_.slices);
        sqrt_t_ex_.resize(wd_count);
    }

    const Topology& topology() const { return topo_; }
    int class_count() const { return topo_.joint_classes(); }
    double local_cost(int wd) const { return local_cost_[wd]; }

    Seconds evaluate(std::span<const int> classes) const {
        const int wd_count = static_cast<int>(classes.size());
        std::fill(lambda_.begin(), lambda_.end(), 0.0);
        std::fill(sum_ap_.begin(), sum_ap_.end(), 0.0);
        std::fill(sum_pool_.begin(), sum_pool_.end(), 0.0);

        for (int i = 0; i < wd_count; ++i) {
            const int cls = classes[i];
            if (cls == 0) continue;
            const int node = (cls - 1) % topo_.nodes;
            lambda_[node] += s_->wds[i].arrival_rate_per_s;
        }

        Seconds cost = 0.0;
        for (int i = 0; i < wd_count; ++i) {
            const int cls = classes[i];
            if (cls == 0) {
                cost += local_cost_[i];
                continue;
            }
            int rest = cls - 1;
            const int node = rest % topo_.nodes;
            rest /= topo_.nodes;
            const int ap = rest % topo_.aps;
            const int slice = rest / topo_.aps;
            const double margin =
                service_rate_[(static_cast<std::size_t>(i) * topo_.nodes + node) * topo_.slices +
                              slice] -
                lambda_[node];
            if (margin < kQueueStabilityMargin) return kInfeasibleTime;
            const double sqrt_ex = std::sqrt(1.0 / margin);
            sqrt_t_ex_[i] = sqrt_ex;
            sum_ap_[ap] += sqrt_t_tx_[static_cast<std::size_t>(i) * topo_.aps + ap];
            sum_pool_[node * topo_.slices + slice] += sqrt_ex;
        }

        for (int a = 0; a < topo_.aps; ++a) cost += 2.0 * sum_ap_[a] * sum_ap_[a];
        for (double sp : sum_pool_) cost += 2.0 * sp * sp;

        // 13b: completion under the optimal policy must not exceed local latency.
        for (int i = 0; i < wd_count; ++i) {
            const int cls = classes[i];
            if (cls == 0) continue;
            int rest = cls - 1;
            const int node = rest % topo_.nodes;
            rest /= topo_.nodes;
            const int ap = rest % topo_.aps;
            const int slice = rest / topo_.aps;
            const double completion =
                sqrt_t_tx_[static_cast<std::size_t>(i) * topo_.aps + ap] * sum_ap_[ap] +
                sqrt_t_ex_[i] * sum_pool_[node * topo_.slices + slice];
            if (completion > local_cost_[i] * (1.0 + kFeasibilityTol)) return kInfeasibleTime;
        }
        return cost;
    }

private:
    const Scenario* s_;
    Topology topo_;
    std::vector<double> local_cost_;
    std::vector<double> sqrt_t_tx_;
    std::vector<double> service_rate_;
    mutable std::vector<double> lambda_;
    mutable std::vector<double> sum_ap_;
    mutable std::vector<double> sum_pool_;
    mutable std::vector<double> sqrt_t_ex_;
};

struct SolveOptions {
    std::uint64_t exhaustive_budget = 2'000'000;  // max evaluated decision vectors
    int workers = 1;
};

namespace detail {

// K^I candidate count, saturating at max() to keep budget checks overflow-safe.
inline std::uint64_t candidate_count(std::uint64_t classes, int wd_count) {
    std::uint64_t total = 1;
    for (int i = 0; i < wd_count; ++i) {
        if (total > (~std::uint64_t{0}) / classes) return ~std::uint64_t{0};
        total *= classes;
    }
    return total;
}

inline void decode_rank(std::uint64_t rank, int classes, std::vector<int>& digits) {
    for (int pos = static_cast<int>(digits.size()) - 1; pos >= 0; --pos) {
        digits[pos] = static_cast<int>(rank % classes);
        rank /= classes;
    }
}

struct ChunkBest {
    Seconds cost = kInfeasibleTime;
    std::uint64_t rank = 0;
    bool found = false;
};

// Scans ranks [begin, end) in lexicographic order (digit 0 most significant,
// last digit fastest) keeping the strictly best candidate; among equal costs
// the lowest rank wins, which realizes the local-first (slice, ap, node)
// tie-break.
inline ChunkBest scan_range(const DecisionEvaluator& eval, int wd_count, std::uint64_t begin,
                            std::uint64_t end) {
    const int classes = eval.class_count();
    std::vector<int> digits(wd_count, 0);
    decode_rank(begin, classes, digits);
    ChunkBest best;
    for (std::uint64_t rank = begin; rank < end; ++rank) {
        const Seconds cost = eval.evaluate(digits);
        if (is_feasible_time(cost) && (!best.found || cost < best.cost)) {
            best.cost = cost;
            best.rank = rank;
            best.found = true;
        }
        // odometer increment, last digit fastest
        for (int pos = wd_count - 1; pos >= 0; --pos) {
            if (++digits[pos] < classes) break;
            digits[pos] = 0;
        }
    }
    return best;
}

}  // namespace detail

// SP3, exhaustive mode: enumerate every decision vector, evaluate under the
// optimal SP1/SP2 policy, return the feasible argmin. All-local is always
// feasible, so a result always exists.
inline SolveResult sp3_exhaustive(const Scenario& s, const SolveOptions& opts = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    const DecisionEvaluator eval(s);
    const int wd_count = s.wd_count();
    const std::uint64_t total = detail::candidate_count(eval.class_count(), wd_count);
    if (total > opts.exhaustive_budget)
        throw std::invalid_argument("sp3_exhaustive: candidate count exceeds budget (" +
                                    std::to_string(total) + " > " +
                                    std::to_string(opts.exhaustive_budget) + ")");

    const int workers = std::max(1, opts.workers);
    std::vector<detail::ChunkBest> bests(workers);
    if (workers == 1 || total < 4096) {
        bests[0] = detail::scan_range(eval, wd_count, 0, total);
    } else {
        std::vector<std::thread> threads;
        const std::uint64_t chunk = (total + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            const std::uint64_t begin = std::min<std::uint64_t>(w * chunk, total);
            const std::uint64_t end = std::min<std::uint64_t>(begin + chunk, total);
            threads.emplace_back([&eval, wd_count, begin, end, w, &bests] {
                bests[w] = detail::scan_range(eval, wd_count, begin, end);
            });
        }
        for (auto& t : threads) t.join();
    }

    // Reduction keyed on (cost, rank): deterministic for any worker count.
    detail::ChunkBest best;
    for (const auto& b : bests) {
        if (!b.found) continue;
        if (!best.found || b.cost < best.cost || (b.cost == best.cost && b.rank < best.rank))
            best = b;
    }

    std::vector<int> digits(wd_count, 0);
    detail::decode_rank(best.rank, eval.class_count(), digits);
    SolveResult result;
    result.method = SolveMethod::Exhaustive;
    result.decision.reserve(wd_count);
    const Topology topo = s.topology();
    for (int c : digits) result.decision.push_back(decision_of(topo, c));
    result.policy = make_optimal_policy(s, result.decision);
    result.cost_s = best.cost;
    result.solver_wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

// SP3, greedy mode: iterated best response from all-local; repeatedly applies
// the single-WD decision change with the largest strict cost decrease. Scan
// order (WD index, then class id) makes ties deterministic.
inline SolveResult sp3_greedy(const Scenario& s) {
    const auto t0 = std::chrono::steady_clock::now();
    const DecisionEvaluator eval(s);
    const int wd_count = s.wd_count();
    const int classes = eval.class_count();

    std::vector<int> current(wd_count, 0);
    Seconds current_cost = eval.evaluate(current);
    std::vector<int> candidate = current;
    for (;;) {
        Seconds best_cost = current_cost;
        int best_wd = -1, best_class = 0;
        for (int i = 0; i < wd_count; ++i) {
            const int original = candidate[i];
            for (int c = 0; c < classes; ++c) {
                if (c == original) continue;
                candidate[i] = c;
                const Seconds cost = eval.evaluate(candidate);
                if (is_feasible_time(cost) && cost < best_cost) {
                    best_cost = cost;
                    best_wd = i;
                    best_class = c;
                }
            }
            candidate[i] = original;
        }
        if (best_wd < 0) break;
        candidate[best_wd] = best_class;
        current = candidate;
        current_cost = best_cost;
    }

    SolveResult result;
    result.method = SolveMethod::Greedy;
    const Topology topo = s.topology();
    result.decision.reserve(wd_count);
    for (int c : current) result.decision.push_back(decision_of(topo, c));
    result.policy = make_optimal_policy(s, result.decision);
    result.cost_s = current_cost;
    result.solver_wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

enum class Sp3Mode { Exhaustive, Greedy, Auto };

// Auto mode solves exactly when the enumeration fits the budget and falls back
// to greedy (labeled as such) above it.
inline SolveResult sp3_solve(const Scenario& s, Sp3Mode mode, const SolveOptions& opts = {}) {
    switch (mode) {
        case Sp3Mode::Exhaustive: return sp3_exhaustive(s, opts);
        case Sp3Mode::Greedy: return sp3_greedy(s);
        case Sp3Mode::Auto: {
            const Topology topo = s.topology();
            const std::uint64_t total =
                detail::candidate_count(topo.joint_classes(), s.wd_count());
            if (total <= opts.exhaustive_budget) return sp3_exhaustive(s, opts);
            return sp3_greedy(s);
        }
    }
    throw std::logic_error("sp3_solve: bad mode");
}

// ERAP: equal inter-slice shares and equal intra-slice shares over every
// assigned set.
inline AllocationPolicy erap_policy(const Scenario& s, const DecisionVector& dv) {
    const Topology topo = s.topology();
    AllocationPolicy policy(topo.slices, topo.aps, topo.nodes, s.wd_count());
    for (int a = 0; a < topo.aps; ++a)
        for (int n = 0; n < topo.slices; ++n) policy.omega(a, n) = 1.0 / topo.slices;
    const AssignmentSets sets = assignment_sets(topo, dv);
    for (int a = 0; a < topo.aps; ++a)
        for (int n = 0; n < topo.slices; ++n) {
            const auto& members = sets.radio_pool(a, n);
            for (int i : members) policy.phi_radio(i, a, n) = 1.0 / members.size();
        }
    for (int j = 0; j < topo.nodes; ++j)
        for (int n = 0; n < topo.slices; ++n) {
            const auto& members = sets.compute_pool(j, n);
            for (int i : members) policy.phi_compute(i, j, n) = 1.0 / members.size();
        }
    return policy;
}

// PRAP: shares proportional to demand — task bits on radio resources,
// instruction counts on computing resources — normalized over nonempty sets.
inline AllocationPolicy prap_policy(const Scenario& s, const DecisionVector& dv) {
    const Topology topo = s.topology();
    AllocationPolicy policy(topo.slices, topo.aps, topo.nodes, s.wd_count());
    const AssignmentSets sets = assignment_sets(topo, dv);
    for (int a = 0; a < topo.aps; ++a) {
        std::vector<double> demand(topo.slices, 0.0);
        double total = 0.0;
        for (int n = 0; n < topo.slices; ++n) {
            for (int i : sets.radio_pool(a, n)) demand[n] += s.wds[i].input_size_bits;
            total += demand[n];
        }
        if (total <= 0.0) continue;
        for (int n = 0; n < topo.slices; ++n) policy.omega(a, n) = demand[n] / total;
    }
    for (int a = 0; a < topo.aps; ++a)
        for (int n = 0; n < topo.slices; ++n) {
            const auto& members = sets.radio_pool(a, n);
            double total = 0.0;
            for (int i : members) total += s.wds[i].input_size_bits;
            for (int i : members) policy.phi_radio(i, a, n) = s.wds[i].input_size_bits / total;
        }
    for (int j = 0; j < topo.nodes; ++j)
        for (int n = 0; n < topo.slices; ++n) {
            const auto& members = sets.compute_pool(j, n);
            double total = 0.0;
            for (int i : members) total += s.wds[i].slice_instructions_cycles[n];
            for (int i : members)
                policy.phi_compute(i, j, n) = s.wds[i].slice_instructions_cycles[n] / total;
        }
    return policy;
}

// Greedy best-response over decisions with the cost evaluated under a fixed
// policy family (ERAP or PRAP recomputed per candidate). Mirrors how the
// baselines still need a decision vector.
inline SolveResult solve_with_policy_family(
    const Scenario& s, SolveMethod method,
    const std::function<AllocationPolicy(const Scenario&, const DecisionVector&)>& family) {
    const auto t0 = std::chrono::steady_clock::now();
    const Topology topo = s.topology();
    const int wd_count = s.wd_count();
    const int classes = topo.joint_classes();

    DecisionVector current(wd_count, Decision::local());
    Seconds current_cost = system_cost(s, current, family(s, current));
    DecisionVector candidate = current;
    for (;;) {
        Seconds best_cost = current_cost;
        int best_wd = -1;
        Decision best_decision = Decision::local();
        for (int i = 0; i < wd_count; ++i) {
            const Decision original = candidate[i];
            for (int c = 0; c < classes; ++c) {
                const Decision d = decision_of(topo, c);
                if (d == original) continue;
                candidate[i] = d;
                const Seconds cost = system_cost(s, candidate, family(s, candidate));
                if (is_feasible_time(cost) && cost < best_cost) {
                    best_cost = cost;
                    best_wd = i;
                    best_decision = d;
                }
            }
            candidate[i] = original;
        }
        if (best_wd < 0) break;
        candidate[best_wd] = best_decision;
        current = candidate;
        current_cost = best_cost;
    }

    SolveResult result;
    result.method = method;
    result.decision = current;
    result.policy = family(s, current);
    result.cost_s = current_cost;
    result.solver_wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

inline SolveResult solve_erap(const Scenario& s) {
    return solve_with_policy_family(s, SolveMethod::Erap, erap_policy);
}

inline SolveResult solve_prap(const Scenario& s) {
    return solve_with_policy_family(s, SolveMethod::Prap, prap_policy);
}

}  // namespace coinmec
