#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "coinmec/model.hpp"
#include "coinmec/solvers.hpp"

namespace coinmec {

using Json = nlohmann::json;

inline constexpr const char* kScenarioFormat = "coinmec.scenario.v1";
inline constexpr const char* kSolveFormat = "coinmec.solve.v1";

// Field names carry units; numbers round-trip bit-exact through nlohmann's
// shortest-representation double formatting.
inline Json to_json(const Scenario& s) {
    Json j;
    j["format"] = kScenarioFormat;
    j["slices"] = s.slices;
    j["noise_psd_w_per_hz"] = s.noise_psd_w_per_hz;
    j["path_loss_exponent"] = s.path_loss_exponent;
    j["seed"] = s.seed;
    j["aps"] = Json::array();
    for (const auto& ap : s.aps)
        j["aps"].push_back({{"bandwidth_hz", ap.bandwidth_hz},
                            {"position_m", {ap.position_m[0], ap.position_m[1]}}});
    j["nodes"] = Json::array();
    for (const auto& node : s.nodes)
        j["nodes"].push_back({{"kind", to_string(node.kind)},
                              {"capacity_cycles_per_s", node.capacity_cycles_per_s}});
    j["wds"] = Json::array();
    for (const auto& wd : s.wds)
        j["wds"].push_back({{"input_size_bits", wd.input_size_bits},
                            {"local_instructions_cycles", wd.local_instructions_cycles},
                            {"slice_instructions_cycles", wd.slice_instructions_cycles},
                            {"arrival_rate_per_s", wd.arrival_rate_per_s},
                            {"local_capacity_cycles_per_s", wd.local_capacity_cycles_per_s},
                            {"transmit_power_w", wd.transmit_power_w},
                            {"position_m", {wd.position_m[0], wd.position_m[1]}},
                            {"phys_rate_bits_per_s", wd.phys_rate_bits_per_s}});
    return j;
}

inline Scenario scenario_from_json(const Json& j) {
    if (j.value("format", "") != kScenarioFormat)
        throw std::invalid_argument("scenario_from_json: unknown format tag");
    Scenario s;
    s.slices = j.at("slices").get<int>();
    s.noise_psd_w_per_hz = j.at("noise_psd_w_per_hz").get<double>();
    s.path_loss_exponent = j.at("path_loss_exponent").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& ja : j.at("aps")) {
        ApRecord ap;
        ap.bandwidth_hz = ja.at("bandwidth_hz").get<double>();
        ap.position_m = {ja.at("position_m")[0].get<double>(), ja.at("position_m")[1].get<double>()};
        s.aps.push_back(ap);
    }
    for (const auto& jn : j.at("nodes")) {
        NodeRecord node;
        node.kind = jn.at("kind").get<std::string>() == "mec" ? NodeKind::Mec : NodeKind::Coin;
        node.capacity_cycles_per_s = jn.at("capacity_cycles_per_s").get<std::vector<double>>();
        s.nodes.push_back(node);
    }
    for (const auto& jw : j.at("wds")) {
        WdRecord wd;
        wd.input_size_bits = jw.at("input_size_bits").get<double>();
        wd.local_instructions_cycles = jw.at("local_instructions_cycles").get<double>();
        wd.slice_instructions_cycles = jw.at("slice_instructions_cycles").get<std::vector<double>>();
        wd.arrival_rate_per_s = jw.at("arrival_rate_per_s").get<double>();
        wd.local_capacity_cycles_per_s = jw.at("local_capacity_cycles_per_s").get<double>();
        wd.transmit_power_w = jw.at("transmit_power_w").get<double>();
        wd.position_m = {jw.at("position_m")[0].get<double>(), jw.at("position_m")[1].get<double>()};
        wd.phys_rate_bits_per_s = jw.at("phys_rate_bits_per_s").get<std::vector<double>>();
        s.wds.push_back(wd);
    }
    return s;
}

inline Json to_json(const Decision& d) {
    if (d.is_local()) return Json{{"local", true}};
    return Json{{"ap", d.ap}, {"node", d.node}, {"slice", d.slice}};
}

inline Decision decision_from_json(const Json& j) {
    if (j.contains("local")) return Decision::local();
    return Decision::offload(j.at("ap").get<int>(), j.at("node").get<int>(),
                             j.at("slice").get<int>());
}

// Policy coefficients are stored sparsely: entries are only meaningful for WDs
// assigned to the matching resource.
inline Json to_json(const SolveResult& r, const Scenario& s) {
    Json j;
    j["format"] = kSolveFormat;
    j["method"] = to_string(r.method);
    j["cost_s"] = r.cost_s;
    j["solver_wall_time_s"] = r.solver_wall_time_s;
    j["decision"] = Json::array();
    for (const auto& d : r.decision) j["decision"].push_back(to_json(d));
    const Topology topo = s.topology();
    Json omega = Json::array();
    for (int a = 0; a < topo.aps; ++a) {
        Json row = Json::array();
        for (int n = 0; n < topo.slices; ++n) row.push_back(r.policy.omega(a, n));
        omega.push_back(row);
    }
    j["omega"] = omega;
    Json phi_radio = Json::array();
    Json phi_compute = Json::array();
    for (std::size_t i = 0; i < r.decision.size(); ++i) {
        const Decision& d = r.decision[i];
        if (d.is_local()) continue;
        phi_radio.push_back({{"wd", i},
                             {"ap", d.ap},
                             {"slice", d.slice},
                             {"value", r.policy.phi_radio(static_cast<int>(i), d.ap, d.slice)}});
        phi_compute.push_back({{"wd", i},
                               {"node", d.node},
                               {"slice", d.slice},
                               {"value", r.policy.phi_compute(static_cast<int>(i), d.node, d.slice)}});
    }
    j["phi_radio"] = phi_radio;
    j["phi_compute"] = phi_compute;
    return j;
}

inline SolveResult solve_result_from_json(const Json& j, const Scenario& s) {
    if (j.value("format", "") != kSolveFormat)
        throw std::invalid_argument("solve_result_from_json: unknown format tag");
    SolveResult r;
    r.method = solve_method_from_string(j.at("method").get<std::string>());
    r.cost_s = j.at("cost_s").get<double>();
    r.solver_wall_time_s = j.at("solver_wall_time_s").get<double>();
    for (const auto& jd : j.at("decision")) r.decision.push_back(decision_from_json(jd));
    const Topology topo = s.topology();
    r.policy = AllocationPolicy(topo.slices, topo.aps, topo.nodes, s.wd_count());
    for (int a = 0; a < topo.aps; ++a)
        for (int n = 0; n < topo.slices; ++n)
            r.policy.omega(a, n) = j.at("omega")[a][n].get<double>();
    for (const auto& e : j.at("phi_radio"))
        r.policy.phi_radio(e.at("wd").get<int>(), e.at("ap").get<int>(), e.at("slice").get<int>()) =
            e.at("value").get<double>();
    for (const auto& e : j.at("phi_compute"))
        r.policy.phi_compute(e.at("wd").get<int>(), e.at("node").get<int>(),
                             e.at("slice").get<int>()) = e.at("value").get<double>();
    return r;
}

inline void write_json_file(const std::string& path, const Json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

inline Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    return Json::parse(in);
}

}  // namespace coinmec
