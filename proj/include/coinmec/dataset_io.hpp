#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "coinmec/dataset.hpp"
#include "coinmec/rng.hpp"
#include "coinmec/scenario_io.hpp"

namespace coinmec {

// On-disk layout of a generated run (record-per-line, header block first):
//   scenarios.jsonl  one scenario per record id
//   solves.jsonl     solver outputs incl. wall times (volatile, not hashed)
//   sp1.jsonl        features + SP1 labels
//   sp2.jsonl        embeds SP1 inputs and outputs, adds SP2 labels
//   sp3.jsonl        embeds SP2 inputs and outputs, adds SP3 labels
//   manifest.json    counts plus content hashes of the deterministic files

inline Json header_json(const DatasetHeader& h, const std::string& kind) {
    Json j;
    j["format"] = "coinmec." + kind + ".v1";
    j["topology"] = {{"slices", h.topology.slices},
                     {"aps", h.topology.aps},
                     {"nodes", h.topology.nodes}};
    j["i_max"] = h.i_max;
    j["feature_layout"] = h.feature_layout;
    j["mu"] = h.mu;
    j["sigma"] = h.sigma;
    j["generator_version"] = h.generator_version;
    j["config_hash"] = h.config_hash;
    return j;
}

inline DatasetHeader header_from_json(const Json& j) {
    DatasetHeader h;
    h.topology.slices = j.at("topology").at("slices").get<int>();
    h.topology.aps = j.at("topology").at("aps").get<int>();
    h.topology.nodes = j.at("topology").at("nodes").get<int>();
    h.i_max = j.at("i_max").get<int>();
    h.feature_layout = j.at("feature_layout").get<std::vector<std::string>>();
    h.mu = j.at("mu").get<std::vector<double>>();
    h.sigma = j.at("sigma").get<std::vector<double>>();
    h.generator_version = j.at("generator_version").get<std::string>();
    h.config_hash = j.at("config_hash").get<std::string>();
    return h;
}

namespace detail {

inline Json sp1_labels_json(const Sp1Labels& l, int real_count) {
    // store slack row plus the real rows; padded label rows are all-zero
    Json rows = Json::array();
    for (int r = 0; r <= real_count; ++r) {
        Json row = Json::array();
        for (int e = 0; e < l.pools; ++e) row.push_back(l.at(r, e));
        rows.push_back(row);
    }
    return rows;
}

inline Sp1Labels sp1_labels_from_json(const Json& rows, int i_max) {
    Sp1Labels l;
    l.i_max = i_max;
    l.pools = static_cast<int>(rows.at(0).size());
    l.y.assign(static_cast<std::size_t>(i_max + 1) * l.pools, 0.0);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (int e = 0; e < l.pools; ++e) l.at(static_cast<int>(r), e) = rows[r][e].get<double>();
    return l;
}

inline Json sp2_labels_json(const Sp2Labels& l) {
    Json rows = Json::array();
    for (int r = 0; r <= l.slices; ++r) {
        Json row = Json::array();
        for (int a = 0; a < l.aps; ++a) row.push_back(l.at(r, a));
        rows.push_back(row);
    }
    return rows;
}

inline Sp2Labels sp2_labels_from_json(const Json& rows) {
    Sp2Labels l;
    l.slices = static_cast<int>(rows.size()) - 1;
    l.aps = static_cast<int>(rows.at(0).size());
    l.y.assign(static_cast<std::size_t>(l.slices + 1) * l.aps, 0.0);
    for (int r = 0; r <= l.slices; ++r)
        for (int a = 0; a < l.aps; ++a) l.at(r, a) = rows[r][a].get<double>();
    return l;
}

inline Json sp3_labels_json(const Sp3Labels& l) {
    return Json{{"joint", l.joint_class},
                {"bin", l.bin},
                {"slice", l.slice_idx},
                {"ap", l.ap_idx},
                {"node", l.node_idx}};
}

inline Sp3Labels sp3_labels_from_json(const Json& j) {
    Sp3Labels l;
    l.joint_class = j.at("joint").get<std::vector<int>>();
    l.bin = j.at("bin").get<std::vector<int>>();
    l.slice_idx = j.at("slice").get<std::vector<int>>();
    l.ap_idx = j.at("ap").get<std::vector<int>>();
    l.node_idx = j.at("node").get<std::vector<int>>();
    return l;
}

inline Json provenance_json(const DatasetRecord& r) {
    return Json{{"scenario_seed", r.scenario_seed}, {"method", r.method}};
}

}  // namespace detail

inline void write_jsonl(const std::string& path, const Json& header,
                        const std::vector<Json>& records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << header.dump() << "\n";
    for (const auto& r : records) out << r.dump() << "\n";
}

struct JsonlFile {
    Json header;
    std::vector<Json> records;
};

inline JsonlFile read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    JsonlFile file;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty jsonl file: " + path);
    file.header = Json::parse(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        file.records.push_back(Json::parse(line));
    }
    return file;
}

inline std::string file_hash_hex(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for hashing: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string bytes = buf.str();
    std::ostringstream hex;
    hex << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(bytes);
    return hex.str();
}

inline void write_dataset(const std::string& dir, const Dataset& ds) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    std::vector<Json> scenario_records, solve_records, sp1_records, sp2_records, sp3_records;
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        const DatasetRecord& r = ds.records[i];
        scenario_records.push_back(
            Json{{"id", r.id}, {"seed", r.scenario_seed}, {"scenario", to_json(ds.scenarios[i])}});
        solve_records.push_back(Json{{"id", r.id}, {"solve", to_json(ds.solves[i], ds.scenarios[i])}});
        const int real_count = static_cast<int>(r.features.size());
        Json features = Json::array();
        for (const auto& row : r.features) features.push_back(row);
        sp1_records.push_back(Json{{"id", r.id},
                                   {"provenance", detail::provenance_json(r)},
                                   {"features", features},
                                   {"labels", detail::sp1_labels_json(r.sp1, real_count)}});
        sp2_records.push_back(Json{{"id", r.id},
                                   {"provenance", detail::provenance_json(r)},
                                   {"features", features},
                                   {"sp1_labels", detail::sp1_labels_json(r.sp1, real_count)},
                                   {"labels", detail::sp2_labels_json(r.sp2)}});
        sp3_records.push_back(Json{{"id", r.id},
                                   {"provenance", detail::provenance_json(r)},
                                   {"features", features},
                                   {"sp1_labels", detail::sp1_labels_json(r.sp1, real_count)},
                                   {"sp2_labels", detail::sp2_labels_json(r.sp2)},
                                   {"labels", detail::sp3_labels_json(r.sp3)}});
    }

    Json scen_header{{"format", "coinmec.scenarios.v1"},
                     {"count", ds.records.size()},
                     {"config_hash", ds.header.config_hash}};
    Json solve_header{{"format", "coinmec.solves.v1"},
                      {"count", ds.records.size()},
                      {"config_hash", ds.header.config_hash}};
    write_jsonl(dir + "/scenarios.jsonl", scen_header, scenario_records);
    write_jsonl(dir + "/solves.jsonl", solve_header, solve_records);
    write_jsonl(dir + "/sp1.jsonl", header_json(ds.header, "sp1"), sp1_records);
    write_jsonl(dir + "/sp2.jsonl", header_json(ds.header, "sp2"), sp2_records);
    write_jsonl(dir + "/sp3.jsonl", header_json(ds.header, "sp3"), sp3_records);

    // solves.jsonl carries wall-clock times, so it is counted but not hashed.
    Json manifest;
    manifest["format"] = "coinmec.manifest.v1";
    manifest["config_hash"] = ds.header.config_hash;
    manifest["generator_version"] = ds.header.generator_version;
    manifest["counts"] = {{"scenarios", ds.records.size()},
                          {"sp1", ds.records.size()},
                          {"sp2", ds.records.size()},
                          {"sp3", ds.records.size()},
                          {"solves", ds.records.size()}};
    Json hashes;
    for (const char* name : {"scenarios.jsonl", "sp1.jsonl", "sp2.jsonl", "sp3.jsonl"})
        hashes[name] = file_hash_hex(dir + "/" + std::string(name));
    manifest["hashes"] = hashes;
    write_json_file(dir + "/manifest.json", manifest);
}

// Loads a generated run; sp3.jsonl embeds the SP1/SP2 chain, so records come
// from there, with scenarios and solves joined by id.
inline Dataset load_dataset(const std::string& dir) {
    const JsonlFile scen_file = read_jsonl(dir + "/scenarios.jsonl");
    const JsonlFile solve_file = read_jsonl(dir + "/solves.jsonl");
    const JsonlFile sp3_file = read_jsonl(dir + "/sp3.jsonl");
    if (scen_file.records.size() != sp3_file.records.size() ||
        solve_file.records.size() != sp3_file.records.size())
        throw std::runtime_error("load_dataset: record counts disagree across files");

    Dataset ds;
    ds.header = header_from_json(sp3_file.header);

    std::map<std::string, Scenario> scenarios;
    for (const auto& rec : scen_file.records)
        scenarios[rec.at("id").get<std::string>()] = scenario_from_json(rec.at("scenario"));

    for (std::size_t i = 0; i < sp3_file.records.size(); ++i) {
        const Json& rec = sp3_file.records[i];
        DatasetRecord r;
        r.id = rec.at("id").get<std::string>();
        r.scenario_seed = rec.at("provenance").at("scenario_seed").get<std::uint64_t>();
        r.method = rec.at("provenance").at("method").get<std::string>();
        r.features = rec.at("features").get<std::vector<std::vector<double>>>();
        r.sp1 = detail::sp1_labels_from_json(rec.at("sp1_labels"), ds.header.i_max);
        r.sp2 = detail::sp2_labels_from_json(rec.at("sp2_labels"));
        r.sp3 = detail::sp3_labels_from_json(rec.at("labels"));
        auto it = scenarios.find(r.id);
        if (it == scenarios.end()) throw std::runtime_error("load_dataset: missing scenario " + r.id);
        ds.scenarios.push_back(it->second);
        ds.records.push_back(std::move(r));
    }
    for (std::size_t i = 0; i < solve_file.records.size(); ++i) {
        const Json& rec = solve_file.records[i];
        const std::string id = rec.at("id").get<std::string>();
        if (id != ds.records[i].id) throw std::runtime_error("load_dataset: solve order mismatch");
        ds.solves.push_back(solve_result_from_json(rec.at("solve"), ds.scenarios[i]));
    }
    return ds;
}

}  // namespace coinmec
