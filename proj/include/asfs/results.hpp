#pragma once

#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "asfs/errors.hpp"
#include "asfs/harness.hpp"

namespace asfs {

// One JSON object per line; flushed per record so interrupted sweeps leave a
// valid prefix.
inline void write_record(std::ostream& os, const RunRecord& rec, const std::string& digest) {
    nlohmann::json j;
    j["config_digest"] = digest;
    for (const auto& [k, v] : rec.tags) j["tags"][k] = v;
    for (const auto& [k, v] : rec.metrics) j["metrics"][k] = v;
    os << j.dump() << "\n";
    os.flush();
}

inline RunRecord parse_record(const std::string& line) {
    const nlohmann::json j = nlohmann::json::parse(line);
    RunRecord rec;
    if (j.contains("tags"))
        for (const auto& [k, v] : j["tags"].items()) rec.tags[k] = v.get<std::string>();
    if (j.contains("metrics"))
        for (const auto& [k, v] : j["metrics"].items()) rec.metrics[k] = v.get<double>();
    return rec;
}

inline void write_records_file(const ExperimentResult& res, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open record stream for writing: " + path);
    for (const auto& rec : res.runs) write_record(os, rec, res.config_digest);
}

// Human-readable tab-separated table with tag and metric columns.
inline void write_table(const ExperimentResult& res, std::ostream& os) {
    std::set<std::string> tag_keys, metric_keys;
    for (const auto& rec : res.runs) {
        for (const auto& [k, v] : rec.tags) tag_keys.insert(k);
        for (const auto& [k, v] : rec.metrics) metric_keys.insert(k);
    }
    os << "# config_digest " << res.config_digest << "\n";
    for (const auto& k : tag_keys) os << k << "\t";
    for (const auto& k : metric_keys) os << k << "\t";
    os << "\n";
    os << std::setprecision(10);
    for (const auto& rec : res.runs) {
        for (const auto& k : tag_keys) {
            auto it = rec.tags.find(k);
            os << (it == rec.tags.end() ? "-" : it->second) << "\t";
        }
        for (const auto& k : metric_keys) {
            auto it = rec.metrics.find(k);
            if (it == rec.metrics.end()) os << "-\t";
            else os << it->second << "\t";
        }
        os << "\n";
    }
}

inline void write_table_file(const ExperimentResult& res, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open results table for writing: " + path);
    write_table(res, os);
}

} // namespace asfs
