#pragma once

#include <json.hpp>

#include <map>
#include <string>
#include <vector>

namespace gps {

// key = value files with [section] headers; values are JSON fragments.
// Sections flatten to dotted keys: "[run]\nreps = 10" -> run.reps.
class Config {
public:
    static Config parse(const std::string& text);
    static Config load(const std::string& path);

    bool has(const std::string& key) const { return kv_.count(key) > 0; }
    const nlohmann::json& at(const std::string& key) const;

    double get_double(const std::string& key, double fallback) const;
    long get_long(const std::string& key, long fallback) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::vector<long> get_long_list(const std::string& key) const;
    std::vector<double> get_double_list(const std::string& key) const;

    nlohmann::json resolved() const;

private:
    std::map<std::string, nlohmann::json> kv_;
};

// Run manifest: resolved config, wall clock, per-replica seed ledger, outputs.
class RunManifest {
public:
    RunManifest(std::string command, nlohmann::json resolved_config, uint64_t root_seed);

    void record_stream(const std::string& name, uint64_t first_seed, long replicas);
    void record_output(const std::string& path);
    void set(const std::string& key, nlohmann::json value);
    void finish(double wall_seconds);
    void write(const std::string& path) const;
    const std::vector<std::string>& outputs() const { return outputs_; }

private:
    nlohmann::json j_;
    std::vector<std::string> outputs_;
};

} // namespace gps
