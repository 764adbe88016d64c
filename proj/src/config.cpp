#include "gps/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gps {

namespace {

std::string strip(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

} // namespace

Config Config::parse(const std::string& text) {
    Config c;
    std::istringstream in(text);
    std::string line, section;
    while (std::getline(in, line)) {
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = strip(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = strip(line.substr(1, line.size() - 2));
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: expected key = value, got: " + line);
        std::string key = strip(line.substr(0, eq));
        std::string val = strip(line.substr(eq + 1));
        if (!section.empty()) key = section + "." + key;
        try {
            c.kv_[key] = nlohmann::json::parse(val);
        } catch (const std::exception&) {
            // bare words are treated as strings
            c.kv_[key] = val;
        }
    }
    return c;
}

Config Config::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config: " + path);
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse(buf.str());
}

const nlohmann::json& Config::at(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw std::invalid_argument("config: missing key " + key);
    return it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second.get<double>();
}

long Config::get_long(const std::string& key, long fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second.get<long>();
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    return it->second.is_string() ? it->second.get<std::string>() : it->second.dump();
}

std::vector<long> Config::get_long_list(const std::string& key) const {
    std::vector<long> out;
    auto it = kv_.find(key);
    if (it == kv_.end()) return out;
    if (it->second.is_array())
        for (const auto& v : it->second) out.push_back(v.get<long>());
    else
        out.push_back(it->second.get<long>());
    return out;
}

std::vector<double> Config::get_double_list(const std::string& key) const {
    std::vector<double> out;
    auto it = kv_.find(key);
    if (it == kv_.end()) return out;
    if (it->second.is_array())
        for (const auto& v : it->second) out.push_back(v.get<double>());
    else
        out.push_back(it->second.get<double>());
    return out;
}

nlohmann::json Config::resolved() const {
    nlohmann::json j;
    for (const auto& kv : kv_) j[kv.first] = kv.second;
    return j;
}

RunManifest::RunManifest(std::string command, nlohmann::json resolved_config,
                         uint64_t root_seed) {
    j_["command"] = std::move(command);
    j_["config"] = std::move(resolved_config);
    j_["root_seed"] = root_seed;
    j_["version"] = "gpslab 0.1.0";
    j_["streams"] = nlohmann::json::array();
    j_["outputs"] = nlohmann::json::array();
}

void RunManifest::record_stream(const std::string& name, uint64_t first_seed, long replicas) {
    nlohmann::json s;
    s["name"] = name;
    s["first_seed"] = first_seed;
    s["replicas"] = replicas;
    j_["streams"].push_back(s);
}

void RunManifest::record_output(const std::string& path) {
    outputs_.push_back(path);
    j_["outputs"].push_back(path);
}

void RunManifest::set(const std::string& key, nlohmann::json value) {
    j_[key] = std::move(value);
}

void RunManifest::finish(double wall_seconds) { j_["wall_seconds"] = wall_seconds; }

void RunManifest::write(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write manifest: " + path);
    f << j_.dump(2) << "\n";
}

} // namespace gps
