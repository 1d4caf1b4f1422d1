#include "cbct/config.hpp"

#include <fstream>
#include <sstream>

#include "cbct/errors.hpp"

namespace cbct {

namespace {
std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}
}  // namespace

Config Config::parse_string(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ParamError("config line " + std::to_string(lineno) + " has no '='");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty()) throw ParamError("config line " + std::to_string(lineno) + " has empty key");
        cfg.values_[key] = val;
    }
    return cfg;
}

Config Config::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str());
}

std::string Config::get_str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ParamError("missing config key: " + key);
    return it->second;
}

std::string Config::get_str(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key) const {
    try {
        return std::stod(get_str(key));
    } catch (const ParamError&) {
        throw;
    } catch (...) {
        throw ParamError("config key is not a number: " + key);
    }
}

double Config::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

long Config::get_int(const std::string& key) const {
    try {
        return std::stol(get_str(key));
    } catch (const ParamError&) {
        throw;
    } catch (...) {
        throw ParamError("config key is not an integer: " + key);
    }
}

long Config::get_int(const std::string& key, long fallback) const {
    return has(key) ? get_int(key) : fallback;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get_str(key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ParamError("config key is not a boolean: " + key);
}

std::vector<long> Config::get_int_list(const std::string& key, const std::vector<long>& fallback) const {
    if (!has(key)) return fallback;
    std::vector<long> out;
    std::istringstream in(get_str(key));
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        try {
            out.push_back(std::stol(item));
        } catch (...) {
            throw ParamError("config key is not an integer list: " + key);
        }
    }
    return out;
}

std::string Config::to_string() const {
    std::ostringstream out;
    for (const auto& [k, v] : values_) out << k << " = " << v << "\n";
    return out.str();
}

}  // namespace cbct
