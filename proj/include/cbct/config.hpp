#pragma once

#include <map>
#include <string>
#include <vector>

namespace cbct {

// Flat key/value config file: one `key = value` per line, `#` starts a
// comment, keys may be dotted (geometry.n_views). Unknown keys are kept so
// callers can validate their own namespace.
class Config {
  public:
    Config() = default;

    static Config parse_file(const std::string& path);
    static Config parse_string(const std::string& text);

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_str(const std::string& key) const;
    std::string get_str(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    long get_int(const std::string& key) const;
    long get_int(const std::string& key, long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    // Comma-separated integer list.
    std::vector<long> get_int_list(const std::string& key, const std::vector<long>& fallback) const;

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    // Canonical serialized form (sorted keys); feeds config hashing.
    std::string to_string() const;

    const std::map<std::string, std::string>& values() const { return values_; }

  private:
    std::map<std::string, std::string> values_;
};

}  // namespace cbct
