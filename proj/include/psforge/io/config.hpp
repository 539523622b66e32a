#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "psforge/core/error.hpp"

namespace psforge {

// "key = value" config files with '#' comments. Readers record which keys
// they consumed so unknown keys can be reported by name.
class KeyValueConfig {
public:
    static KeyValueConfig from_file(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw DataError("config: cannot open " + path);
        KeyValueConfig cfg;
        std::string line;
        int lineno = 0;
        while (std::getline(f, line)) {
            ++lineno;
            const size_t hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            const size_t eq = line.find('=');
            if (eq == std::string::npos) {
                if (line.find_first_not_of(" \t\r") != std::string::npos)
                    throw ConfigError("config: malformed line " + std::to_string(lineno) + " in " +
                                      path);
                continue;
            }
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty()) throw ConfigError("config: empty key at line " + std::to_string(lineno));
            cfg.values_[key] = value;
        }
        return cfg;
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        used_.insert(key);
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        used_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            size_t pos = 0;
            const double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config: key '" + key + "' is not a number: " + it->second);
        }
    }

    long get_int(const std::string& key, long fallback) const {
        used_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            size_t pos = 0;
            const long v = std::stol(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config: key '" + key + "' is not an integer: " + it->second);
        }
    }

    bool get_bool(const std::string& key, bool fallback) const {
        used_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        const std::string& v = it->second;
        if (v == "on" || v == "true" || v == "1") return true;
        if (v == "off" || v == "false" || v == "0") return false;
        throw ConfigError("config: key '" + key + "' is not a boolean: " + v);
    }

    // Call after reading every supported key.
    void reject_unknown_keys() const {
        std::string unknown;
        for (const auto& [key, value] : values_) {
            if (used_.count(key)) continue;
            if (!unknown.empty()) unknown += ", ";
            unknown += key;
        }
        if (!unknown.empty()) throw ConfigError("config: unknown keys: " + unknown);
    }

private:
    static std::string trim(const std::string& s) {
        const size_t b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return "";
        const size_t e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    std::map<std::string, std::string> values_;
    mutable std::set<std::string> used_;
};

}  // namespace psforge
