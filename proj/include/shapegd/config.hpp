#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace shapegd {

// INI-style config: [section] headers, key = value lines, '#' comments.
// Unknown keys are tolerated (forward compatibility); malformed lines are
// not.
class Config {
public:
    Config() = default;

    static Config parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("config: cannot open " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        return parse_string(ss.str(), path);
    }

    static Config parse_string(const std::string& text, const std::string& origin = "<string>") {
        Config cfg;
        std::istringstream in(text);
        std::string line, section;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::string t = trim(strip_comment(line));
            if (t.empty()) continue;
            if (t.front() == '[') {
                if (t.back() != ']' || t.size() < 3) {
                    throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                             ": malformed section header");
                }
                section = trim(t.substr(1, t.size() - 2));
                continue;
            }
            auto eq = t.find('=');
            if (eq == std::string::npos) {
                throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                         ": expected key = value");
            }
            std::string key = trim(t.substr(0, eq));
            std::string value = trim(t.substr(eq + 1));
            if (key.empty()) {
                throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": empty key");
            }
            cfg.values_[section][key] = value;
        }
        return cfg;
    }

    bool has(const std::string& section, const std::string& key) const {
        auto s = values_.find(section);
        return s != values_.end() && s->second.count(key) != 0;
    }

    void set(const std::string& section, const std::string& key, const std::string& value) {
        values_[section][key] = value;
    }

    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) const {
        auto s = values_.find(section);
        if (s == values_.end()) return fallback;
        auto k = s->second.find(key);
        return k == s->second.end() ? fallback : k->second;
    }

    std::string require_string(const std::string& section, const std::string& key) const {
        if (!has(section, key)) {
            throw std::runtime_error("config: missing required key [" + section + "] " + key);
        }
        return values_.at(section).at(key);
    }

    double get_double(const std::string& section, const std::string& key, double fallback) const {
        if (!has(section, key)) return fallback;
        return parse_double(section, key, values_.at(section).at(key));
    }

    std::uint64_t get_u64(const std::string& section, const std::string& key,
                          std::uint64_t fallback) const {
        if (!has(section, key)) return fallback;
        return parse_u64(section, key, values_.at(section).at(key));
    }

    bool get_bool(const std::string& section, const std::string& key, bool fallback) const {
        if (!has(section, key)) return fallback;
        const std::string& v = values_.at(section).at(key);
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw std::runtime_error("config: [" + section + "] " + key + ": not a boolean: " + v);
    }

    std::vector<double> get_double_list(const std::string& section, const std::string& key,
                                        const std::vector<double>& fallback) const {
        if (!has(section, key)) return fallback;
        std::vector<double> out;
        std::istringstream ss(values_.at(section).at(key));
        std::string item;
        while (std::getline(ss, item, ',')) {
            out.push_back(parse_double(section, key, trim(item)));
        }
        if (out.empty()) {
            throw std::runtime_error("config: [" + section + "] " + key + ": empty list");
        }
        return out;
    }

    std::vector<std::uint64_t> get_u64_list(const std::string& section, const std::string& key,
                                            const std::vector<std::uint64_t>& fallback) const {
        if (!has(section, key)) return fallback;
        std::vector<std::uint64_t> out;
        std::istringstream ss(values_.at(section).at(key));
        std::string item;
        while (std::getline(ss, item, ',')) {
            out.push_back(parse_u64(section, key, trim(item)));
        }
        if (out.empty()) {
            throw std::runtime_error("config: [" + section + "] " + key + ": empty list");
        }
        return out;
    }

private:
    static std::string strip_comment(const std::string& s) {
        auto pos = s.find('#');
        return pos == std::string::npos ? s : s.substr(0, pos);
    }

    static std::string trim(const std::string& s) {
        std::size_t b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        std::size_t e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    double parse_double(const std::string& section, const std::string& key,
                        const std::string& v) const {
        try {
            std::size_t used = 0;
            double x = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return x;
        } catch (const std::exception&) {
            throw std::runtime_error("config: [" + section + "] " + key +
                                     ": not a number: " + v);
        }
    }

    std::uint64_t parse_u64(const std::string& section, const std::string& key,
                            const std::string& v) const {
        try {
            std::size_t used = 0;
            unsigned long long x = std::stoull(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return static_cast<std::uint64_t>(x);
        } catch (const std::exception&) {
            throw std::runtime_error("config: [" + section + "] " + key +
                                     ": not an unsigned integer: " + v);
        }
    }

    std::map<std::string, std::map<std::string, std::string>> values_;
};

}  // namespace shapegd
