#pragma once

// Plain-text key-value experiment configuration with [section] headers;
// structured values (kernel rows, lists) are JSON fragments. Unknown keys are
// rejected against the experiment's declared key set.

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace rwdre::harness {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class Config {
public:
    Config() = default;

    static Config fromString(const std::string& text) {
        Config c;
        std::istringstream in(text);
        std::string line, section;
        int lineNo = 0;
        while (std::getline(in, line)) {
            ++lineNo;
            std::string s = trim(line);
            if (s.empty() || s[0] == '#') continue;
            if (s.front() == '[' && s.back() == ']') {
                section = trim(s.substr(1, s.size() - 2));
                continue;
            }
            auto eq = s.find('=');
            if (eq == std::string::npos)
                throw UsageError("config line " + std::to_string(lineNo) + ": expected key = value");
            std::string key = trim(s.substr(0, eq));
            std::string value = trim(s.substr(eq + 1));
            if (key.empty()) throw UsageError("config line " + std::to_string(lineNo) + ": empty key");
            if (!section.empty()) key = section + "." + key;
            c.values_[key] = value;
        }
        return c;
    }

    static Config fromFile(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw UsageError("config: cannot open " + path);
        std::ostringstream ss;
        ss << in.rdbuf();
        return fromString(ss.str());
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    std::string getString(const std::string& key, const std::string& dflt) const {
        auto it = values_.find(key);
        return it == values_.end() ? dflt : it->second;
    }

    std::int64_t getInt(const std::string& key, std::int64_t dflt) const {
        auto it = values_.find(key);
        if (it == values_.end()) return dflt;
        try {
            std::size_t pos = 0;
            auto v = std::stoll(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw UsageError("config key '" + key + "': expected integer, got '" + it->second + "'");
        }
    }

    double getDouble(const std::string& key, double dflt) const {
        auto it = values_.find(key);
        if (it == values_.end()) return dflt;
        try {
            std::size_t pos = 0;
            double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw UsageError("config key '" + key + "': expected number, got '" + it->second + "'");
        }
    }

    bool getBool(const std::string& key, bool dflt) const {
        auto it = values_.find(key);
        if (it == values_.end()) return dflt;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw UsageError("config key '" + key + "': expected true/false");
    }

    nlohmann::json getJson(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw UsageError("config key '" + key + "' is required");
        try {
            return nlohmann::json::parse(it->second);
        } catch (const std::exception& e) {
            throw UsageError("config key '" + key + "': invalid JSON (" + e.what() + ")");
        }
    }

    void requireKnown(const std::set<std::string>& allowed) const {
        for (const auto& [k, v] : values_)
            if (!allowed.count(k))
                throw UsageError("config: unknown key '" + k + "'");
    }

    const std::map<std::string, std::string>& items() const { return values_; }

    void merge(const Config& overrides) {
        for (const auto& [k, v] : overrides.values_) values_[k] = v;
    }

private:
    static std::string trim(const std::string& s) {
        std::size_t a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) return "";
        std::size_t b = s.find_last_not_of(" \t\r\n");
        return s.substr(a, b - a + 1);
    }

    std::map<std::string, std::string> values_;
};

} // namespace rwdre::harness
