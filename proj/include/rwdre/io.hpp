#pragma once

// CSV and JSON emission. Every output file starts with the resolved config and
// master seed so any row can be traced back to its run. Number formatting is
// fixed so identical runs produce byte-identical files.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "rwdre/config.hpp"

namespace rwdre::harness {

inline std::string formatDouble(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

using Cell = std::variant<std::int64_t, double, std::string>;

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const Config& resolved) {
        std::filesystem::create_directories(path.parent_path());
        out_.open(path);
        if (!out_) throw std::runtime_error("csv: cannot open " + path.string());
        for (const auto& [k, v] : resolved.items()) out_ << "# " << k << " = " << v << "\n";
    }

    void header(const std::vector<std::string>& cols) {
        for (std::size_t i = 0; i < cols.size(); ++i)
            out_ << (i ? "," : "") << cols[i];
        out_ << "\n";
    }

    void row(const std::vector<Cell>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ",";
            std::visit(
                [&](const auto& v) {
                    using T = std::decay_t<decltype(v)>;
                    if constexpr (std::is_same_v<T, double>) out_ << formatDouble(v);
                    else out_ << v;
                },
                cells[i]);
        }
        out_ << "\n";
    }

private:
    std::ofstream out_;
};

inline void writeJson(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("json: cannot open " + path.string());
    out << j.dump(2) << "\n";
}

inline nlohmann::ordered_json configAsJson(const Config& c) {
    nlohmann::ordered_json j;
    for (const auto& [k, v] : c.items()) j[k] = v;
    return j;
}

} // namespace rwdre::harness
