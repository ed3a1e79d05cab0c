#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vulnharness/annotation.hpp"
#include "vulnharness/common.hpp"

// Reader for tests/fixtures/metrics_rows.tsv.
namespace metrics_rows {

struct Row {
    std::string label;
    vulnharness::Counts counts;
    double precision = 0;  // percent, as printed
    double recall = 0;
    double f1 = 0;
};

inline std::vector<Row> load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<Row> rows;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (header) {
            header = false;
            continue;
        }
        const auto f = vulnharness::split(line, '\t');
        if (f.size() != 13) throw std::runtime_error("bad row: " + line);
        Row r;
        r.label = f[0] + "/" + f[1] + "/" + f[2] + "/" + f[3] + "/" + f[4];
        r.counts.tp = std::stoll(f[5]);
        r.counts.fp = std::stoll(f[6]);
        r.counts.tn = std::stoll(f[7]);
        r.counts.fn = std::stoll(f[8]);
        r.counts.fpt = std::stoll(f[9]);
        r.precision = std::stod(f[10]);
        r.recall = std::stod(f[11]);
        r.f1 = std::stod(f[12]);
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace metrics_rows
