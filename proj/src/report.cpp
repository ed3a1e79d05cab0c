#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "vulnharness/runner.hpp"

namespace vulnharness {

namespace {

// Sort key giving each dimension its natural order instead of a lexical one.
std::pair<long, std::string> order_key(Dimension d, const std::string& value) {
    switch (d) {
        case Dimension::knowledge: return {static_cast<long>(parse_knowledge_mode(value)), ""};
        case Dimension::context: return {value == "with" ? 0 : 1, ""};
        case Dimension::scheme: return {static_cast<long>(parse_scheme(value)), ""};
        case Dimension::rank: return {std::stol(value), ""};
        case Dimension::model:
        case Dimension::language: return {0, value};
    }
    return {0, value};
}

std::optional<double> delta(const std::optional<double>& a, const std::optional<double>& b) {
    if (!a || !b) return std::nullopt;
    return (*a - *b) * 100.0;
}

std::string format_delta(const std::optional<double>& d) {
    if (!d) return std::string(kUndefinedMetric);
    char buf[32];
    // avoid "-0.00" for tiny negative noise
    const double v = (*d > -0.005 && *d < 0.005) ? 0.0 : *d;
    std::snprintf(buf, sizeof buf, v > 0 ? "+%.2f" : "%.2f", v);
    return buf;
}

size_t display_width(const std::string& s) {
    size_t n = 0;
    for (const unsigned char c : s)
        if ((c & 0xC0) != 0x80) ++n;
    return n;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (const char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string csv_number(const std::optional<double>& v, bool is_delta) {
    if (!v) return "";
    return is_delta ? format_delta(v) : format_percent(v);
}

}  // namespace

std::string_view to_string(Dimension d) {
    switch (d) {
        case Dimension::knowledge: return "knowledge";
        case Dimension::context: return "context";
        case Dimension::scheme: return "scheme";
        case Dimension::model: return "model";
        case Dimension::language: return "language";
        case Dimension::rank: return "rank";
    }
    return "?";
}

Dimension parse_dimension(std::string_view text) {
    const auto t = to_lower(trim(text));
    if (t == "knowledge" || t == "knowledge_mode") return Dimension::knowledge;
    if (t == "context") return Dimension::context;
    if (t == "scheme") return Dimension::scheme;
    if (t == "model" || t == "model_id") return Dimension::model;
    if (t == "language" || t == "lang") return Dimension::language;
    if (t == "rank") return Dimension::rank;
    throw HarnessError(ErrorKind::unknown_dimension, "unknown report dimension: " + std::string(text));
}

std::vector<Dimension> parse_dimensions(std::string_view comma_list) {
    std::vector<Dimension> out;
    for (const auto& part : split(comma_list, ',')) {
        if (trim(part).empty()) continue;
        const auto d = parse_dimension(part);
        if (std::find(out.begin(), out.end(), d) != out.end())
            throw HarnessError(ErrorKind::validation, "dimension listed twice: " + part);
        out.push_back(d);
    }
    return out;
}

std::string dimension_value(const TrialRecord& r, Dimension d) {
    switch (d) {
        case Dimension::knowledge: return std::string(to_string(r.knowledge_mode));
        case Dimension::context: return r.context ? "with" : "without";
        case Dimension::scheme: return std::string(to_string(r.scheme));
        case Dimension::model: return r.model_id;
        case Dimension::language: return std::string(to_string(r.language));
        case Dimension::rank: return std::to_string(r.rank);
    }
    return "";
}

Baseline parse_baseline(std::string_view text, const std::vector<Dimension>& group_by,
                        const std::vector<TrialRecord>& records) {
    const auto t = trim(text);
    if (const auto eq = t.find('='); eq != std::string::npos) {
        Baseline b{parse_dimension(t.substr(0, eq)), trim(t.substr(eq + 1))};
        if (std::find(group_by.begin(), group_by.end(), b.dimension) == group_by.end())
            throw HarnessError(ErrorKind::validation,
                               "baseline dimension " + std::string(to_string(b.dimension)) + " is not grouped");
        return b;
    }
    std::vector<Dimension> hits;
    for (const auto d : group_by) {
        for (const auto& r : records) {
            if (dimension_value(r, d) == t) {
                hits.push_back(d);
                break;
            }
        }
    }
    if (hits.empty()) throw HarnessError(ErrorKind::validation, "no grouped dimension has the value " + t);
    if (hits.size() > 1)
        throw HarnessError(ErrorKind::validation, "baseline " + t + " is ambiguous; write dimension=value");
    return {hits.front(), t};
}

ReportTable report(const std::vector<TrialRecord>& records, const std::vector<Dimension>& group_by,
                   const std::optional<Baseline>& baseline) {
    if (baseline && std::find(group_by.begin(), group_by.end(), baseline->dimension) == group_by.end())
        throw HarnessError(ErrorKind::validation, "baseline dimension must be one of the grouped dimensions");

    std::map<std::vector<std::string>, ReportRow> groups;
    for (const auto& r : records) {
        std::vector<std::string> g;
        g.reserve(group_by.size());
        for (const auto d : group_by) g.push_back(dimension_value(r, d));
        auto& row = groups[g];
        row.group = g;
        if (r.ok()) {
            row.counts.add(r.outcome->category);
        } else {
            ++row.errors;
        }
    }

    ReportTable table;
    table.group_by = group_by;
    table.baseline = baseline;
    for (auto& [_, row] : groups) {
        row.metrics = compute_metrics(row.counts);
        table.rows.push_back(std::move(row));
    }
    auto sort_key = [&](const ReportRow& row) {
        std::vector<std::pair<long, std::string>> k;
        for (size_t i = 0; i < group_by.size(); ++i) k.push_back(order_key(group_by[i], row.group[i]));
        return k;
    };
    std::stable_sort(table.rows.begin(), table.rows.end(),
                     [&](const ReportRow& a, const ReportRow& b) { return sort_key(a) < sort_key(b); });

    if (baseline) {
        const size_t pos = static_cast<size_t>(
            std::find(group_by.begin(), group_by.end(), baseline->dimension) - group_by.begin());
        std::map<std::vector<std::string>, const ReportRow*> by_group;
        for (const auto& row : table.rows) by_group[row.group] = &row;
        std::vector<std::pair<size_t, const ReportRow*>> matches;
        for (size_t i = 0; i < table.rows.size(); ++i) {
            auto g = table.rows[i].group;
            g[pos] = baseline->value;
            const auto it = by_group.find(g);
            if (it != by_group.end()) matches.emplace_back(i, it->second);
        }
        for (const auto& [i, base] : matches) {
            const MetricsReport b = base->metrics;
            auto& row = table.rows[i];
            row.has_baseline = true;
            row.delta_precision = delta(row.metrics.precision, b.precision);
            row.delta_recall = delta(row.metrics.recall, b.recall);
            row.delta_f1 = delta(row.metrics.f1, b.f1);
        }
    }
    return table;
}

std::string ReportTable::to_text() const {
    std::vector<std::string> header;
    for (const auto d : group_by) header.emplace_back(to_string(d));
    for (const char* h : {"TP", "FP", "TN", "FN", "FPt", "err", "P%", "R%", "F1%"}) header.emplace_back(h);
    if (baseline) {
        for (const char* h : {"dP", "dR", "dF1"}) header.emplace_back(h);
    }
    std::vector<std::vector<std::string>> cells{header};
    for (const auto& row : rows) {
        auto line = row.group;
        for (const auto n : {row.counts.tp, row.counts.fp, row.counts.tn, row.counts.fn, row.counts.fpt, row.errors})
            line.push_back(std::to_string(n));
        line.push_back(format_percent(row.metrics.precision));
        line.push_back(format_percent(row.metrics.recall));
        line.push_back(format_percent(row.metrics.f1));
        if (baseline) {
            for (const auto& d : {row.delta_precision, row.delta_recall, row.delta_f1})
                line.push_back(row.has_baseline ? format_delta(d) : std::string(kUndefinedMetric));
        }
        cells.push_back(std::move(line));
    }
    std::vector<size_t> width(header.size(), 0);
    for (const auto& line : cells)
        for (size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], display_width(line[c]));

    std::ostringstream out;
    if (baseline) out << "baseline: " << to_string(baseline->dimension) << '=' << baseline->value << '\n';
    for (const auto& line : cells) {
        for (size_t c = 0; c < line.size(); ++c) {
            const auto pad = std::string(width[c] - display_width(line[c]), ' ');
            // group columns read left to right, numbers right-aligned
            if (c < group_by.size()) {
                out << line[c] << pad;
            } else {
                out << pad << line[c];
            }
            if (c + 1 < line.size()) out << "  ";
        }
        out << '\n';
    }
    return out.str();
}

std::string ReportTable::to_csv() const {
    std::ostringstream out;
    for (const auto d : group_by) out << to_string(d) << ',';
    out << "tp,fp,tn,fn,fpt,errors,precision,recall,f1";
    if (baseline) out << ",delta_precision,delta_recall,delta_f1";
    out << '\n';
    for (const auto& row : rows) {
        for (const auto& g : row.group) out << csv_field(g) << ',';
        out << row.counts.tp << ',' << row.counts.fp << ',' << row.counts.tn << ',' << row.counts.fn << ','
            << row.counts.fpt << ',' << row.errors << ',' << csv_number(row.metrics.precision, false) << ','
            << csv_number(row.metrics.recall, false) << ',' << csv_number(row.metrics.f1, false);
        if (baseline) {
            for (const auto& d : {row.delta_precision, row.delta_recall, row.delta_f1})
                out << ',' << (row.has_baseline ? csv_number(d, true) : "");
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace vulnharness
