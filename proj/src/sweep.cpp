// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "thzloc/errors.hpp"
#include "thzloc/optimize.hpp"
#include "thzloc/scenarios.hpp"

namespace thzloc {

namespace {

std::string substitute(const std::string &key, const std::string &value) {
    if (key.find("{}") == std::string::npos) return key + "=" + value;
    std::string out;
    size_t pos = 0;
    while (true) {
        const size_t hit = key.find("{}", pos);
        if (hit == std::string::npos) break;
        out += key.substr(pos, hit - pos) + value;
        pos = hit + 2;
    }
    return out + key.substr(pos);
}

double metric_value(const Scenario &sc, const SweepColumn &col, const SweepSpec &spec, std::uint64_t seed, int trial) {
    if (col.metric == "peb_adaptive") {
        if (spec.adaptive_candidates.empty()) throw ConfigError("peb_adaptive needs adaptive_candidates");
        return beam_assignment_search(sc, spec.adaptive_candidates, seed, trial).best_peb;
    }
    const BoundSummary b = compute_bounds(realize(sc, seed, trial));
    if (col.metric == "peb") return b.peb;
    if (col.metric == "oeb") return b.oeb;
    if (col.metric.rfind("rpeb.", 0) == 0) {
        const std::string name = col.metric.substr(5);
        for (size_t i = 0; i < b.rpeb_names.size(); ++i)
            if (b.rpeb_names[i] == name) return b.rpeb[i];
        throw ConfigError("metric '" + col.metric + "': no such reflector in the scenario");
    }
    throw ConfigError("unknown metric '" + col.metric + "'");
}

} // namespace

ResultTable run_sweep(const SweepSpec &spec, std::uint64_t seed, const ProgressFn &progress) {
    if (spec.trials < 1) throw ConfigError("sweep: trials must be >= 1");
    if (spec.columns.empty()) throw ConfigError("sweep: no output columns");
    for (const auto &a : spec.axes)
        if (a.values.empty()) throw ConfigError("sweep axis '" + a.column + "' has an empty value list");

    ResultTable t;
    for (const auto &a : spec.axes) t.columns.push_back(a.column);
    if (spec.trials > 1) t.columns.push_back("trial");
    for (const auto &c : spec.columns) t.columns.push_back(c.name);

    // enumerate points of the cartesian product, first axis slowest
    std::vector<std::vector<int>> points(1);
    for (const auto &a : spec.axes) {
        std::vector<std::vector<int>> next;
        for (const auto &p : points)
            for (size_t i = 0; i < a.values.size(); ++i) {
                auto q = p;
                q.push_back(static_cast<int>(i));
                next.push_back(std::move(q));
            }
        points = std::move(next);
    }
    const int nrows = static_cast<int>(points.size()) * spec.trials;
    const int ncols = static_cast<int>(spec.columns.size());
    const int first = static_cast<int>(spec.axes.size()) + (spec.trials > 1 ? 1 : 0);
    t.rows.assign(nrows, std::vector<double>(first + ncols, std::numeric_limits<double>::quiet_NaN()));
    std::vector<std::string> errors(static_cast<size_t>(nrows) * ncols);

    for (int r = 0; r < nrows; ++r) {
        const auto &pt = points[r / spec.trials];
        for (size_t a = 0; a < spec.axes.size(); ++a) {
            const std::string &v = spec.axes[a].values[pt[a]];
            char *end = nullptr;
            const double d = std::strtod(v.c_str(), &end);
            t.rows[r][a] = end && *end == '\0' ? d : static_cast<double>(pt[a]);
        }
        if (spec.trials > 1) t.rows[r][spec.axes.size()] = r % spec.trials;
    }

    const int ntasks = nrows * ncols;
    std::string config_error; // exceptions must not leave the parallel region
#pragma omp parallel for schedule(dynamic, 1)
    for (int task = 0; task < ntasks; ++task) {
        const int r = task / ncols, c = task % ncols;
        const int trial = r % spec.trials;
        const auto &pt = points[r / spec.trials];
        std::vector<std::string> ov = spec.base_overrides;
        for (size_t a = 0; a < spec.axes.size(); ++a)
            for (const auto &k : spec.axes[a].keys) ov.push_back(substitute(k, spec.axes[a].values[pt[a]]));
        const SweepColumn &col = spec.columns[c];
        ov.insert(ov.end(), col.overrides.begin(), col.overrides.end());
        try {
            const Scenario sc = load_scenario(spec.base_text, ov);
            t.rows[r][first + c] = metric_value(sc, col, spec, seed, trial);
        } catch (const ConfigError &e) {
#pragma omp critical(sweep_config_error)
            if (config_error.empty()) config_error = e.what();
        } catch (const std::exception &e) {
            errors[task] = "row " + std::to_string(r) + ", column " + col.name + ": " + e.what();
        }
    }
    if (!config_error.empty()) throw ConfigError(config_error);
    for (auto &e : errors)
        if (!e.empty()) t.failures.push_back(std::move(e));
    if (progress) {
        progress("sweep finished: " + std::to_string(nrows) + " rows, " + std::to_string(t.failures.size()) +
                 " failed cells");
        for (const auto &f : t.failures) progress("  " + f);
    }
    return t;
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace {
std::string csv_field(const std::string &s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string json_string(const std::string &s) {
    std::string out = "\"";
    for (char c : s) {
        switch (c) {
        case '"': out += "\\\""; break;
        case '\\': out += "\\\\"; break;
        case '\n': out += "\\n"; break;
        default: out += c;
        }
    }
    return out + "\"";
}
} // namespace

std::string to_csv(const ResultTable &t) {
    std::ostringstream os;
    for (size_t i = 0; i < t.columns.size(); ++i) os << (i ? "," : "") << csv_field(t.columns[i]);
    os << "\r\n";
    for (const auto &row : t.rows) {
        for (size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << format_number(row[i]);
        os << "\r\n";
    }
    return os.str();
}

std::string to_json(const ResultTable &t) {
    std::ostringstream os;
    os << "[";
    for (size_t r = 0; r < t.rows.size(); ++r) {
        os << (r ? ",\n " : "\n ") << "{";
        for (size_t i = 0; i < t.columns.size(); ++i) {
            const double v = t.rows[r][i];
            os << (i ? ", " : "") << json_string(t.columns[i]) << ": " << (std::isfinite(v) ? format_number(v) : "null");
        }
        os << "}";
    }
    os << (t.rows.empty() ? "]\n" : "\n]\n");
    return os.str();
}

void emit_results(const ResultTable &t, const std::string &format, const std::string &path) {
    std::string body;
    if (format == "csv")
        body = to_csv(t);
    else if (format == "json")
        body = to_json(t);
    else
        throw ConfigError("unknown output format '" + format + "' (expected csv or json)");
    if (path.empty() || path == "-") {
        std::fwrite(body.data(), 1, body.size(), stdout);
        std::fflush(stdout);
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open output file '" + path + "'");
    out << body;
    if (!out) throw Error("write failed for output file '" + path + "'");
}

} // namespace thzloc
