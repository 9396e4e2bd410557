// SPDX-License-Identifier: Apache-2.0
// thzloc command-line entry point.
#include <omp.h>

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "thzloc/errors.hpp"
#include "thzloc/estimators.hpp"
#include "thzloc/optimize.hpp"
#include "thzloc/scenarios.hpp"

using namespace thzloc;

namespace {

struct Globals {
    std::string scenario;
    std::vector<std::string> sets;
    std::uint64_t seed = 1;
    std::string output = "-";
    std::string format = "csv";
    int threads = 0;
    bool quiet = false;
};

void log(const Globals &g, const std::string &msg) {
    if (!g.quiet) std::fprintf(stderr, "thzloc: %s\n", msg.c_str());
}

Scenario load(const Globals &g) {
    if (g.scenario.empty()) return load_scenario("", g.sets);
    return load_scenario_file(resolve_scenario_path(g.scenario), g.sets);
}

// "x,y,z;x,y,z" -> points
std::vector<Vec3> parse_points(const std::string &text, const char *what) {
    std::vector<Vec3> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ';')) {
        if (item.empty()) continue;
        std::stringstream is(item);
        std::string c;
        Vec3 p = Vec3::Zero();
        int n = 0;
        while (std::getline(is, c, ',')) {
            if (n >= 3) throw ConfigError(std::string(what) + ": more than three coordinates in '" + item + "'");
            try {
                size_t used = 0;
                p(n) = std::stod(c, &used);
                if (used != c.size()) throw std::invalid_argument(c);
            } catch (const std::exception &) {
                throw ConfigError(std::string(what) + ": '" + c + "' is not a number");
            }
            ++n;
        }
        if (n < 2) throw ConfigError(std::string(what) + ": expected x,y[,z] in '" + item + "'");
        out.push_back(p);
    }
    if (out.empty()) throw ConfigError(std::string(what) + ": no points given");
    return out;
}

// "lo:hi:n" -> n values
std::vector<double> parse_range(const std::string &text, const char *what) {
    double lo = 0, hi = 0;
    int n = 0;
    char extra = 0;
    if (std::sscanf(text.c_str(), "%lf:%lf:%d%c", &lo, &hi, &n, &extra) != 3 || n < 1)
        throw ConfigError(std::string(what) + ": expected lo:hi:n, got '" + text + "'");
    std::vector<double> v;
    for (int i = 0; i < n; ++i) v.push_back(n == 1 ? lo : lo + (hi - lo) * i / (n - 1));
    return v;
}

void emit(const Globals &g, const ResultTable &t) { emit_results(t, g.format, g.output); }

int cmd_bound(const Globals &g, int trials) {
    const Scenario s = load(g);
    if (trials < 1) throw ConfigError("--trials must be >= 1");
    ResultTable t;
    if (trials > 1) t.columns.push_back("trial");
    t.columns.insert(t.columns.end(), {"peb_m", "oeb_rad", "rank", "params"});
    std::vector<BoundSummary> b(trials);
    std::string err;
    bool numerical = false;
#pragma omp parallel for schedule(dynamic, 1)
    for (int i = 0; i < trials; ++i) {
        try {
            b[i] = compute_bounds(realize(s, g.seed, i));
        } catch (const std::exception &e) {
#pragma omp critical(cli_bound)
            if (err.empty()) {
                err = e.what();
                numerical = dynamic_cast<const NumericalFailure *>(&e) != nullptr;
            }
        }
    }
    if (!err.empty()) {
        if (numerical) throw NumericalFailure(err);
        throw ConfigError(err);
    }
    for (const auto &n : b[0].rpeb_names) t.columns.push_back("rpeb_" + n + "_m");
    for (int i = 0; i < trials; ++i) {
        std::vector<double> row;
        if (trials > 1) row.push_back(i);
        row.insert(row.end(), {b[i].peb, b[i].oeb, static_cast<double>(b[i].rank), static_cast<double>(b[i].params)});
        row.insert(row.end(), b[i].rpeb.begin(), b[i].rpeb.end());
        t.rows.push_back(row);
    }
    emit(g, t);
    return 0;
}

int cmd_estimate(const Globals &g, const std::string &method, int trials, bool per_trial, const std::string &box) {
    const Scenario s = load(g);
    EstimatorKind kind;
    if (method == "direct")
        kind = EstimatorKind::Direct;
    else if (method == "multistage")
        kind = EstimatorKind::Multistage;
    else
        throw ConfigError("--method must be direct or multistage, got '" + method + "'");
    DirectMleConfig dc;
    if (!box.empty()) {
        const auto pts = parse_points(box, "--box");
        if (pts.size() != 2) throw ConfigError("--box: expected two corners 'x,y,z;x,y,z'");
        dc.box_lo = pts[0];
        dc.box_hi = pts[1];
    }
    log(g, "running " + std::to_string(trials) + " " + method + " trials");
    const TrialSummary r = run_estimator_trials(s, kind, trials, g.seed, dc);
    ResultTable t;
    if (per_trial) {
        t.columns = {"trial", "error_m", "converged"};
        for (const auto &rec : r.records) t.rows.push_back({double(rec.trial), rec.error, rec.converged ? 1.0 : 0.0});
    } else {
        t.columns = {"trials", "rmse_m", "peb_m", "rmse_over_peb", "failures"};
        t.rows.push_back({double(trials), r.rmse, r.peb, r.rmse / r.peb, double(r.failures)});
    }
    log(g, "rmse " + format_number(r.rmse) + " m, peb " + format_number(r.peb) + " m, " +
               std::to_string(r.failures) + " failed trials");
    emit(g, t);
    return r.failures == trials ? 3 : 0;
}

struct OptimizeArgs {
    std::string name;
    std::string candidates = "0,2,4,8,12,16";
    std::string region;
    std::string positions, yaws = "0", grid_x, grid_y;
    double eps = 0.01;
    int max_iter = 200;
};

std::vector<double> parse_doubles(const std::string &text, const char *what) {
    std::vector<double> v;
    std::stringstream ss(text);
    std::string c;
    while (std::getline(ss, c, ',')) {
        try {
            size_t used = 0;
            v.push_back(std::stod(c, &used));
            if (used != c.size()) throw std::invalid_argument(c);
        } catch (const std::exception &) {
            throw ConfigError(std::string(what) + ": '" + c + "' is not a number");
        }
    }
    if (v.empty()) throw ConfigError(std::string(what) + ": empty list");
    return v;
}

std::vector<int> parse_ints(const std::string &text, const char *what) {
    std::vector<int> v;
    for (double d : parse_doubles(text, what)) {
        if (d != std::floor(d)) throw ConfigError(std::string(what) + ": " + format_number(d) + " is not an integer");
        v.push_back(static_cast<int>(d));
    }
    return v;
}

int cmd_optimize(const Globals &g, const OptimizeArgs &a) {
    const Scenario s = load(g);
    ResultTable t;
    if (a.name == "beam-search") {
        const BeamSearchResult r = beam_assignment_search(s, parse_ints(a.candidates, "--candidates"), g.seed);
        t.columns = {"b_R", "peb_m"};
        for (size_t i = 0; i < r.candidates.size(); ++i) t.rows.push_back({double(r.candidates[i]), r.peb[i]});
        log(g, "best b_R = " + std::to_string(r.best_b_R) + ", PEB " + format_number(r.best_peb) + " m");
    } else if (a.name == "ris-snr-max") {
        if (!s.ris.enabled) throw ConfigError("ris-snr-max needs ris.enabled=true");
        const ArraySpec bs = bs_spec(s), ris = *ris_spec(s);
        t.columns = {"ris_quant_bits", "aggregate_gain", "max_gain"};
        const RisProfile p = ris_snr_max(bs, ris, s.ue.position, s.wf.fc, s.wave_model);
        for (int bits : {0, 1, 2, 3}) {
            const RisProfile q = bits ? quantize_profile(p, bits) : p;
            t.rows.push_back({double(bits), ris_aggregate_gain(bs, ris, s.ue.position, s.wf.fc, s.wave_model, q),
                              double(ris.num_sa() * ris.num_ae_per_sa())});
        }
    } else if (a.name == "ris-minmax") {
        if (a.region.empty()) throw ConfigError("ris-minmax needs --region 'x,y,z;...'");
        const auto region = parse_points(a.region, "--region");
        const MinMaxResult r = ris_minmax_peb(s, region, {}, g.seed, a.max_iter);
        t.columns = {"x_m", "y_m", "z_m", "peb_m"};
        for (size_t i = 0; i < region.size(); ++i)
            t.rows.push_back({region[i](0), region[i](1), region[i](2), r.peb[i]});
        log(g, "worst-case PEB " + format_number(r.initial_worst_peb) + " -> " + format_number(r.worst_peb) + " m after " +
                   std::to_string(r.iterations) + " iterations");
    } else if (a.name == "ris-placement") {
        if (a.positions.empty() || a.grid_x.empty() || a.grid_y.empty())
            throw ConfigError("ris-placement needs --positions, --grid-x and --grid-y");
        const std::vector<double> yaws = parse_doubles(a.yaws, "--yaws");
        const auto cands = placement_candidates(parse_points(a.positions, "--positions"), yaws);
        std::vector<Vec3> grid;
        for (double x : parse_range(a.grid_x, "--grid-x"))
            for (double y : parse_range(a.grid_y, "--grid-y")) grid.emplace_back(x, y, s.ue.position(2));
        const CoverageReport r = ris_placement_coverage(s, cands, grid, a.eps, g.seed);
        t.columns = {"x_m", "y_m", "z_m", "yaw_rad", "covered_points", "grid_points"};
        for (size_t i = 0; i < cands.size(); ++i)
            t.rows.push_back({cands[i].position(0), cands[i].position(1), cands[i].position(2),
                              cands[i].orientation(0), double(r.counts[i]), double(grid.size())});
        log(g, "best candidate index " + std::to_string(r.best));
    } else {
        throw ConfigError("unknown optimizer '" + a.name +
                          "' (expected beam-search, ris-snr-max, ris-minmax or ris-placement)");
    }
    emit(g, t);
    return 0;
}

int cmd_reproduce(const Globals &g, const std::string &fig, bool full) {
    figure_preset(fig, full); // name check before any work
    log(g, "reproducing " + fig + (full ? " (full scale)" : " (desk scale)") + ", seed " + std::to_string(g.seed));
    const ResultTable t = reproduce(fig, g.seed, full, [&](const std::string &m) { log(g, m); });
    emit(g, t);
    return 0;
}

int cmd_validate(const Globals &g, const std::string &file, bool print) {
    Globals h = g;
    if (!file.empty()) h.scenario = file;
    const Scenario s = load(h);
    validate(s);
    realize(s, h.seed, 0); // array/geometry checks that need the full model
    if (print) std::fputs(scenario_to_yaml(s).c_str(), stdout);
    log(h, "configuration is valid");
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"thzloc: THz localization bounds, estimators and RIS optimization"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("-c,--scenario", g.scenario, "scenario file or name in $THZLOC_CONFIG_DIR / ./configs");
    app.add_option("--set", g.sets, "override a config value, dotted.key=value (repeatable)")
        ->expected(1)
        ->take_all();
    app.add_option("--seed", g.seed, "master seed");
    app.add_option("-o,--output", g.output, "output file ('-' for stdout)");
    app.add_option("--format", g.format, "output format")->check(CLI::IsMember({"csv", "json"}));
    app.add_option("-j,--threads", g.threads, "worker threads (default: all cores)")->check(CLI::NonNegativeNumber);
    app.add_flag("-q,--quiet", g.quiet, "suppress log messages");

    int bound_trials = 1;
    auto *bound = app.add_subcommand("bound", "print PEB/OEB/RPEB for the scenario");
    bound->add_option("--trials", bound_trials, "independent beam/pilot realizations");

    std::string method = "multistage", box;
    int est_trials = 100;
    bool per_trial = false;
    auto *est = app.add_subcommand("estimate", "Monte-Carlo estimator trials against the bound");
    est->add_option("--method", method, "direct | multistage");
    est->add_option("--trials", est_trials, "noise realizations");
    est->add_option("--box", box, "direct search box 'xlo,ylo,zlo;xhi,yhi,zhi'");
    est->add_flag("--per-trial", per_trial, "one row per trial instead of the summary");

    OptimizeArgs oa;
    auto *opt = app.add_subcommand("optimize", "run a named optimizer");
    opt->add_option("name", oa.name, "beam-search | ris-snr-max | ris-minmax | ris-placement")->required();
    opt->add_option("--candidates", oa.candidates, "beam-search: b_R values, comma separated");
    opt->add_option("--region", oa.region, "ris-minmax: region points 'x,y,z;...'");
    opt->add_option("--max-iter", oa.max_iter, "ris-minmax: iteration cap");
    opt->add_option("--positions", oa.positions, "ris-placement: candidate RIS positions 'x,y,z;...'");
    opt->add_option("--yaws", oa.yaws, "ris-placement: candidate yaw angles [rad], comma separated");
    opt->add_option("--grid-x", oa.grid_x, "ris-placement: UE grid lo:hi:n");
    opt->add_option("--grid-y", oa.grid_y, "ris-placement: UE grid lo:hi:n");
    opt->add_option("--eps", oa.eps, "ris-placement: PEB threshold [m]");

    std::string fig;
    bool full = false;
    auto *rep = app.add_subcommand("reproduce", "run a bundled figure preset (fig6 ... fig12)");
    rep->add_option("figure", fig, "preset name")->required();
    rep->add_flag("--full", full, "full-scale grids and trial counts");

    std::string vfile;
    bool vprint = false;
    auto *val = app.add_subcommand("validate", "check a configuration without running");
    val->add_option("file", vfile, "scenario file or name");
    val->add_flag("--print", vprint, "print the resolved configuration");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        std::fprintf(stderr, "thzloc: %s\n\n%s", e.what(), app.help().c_str());
        return 2;
    }
    if (g.threads > 0) omp_set_num_threads(g.threads);

    try {
        if (*bound) return cmd_bound(g, bound_trials);
        if (*est) return cmd_estimate(g, method, est_trials, per_trial, box);
        if (*opt) return cmd_optimize(g, oa);
        if (*rep) return cmd_reproduce(g, fig, full);
        if (*val) return cmd_validate(g, vfile, vprint);
    } catch (const ConfigError &e) {
        std::fprintf(stderr, "thzloc: config error: %s\n", e.what());
        return 2;
    } catch (const DomainError &e) {
        std::fprintf(stderr, "thzloc: config error: %s\n", e.what());
        return 2;
    } catch (const DegenerateGeometry &e) {
        std::fprintf(stderr, "thzloc: config error: %s\n", e.what());
        return 2;
    } catch (const NumericalFailure &e) {
        std::fprintf(stderr, "thzloc: numerical failure: %s\n", e.what());
        return 3;
    } catch (const std::exception &e) {
        std::fprintf(stderr, "thzloc: error: %s\n", e.what());
        return 1;
    }
    return 0;
}
