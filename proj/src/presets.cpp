// SPDX-License-Identifier: Apache-2.0
// Bundled figure presets. Desk scale keeps the trial counts and grids small enough for
// a laptop; `full` switches to the larger grids.
#include <cmath>
#include <cstdio>

#include "thzloc/errors.hpp"
#include "thzloc/scenarios.hpp"

namespace thzloc {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::vector<std::string> ints(std::initializer_list<int> v) {
    std::vector<std::string> out;
    for (int i : v) out.push_back(std::to_string(i));
    return out;
}

std::vector<std::string> nums(const std::vector<double> &v) {
    std::vector<std::string> out;
    for (double d : v) out.push_back(fmt(d));
    return out;
}

std::vector<double> logspace(double lo, double hi, int n) {
    std::vector<double> out;
    for (int i = 0; i < n; ++i) out.push_back(std::pow(10.0, lo + (hi - lo) * i / (n - 1)));
    return out;
}

std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> out;
    for (int i = 0; i < n; ++i) out.push_back(n == 1 ? lo : lo + (hi - lo) * i / (n - 1));
    return out;
}

const char *kBase = "schema_version: 1\n";

// fig6: PEB/OEB vs. BS array size n x n at equal footprint and power
SweepSpec fig6(bool full) {
    SweepSpec s;
    s.base_text = kBase;
    s.trials = full ? 50 : 20;
    s.axes.push_back({"n", {"bs.subarrays=[{}, {}]"}, full ? ints({2, 3, 4, 5, 6, 8, 10}) : ints({2, 3, 4})});
    const std::vector<std::string> digital_ue = {"ue.elements=[1, 1]", "bs.elements=[1, 1]"};
    auto with = [](std::vector<std::string> a, std::initializer_list<std::string> b) {
        a.insert(a.end(), b);
        return a;
    };
    s.columns = {
        {"peb_mmwave_m", {"preset=mmwave"}, "peb"},
        {"peb_thz_half_lambda_m", digital_ue, "peb"},
        {"peb_thz_2p5_lambda_m", with(digital_ue, {"bs.ae_spacing_lambda=2.5", "ue.ae_spacing_lambda=2.5"}), "peb"},
        {"peb_thz_aosa_m", {}, "peb"},
        {"peb_thz_aosa_1ghz_m", {"waveform.bandwidth_Hz=1e9"}, "peb"},
        {"peb_thz_aosa_prior_m", {"bs.beams=prior", "ue.beams=prior"}, "peb"},
        {"oeb_mmwave_rad", {"preset=mmwave"}, "oeb"},
        {"oeb_thz_aosa_rad", {}, "oeb"},
        {"oeb_thz_aosa_prior_rad", {"bs.beams=prior", "ue.beams=prior"}, "oeb"},
    };
    return s;
}

// fig7: PEB vs. number of transmissions at fixed total energy
SweepSpec fig7(bool full) {
    SweepSpec s;
    s.base_text = kBase;
    s.base_overrides = {"waveform.energy_normalization=total"};
    s.trials = full ? 50 : 20;
    s.axes.push_back({"G", {"waveform.transmissions={}"},
                      full ? ints({1, 2, 4, 8, 16, 32, 64, 128}) : ints({1, 2, 4, 8, 16, 32, 64})});
    s.columns = {
        {"peb_mmwave_digital_m", {"preset=mmwave"}, "peb"},
        {"peb_aosa_sa2_m", {"bs.elements=[2, 2]", "ue.elements=[2, 2]"}, "peb"},
        {"peb_aosa_sa5_m", {"bs.elements=[5, 5]", "ue.elements=[5, 5]"}, "peb"},
        {"peb_aosa_sa10_m", {"bs.elements=[10, 10]", "ue.elements=[10, 10]"}, "peb"},
    };
    return s;
}

// fig8: PEB vs. UE distance on the x axis, single-antenna UE
SweepSpec fig8(bool full) {
    SweepSpec s;
    s.base_text = kBase;
    s.base_overrides = {"ue.subarrays=[1, 1]", "ue.elements=[1, 1]", "bs.beams=prior", "ue.orientation=[0, 0, 0]"};
    s.trials = 1;
    s.axes.push_back({"distance_m", {"ue.position=[{}, 0, 0]"}, nums(logspace(-1.5, 2.0, full ? 36 : 15))});
    s.columns = {
        {"peb_swm_m", {"channel.wave_model=swm"}, "peb"},
        {"peb_pwm_m", {"channel.wave_model=pwm"}, "peb"},
        {"peb_swm_asyn_m", {"channel.wave_model=swm", "sync.known=false"}, "peb"},
    };
    return s;
}

// fig9: PEB vs. bandwidth with and without beam split, asynchronous UE at [2, 0, 0]
SweepSpec fig9(bool full) {
    SweepSpec s;
    s.base_text = kBase;
    s.base_overrides = {"ue.position=[2, 0, 0]", "bs.beams=prior", "ue.beams=prior", "sync.offset_s=1e-5",
                        "sync.known=false"};
    s.trials = 1;
    s.axes.push_back({"bandwidth_Hz", {"waveform.bandwidth_Hz={}"},
                      nums(full ? logspace(8.0, 10.0, 9) : std::vector<double>{1e8, 1e9, 1e10})});
    const std::string o15 = "bs.orientation=[" + fmt(M_PI / 12.0) + ", 0, 0]";
    const std::string o45 = "bs.orientation=[" + fmt(M_PI / 4.0) + ", 0, 0]";
    s.columns = {
        {"peb_bse_o15_m", {o15, "channel.beam_split=true"}, "peb"},
        {"peb_nobse_o15_m", {o15, "channel.beam_split=false"}, "peb"},
        {"peb_bse_o45_m", {o45, "channel.beam_split=true"}, "peb"},
        {"peb_nobse_o45_m", {o45, "channel.beam_split=false"}, "peb"},
        {"peb_bse_o15_sa10_m", {o15, "channel.beam_split=true", "bs.elements=[10, 10]"}, "peb"},
        {"peb_nobse_o15_sa10_m", {o15, "channel.beam_split=false", "bs.elements=[10, 10]"}, "peb"},
    };
    return s;
}

// fig10: PEB vs. RIS size on the scaled layout
SweepSpec fig10(bool full) {
    SweepSpec s;
    s.base_text = kBase;
    s.base_overrides = {"ris.enabled=true",          "ris.position=[0.5, 0.5, 0.1]", "ue.position=[0.5, 0.4, 0.05]",
                        "ris.profile=snr_max",       "bs.beams=prior",                "ue.beams=prior",
                        "sync.offset_s=1e-5",        "sync.known=false"};
    s.trials = 1;
    s.axes.push_back({"ris_side", {"ris.elements=[{}, {}]"},
                      full ? ints({5, 10, 20, 40, 60, 80, 100}) : ints({5, 10, 15, 20})});
    s.columns = {
        {"peb_bR0_m", {"bs.ris_beams=0"}, "peb"},
        {"peb_bR16_m", {"bs.ris_beams=16"}, "peb"},
        {"peb_adaptive_m", {}, "peb_adaptive"},
        {"peb_bR16_q1_m", {"bs.ris_beams=16", "impairments.ris_quant_bits=1"}, "peb"},
        {"peb_bR16_q2_m", {"bs.ris_beams=16", "impairments.ris_quant_bits=2"}, "peb"},
    };
    s.adaptive_candidates = {0, 2, 4, 8, 12, 16};
    return s;
}

// fig11: PEB/OEB/RPEB vs. reflection coefficient for four reflector layouts
SweepSpec fig11(bool full) {
    SweepSpec s;
    s.base_text = kBase;
    s.base_overrides = {"sync.offset_s=1e-5", "sync.known=false"};
    s.trials = full ? 50 : 20;
    s.axes.push_back({"nlos_coefficient", {"channel.nlos_coefficient={}"},
                      nums(full ? linspace(0.1, 1.0, 10) : std::vector<double>{0.1, 0.25, 0.5, 0.75, 1.0})});
    const std::string l1 = "{position: [5, -5, 0]}", l2 = "{position: [1, 4, 0]}", l3 = "{position: [9, -4, 0]}",
                      l4 = "{position: [5.1, -5, 0]}";
    struct Layout {
        const char *name;
        std::string list;
        int paths;
    };
    const Layout layouts[] = {{"l1", "[" + l1 + "]", 1},
                              {"l12", "[" + l1 + ", " + l2 + "]", 2},
                              {"l123", "[" + l1 + ", " + l2 + ", " + l3 + "]", 3},
                              {"l124", "[" + l1 + ", " + l2 + ", " + l4 + "]", 3}};
    for (const auto &L : layouts) {
        const std::vector<std::string> ov = {"scatterers=" + L.list};
        s.columns.push_back({std::string("peb_") + L.name + "_m", ov, "peb"});
        s.columns.push_back({std::string("oeb_") + L.name + "_rad", ov, "oeb"});
        s.columns.push_back({std::string("rpeb1_") + L.name + "_m", ov, "rpeb.N1"});
    }
    return s;
}

// fig12: PEB map over a 5 x 5 m area with a single transmission
SweepSpec fig12(bool full) {
    SweepSpec s;
    s.base_text = kBase;
    s.base_overrides = {"waveform.transmissions=1", "ris.enabled=true", "ris.position=[2.5, 2.5, 0]",
                        "scatterers=[{position: [2.5, -2.5, 0], coefficient: 0.9}]", "sync.offset_s=1e-5",
                        "sync.known=false", "ue.orientation=[0, 0, 0]"};
    s.trials = 1;
    const std::vector<double> grid = full ? linspace(0.1, 4.9, 25) : linspace(0.5, 4.5, 5);
    std::vector<double> ygrid;
    for (double g : grid) ygrid.push_back(g - 2.5);
    s.axes.push_back({"x_m", {"ue.position.0={}"}, nums(grid)});
    s.axes.push_back({"y_m", {"ue.position.1={}"}, nums(ygrid)});
    const std::string thz_ris = full ? "ris.elements=[100, 100]" : "ris.elements=[40, 40]";
    const std::string thz_ris_spacing = full ? "ris.spacing_lambda=0.5" : "ris.spacing_lambda=1.25";
    s.columns = {
        {"peb_mmwave_m", {"preset=mmwave"}, "peb"},
        {"peb_thz_random_m", {thz_ris, thz_ris_spacing}, "peb"},
        {"peb_thz_prior_m",
         {thz_ris, thz_ris_spacing, "bs.beams=prior", "ue.beams=prior", "bs.ris_beams=4", "ris.profile=snr_max"},
         "peb"},
        {"peb_thz_prior_o150_m",
         {thz_ris, thz_ris_spacing, "bs.beams=prior", "ue.beams=prior", "bs.ris_beams=4", "ris.profile=snr_max",
          "ue.orientation=[" + fmt(5.0 * M_PI / 6.0) + ", 0, 0]"},
         "peb"},
    };
    return s;
}

} // namespace

std::vector<std::string> figure_names() { return {"fig6", "fig7", "fig8", "fig9", "fig10", "fig11", "fig12"}; }

SweepSpec figure_preset(const std::string &name, bool full) {
    if (name == "fig6") return fig6(full);
    if (name == "fig7") return fig7(full);
    if (name == "fig8") return fig8(full);
    if (name == "fig9") return fig9(full);
    if (name == "fig10") return fig10(full);
    if (name == "fig11") return fig11(full);
    if (name == "fig12") return fig12(full);
    throw ConfigError("unknown figure preset '" + name + "' (expected fig6 ... fig12)");
}

ResultTable reproduce(const std::string &name, std::uint64_t seed, bool full, const ProgressFn &progress) {
    return run_sweep(figure_preset(name, full), seed, progress);
}

} // namespace thzloc
