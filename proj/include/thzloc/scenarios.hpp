// SPDX-License-Identifier: Apache-2.0
// Scenario configuration (YAML), realization into a forward model plus pilots,
// parameter sweeps, CSV/JSON emission and the bundled figure presets.
//
// The config grammar is documented in docs/config.md.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "thzloc/fim.hpp"
#include "thzloc/model.hpp"

namespace thzloc {

inline constexpr int kSchemaVersion = 1;

enum class BeamPolicy { Random, Prior };
enum class RisPolicy { Random, SnrMax, Unit };
enum class Architecture { Aosa, Hybrid };

struct ArrayConfig {
    Vec3 position = Vec3::Zero();
    Vec3 orientation = Vec3::Zero();
    int sa_rows = 1, sa_cols = 1;
    int ae_rows = 1, ae_cols = 1;
    double ae_spacing_lambda = 0.5; // element spacing in carrier wavelengths
    double sa_spacing_m = 0.0;      // <= 0: contiguous tiling
    GainModel gain;
};

struct RisConfig {
    bool enabled = false;
    Vec3 position = Vec3::Zero();
    Vec3 orientation = Vec3::Zero();
    int rows = 1, cols = 1;
    double spacing_lambda = 0.5;
    RisPolicy profile = RisPolicy::Random; // phase quantization: impairments.ris_quant_bits
};

struct Scenario {
    int schema_version = kSchemaVersion;
    std::string preset = "thz";
    Waveform wf;     // wf.P_mW is derived from P_dBm
    double P_dBm = 10.0;
    ArrayConfig bs, ue;
    RisConfig ris;
    std::vector<Scatterer> scatterers;
    double nlos_coefficient = 1.0; // used for scatterers listed without a coefficient
    WaveModel wave_model = WaveModel::SWM;
    bool bse = false;
    bool include_los = true;
    double absorption_per_m = 0.0;
    double clock_offset = 0.0;
    bool clock_known = true;
    GainKnowledge gains = GainKnowledge::Unknown;
    int dims = 2;
    bool estimate_scatterers = true;
    BeamPolicy bs_beams = BeamPolicy::Random;
    BeamPolicy ue_beams = BeamPolicy::Random;
    int b_R = 0; // BS subarrays aimed at the RIS under the prior policy
    EnergyNorm energy = EnergyNorm::PerSymbol;
    Architecture architecture = Architecture::Aosa;
    int rf_chains_bs = 0, rf_chains_ue = 0; // hybrid only
    ImpairmentConfig impairments;
    std::uint64_t seed = 1;
};

// Parse YAML text (possibly empty) on top of the selected preset's defaults and apply
// dotted-key overrides ("waveform.P_dBm=13"). Unknown keys and invalid values throw
// ConfigError naming the key.
Scenario load_scenario(const std::string &text, const std::vector<std::string> &overrides = {});
Scenario load_scenario_file(const std::string &path, const std::vector<std::string> &overrides = {});
// Resolve a scenario argument: an existing path, or a name looked up in the default
// config directory ($THZLOC_CONFIG_DIR, then ./configs).
std::string resolve_scenario_path(const std::string &name);
std::string scenario_to_yaml(const Scenario &s);
Scenario preset_defaults(const std::string &name); // "thz" or "mmwave"
void validate(const Scenario &s);

// Derived array specifications (spacings converted to meters at f_c).
ArraySpec bs_spec(const Scenario &s);
ArraySpec ue_spec(const Scenario &s);
std::optional<ArraySpec> ris_spec(const Scenario &s);

// A scenario with its random draws fixed: model configuration and pilot schedule.
struct Realization {
    ModelConfig cfg;
    PilotSchedule sched;
};
// Stochastic draws (beams, pilots, RIS phases) come from streams derived from (seed, trial).
Realization realize(const Scenario &s, std::uint64_t seed, int trial = 0);

struct BoundSummary {
    double peb = 0.0;
    double oeb = 0.0;               // Euler convention, NaN without orientation
    std::vector<double> rpeb;
    std::vector<std::string> rpeb_names;
    int rank = 0;
    int params = 0;
};
BoundSummary compute_bounds(const Realization &r);

// ---------------------------------------------------------------- sweeps

// One output column: a metric evaluated on the scenario with extra overrides.
// metric: peb | oeb | rpeb.<path> (e.g. rpeb.N1) | peb_adaptive
struct SweepColumn {
    std::string name;
    std::vector<std::string> overrides;
    std::string metric = "peb";
};

// A swept axis. Each value is substituted into every key in `keys`.
struct SweepAxis {
    std::string column;
    std::vector<std::string> keys;
    std::vector<std::string> values;
};

struct SweepSpec {
    std::string base_text;                 // YAML scenario text
    std::vector<std::string> base_overrides;
    std::vector<SweepAxis> axes;           // cartesian product, first axis slowest
    std::vector<SweepColumn> columns;
    int trials = 1;
    std::vector<int> adaptive_candidates;  // b_R values for peb_adaptive
};

struct ResultTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
    std::vector<std::string> failures; // one message per failed cell
};

using ProgressFn = std::function<void(const std::string &)>;
ResultTable run_sweep(const SweepSpec &spec, std::uint64_t seed, const ProgressFn &progress = {});

std::string format_number(double v); // 17 significant digits, nan/inf spelled out
std::string to_csv(const ResultTable &t);
std::string to_json(const ResultTable &t);
void emit_results(const ResultTable &t, const std::string &format, const std::string &path);

// ---------------------------------------------------------------- presets

std::vector<std::string> figure_names(); // fig6 ... fig12
SweepSpec figure_preset(const std::string &name, bool full = false);
ResultTable reproduce(const std::string &name, std::uint64_t seed, bool full = false, const ProgressFn &progress = {});

} // namespace thzloc
