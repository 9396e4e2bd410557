// SPDX-License-Identifier: Apache-2.0
#include <yaml-cpp/yaml.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "thzloc/errors.hpp"
#include "thzloc/optimize.hpp"
#include "thzloc/scenarios.hpp"

namespace thzloc {

namespace {

[[noreturn]] void bad(const std::string &key, const std::string &msg) {
    throw ConfigError("config key '" + key + "': " + msg);
}

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string vec3(const Vec3 &v) { return "[" + num(v(0)) + ", " + num(v(1)) + ", " + num(v(2)) + "]"; }

const char *policy_name(BeamPolicy p) { return p == BeamPolicy::Prior ? "prior" : "random"; }

const char *ris_policy_name(RisPolicy p) {
    switch (p) {
    case RisPolicy::SnrMax: return "snr_max";
    case RisPolicy::Unit: return "unit";
    default: return "random";
    }
}

void emit_array(std::ostringstream &os, const char *name, const ArrayConfig &a, BeamPolicy beams, int rf) {
    os << name << ":\n";
    os << "  position: " << vec3(a.position) << "\n";
    os << "  orientation: " << vec3(a.orientation) << "\n";
    os << "  subarrays: [" << a.sa_rows << ", " << a.sa_cols << "]\n";
    os << "  elements: [" << a.ae_rows << ", " << a.ae_cols << "]\n";
    os << "  ae_spacing_lambda: " << num(a.ae_spacing_lambda) << "\n";
    os << "  sa_spacing_m: " << num(a.sa_spacing_m) << "\n";
    os << "  beams: " << policy_name(beams) << "\n";
    os << "  rf_chains: " << rf << "\n";
    os << "  gain:\n";
    os << "    kind: " << (a.gain.kind == GainModel::Kind::Sector ? "sector" : "omni") << "\n";
    os << "    G0: " << num(a.gain.G0) << "\n";
    os << "    phi_h: " << num(a.gain.phi_h) << "\n";
    os << "    theta_h: " << num(a.gain.theta_h) << "\n";
}

// ---- typed readers ----

double get_num(const YAML::Node &n, const std::string &key) {
    if (!n || !n.IsScalar()) bad(key, "expected a number");
    try {
        return n.as<double>();
    } catch (const YAML::Exception &) {
        bad(key, "expected a number, got '" + n.Scalar() + "'");
    }
}

int get_int(const YAML::Node &n, const std::string &key) {
    const double v = get_num(n, key);
    if (v != std::floor(v) || std::abs(v) > 1e9) bad(key, "expected an integer");
    return static_cast<int>(v);
}

bool get_bool(const YAML::Node &n, const std::string &key) {
    if (!n || !n.IsScalar()) bad(key, "expected true or false");
    try {
        return n.as<bool>();
    } catch (const YAML::Exception &) {
        bad(key, "expected true or false, got '" + n.Scalar() + "'");
    }
}

std::string get_str(const YAML::Node &n, const std::string &key) {
    if (!n || !n.IsScalar()) bad(key, "expected a string");
    return n.Scalar();
}

Vec3 get_vec3(const YAML::Node &n, const std::string &key) {
    if (!n || !n.IsSequence() || n.size() != 3) bad(key, "expected a list of three numbers");
    Vec3 v;
    for (int i = 0; i < 3; ++i) v(i) = get_num(n[i], key + "[" + std::to_string(i) + "]");
    return v;
}

void get_pair(const YAML::Node &n, const std::string &key, int &a, int &b) {
    if (!n || !n.IsSequence() || n.size() != 2) bad(key, "expected a list of two integers");
    a = get_int(n[0], key + "[0]");
    b = get_int(n[1], key + "[1]");
    if (a < 1 || b < 1) bad(key, "dimensions must be >= 1");
}

template <class E>
E get_enum(const YAML::Node &n, const std::string &key, std::initializer_list<std::pair<const char *, E>> opts) {
    const std::string s = get_str(n, key);
    std::string allowed;
    for (const auto &o : opts) {
        if (s == o.first) return o.second;
        allowed += (allowed.empty() ? "" : "|") + std::string(o.first);
    }
    bad(key, "expected one of " + allowed + ", got '" + s + "'");
}

// ---- tree handling ----

YAML::Node merge(const YAML::Node &def, const YAML::Node &user, const std::string &path) {
    if (!user || user.IsNull()) return YAML::Clone(def);
    if (!user.IsMap()) bad(path.empty() ? "<root>" : path, "expected a mapping");
    YAML::Node out = YAML::Clone(def);
    for (const auto &kv : user) {
        const std::string k = kv.first.Scalar();
        const std::string full = path.empty() ? k : path + "." + k;
        const YAML::Node d = def[k];
        if (!d) bad(full, "unknown key");
        if (d.IsMap()) {
            out[k] = merge(d, kv.second, full);
        } else {
            out[k] = YAML::Clone(kv.second);
        }
    }
    return out;
}

bool is_index(const std::string &s) {
    return !s.empty() && s.find_first_not_of("0123456789") == std::string::npos;
}

void set_path(YAML::Node node, const std::vector<std::string> &parts, size_t i, const YAML::Node &value,
              const std::string &full) {
    const std::string &k = parts[i];
    const bool last = i + 1 == parts.size();
    if (node.IsSequence()) {
        if (!is_index(k)) bad(full, "list index expected at '" + k + "'");
        const size_t idx = std::stoul(k);
        if (idx >= node.size()) bad(full, "list index " + k + " out of range");
        if (last) {
            node[idx] = value;
            return;
        }
        set_path(node[idx], parts, i + 1, value, full);
        return;
    }
    if (last) {
        node[k] = value;
        return;
    }
    YAML::Node child = node[k];
    if (!child || !(child.IsMap() || child.IsSequence())) {
        node[k] = YAML::Node(YAML::NodeType::Map);
        child = node[k];
    }
    set_path(child, parts, i + 1, value, full);
}

std::vector<std::string> split(const std::string &s, char c) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == c) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

void apply_override(YAML::Node &root, const std::string &ov) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + ov + "' must look like key.path=value");
    const std::string key = ov.substr(0, eq);
    const std::string val = ov.substr(eq + 1);
    if (val.empty()) bad(key, "empty override value");
    YAML::Node v;
    try {
        v = YAML::Load(val);
    } catch (const YAML::Exception &e) {
        bad(key, std::string("cannot parse override value: ") + e.what());
    }
    auto parts = split(key, '.');
    for (const auto &p : parts)
        if (p.empty()) bad(key, "empty path component");
    if (!root || !root.IsMap()) root = YAML::Node(YAML::NodeType::Map);
    set_path(root, parts, 0, v, key);
}

void read_array(const YAML::Node &n, const std::string &p, ArrayConfig &a, BeamPolicy &beams, int &rf) {
    a.position = get_vec3(n["position"], p + ".position");
    a.orientation = get_vec3(n["orientation"], p + ".orientation");
    get_pair(n["subarrays"], p + ".subarrays", a.sa_rows, a.sa_cols);
    get_pair(n["elements"], p + ".elements", a.ae_rows, a.ae_cols);
    a.ae_spacing_lambda = get_num(n["ae_spacing_lambda"], p + ".ae_spacing_lambda");
    if (!(a.ae_spacing_lambda > 0.0)) bad(p + ".ae_spacing_lambda", "must be > 0");
    a.sa_spacing_m = get_num(n["sa_spacing_m"], p + ".sa_spacing_m");
    beams = get_enum<BeamPolicy>(n["beams"], p + ".beams", {{"random", BeamPolicy::Random}, {"prior", BeamPolicy::Prior}});
    rf = get_int(n["rf_chains"], p + ".rf_chains");
    if (rf < 0) bad(p + ".rf_chains", "must be >= 0");
    const YAML::Node g = n["gain"];
    a.gain.kind = get_enum<GainModel::Kind>(g["kind"], p + ".gain.kind",
                                            {{"omni", GainModel::Kind::Omni}, {"sector", GainModel::Kind::Sector}});
    a.gain.G0 = get_num(g["G0"], p + ".gain.G0");
    a.gain.phi_h = get_num(g["phi_h"], p + ".gain.phi_h");
    a.gain.theta_h = get_num(g["theta_h"], p + ".gain.theta_h");
    if (!(a.gain.G0 > 0.0)) bad(p + ".gain.G0", "must be > 0");
    if (!(a.gain.phi_h > 0.0) || !(a.gain.theta_h > 0.0)) bad(p + ".gain", "beamwidths must be > 0");
}

Scenario from_tree(const YAML::Node &t) {
    Scenario s;
    s.schema_version = get_int(t["schema_version"], "schema_version");
    if (s.schema_version != kSchemaVersion)
        bad("schema_version", "unsupported version " + std::to_string(s.schema_version) + " (expected " +
                                  std::to_string(kSchemaVersion) + ")");
    s.preset = get_str(t["preset"], "preset");
    const double seed = get_num(t["seed"], "seed");
    if (seed < 0 || seed != std::floor(seed)) bad("seed", "expected a non-negative integer");
    s.seed = static_cast<std::uint64_t>(seed);

    const YAML::Node w = t["waveform"];
    s.wf.fc = get_num(w["fc_Hz"], "waveform.fc_Hz");
    s.wf.W = get_num(w["bandwidth_Hz"], "waveform.bandwidth_Hz");
    s.wf.K = get_int(w["subcarriers"], "waveform.subcarriers");
    s.wf.G = get_int(w["transmissions"], "waveform.transmissions");
    s.P_dBm = get_num(w["P_dBm"], "waveform.P_dBm");
    s.wf.P_mW = std::pow(10.0, s.P_dBm / 10.0);
    s.wf.noise_psd_dBm_Hz = get_num(w["noise_psd_dBm_Hz"], "waveform.noise_psd_dBm_Hz");
    s.wf.noise_figure_dB = get_num(w["noise_figure_dB"], "waveform.noise_figure_dB");
    s.energy = get_enum<EnergyNorm>(w["energy_normalization"], "waveform.energy_normalization",
                                    {{"per_symbol", EnergyNorm::PerSymbol}, {"total", EnergyNorm::Total}});
    if (!(s.wf.fc > 0.0)) bad("waveform.fc_Hz", "must be > 0");
    if (!(s.wf.W > 0.0)) bad("waveform.bandwidth_Hz", "must be > 0");
    if (s.wf.K < 1) bad("waveform.subcarriers", "must be >= 1");
    if (s.wf.G < 1) bad("waveform.transmissions", "must be >= 1");

    read_array(t["bs"], "bs", s.bs, s.bs_beams, s.rf_chains_bs);
    read_array(t["ue"], "ue", s.ue, s.ue_beams, s.rf_chains_ue);
    s.b_R = get_int(t["bs"]["ris_beams"], "bs.ris_beams");

    const YAML::Node r = t["ris"];
    s.ris.enabled = get_bool(r["enabled"], "ris.enabled");
    s.ris.position = get_vec3(r["position"], "ris.position");
    s.ris.orientation = get_vec3(r["orientation"], "ris.orientation");
    get_pair(r["elements"], "ris.elements", s.ris.rows, s.ris.cols);
    s.ris.spacing_lambda = get_num(r["spacing_lambda"], "ris.spacing_lambda");
    if (!(s.ris.spacing_lambda > 0.0)) bad("ris.spacing_lambda", "must be > 0");
    s.ris.profile = get_enum<RisPolicy>(r["profile"], "ris.profile",
                                        {{"random", RisPolicy::Random}, {"snr_max", RisPolicy::SnrMax}, {"unit", RisPolicy::Unit}});

    const YAML::Node c = t["channel"];
    s.wave_model = get_enum<WaveModel>(c["wave_model"], "channel.wave_model", {{"swm", WaveModel::SWM}, {"pwm", WaveModel::PWM}});
    s.bse = get_bool(c["beam_split"], "channel.beam_split");
    s.include_los = get_bool(c["los"], "channel.los");
    s.absorption_per_m = get_num(c["absorption_per_m"], "channel.absorption_per_m");
    if (s.absorption_per_m < 0.0) bad("channel.absorption_per_m", "must be >= 0");
    s.nlos_coefficient = get_num(c["nlos_coefficient"], "channel.nlos_coefficient");
    if (!(s.nlos_coefficient >= 0.0 && s.nlos_coefficient <= 1.0)) bad("channel.nlos_coefficient", "must be in [0, 1]");

    const YAML::Node sc = t["scatterers"];
    if (sc && !sc.IsNull()) {
        if (!sc.IsSequence()) bad("scatterers", "expected a list");
        for (size_t i = 0; i < sc.size(); ++i) {
            const std::string p = "scatterers." + std::to_string(i);
            const YAML::Node e = sc[i];
            if (!e.IsMap()) bad(p, "expected a mapping with position and coefficient");
            for (const auto &kv : e) {
                const std::string k = kv.first.Scalar();
                if (k != "position" && k != "coefficient") bad(p + "." + k, "unknown key");
            }
            Scatterer x;
            x.position = get_vec3(e["position"], p + ".position");
            x.coefficient = e["coefficient"] ? get_num(e["coefficient"], p + ".coefficient") : s.nlos_coefficient;
            if (!(x.coefficient >= 0.0 && x.coefficient <= 1.0)) bad(p + ".coefficient", "must be in [0, 1]");
            s.scatterers.push_back(x);
        }
    }

    const YAML::Node y = t["sync"];
    s.clock_offset = get_num(y["offset_s"], "sync.offset_s");
    s.clock_known = get_bool(y["known"], "sync.known");
    s.gains = get_enum<GainKnowledge>(t["gains"], "gains", {{"unknown", GainKnowledge::Unknown}, {"partial", GainKnowledge::Partial}});
    const YAML::Node l = t["localization"];
    s.dims = get_int(l["dims"], "localization.dims");
    if (s.dims != 2 && s.dims != 3) bad("localization.dims", "must be 2 or 3");
    s.estimate_scatterers = get_bool(l["estimate_scatterers"], "localization.estimate_scatterers");
    s.architecture = get_enum<Architecture>(t["architecture"], "architecture",
                                            {{"aosa", Architecture::Aosa}, {"hybrid", Architecture::Hybrid}});
    const YAML::Node im = t["impairments"];
    s.impairments.kappa_t = get_num(im["kappa_t"], "impairments.kappa_t");
    s.impairments.kappa_r = get_num(im["kappa_r"], "impairments.kappa_r");
    s.impairments.phase_noise_std = get_num(im["phase_noise_std"], "impairments.phase_noise_std");
    s.impairments.ps_quant_bits = get_int(im["ps_quant_bits"], "impairments.ps_quant_bits");
    s.impairments.ris_quant_bits = get_int(im["ris_quant_bits"], "impairments.ris_quant_bits");
    s.impairments.adc_bits = get_int(im["adc_bits"], "impairments.adc_bits");
    validate(s);
    return s;
}

YAML::Node parse_text(const std::string &text) {
    try {
        return YAML::Load(text);
    } catch (const YAML::Exception &e) {
        throw ConfigError(std::string("config is not valid YAML: ") + e.what());
    }
}

} // namespace

Scenario preset_defaults(const std::string &name) {
    Scenario s;
    s.preset = name;
    s.ue.position = Vec3(10.0, 0.0, 0.0);
    s.ue.orientation = Vec3(5.0 * M_PI / 6.0, 0.0, 0.0);
    s.ris.position = Vec3(5.0, 5.0, 0.0);
    s.ris.orientation = Vec3(-M_PI / 2.0, 0.0, 0.0);
    s.wf.P_mW = std::pow(10.0, s.P_dBm / 10.0);
    if (name == "thz") {
        s.wf.fc = 0.3e12;
        s.bs.sa_rows = s.bs.sa_cols = 4;
        s.bs.ae_rows = s.bs.ae_cols = 5;
        s.ue.sa_rows = s.ue.sa_cols = 2;
        s.ue.ae_rows = s.ue.ae_cols = 5;
        s.ris.rows = s.ris.cols = 100;
    } else if (name == "mmwave") {
        s.wf.fc = 60e9;
        s.bs.sa_rows = s.bs.sa_cols = 4;
        s.ue.sa_rows = s.ue.sa_cols = 2;
        s.ris.rows = s.ris.cols = 20;
    } else {
        bad("preset", "expected one of thz|mmwave, got '" + name + "'");
    }
    return s;
}

std::string scenario_to_yaml(const Scenario &s) {
    std::ostringstream os;
    os << "schema_version: " << s.schema_version << "\n";
    os << "preset: " << s.preset << "\n";
    os << "seed: " << s.seed << "\n";
    os << "waveform:\n";
    os << "  fc_Hz: " << num(s.wf.fc) << "\n";
    os << "  bandwidth_Hz: " << num(s.wf.W) << "\n";
    os << "  subcarriers: " << s.wf.K << "\n";
    os << "  transmissions: " << s.wf.G << "\n";
    os << "  P_dBm: " << num(s.P_dBm) << "\n";
    os << "  noise_psd_dBm_Hz: " << num(s.wf.noise_psd_dBm_Hz) << "\n";
    os << "  noise_figure_dB: " << num(s.wf.noise_figure_dB) << "\n";
    os << "  energy_normalization: " << (s.energy == EnergyNorm::Total ? "total" : "per_symbol") << "\n";
    emit_array(os, "bs", s.bs, s.bs_beams, s.rf_chains_bs);
    os << "  ris_beams: " << s.b_R << "\n";
    emit_array(os, "ue", s.ue, s.ue_beams, s.rf_chains_ue);
    os << "ris:\n";
    os << "  enabled: " << (s.ris.enabled ? "true" : "false") << "\n";
    os << "  position: " << vec3(s.ris.position) << "\n";
    os << "  orientation: " << vec3(s.ris.orientation) << "\n";
    os << "  elements: [" << s.ris.rows << ", " << s.ris.cols << "]\n";
    os << "  spacing_lambda: " << num(s.ris.spacing_lambda) << "\n";
    os << "  profile: " << ris_policy_name(s.ris.profile) << "\n";
    os << "channel:\n";
    os << "  wave_model: " << (s.wave_model == WaveModel::PWM ? "pwm" : "swm") << "\n";
    os << "  beam_split: " << (s.bse ? "true" : "false") << "\n";
    os << "  los: " << (s.include_los ? "true" : "false") << "\n";
    os << "  absorption_per_m: " << num(s.absorption_per_m) << "\n";
    os << "  nlos_coefficient: " << num(s.nlos_coefficient) << "\n";
    if (s.scatterers.empty()) {
        os << "scatterers: []\n";
    } else {
        os << "scatterers:\n";
        for (const auto &x : s.scatterers)
            os << "  - {position: " << vec3(x.position) << ", coefficient: " << num(x.coefficient) << "}\n";
    }
    os << "sync:\n";
    os << "  offset_s: " << num(s.clock_offset) << "\n";
    os << "  known: " << (s.clock_known ? "true" : "false") << "\n";
    os << "gains: " << (s.gains == GainKnowledge::Partial ? "partial" : "unknown") << "\n";
    os << "localization:\n";
    os << "  dims: " << s.dims << "\n";
    os << "  estimate_scatterers: " << (s.estimate_scatterers ? "true" : "false") << "\n";
    os << "architecture: " << (s.architecture == Architecture::Hybrid ? "hybrid" : "aosa") << "\n";
    os << "impairments:\n";
    os << "  kappa_t: " << num(s.impairments.kappa_t) << "\n";
    os << "  kappa_r: " << num(s.impairments.kappa_r) << "\n";
    os << "  phase_noise_std: " << num(s.impairments.phase_noise_std) << "\n";
    os << "  ps_quant_bits: " << s.impairments.ps_quant_bits << "\n";
    os << "  ris_quant_bits: " << s.impairments.ris_quant_bits << "\n";
    os << "  adc_bits: " << s.impairments.adc_bits << "\n";
    return os.str();
}

Scenario load_scenario(const std::string &text, const std::vector<std::string> &overrides) {
    YAML::Node user = parse_text(text);
    if (user && !user.IsNull() && !user.IsMap()) throw ConfigError("config root must be a mapping");
    if (!user || user.IsNull()) user = YAML::Node(YAML::NodeType::Map);
    std::string preset = "thz";
    if (user["preset"]) preset = get_str(user["preset"], "preset");
    for (const auto &ov : overrides)
        if (ov.rfind("preset=", 0) == 0) preset = ov.substr(7);
    const YAML::Node def = parse_text(scenario_to_yaml(preset_defaults(preset)));
    // overrides go onto the merged tree so list indices resolve against defaults;
    // the second merge rejects keys the overrides introduced
    YAML::Node tree = merge(def, user, "");
    for (const auto &ov : overrides) apply_override(tree, ov);
    return from_tree(merge(def, tree, ""));
}

Scenario load_scenario_file(const std::string &path, const std::vector<std::string> &overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read scenario file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return load_scenario(ss.str(), overrides);
}

std::string resolve_scenario_path(const std::string &name) {
    namespace fs = std::filesystem;
    if (fs::exists(name)) return name;
    std::vector<fs::path> dirs;
    if (const char *env = std::getenv("THZLOC_CONFIG_DIR"); env && *env) dirs.emplace_back(env);
    dirs.emplace_back("configs");
    for (const auto &d : dirs) {
        for (const char *ext : {"", ".yaml", ".yml", ".cfg"}) {
            fs::path p = d / (name + ext);
            if (fs::exists(p)) return p.string();
        }
    }
    throw ConfigError("scenario '" + name + "' not found (checked the path, $THZLOC_CONFIG_DIR and ./configs)");
}

void validate(const Scenario &s) {
    s.wf.validate();
    s.impairments.validate();
    bs_spec(s).validate();
    ue_spec(s).validate();
    if (s.ris.enabled) ris_spec(s)->validate();
    if (s.b_R < 0 || s.b_R > s.bs.sa_rows * s.bs.sa_cols) bad("bs.ris_beams", "must be between 0 and the BS subarray count");
    if (s.architecture == Architecture::Hybrid) {
        if (s.bs.ae_rows * s.bs.ae_cols != 1 || s.ue.ae_rows * s.ue.ae_cols != 1)
            bad("architecture", "hybrid mode expects single-element subarrays (elements: [1, 1])");
        if (s.rf_chains_bs < 1 || s.rf_chains_bs > s.bs.sa_rows * s.bs.sa_cols)
            bad("bs.rf_chains", "hybrid mode needs 1..N_B RF chains");
        if (s.rf_chains_ue < 1 || s.rf_chains_ue > s.ue.sa_rows * s.ue.sa_cols)
            bad("ue.rf_chains", "hybrid mode needs 1..N_U RF chains");
    }
    if ((s.ue.position - s.bs.position).norm() == 0.0) bad("ue.position", "coincides with the BS");
}

namespace {
ArraySpec make_spec(const ArrayConfig &a, Role role, double lambda) {
    ArraySpec sp;
    sp.role = role;
    sp.pose.position = a.position;
    sp.pose.orientation = a.orientation;
    sp.sa_rows = a.sa_rows;
    sp.sa_cols = a.sa_cols;
    sp.ae_rows = a.ae_rows;
    sp.ae_cols = a.ae_cols;
    sp.ae_spacing = a.ae_spacing_lambda * lambda;
    sp.sa_spacing = a.sa_spacing_m;
    sp.gain = a.gain;
    return sp;
}
} // namespace

ArraySpec bs_spec(const Scenario &s) { return make_spec(s.bs, Role::BS, s.wf.lambda()); }
ArraySpec ue_spec(const Scenario &s) { return make_spec(s.ue, Role::UE, s.wf.lambda()); }

std::optional<ArraySpec> ris_spec(const Scenario &s) {
    if (!s.ris.enabled) return std::nullopt;
    ArraySpec sp;
    sp.role = Role::RIS;
    sp.pose.position = s.ris.position;
    sp.pose.orientation = s.ris.orientation;
    sp.sa_rows = s.ris.rows;
    sp.sa_cols = s.ris.cols;
    sp.sa_spacing = s.ris.spacing_lambda * s.wf.lambda();
    sp.ae_spacing = sp.sa_spacing;
    return sp;
}

namespace {

Vec3 random_beam(Rng &rng) {
    const double az = rng.uniform(-M_PI / 2.0, M_PI / 2.0);
    const double el = rng.uniform(-M_PI / 2.0, M_PI / 2.0);
    return direction_from_angles(az, el);
}

Vec3 local_toward(const ArraySpec &a, const Vec3 &target) {
    Vec3 d = rotation_from_euler(a.pose.orientation).transpose() * (target - a.pose.position);
    return d / d.norm();
}

} // namespace

Realization realize(const Scenario &s, std::uint64_t seed, int trial) {
    validate(s);
    Realization r;
    ModelConfig &c = r.cfg;
    c.bs = bs_spec(s);
    c.ue = ue_spec(s);
    c.ris = ris_spec(s);
    c.scatterers = s.scatterers;
    c.wf = s.wf;
    c.wf.P_mW = std::pow(10.0, s.P_dBm / 10.0);
    c.absorb.k_abs = s.absorption_per_m;
    c.wave_model = s.wave_model;
    c.bse = s.bse;
    c.include_los = s.include_los;
    c.clock_offset = s.clock_offset;
    c.clock_known = s.clock_known;
    c.gains = s.gains;
    c.dims = s.dims;
    c.ps_quant_bits = s.impairments.ps_quant_bits;
    c.estimate_scatterers = s.estimate_scatterers;

    const int G = s.wf.G, K = s.wf.K;
    const int nB = c.bs.num_sa(), nU = c.ue.num_sa();
    PilotSchedule &p = r.sched;
    p.G = G;
    p.K = K;

    const BeamAssignment ba = beam_assignment(c.ris ? s.b_R : 0, nB, nU);
    auto fill_beams = [&](const ArraySpec &a, BeamPolicy pol, const Vec3 &direct, const std::vector<bool> &to_ris,
                          const char *label, std::vector<std::vector<Vec3>> &out) {
        if (a.num_ae_per_sa() == 1) return;
        Rng rng(seed, label, static_cast<std::uint64_t>(trial));
        out.assign(G, std::vector<Vec3>(a.num_sa()));
        const Vec3 toward = local_toward(a, direct);
        const Vec3 toward_ris = c.ris ? local_toward(a, c.ris->pose.position) : toward;
        for (int g = 0; g < G; ++g)
            for (int i = 0; i < a.num_sa(); ++i) {
                if (pol == BeamPolicy::Random)
                    out[g][i] = random_beam(rng);
                else
                    out[g][i] = !to_ris.empty() && to_ris[i] ? toward_ris : toward;
            }
    };
    fill_beams(c.bs, s.bs_beams, c.ue.pose.position, ba.bs_to_ris, "beams.bs", p.bs_beams);
    fill_beams(c.ue, s.ue_beams, c.bs.pose.position, ba.ue_to_ris, "beams.ue", p.ue_beams);

    Rng prng(seed, "pilots", static_cast<std::uint64_t>(trial));
    if (s.architecture == Architecture::Hybrid) {
        Rng crng(seed, "combiner", static_cast<std::uint64_t>(trial));
        auto x0 = random_pilots(s.rf_chains_ue, G, K, s.energy, prng);
        for (int g = 0; g < G; ++g) {
            const Eigen::MatrixXcd WB = random_phase_matrix(nB, s.rf_chains_bs, crng);
            const Eigen::MatrixXcd WU = random_phase_matrix(nU, s.rf_chains_ue, crng);
            p.combiner.push_back(WB.transpose());
            for (int k = 0; k < K; ++k) p.x.push_back(WU * x0[static_cast<size_t>(g) * K + k]);
        }
    } else {
        p.x = random_pilots(nU, G, K, s.energy, prng);
    }

    if (c.ris) {
        const int nR = c.ris->num_sa();
        Rng rrng(seed, "ris", static_cast<std::uint64_t>(trial));
        RisProfile base;
        if (s.ris.profile == RisPolicy::SnrMax)
            base = ris_snr_max(c.bs, *c.ris, c.ue.pose.position, c.wf.fc, s.wave_model);
        for (int g = 0; g < G; ++g) {
            RisProfile prof = RisProfile::unit(nR);
            if (s.ris.profile == RisPolicy::Random)
                for (int i = 0; i < nR; ++i) prof.omega(i) = rrng.uniform(0.0, 2.0 * M_PI);
            else if (s.ris.profile == RisPolicy::SnrMax)
                prof = base;
            if (s.impairments.ris_quant_bits > 0) prof = quantize_profile(prof, s.impairments.ris_quant_bits);
            p.ris.push_back(prof.coefficients());
        }
    }
    return r;
}

BoundSummary compute_bounds(const Realization &r) {
    ForwardModel m(r.cfg, r.sched);
    FimResult f = fim_state_direct(m, m.state_layout().values);
    BoundSummary b;
    b.peb = f.peb;
    b.oeb = f.oeb;
    b.rpeb = f.rpeb;
    b.rpeb_names = f.rpeb_names;
    b.rank = f.rank;
    b.params = static_cast<int>(f.labels.size());
    return b;
}

} // namespace thzloc
