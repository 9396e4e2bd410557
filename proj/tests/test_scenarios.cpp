// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "thzloc/errors.hpp"
#include "thzloc/scenarios.hpp"

using namespace thzloc;

namespace {

std::string error_of(const std::vector<std::string> &ov, const std::string &text = "") {
    try {
        load_scenario(text, ov);
    } catch (const ConfigError &e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST(Scenario, DefaultsMatchTheReferenceSetup) {
    const Scenario s = load_scenario("");
    EXPECT_EQ(s.wf.fc, 0.3e12);
    EXPECT_EQ(s.wf.W, 100e6);
    EXPECT_EQ(s.wf.K, 10);
    EXPECT_EQ(s.wf.G, 10);
    EXPECT_NEAR(s.wf.P_mW, 10.0, 1e-12);
    EXPECT_EQ(s.bs.position, Vec3::Zero());
    EXPECT_EQ(s.ue.position, Vec3(10, 0, 0));
    EXPECT_NEAR(s.ue.orientation(0), 5 * M_PI / 6, 1e-15);
    EXPECT_EQ(s.bs.sa_rows * s.bs.sa_cols, 16);
    EXPECT_EQ(s.bs.ae_rows * s.bs.ae_cols, 25);
    EXPECT_EQ(s.ue.sa_rows * s.ue.sa_cols, 4);
    EXPECT_EQ(s.ris.position, Vec3(5, 5, 0));
    EXPECT_EQ(s.ris.rows, 100);
    EXPECT_EQ(s.wave_model, WaveModel::SWM);
    EXPECT_EQ(s.dims, 2);
    EXPECT_TRUE(s.clock_known);
    EXPECT_FALSE(s.ris.enabled);
    EXPECT_EQ(load_scenario("preset: mmwave\n").wf.fc, 60e9);
}

TEST(Scenario, YamlRoundTrip) {
    const Scenario a = load_scenario("", {"waveform.P_dBm=13.5", "scatterers=[{position: [1, 2, 0], coefficient: 0.3}]",
                                          "ris.enabled=true", "ue.orientation=[0.1234567890123, 0, 0]"});
    const std::string y = scenario_to_yaml(a);
    const Scenario b = load_scenario(y);
    EXPECT_EQ(scenario_to_yaml(b), y);
    EXPECT_EQ(b.ue.orientation(0), 0.1234567890123);
    ASSERT_EQ(b.scatterers.size(), 1u);
    EXPECT_EQ(b.scatterers[0].coefficient, 0.3);
}

TEST(Scenario, OverridesAndListIndices) {
    const Scenario s = load_scenario("ue:\n  position: [3, 4, 0]\n", {"ue.position.1=-2", "waveform.subcarriers=5"});
    EXPECT_EQ(s.ue.position, Vec3(3, -2, 0));
    EXPECT_EQ(s.wf.K, 5);
    const Scenario d = load_scenario("", {"scatterers=[{position: [4, 6, 0]}]", "channel.nlos_coefficient=0.4"});
    EXPECT_EQ(d.scatterers[0].coefficient, 0.4);
}

TEST(Scenario, ErrorsNameTheKey) {
    EXPECT_NE(error_of({"bs.foo=1"}).find("bs.foo"), std::string::npos);
    EXPECT_NE(error_of({"waveform.subcarriers=abc"}).find("waveform.subcarriers"), std::string::npos);
    EXPECT_NE(error_of({"ue.position.7=1"}).find("ue.position.7"), std::string::npos);
    EXPECT_NE(error_of({"channel.wave_model=xyz"}).find("channel.wave_model"), std::string::npos);
    EXPECT_NE(error_of({}, "schema_version: 2\n").find("schema_version"), std::string::npos);
    EXPECT_NE(error_of({}, "unknown_top: 1\n").find("unknown_top"), std::string::npos);
    EXPECT_NE(error_of({"ue.position=[0, 0, 0]"}).find("ue.position"), std::string::npos);
    EXPECT_NE(error_of({"bs.ris_beams=99"}).find("bs.ris_beams"), std::string::npos);
    EXPECT_FALSE(error_of({"noequals"}).empty());
    EXPECT_FALSE(error_of({}, "[1, 2]").empty());
    EXPECT_FALSE(error_of({}, "a: [").empty());
    EXPECT_FALSE(error_of({"preset=laser"}).empty());
    EXPECT_FALSE(error_of({"ue.orientation=[4, 0, 0]"}).empty());
    EXPECT_FALSE(error_of({"waveform.bandwidth_Hz=-1"}).empty());
}

TEST(Scenario, ResolvePathUsesConfigDir) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "thzloc_cfg_test";
    fs::create_directories(dir);
    std::ofstream(dir / "near.yaml") << "ue:\n  position: [1, 0, 0]\n";
    ::setenv("THZLOC_CONFIG_DIR", dir.c_str(), 1);
    const std::string p = resolve_scenario_path("near");
    EXPECT_EQ(load_scenario_file(p).ue.position, Vec3(1, 0, 0));
    EXPECT_THROW(resolve_scenario_path("definitely_missing"), ConfigError);
    EXPECT_THROW(load_scenario_file((dir / "nope.yaml").string()), ConfigError);
    ::unsetenv("THZLOC_CONFIG_DIR");
    fs::remove_all(dir);
}

TEST(Realize, DeterministicStreams) {
    const Scenario s = load_scenario("");
    const Realization a = realize(s, 5, 0), b = realize(s, 5, 0), c = realize(s, 5, 1), d = realize(s, 6, 0);
    ASSERT_EQ(a.sched.x.size(), b.sched.x.size());
    for (size_t i = 0; i < a.sched.x.size(); ++i) EXPECT_EQ((a.sched.x[i] - b.sched.x[i]).norm(), 0.0);
    EXPECT_GT((a.sched.x[0] - c.sched.x[0]).norm(), 0.0);
    EXPECT_GT((a.sched.x[0] - d.sched.x[0]).norm(), 0.0);
    EXPECT_EQ(a.sched.G, s.wf.G);
    EXPECT_EQ(a.sched.bs_beams[0].size(), 16u);
}

TEST(Bounds, DefaultScenarioRegression) {
    const BoundSummary b = compute_bounds(realize(load_scenario(""), 1));
    EXPECT_NEAR(b.peb, 0.17081886247372544, 1e-9);
    EXPECT_TRUE(std::isfinite(b.oeb));
    EXPECT_EQ(b.rank, b.params);
}

TEST(Bounds, PowerScaling) {
    // +6.0206 dB quadruples the power and halves the PEB for every realization
    for (int seed : {1, 2, 3}) {
        const double a = compute_bounds(realize(load_scenario(""), seed)).peb;
        const double b =
            compute_bounds(realize(load_scenario("", {"waveform.P_dBm=" + format_number(10 + 20 * std::log10(2.0))}), seed))
                .peb;
        EXPECT_NEAR(b / a, 0.5, 1e-6) << seed;
    }
}

TEST(Bounds, RotationInvariance) {
    // rotating the whole layout about the BS changes nothing but the frame
    const double yaw = 0.7;
    const Vec3 ue = Vec3(10 * std::cos(yaw), 10 * std::sin(yaw), 0);
    auto fmt = [](const Vec3 &v) { return "[" + format_number(v(0)) + ", " + format_number(v(1)) + ", 0]"; };
    const std::vector<std::string> base = {"bs.beams=prior", "ue.beams=prior"};
    std::vector<std::string> rot = base;
    rot.push_back("ue.position=" + fmt(ue));
    rot.push_back("bs.orientation=[" + format_number(yaw) + ", 0, 0]");
    rot.push_back("ue.orientation=[" + format_number(wrap_pi(5 * M_PI / 6 + yaw)) + ", 0, 0]");
    const double a = compute_bounds(realize(load_scenario("", base), 1)).peb;
    const double b = compute_bounds(realize(load_scenario("", rot), 1)).peb;
    EXPECT_NEAR(b / a, 1.0, 1e-6);
}

TEST(Sweep, CartesianAxesAndColumns) {
    SweepSpec sp;
    sp.base_text = "schema_version: 1\n";
    sp.base_overrides = {"channel.wave_model=pwm"};
    sp.axes.push_back({"x_m", {"ue.position.0={}"}, {"5", "10"}});
    sp.axes.push_back({"P_dBm", {"waveform.P_dBm={}"}, {"0", "20"}});
    sp.columns = {{"peb_m", {}, "peb"}, {"peb_hi_m", {"waveform.bandwidth_Hz=1e9"}, "peb"}};
    const ResultTable t = run_sweep(sp, 1);
    EXPECT_EQ(t.columns, (std::vector<std::string>{"x_m", "P_dBm", "peb_m", "peb_hi_m"}));
    ASSERT_EQ(t.rows.size(), 4u);
    EXPECT_EQ(t.rows[1][0], 5.0);
    EXPECT_EQ(t.rows[1][1], 20.0);
    EXPECT_NEAR(t.rows[1][2] / t.rows[0][2], 0.1, 1e-6);
    EXPECT_LT(t.rows[0][3], t.rows[0][2]);
    EXPECT_TRUE(t.failures.empty());
}

TEST(Sweep, Emitters) {
    ResultTable t;
    t.columns = {"a", "b,c"};
    t.rows = {{0.1, NAN}, {1e-300, 3}};
    EXPECT_EQ(format_number(0.1), "0.10000000000000001");
    EXPECT_EQ(format_number(-INFINITY), "-inf");
    EXPECT_EQ(to_csv(t), "a,\"b,c\"\r\n0.10000000000000001,nan\r\n1e-300,3\r\n");
    const auto j = nlohmann::json::parse(to_json(t));
    ASSERT_EQ(j.size(), 2u);
    EXPECT_TRUE(j[0]["b,c"].is_null());
    EXPECT_EQ(j[1]["b,c"].get<double>(), 3.0);
    EXPECT_THROW(emit_results(t, "xml", "-"), ConfigError);
}

TEST(Presets, NamesAndUnknown) {
    EXPECT_EQ(figure_names().size(), 7u);
    for (const auto &n : figure_names()) EXPECT_FALSE(figure_preset(n).columns.empty()) << n;
    EXPECT_THROW(figure_preset("fig5"), ConfigError);
}
