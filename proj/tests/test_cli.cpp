// SPDX-License-Identifier: Apache-2.0
// Runs the built executable and checks exit codes and output shape.
#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace {

struct CliRun {
    int code = -1;
    std::string out;
};

CliRun run(const std::string &args) {
    const std::string cmd = std::string(THZLOC_CLI_PATH) + " " + args + " 2>/dev/null";
    CliRun r;
    FILE *p = ::popen(cmd.c_str(), "r");
    if (!p) return r;
    std::array<char, 4096> buf{};
    size_t n;
    while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
    const int st = ::pclose(p);
    r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

std::vector<std::string> lines(const std::string &s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    for (std::string l; std::getline(is, l);) {
        if (!l.empty() && l.back() == '\r') l.pop_back();
        out.push_back(l);
    }
    return out;
}

std::vector<std::string> fields(const std::string &l) {
    std::vector<std::string> out;
    std::istringstream is(l);
    for (std::string f; std::getline(is, f, ',');) out.push_back(f);
    return out;
}

} // namespace

TEST(Cli, BoundCsv) {
    const CliRun r = run("-q bound");
    ASSERT_EQ(r.code, 0);
    const auto l = lines(r.out);
    ASSERT_EQ(l.size(), 2u);
    EXPECT_EQ(fields(l[0])[0], "peb_m");
    EXPECT_NEAR(std::stod(fields(l[1])[0]), 0.17081886247372544, 1e-9);
}

TEST(Cli, PowerOverrideScalesPeb) {
    const CliRun a = run("-q bound --format json"), b = run("-q --set waveform.P_dBm=13 bound --format json");
    ASSERT_EQ(a.code, 0);
    ASSERT_EQ(b.code, 0);
    const double pa = nlohmann::json::parse(a.out)[0]["peb_m"].get<double>();
    const double pb = nlohmann::json::parse(b.out)[0]["peb_m"].get<double>();
    EXPECT_NEAR(pb / pa, std::pow(10.0, -3.0 / 20.0), 1e-6);
}

TEST(Cli, ExitCodes) {
    EXPECT_EQ(run("--bogus bound").code, 2);
    EXPECT_EQ(run("bound --bogus").code, 2);
    EXPECT_EQ(run("").code, 2);
    EXPECT_EQ(run("--set bs.foo=1 bound").code, 2);
    EXPECT_EQ(run("validate /nonexistent/file.yaml").code, 2);
    EXPECT_EQ(run("reproduce fig99").code, 2);
    EXPECT_EQ(run("--format xml bound").code, 2);
    EXPECT_EQ(run("-q validate").code, 0);
    // a single-antenna link cannot fix the position
    EXPECT_EQ(run("-q --set ue.subarrays=[1,1] --set ue.elements=[1,1] --set bs.subarrays=[1,1] "
                  "--set bs.elements=[1,1] bound")
                  .code,
              3);
}

TEST(Cli, ReproduceFig8ColumnsAndDeterminism) {
    const CliRun a = run("-q --seed 3 reproduce fig8"), b = run("-q --seed 3 reproduce fig8");
    ASSERT_EQ(a.code, 0);
    EXPECT_EQ(a.out, b.out);
    const auto l = lines(a.out);
    EXPECT_EQ(l[0], "distance_m,peb_swm_m,peb_pwm_m,peb_swm_asyn_m");
    EXPECT_EQ(l.size(), 16u);
}

TEST(Cli, OutputFileAndConfigDir) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "thzloc_cli_test";
    fs::create_directories(dir);
    std::ofstream(dir / "close.yaml") << "ue:\n  position: [2, 0, 0]\n";
    const std::string out = (dir / "o.csv").string();
    const CliRun r = run("-q -c close -o " + out + " bound");
    ::setenv("THZLOC_CONFIG_DIR", dir.c_str(), 1);
    const CliRun r2 = run("-q -c close -o " + out + " bound");
    ::unsetenv("THZLOC_CONFIG_DIR");
    EXPECT_EQ(r.code, 2);
    ASSERT_EQ(r2.code, 0);
    EXPECT_TRUE(r2.out.empty());
    std::ifstream in(out);
    std::stringstream ss;
    ss << in.rdbuf();
    const auto l = lines(ss.str());
    ASSERT_EQ(l.size(), 2u);
    EXPECT_LT(std::stod(fields(l[1])[0]), 0.17);
    fs::remove_all(dir);
}

TEST(Cli, EstimateSummary) {
    const CliRun r = run("-q --set channel.wave_model=pwm --set ue.subarrays=[1,1] --set ue.elements=[1,1] "
                      "--set bs.elements=[1,1] --set waveform.P_dBm=30 estimate --trials 3");
    ASSERT_EQ(r.code, 0);
    const auto l = lines(r.out);
    ASSERT_EQ(l.size(), 2u);
    EXPECT_EQ(l[0], "trials,rmse_m,peb_m,rmse_over_peb,failures");
    EXPECT_EQ(fields(l[1])[4], "0");
}
