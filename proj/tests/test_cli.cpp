// Drives the cspdc executable end to end.
#include "cspdc/io.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cspdc;

namespace
{
class Cli : public ::testing::Test
{
  protected:
    fs::path dir;

    void SetUp() override
    {
        const auto *info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir = fs::temp_directory_path() / (std::string("cspdc_cli_") + info->name());
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    std::string path(const std::string &name) const { return (dir / name).string(); }

    int run(const std::string &args) const
    {
        const std::string cmd = std::string(CSPDC_CLI_PATH) + " " + args + " > " + path("stdout.txt") + " 2> " +
                                path("stderr.txt");
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    std::string slurp(const std::string &name) const
    {
        std::ifstream in(path(name), std::ios::binary);
        return {std::istreambuf_iterator<char>(in), {}};
    }

    void write(const std::string &name, const json &j) const { write_text_file(path(name), j.dump(2)); }
};

json pipeline_config(double duration_s)
{
    auto j = json::parse(R"({
      "source": {"pump_power_mw": 0.01, "pair_rate_per_mw": 1.0e8, "seed": 11,
                 "model": {"tau_f_s": 1.9e-9, "tau_w_s": 140e-12, "linewidth_hz": 5.3e6, "n_modes": 6}},
      "detectors": [{"efficiency": 0.7, "dark_rate_hz": 100, "jitter_fwhm_s": 360e-12},
                    {"efficiency": 0.7, "dark_rate_hz": 100, "jitter_fwhm_s": 360e-12}]
    })");
    j["source"]["duration_s"] = duration_s;
    return j;
}
} // namespace

TEST_F(Cli, SimulateIsByteReproducible)
{
    write("run.json", pipeline_config(0.05));
    ASSERT_EQ(run("simulate " + path("run.json") + " --output " + path("a")), 0) << slurp("stderr.txt");
    ASSERT_EQ(run("simulate " + path("run.json") + " --output " + path("b")), 0);
    for (const char *suffix : {"_ch0.ttg", "_ch1.ttg"})
    {
        EXPECT_FALSE(slurp(std::string("a") + suffix).empty());
        EXPECT_EQ(slurp(std::string("a") + suffix), slurp(std::string("b") + suffix)) << suffix;
    }
    const auto ma = json::parse(slurp("a_manifest.json"));
    const auto mb = json::parse(slurp("b_manifest.json"));
    EXPECT_EQ(ma["pairs_generated"], mb["pairs_generated"]);
    EXPECT_EQ(ma["channels"][0]["tags"], mb["channels"][0]["tags"]);
    // the output prefix is part of the hashed configuration
    EXPECT_NE(ma["config_hash"], mb["config_hash"]);

    ASSERT_EQ(run("simulate " + path("run.json") + " --seed 12 --output " + path("c")), 0);
    EXPECT_NE(slurp("a_ch0.ttg"), slurp("c_ch0.ttg"));
    EXPECT_EQ(json::parse(slurp("c_manifest.json"))["seed"], 12);
}

TEST_F(Cli, InvalidInputExitsWithTwo)
{
    auto cfg = json::parse(R"({"source": {"pump_power_mw": 0.01}, "detectors": []})");
    write("bad.json", cfg);
    EXPECT_EQ(run("simulate " + path("bad.json")), 2);
    EXPECT_NE(slurp("stderr.txt").find("source."), std::string::npos) << slurp("stderr.txt");
    EXPECT_EQ(run("simulate " + path("missing.json")), 2);
    EXPECT_EQ(run("frobnicate"), 2);
    EXPECT_EQ(run("correlate " + path("missing_a.ttg") + " " + path("missing_b.ttg")), 2);
    EXPECT_EQ(run("model-eval --n-modes -1"), 2);
}

TEST_F(Cli, CorrelateEmptyAndHandExample)
{
    TimeTagStream empty;
    write_timetags(path("e.ttg"), empty);
    ASSERT_EQ(run("correlate " + path("e.ttg") + " " + path("e.ttg") + " --output " + path("h0")), 0)
        << slurp("stderr.txt");
    const auto h0 = histogram_from_json(json::parse(slurp("h0.json")));
    EXPECT_EQ(h0.total(), 0u);
    EXPECT_EQ(h0.tau_max_ps, 40064);

    TimeTagStream a, b;
    a.channel_id = 0;
    a.tags = {0, 1000};
    b.channel_id = 1;
    b.tags = {0, 1000};
    write_timetags(path("a.ttg"), a);
    write_timetags(path("b.ttg"), b);
    ASSERT_EQ(run("correlate " + path("a.ttg") + " " + path("b.ttg") + " --tau-max-ps 1920 --output " + path("h")),
              0);
    const std::string csv = slurp("h.csv");
    EXPECT_NE(csv.find("\n64,2\n"), std::string::npos) << csv;
    EXPECT_NE(csv.find("\n-960,1\n"), std::string::npos) << csv;
    EXPECT_NE(csv.find("\n960,1\n"), std::string::npos) << csv;
    EXPECT_EQ(histogram_from_csv(csv).total(), 4u);
}

TEST_F(Cli, ReportFromBareParameters)
{
    write("b.json", json{{"c1", 650}, {"c2", 0.14}, {"tau_f_s", 1.9e-9}, {"tau_w_s", 561e-12},
                         {"linewidth_hz", 2.4e6}, {"n_modes", 3}});
    ASSERT_EQ(run("report --fit " + path("b.json") + " --counts 2.07e5 --duration-s 10000 --pump-mw 0.01" +
                  " --system-jitter-ps 509 --single-pass-brightness 9.73 --output " + path("r.json")),
              0)
        << slurp("stderr.txt");
    const auto r = report_from_json(json::parse(slurp("r.json")));
    EXPECT_NEAR(r.finesse, 220.0, 1.0);
    EXPECT_EQ(r.n_modes, 3);
    EXPECT_NEAR(r.tau_w_intrinsic_s * 1e12, 236.0, 2.0);
    EXPECT_NEAR(r.r_detect_per_s_mhz_mw, 288.0, 1.0);
    EXPECT_NEAR(r.r_generation_per_s_mhz_mw / 3.945e5, 1.0, 0.005);
    ASSERT_TRUE(r.enhancement_factor);
    EXPECT_NEAR(*r.enhancement_factor, 4.06e4, 0.02e4);

    EXPECT_EQ(run("report --fit " + path("b.json") + " --duration-s 1 --pump-mw 0.01 --system-jitter-ps 509"), 2);
}

TEST_F(Cli, ModelEvalGrid)
{
    ASSERT_EQ(run("model-eval --tau-min-ps -1900 --tau-max-ps 1900 --step-ps 950 --output " + path("m.csv")), 0);
    std::istringstream in(slurp("m.csv"));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "delay_ps,g2_ideal,g2_convolved");
    int rows = 0;
    double first = 0.0, last = 0.0;
    while (std::getline(in, line))
    {
        double t, ideal, conv;
        char c1, c2;
        std::istringstream row(line);
        row >> t >> c1 >> ideal >> c2 >> conv;
        ASSERT_TRUE(row) << line;
        if (rows == 0)
            first = conv;
        last = conv;
        if (t == 0.0)
            EXPECT_DOUBLE_EQ(ideal, 49.0);
        ++rows;
    }
    EXPECT_EQ(rows, 5);
    EXPECT_DOUBLE_EQ(first, last);
}

TEST_F(Cli, SimulateCorrelateFitReportPipeline)
{
    write("run.json", pipeline_config(1.0));
    ASSERT_EQ(run("simulate " + path("run.json") + " --output " + path("s")), 0) << slurp("stderr.txt");
    ASSERT_EQ(run("correlate " + path("s_ch0.ttg") + " " + path("s_ch1.ttg") + " --duration-s 1 --output " +
                  path("h")),
              0)
        << slurp("stderr.txt");
    ASSERT_EQ(run("fit " + path("h.json") + " --output " + path("f") + " --pump-mw 0.01 --system-jitter-ps 509"), 0)
        << slurp("stderr.txt");
    const auto fit = fit_from_json(json::parse(slurp("f_fit.json")));
    ASSERT_TRUE(fit.converged);
    EXPECT_NEAR(fit.params.tau_f, 1.9e-9, 0.01 * 1.9e-9);
    // intrinsic 140 ps in quadrature with two 360 ps detectors
    const double tau_w = std::sqrt(140e-12 * 140e-12 + 2.0 * 360e-12 * 360e-12);
    EXPECT_NEAR(fit.params.tau_w / tau_w, 1.0, 0.10);
    EXPECT_NEAR(fit.params.linewidth_hz() / 5.3e6, 1.0, 0.10);

    // N comes from the deconvolved width, which amplifies the small width bias
    const auto r = report_from_json(json::parse(slurp("f_report.json")));
    EXPECT_EQ(r.n_modes, mode_number(fit.params.tau_f, deconvolve_tooth_width(fit.params.tau_w, 509e-12)));
    EXPECT_GE(r.n_modes, 3);
    EXPECT_LE(r.n_modes, 6);
    EXPECT_GT(r.total_coincidences, 0.0);
}
