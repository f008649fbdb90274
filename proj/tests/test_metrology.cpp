#include "cspdc/errors.hpp"
#include "cspdc/metrology.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace cspdc;
namespace ct = cspdc::testing;

namespace
{
CombFitResult converged(const CombModelParams &p)
{
    CombFitResult f;
    f.params = p;
    f.converged = true;
    return f;
}

ReportInputs reference_inputs(double coincidences, double duration_s, double pump_mw)
{
    ReportInputs in;
    in.efficiencies = DetectionEfficiencies::reference_setup();
    in.duration_s = duration_s;
    in.pump_mw = pump_mw;
    in.system_jitter_fwhm_s = ct::kSystemJitter;
    in.total_coincidences = coincidences;
    return in;
}
} // namespace

TEST(Deconvolve, ReferenceWidths)
{
    EXPECT_NEAR(deconvolve_tooth_width(528e-12, 509e-12) * 1e12, 140.0, 1.0);
    EXPECT_NEAR(deconvolve_tooth_width(561e-12, 509e-12) * 1e12, 236.0, 1.0);
}

TEST(Deconvolve, InvertsQuadratureSum)
{
    for (double a = 10e-12; a < 2e-9; a *= 1.37)
        for (double b = 0.0; b < 2e-9; b += 97e-12)
            EXPECT_NEAR(deconvolve_tooth_width(std::hypot(a, b), b), a, 1e-9 * a);
}

TEST(Deconvolve, JitterLimitedIsAnError)
{
    EXPECT_THROW(deconvolve_tooth_width(500e-12, 509e-12), ParameterError);
    EXPECT_THROW(deconvolve_tooth_width(509e-12, 509e-12), ParameterError);
}

TEST(Jitter, PerDetectorFromSinglePass)
{
    const auto j = system_jitter_from_single_pass(509e-12);
    EXPECT_DOUBLE_EQ(j.system, 509e-12);
    EXPECT_NEAR(j.per_detector, 360e-12, 1e-12);
    EXPECT_THROW(system_jitter_from_single_pass(0.0), ParameterError);
}

TEST(ModeNumber, ReferenceValues)
{
    EXPECT_EQ(mode_number(1.9e-9, deconvolve_tooth_width(528e-12, 509e-12)), 6);
    EXPECT_EQ(mode_number(1.9e-9, deconvolve_tooth_width(561e-12, 509e-12)), 3);
    EXPECT_EQ(mode_number(1.9e-9, 1.9e-9 / 2.5), 0);
}

TEST(ModeNumber, InvariantUnderCommonRescaling)
{
    for (double ratio = 1.1; ratio < 60.0; ratio *= 1.09)
        for (double s : {1e-3, 0.5, 7.0, 1e4})
            EXPECT_EQ(mode_number(1.9e-9 * s, 1.9e-9 * s / ratio), mode_number(1.9e-9, 1.9e-9 / ratio));
}

TEST(Brightness, ReferenceValues)
{
    EXPECT_NEAR(spectral_brightness_detected(1.05e5, 5000.0, 6, 5.3, 0.005), 132.0, 0.5);
    EXPECT_NEAR(spectral_brightness_detected(2.07e5, 10000.0, 3, 2.4, 0.010), 288.0, 0.6);
    EXPECT_DOUBLE_EQ(spectral_brightness_detected(123.0, 1.0, 1, 1.0, 1.0), 123.0);
    const auto eff = DetectionEfficiencies::reference_setup();
    EXPECT_NEAR(spectral_brightness_generated(132.0, eff) / 1.81e5, 1.0, 0.01);
    EXPECT_NEAR(spectral_brightness_generated(288.0, eff) / 3.95e5, 1.0, 0.005);
    EXPECT_THROW(spectral_brightness_detected(1.0, 1.0, 0, 1.0, 1.0), ParameterError);
}

TEST(Brightness, GeneratedMonotoneInEfficiencies)
{
    const DetectionEfficiencies unity{};
    EXPECT_DOUBLE_EQ(spectral_brightness_generated(288.0, unity), 288.0);
    const auto base = DetectionEfficiencies::reference_setup();
    const double b0 = spectral_brightness_generated(100.0, base);
    for (int i = 0; i < 4; ++i)
    {
        auto e = base;
        double *f[] = {&e.t1, &e.f, &e.t2, &e.d};
        *f[i] = std::min(1.0, *f[i] * 1.1);
        EXPECT_LT(spectral_brightness_generated(100.0, e), b0);
    }
}

TEST(Enhancement, SameOrderAsFinesseSquared)
{
    const auto e = enhancement_factor(1.81e5, 9.73, 99.0);
    EXPECT_NEAR(e.factor, 1.86e4, 0.01e4);
    ASSERT_TRUE(e.finesse_squared);
    EXPECT_DOUBLE_EQ(*e.finesse_squared, 9801.0);
    EXPECT_LT(std::abs(std::log10(e.factor / *e.finesse_squared)), 1.0);
    EXPECT_FALSE(enhancement_factor(1.0, 2.0).finesse_squared);
    EXPECT_THROW(enhancement_factor(1.0, 0.0), ParameterError);
}

TEST(Report, HighFinesseSource)
{
    auto in = reference_inputs(2.07e5, 10000.0, 0.010);
    in.single_pass_brightness = 9.73;
    const auto r = build_report(converged(ct::r99_source()), in);
    EXPECT_NEAR(r.linewidth_hz, 2.4e6, 1.0);
    EXPECT_NEAR(r.fsr_hz, 526e6, 0.005 * 526e6);
    EXPECT_NEAR(r.cavity_length_m, 0.57, 0.0057);
    EXPECT_NEAR(r.finesse, 220.0, 1.0);
    EXPECT_NEAR(r.tau_w_intrinsic_s * 1e12, 236.0, 2.0);
    EXPECT_EQ(r.n_modes, 3);
    EXPECT_NEAR(r.r_detect_per_s_mhz_mw, 288.0, 1.0);
    EXPECT_GE(r.r_generation_per_s_mhz_mw, 3.94e5 * 0.998);
    EXPECT_LE(r.r_generation_per_s_mhz_mw, 3.95e5 * 1.002);
    EXPECT_DOUBLE_EQ(r.finesse_squared, r.finesse * r.finesse);
    ASSERT_TRUE(r.enhancement_factor);
    EXPECT_NEAR(*r.enhancement_factor, 4.06e4, 0.02e4);
    EXPECT_FALSE(r.g2_zero);
}

TEST(Report, LowFinesseSource)
{
    const auto r = build_report(converged(ct::r95_source()), reference_inputs(1.05e5, 5000.0, 0.005));
    EXPECT_NEAR(r.linewidth_hz / 1e6, 5.3, 1e-9);
    EXPECT_NEAR(r.finesse, 99.0, 1.0);
    EXPECT_EQ(r.n_modes, 6);
    EXPECT_NEAR(r.r_detect_per_s_mhz_mw, 132.0, 1.0);
    EXPECT_NEAR(r.r_generation_per_s_mhz_mw / 1.81e5, 1.0, 0.01);
    EXPECT_FALSE(r.enhancement_factor);
}

TEST(Report, LosslessChainLeavesBrightnessUnchanged)
{
    auto in = reference_inputs(2.07e5, 10000.0, 0.010);
    in.efficiencies = {};
    const auto r = build_report(converged(ct::r99_source()), in);
    EXPECT_DOUBLE_EQ(r.r_detect_per_s_mhz_mw, r.r_generation_per_s_mhz_mw);
}

TEST(Report, RequiresConvergedFitAndTotal)
{
    auto f = converged(ct::r99_source());
    f.converged = false;
    EXPECT_THROW(build_report(f, reference_inputs(1.0, 1.0, 1.0)), ParameterError);
    auto in = reference_inputs(1.0, 1.0, 1.0);
    in.total_coincidences.reset();
    EXPECT_THROW(build_report(converged(ct::r99_source()), in), ParameterError);
    // jitter-limited fit
    in = reference_inputs(1.0, 1.0, 1.0);
    in.system_jitter_fwhm_s = 600e-12;
    EXPECT_THROW(build_report(converged(ct::r99_source()), in), ParameterError);
}

TEST(TotalCoincidences, SumsCombAboveFloor)
{
    const auto p = ct::r99_source();
    const auto h = ct::synthetic_histogram(p, 128, 40064);
    double want = 0.0;
    for (std::size_t k = 0; k < h.n_bins(); ++k)
        want += static_cast<double>(h.counts[k]) - p.c1 * p.c2;
    EXPECT_NEAR(total_coincidences(h, converged(p)), want, 1e-6);

    // all counts below the fitted floor clip to zero
    auto low = h;
    for (auto &c : low.counts)
        c = 1;
    EXPECT_EQ(total_coincidences(low, converged(p)), 0.0);
    auto nc = converged(p);
    nc.converged = false;
    EXPECT_THROW(total_coincidences(h, nc), ParameterError);
}

TEST(TotalCoincidences, ReportFromHistogramUsesIt)
{
    const auto p = ct::r99_source();
    const auto h = ct::synthetic_histogram(p, 128, 40064);
    auto in = reference_inputs(0.0, 10000.0, 0.010);
    in.total_coincidences.reset();
    const auto r = build_report(h, converged(p), in);
    EXPECT_DOUBLE_EQ(r.total_coincidences, total_coincidences(h, converged(p)));
    EXPECT_FALSE(r.g2_zero); // window does not reach past the comb
}

TEST(G2Zero, PeakOverFloor)
{
    auto h = CoincidenceHistogram::empty(100, 10000);
    for (std::size_t k = 0; k < h.n_bins(); ++k)
        h.counts[k] = std::abs(h.bin_center_ps(k)) < 200 ? 50 : 5;
    const auto z = g2_zero(h, 100.0, 5000.0, 10000.0);
    EXPECT_DOUBLE_EQ(z.value, 10.0);
    EXPECT_EQ(z.peak_bins, 2u);
    EXPECT_EQ(z.floor_bins, 100u);

    for (auto &c : h.counts)
        if (c == 5)
            c = 0;
    const auto inf = g2_zero(h, 100.0, 5000.0, 10000.0);
    EXPECT_TRUE(inf.floor_empty);
    EXPECT_TRUE(std::isinf(inf.value));
}

TEST(G2Zero, FloorOnToothRejected)
{
    const CombModelParams p{100.0, 0.1, 1.9e-9, 0.6e-9, kTwoPi * 50e6, 3};
    const auto h = ct::synthetic_histogram(p, 128, 100'096);
    // 12 / omega_w = 38 ns; a floor window inside the comb hits a tooth
    EXPECT_THROW(g2_zero(h, 250.0, 3000.0, 20000.0, &p), ConfigError);
    EXPECT_NO_THROW(g2_zero(h, 250.0, 45000.0, 100000.0, &p));
    EXPECT_THROW(g2_zero(h, 250.0, 200.0, 1000.0), ConfigError);
    EXPECT_THROW(g2_zero(h, 250.0, 1e9, 2e9), ConfigError);
}

TEST(G2Zero, DefaultWindowsInWideHistogram)
{
    const CombModelParams p{100.0, 0.1, 1.9e-9, 0.6e-9, kTwoPi * 50e6, 3};
    const auto h = ct::synthetic_histogram(p, 128, 100'096);
    const auto r = build_report(h, converged(p), reference_inputs(1e4, 100.0, 0.01));
    ASSERT_TRUE(r.g2_zero);
    // peak: |tau| <= tau_w / 2; floor: 12 / omega_w + 2 tau_f out to the edge
    const double floor_min = (12.0 / p.omega_w + 2.0 * p.tau_f) * 1e12;
    EXPECT_DOUBLE_EQ(*r.g2_zero, g2_zero(h, 300.0, floor_min, 100'096.0, &p).value);
    EXPECT_GT(*r.g2_zero, 8.0);
    EXPECT_LT(*r.g2_zero, 1.1 / 0.1);
}
