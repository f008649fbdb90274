#ifndef CSPDC_TESTS_SUPPORT_HPP
#define CSPDC_TESTS_SUPPORT_HPP
// Shared fixtures and independent oracles for the test binaries.
#include "cspdc/biphoton_model.hpp"
#include "cspdc/correlator.hpp"
#include "cspdc/fit.hpp"
#include "cspdc/timetag.hpp"
#include "cspdc/timetag_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace cspdc::testing
{
// Fitted parameter sets of the two reference sources, mirror R = 95 % and 99 %.
inline CombModelParams r95_source()
{
    return {738.0, 0.048, 1.9e-9, 528e-12, kTwoPi * 5.3e6, 6};
}

inline CombModelParams r99_source()
{
    return {650.0, 0.14, 1.9e-9, 561e-12, kTwoPi * 2.4e6, 3};
}

inline constexpr double kSystemJitter = 509e-12; // coincidence FWHM of the detector pair

// Plain double loop over all pairs; the reference for the correlator.
inline std::vector<std::uint64_t> brute_force_histogram(const std::vector<std::uint64_t> &a,
                                                        const std::vector<std::uint64_t> &b, std::int64_t bin_width,
                                                        std::int64_t tau_max)
{
    std::vector<std::uint64_t> counts(static_cast<std::size_t>(2 * tau_max / bin_width), 0);
    for (const auto ta : a)
        for (const auto tb : b)
        {
            const std::int64_t d = static_cast<std::int64_t>(tb) - static_cast<std::int64_t>(ta);
            if (d < -tau_max || d >= tau_max)
                continue;
            ++counts[static_cast<std::size_t>((d + tau_max) / bin_width)];
        }
    return counts;
}

inline TimeTagStream random_stream(std::mt19937_64 &rng, int channel, std::size_t n, std::uint64_t span_ps)
{
    std::uniform_int_distribution<std::uint64_t> pick(0, span_ps - 1);
    TimeTagStream s;
    s.channel_id = channel;
    s.duration = static_cast<double>(span_ps) / kPicosecondsPerSecond;
    s.tags.resize(n);
    for (auto &t : s.tags)
        t = pick(rng);
    std::sort(s.tags.begin(), s.tags.end());
    return s;
}

// Histogram of `model` sampled at bin centres, rounded or Poisson-drawn.
inline CoincidenceHistogram synthetic_histogram(const CombModelParams &model, std::int64_t bin_width_ps,
                                                std::int64_t tau_max_ps, std::mt19937_64 *poisson_rng = nullptr)
{
    auto h = CoincidenceHistogram::empty(bin_width_ps, tau_max_ps);
    for (std::size_t k = 0; k < h.n_bins(); ++k)
    {
        const double mean = eval_g2_convolved(model, h.bin_center_ps(k) / kPicosecondsPerSecond);
        if (poisson_rng)
            h.counts[k] = std::poisson_distribution<std::uint64_t>(mean)(*poisson_rng);
        else
            h.counts[k] = static_cast<std::uint64_t>(std::llround(mean));
    }
    h.duration = 1.0;
    return h;
}

// Fraction of detected pair delays (delay density convolved with a Gaussian
// of FWHM `jitter`) landing in [-bin/2, bin/2). Trapezoid rule on a grid much
// finer than one comb lobe; the density is truncated like the sampler's.
inline double central_bin_fraction(const CombModelParams &m, double jitter_fwhm, double bin_width)
{
    const double sigma = jitter_fwhm / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
    const double reach = PairDelaySampler::kTruncationDecays / m.omega_w;
    const double step = m.tau_f / ((2.0 * m.n_modes + 1.0) * 128.0);
    auto density = [&](double s) { return std::exp(-m.omega_w * std::abs(s)) * comb_ratio_squared(m.n_modes, s, m.tau_f); };

    double z = 0.0;
    const auto nz = static_cast<long>(std::ceil(reach / step));
    for (long i = -nz; i <= nz; ++i)
        z += density(static_cast<double>(i) * step);
    z *= step;

    double in_bin = 0.0;
    const double half = 0.5 * bin_width;
    const auto nb = static_cast<long>(std::ceil((half + 10.0 * sigma) / step));
    const double r2 = std::sqrt(2.0);
    for (long i = -nb; i <= nb; ++i)
    {
        const double s = static_cast<double>(i) * step;
        const double p = 0.5 * (std::erf((half - s) / (r2 * sigma)) - std::erf((-half - s) / (r2 * sigma)));
        in_bin += density(s) * p;
    }
    return in_bin * step / z;
}

} // namespace cspdc::testing

#endif // CSPDC_TESTS_SUPPORT_HPP
