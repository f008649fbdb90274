#include "cspdc/metrology.hpp"

#include "cspdc/errors.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace cspdc
{
namespace
{
constexpr double kCombExtentDecays = 12.0;

bool positive_finite(double v) { return std::isfinite(v) && v > 0.0; }

SourceReport report_from(const CombFitResult &fit, const ReportInputs &in, double coincidences,
                         std::optional<double> g2)
{
    if (!fit.converged)
        throw ParameterError("report requires a converged fit");
    const CombModelParams &p = fit.params;
    p.validate();
    in.efficiencies.validate();

    SourceReport r;
    r.linewidth_hz = p.linewidth_hz();
    r.fsr_hz = fsr_from_round_trip(p.tau_f);
    r.cavity_length_m = cavity_length_from_round_trip(p.tau_f);
    r.finesse = finesse(r.fsr_hz, r.linewidth_hz);
    r.finesse_squared = r.finesse * r.finesse;
    try
    {
        r.tau_w_intrinsic_s = deconvolve_tooth_width(p.tau_w, in.system_jitter_fwhm_s);
        r.n_modes = mode_number(p.tau_f, r.tau_w_intrinsic_s);
        r.g2_zero = g2;
        r.total_coincidences = coincidences;
        r.r_detect_per_s_mhz_mw =
            spectral_brightness_detected(coincidences, in.duration_s, r.n_modes, r.linewidth_hz / 1e6, in.pump_mw);
        r.r_generation_per_s_mhz_mw = spectral_brightness_generated(r.r_detect_per_s_mhz_mw, in.efficiencies);
        if (in.single_pass_brightness)
            r.enhancement_factor =
                enhancement_factor(r.r_generation_per_s_mhz_mw, *in.single_pass_brightness, r.finesse).factor;
    }
    catch (const ParameterError &e)
    {
        throw ParameterError(std::string("source report: ") + e.what());
    }
    return r;
}
} // namespace

double deconvolve_tooth_width(double tau_w_fit, double system_jitter_fwhm)
{
    if (!positive_finite(tau_w_fit) || !(system_jitter_fwhm >= 0.0))
        throw ParameterError("tooth width must be > 0 and jitter >= 0");
    if (tau_w_fit <= system_jitter_fwhm)
        throw ParameterError("fitted tooth width " + std::to_string(tau_w_fit) + " s does not exceed the system jitter " +
                             std::to_string(system_jitter_fwhm) + " s; intrinsic width is unresolved");
    return std::sqrt((tau_w_fit - system_jitter_fwhm) * (tau_w_fit + system_jitter_fwhm));
}

SystemJitter system_jitter_from_single_pass(double coincidence_peak_fwhm)
{
    if (!positive_finite(coincidence_peak_fwhm))
        throw ParameterError("single-pass coincidence peak width must be > 0");
    return {coincidence_peak_fwhm, coincidence_peak_fwhm / std::sqrt(2.0)};
}

int mode_number(double tau_f, double tau_w_intrinsic)
{
    if (!positive_finite(tau_w_intrinsic) || !positive_finite(tau_f) || tau_w_intrinsic >= tau_f)
        throw ParameterError("mode number needs 0 < tau_w_intrinsic < tau_f");
    return static_cast<int>(std::floor((tau_f / tau_w_intrinsic - 1.0) / 2.0));
}

G2Zero g2_zero(const CoincidenceHistogram &h, double peak_half_width_ps, double floor_min_ps, double floor_max_ps,
               const CombModelParams *fitted)
{
    h.validate();
    if (!(peak_half_width_ps >= 0.0) || !(floor_min_ps >= 0.0) || !(floor_max_ps >= floor_min_ps))
        throw ConfigError("g2(0) windows must satisfy peak >= 0 and 0 <= floor_min <= floor_max");
    if (floor_min_ps <= peak_half_width_ps)
        throw ConfigError("g2(0) floor window overlaps the peak window");

    double tooth_reach = 0.0, tau_f = 0.0, guard = 0.0;
    if (fitted)
    {
        fitted->validate();
        tau_f = fitted->tau_f * kPicosecondsPerSecond;
        guard = 1.5 * fitted->tau_w * kPicosecondsPerSecond;
        tooth_reach = kCombExtentDecays / fitted->omega_w * kPicosecondsPerSecond;
    }

    G2Zero out;
    double peak_sum = 0.0, floor_sum = 0.0;
    for (std::size_t k = 0; k < h.n_bins(); ++k)
    {
        const double t = std::abs(h.bin_center_ps(k));
        const auto c = static_cast<double>(h.counts[k]);
        if (t <= peak_half_width_ps)
        {
            peak_sum += c;
            ++out.peak_bins;
        }
        else if (t >= floor_min_ps && t <= floor_max_ps)
        {
            if (fitted)
            {
                // nearest tooth centre still inside the comb
                const double n = std::min(std::nearbyint(t / tau_f), std::floor(tooth_reach / tau_f));
                const double next = n + 1.0;
                double dist = std::abs(t - n * tau_f);
                if (next * tau_f <= tooth_reach)
                    dist = std::min(dist, std::abs(t - next * tau_f));
                if (dist < guard)
                    throw ConfigError("g2(0) floor window overlaps comb tooth " + std::to_string(static_cast<long>(n)) +
                                      " at " + std::to_string(t) + " ps");
            }
            floor_sum += c;
            ++out.floor_bins;
        }
    }
    if (out.peak_bins == 0 || out.floor_bins == 0)
        throw ConfigError("g2(0) window selects no bins");
    out.peak_per_bin = peak_sum / static_cast<double>(out.peak_bins);
    out.floor_per_bin = floor_sum / static_cast<double>(out.floor_bins);
    if (floor_sum == 0.0)
    {
        out.floor_empty = true;
        out.value = std::numeric_limits<double>::infinity();
    }
    else
    {
        out.value = out.peak_per_bin / out.floor_per_bin;
    }
    return out;
}

double total_coincidences(const CoincidenceHistogram &h, const CombFitResult &fit)
{
    h.validate();
    if (!fit.converged)
        throw ParameterError("total coincidences require a converged fit");
    const double reach = kCombExtentDecays / fit.params.omega_w * kPicosecondsPerSecond;
    const double floor = fit.params.c1 * fit.params.c2;
    double sum = 0.0;
    for (std::size_t k = 0; k < h.n_bins(); ++k)
        if (std::abs(h.bin_center_ps(k)) <= reach)
            sum += static_cast<double>(h.counts[k]) - floor;
    return std::max(sum, 0.0);
}

double spectral_brightness_detected(double coincidences, double duration_s, int n_modes, double linewidth_mhz,
                                    double pump_mw)
{
    if (!positive_finite(coincidences) || !positive_finite(duration_s) || n_modes <= 0 ||
        !positive_finite(linewidth_mhz) || !positive_finite(pump_mw))
        throw ParameterError("spectral brightness needs positive coincidences, duration, mode number, linewidth "
                             "and pump power");
    return coincidences / duration_s / (static_cast<double>(n_modes) * linewidth_mhz * pump_mw);
}

double spectral_brightness_generated(double r_detect, const DetectionEfficiencies &eff)
{
    eff.validate();
    if (!(r_detect >= 0.0))
        throw ParameterError("detected brightness must be >= 0");
    const double chain = eff.product();
    return r_detect / (chain * chain);
}

Enhancement enhancement_factor(double cavity_brightness, double single_pass_brightness, std::optional<double> finesse)
{
    if (!positive_finite(cavity_brightness) || !positive_finite(single_pass_brightness))
        throw ParameterError("enhancement factor needs positive brightness values");
    Enhancement e;
    e.factor = cavity_brightness / single_pass_brightness;
    if (finesse)
        e.finesse_squared = *finesse * *finesse;
    return e;
}

SourceReport build_report(const CoincidenceHistogram &h, const CombFitResult &fit, const ReportInputs &in)
{
    if (!fit.converged)
        throw ParameterError("report requires a converged fit");
    const double coincidences = in.total_coincidences ? *in.total_coincidences : total_coincidences(h, fit);

    std::optional<double> g2;
    const CombModelParams &p = fit.params;
    if (in.g2_windows)
    {
        const auto &w = *in.g2_windows;
        g2 = g2_zero(h, w.peak_half_width_ps, w.floor_min_ps, w.floor_max_ps, &p).value;
    }
    else
    {
        // Start two periods past the last tooth so the guard band is clear.
        const double floor_min = (kCombExtentDecays / p.omega_w + 2.0 * p.tau_f) * kPicosecondsPerSecond;
        const auto edge = static_cast<double>(h.tau_max_ps);
        if (edge > floor_min + static_cast<double>(h.bin_width_ps))
            g2 = g2_zero(h, 0.5 * p.tau_w * kPicosecondsPerSecond, floor_min, edge, &p).value;
    }
    return report_from(fit, in, coincidences, g2);
}

SourceReport build_report(const CombFitResult &fit, const ReportInputs &in)
{
    if (!in.total_coincidences)
        throw ParameterError("report without a histogram needs an explicit coincidence total");
    return report_from(fit, in, *in.total_coincidences, std::nullopt);
}

} // namespace cspdc
