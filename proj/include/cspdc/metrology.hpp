#ifndef CSPDC_METROLOGY_HPP
#define CSPDC_METROLOGY_HPP

// Source metrics derived from a comb fit: intrinsic tooth width, mode number,
// g2(0), coincidence totals, spectral brightness and cavity enhancement.

#include "cspdc/biphoton_model.hpp"
#include "cspdc/correlator.hpp"
#include "cspdc/fit.hpp"

#include <cstddef>
#include <optional>

namespace cspdc
{
/// Removes the system jitter from a fitted tooth width (Gaussian FWHMs add
/// in quadrature). Throws ParameterError when the fit is jitter-limited.
double deconvolve_tooth_width(double tau_w_fit, double system_jitter_fwhm);

struct SystemJitter
{
    double system = 0.0;       // FWHM of the two-detector coincidence peak
    double per_detector = 0.0; // system / sqrt(2)
};

/// Jitter from the coincidence peak width of a single-pass (no cavity) run.
SystemJitter system_jitter_from_single_pass(double coincidence_peak_fwhm);

/// N = floor((tau_f / tau_w - 1) / 2), since the comb spans 2N+1 modes.
int mode_number(double tau_f, double tau_w_intrinsic);

struct G2Zero
{
    double value = 0.0; // +inf when the floor window holds no counts
    double peak_per_bin = 0.0;
    double floor_per_bin = 0.0;
    std::size_t peak_bins = 0;
    std::size_t floor_bins = 0;
    bool floor_empty = false;
};

/// Mean count per bin for bins whose centres satisfy |tau| <= peak_half_width,
/// divided by the mean count per bin over floor_min <= |tau| <= floor_max
/// (all in ps). With `fitted`, every floor bin must lie at least 1.5 tau_w
/// away from each tooth centre n tau_f with |n tau_f| <= 12 / omega_w;
/// otherwise ConfigError is thrown.
G2Zero g2_zero(const CoincidenceHistogram &h, double peak_half_width_ps, double floor_min_ps, double floor_max_ps,
               const CombModelParams *fitted = nullptr);

/// Background-subtracted comb counts: sum over bins with |tau| <= 12 / omega_w
/// of (count - c1 c2), clipped at zero as a whole. Requires a converged fit.
double total_coincidences(const CoincidenceHistogram &h, const CombFitResult &fit);

/// pairs / (s MHz mW)
double spectral_brightness_detected(double coincidences, double duration_s, int n_modes, double linewidth_mhz,
                                    double pump_mw);

/// Loss-corrected brightness inside the cavity: r_detect / (t1 f t2 d)^2.
double spectral_brightness_generated(double r_detect, const DetectionEfficiencies &eff);

struct Enhancement
{
    double factor = 0.0;
    std::optional<double> finesse_squared;
};

Enhancement enhancement_factor(double cavity_brightness, double single_pass_brightness,
                               std::optional<double> finesse = std::nullopt);

struct SourceReport
{
    double linewidth_hz = 0.0;
    double fsr_hz = 0.0;
    double cavity_length_m = 0.0;
    double finesse = 0.0;
    double tau_w_intrinsic_s = 0.0;
    int n_modes = 0;
    std::optional<double> g2_zero;
    double total_coincidences = 0.0;
    double r_detect_per_s_mhz_mw = 0.0;
    double r_generation_per_s_mhz_mw = 0.0;
    std::optional<double> enhancement_factor;
    double finesse_squared = 0.0;

    friend bool operator==(const SourceReport &, const SourceReport &) = default;
};

struct G2Windows
{
    double peak_half_width_ps = 0.0;
    double floor_min_ps = 0.0;
    double floor_max_ps = 0.0;
};

struct ReportInputs
{
    DetectionEfficiencies efficiencies;
    double duration_s = 0.0;
    double pump_mw = 0.0;
    double system_jitter_fwhm_s = 0.0;
    std::optional<double> single_pass_brightness;
    /// Overrides the histogram-derived coincidence total.
    std::optional<double> total_coincidences;
    /// Defaults (histogram overload only): peak |tau| <= tau_w / 2, floor
    /// from 12 / omega_w + 2 tau_f to the window edge when the histogram reaches that far.
    std::optional<G2Windows> g2_windows;
};

/// Full metric chain from a histogram and its fit.
SourceReport build_report(const CoincidenceHistogram &h, const CombFitResult &fit, const ReportInputs &in);

/// Metric chain without a histogram; in.total_coincidences is required and
/// g2_zero is left empty.
SourceReport build_report(const CombFitResult &fit, const ReportInputs &in);

} // namespace cspdc

#endif // CSPDC_METROLOGY_HPP
