#ifndef CSPDC_FIT_HPP
#define CSPDC_FIT_HPP

// Weighted nonlinear least-squares fit of the jitter-convolved comb model to
// a coincidence histogram.

#include "cspdc/biphoton_model.hpp"
#include "cspdc/correlator.hpp"

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>

namespace cspdc
{
enum class FitParam : std::size_t
{
    c1 = 0,
    c2,
    tau_f,
    tau_w,
    omega_w,
};
inline constexpr std::size_t kNumFitParams = 5;

std::string_view fit_param_name(FitParam p) noexcept;

using ParamVector = std::array<double, kNumFitParams>;

ParamVector to_vector(const CombModelParams &p) noexcept;
/// n_modes is taken from `base`.
CombModelParams from_vector(const ParamVector &v, const CombModelParams &base = {}) noexcept;

struct ModelGradient
{
    double value = 0.0;
    ParamVector d{}; // partial derivatives, ordered as FitParam
};

/// eval_g2_convolved and its analytic gradient with respect to
/// (c1, c2, tau_f, tau_w, omega_w). No validation; callers pass valid params.
ModelGradient comb_model_gradient(const CombModelParams &p, double tau,
                                  int tooth_truncation = kDefaultToothTruncation) noexcept;

struct FitOptions
{
    int max_iterations = 200;
    double step_tolerance = 1e-8; // relative parameter step that ends the fit
    double initial_damping = 1e-3;
    int tooth_truncation = kDefaultToothTruncation;
    /// Half-width of the fitted delay range in seconds. Defaults to
    /// min(12 / omega_w(init), histogram extent).
    std::optional<double> window;
};

struct CombFitResult
{
    CombModelParams params; // n_modes is not determined by the fit
    ParamVector std_errors{};
    double chi2_reduced = 0.0;
    int n_iterations = 0;
    bool converged = false;
    std::size_t n_bins_used = 0;
    double window = 0.0; // seconds
};

/// Starting point from the histogram alone: tau_f from the autocorrelation
/// period refined by tooth centroids, the floor from inter-tooth bins in the
/// outer wings, omega_w from a log-linear fit of tooth areas, tau_w from the
/// central-peak FWHM, and c1 from the central-peak height.
///
/// Throws InitializationError when no comb with at least three significant
/// teeth is found.
CombModelParams initialize_comb(const CoincidenceHistogram &h);

/// Minimises sum_k (y_k - m_k)^2 / max(m_k, 1) over the five comb parameters
/// with a Levenberg-Marquardt iteration. Weights are refreshed from the
/// current model at every accepted step, so the fixed point is the Poisson
/// maximum-likelihood estimate. Non-convergence is reported, never thrown.
CombFitResult fit_comb(const CoincidenceHistogram &h, const std::optional<CombModelParams> &init = std::nullopt,
                       const FitOptions &options = {});

/// Same solver on explicit samples (delays in seconds, counts per bin).
CombFitResult fit_comb_samples(std::span<const double> tau, std::span<const double> counts,
                               const CombModelParams &init, const FitOptions &options = {});

} // namespace cspdc

#endif // CSPDC_FIT_HPP
