#ifndef CSPDC_BIPHOTON_MODEL_HPP
#define CSPDC_BIPHOTON_MODEL_HPP

// Closed-form second-order correlation models of a cavity-enhanced SPDC
// source and the cavity quantities derived from its design parameters.
//
// All times are seconds, rates are Hz, and the envelope decay rate omega_w is
// angular (rad/s) so that the reported linewidth is omega_w / 2pi.

#include <numbers>

namespace cspdc
{
inline constexpr double kSpeedOfLight = 2.998e8; // m/s
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
/// 4 ln 2: converts a Gaussian FWHM into the exponent of exp(-k t^2 / fwhm^2).
inline constexpr double kFourLn2 = 4.0 * std::numbers::ln2;

struct CombModelParams
{
    double c1 = 1.0;      // amplitude (counts per bin)
    double c2 = 0.0;      // background, as a fraction of c1
    double tau_f = 0.0;   // cavity round-trip time
    double tau_w = 0.0;   // FWHM of one comb tooth
    double omega_w = 0.0; // envelope decay rate = linewidth FWHM in rad/s
    int n_modes = 0;      // longitudinal modes on each side of the centre mode

    /// Upper bound on omega_w * tau_f used by validate(); the comb is only
    /// meaningful for linewidths well below the free spectral range.
    static constexpr double kDefaultMaxOmegaTau = 1.0;

    /// Throws ParameterError naming the first violated invariant.
    void validate(double max_omega_tau = kDefaultMaxOmegaTau) const;
    bool is_valid(double max_omega_tau = kDefaultMaxOmegaTau) const noexcept;

    double linewidth_hz() const noexcept { return omega_w / kTwoPi; }
    double free_spectral_range_rad() const noexcept { return kTwoPi / tau_f; }
};

struct CavityDesign
{
    double r_output = 0.0;          // output-coupler power reflectivity
    double internal_loss = 0.0;     // round-trip loss excluding the output coupler
    double round_trip_length = 0.0; // m
    double speed_of_light = kSpeedOfLight;

    void validate() const;

    /// Design whose round-trip length gives the requested free spectral range.
    static CavityDesign from_fsr(double r_output, double internal_loss, double fsr_hz);
};

struct DetectionEfficiencies
{
    double t1 = 1.0; // optics to single-mode fibre
    double f = 1.0;  // fibre coupling
    double t2 = 1.0; // after the fibre beam splitter
    double d = 1.0;  // detector

    void validate() const;
    double product() const noexcept { return t1 * f * t2 * d; }

    /// Detection-chain values of the reference setup (96% / 58% / 97% / 5%).
    static DetectionEfficiencies reference_setup() noexcept { return {0.96, 0.58, 0.97, 0.05}; }
};

/// |sin(M x) / sin(x)|^2 for M = 2N+1, with x = pi * tau / tau_f. Finite
/// everywhere; equals M^2 at tau = k * tau_f.
double comb_ratio_squared(int n_modes, double tau, double tau_f);

/// Multimode cavity correlation before detector jitter:
///   C1 [ exp(-omega_w |tau|) |sin((2N+1) dW tau / 2) / sin(dW tau / 2)|^2 + C2 ].
double eval_g2_ideal(const CombModelParams &p, double tau);

inline constexpr int kDefaultToothTruncation = 2;

/// Jitter-convolved comb: C1 [ exp(-omega_w |tau|) sum_n exp(-4 ln2 (|tau| - n tau_f)^2 / tau_w^2) + C2 ],
/// summing every integer n with |n tau_f - |tau|| <= tooth_truncation * tau_f.
double eval_g2_convolved(const CombModelParams &p, double tau,
                         int tooth_truncation = kDefaultToothTruncation);

double fsr_from_round_trip(double tau_f);
/// Round-trip optical path length c * tau_f.
double cavity_length_from_round_trip(double tau_f);
double finesse(double fsr_hz, double linewidth_fwhm_hz);

/// Expected SPDC linewidth: half the cold-cavity Lorentzian FWHM,
///   FSR (1 - rho) / (2 pi sqrt(rho)),  rho = R (1 - internal_loss).
double predicted_linewidth(const CavityDesign &design);

} // namespace cspdc

#endif // CSPDC_BIPHOTON_MODEL_HPP
