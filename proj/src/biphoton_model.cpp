#include "cspdc/biphoton_model.hpp"

#include "cspdc/errors.hpp"

#include <cmath>
#include <sstream>
#include <string>

namespace cspdc
{
namespace
{
[[noreturn]] void fail(const std::string &what) { throw ParameterError(what); }

bool positive_finite(double v) { return std::isfinite(v) && v > 0.0; }

std::string describe_violation(const CombModelParams &p, double max_omega_tau)
{
    if (!positive_finite(p.c1))
        return "c1 must be > 0";
    if (!std::isfinite(p.c2) || p.c2 < 0.0)
        return "c2 must be >= 0";
    if (!positive_finite(p.tau_f))
        return "tau_f must be > 0";
    if (!positive_finite(p.tau_w) || p.tau_w >= p.tau_f)
        return "tau_w must satisfy 0 < tau_w < tau_f";
    if (!positive_finite(p.omega_w))
        return "omega_w must be > 0";
    if (p.omega_w * p.tau_f >= max_omega_tau)
    {
        std::ostringstream os;
        os << "omega_w * tau_f = " << p.omega_w * p.tau_f << " exceeds the narrow-linewidth bound "
           << max_omega_tau;
        return os.str();
    }
    if (p.n_modes < 0)
        return "n_modes must be >= 0";
    return {};
}
} // namespace

void CombModelParams::validate(double max_omega_tau) const
{
    if (auto msg = describe_violation(*this, max_omega_tau); !msg.empty())
        fail("invalid comb parameters: " + msg);
}

bool CombModelParams::is_valid(double max_omega_tau) const noexcept
{
    return describe_violation(*this, max_omega_tau).empty();
}

void CavityDesign::validate() const
{
    if (!(r_output > 0.0 && r_output < 1.0))
        fail("cavity design: r_output must lie in (0, 1)");
    if (!(internal_loss >= 0.0 && internal_loss < 1.0))
        fail("cavity design: internal_loss must lie in [0, 1)");
    if (!positive_finite(round_trip_length))
        fail("cavity design: round_trip_length must be > 0");
    if (!positive_finite(speed_of_light))
        fail("cavity design: speed_of_light must be > 0");
}

CavityDesign CavityDesign::from_fsr(double r_output, double internal_loss, double fsr_hz)
{
    if (!positive_finite(fsr_hz))
        fail("cavity design: fsr must be > 0");
    return CavityDesign{r_output, internal_loss, kSpeedOfLight / fsr_hz, kSpeedOfLight};
}

void DetectionEfficiencies::validate() const
{
    const double values[] = {t1, f, t2, d};
    const char *names[] = {"t1", "f", "t2", "d"};
    for (int i = 0; i < 4; ++i)
        if (!(values[i] > 0.0 && values[i] <= 1.0))
            fail(std::string("detection efficiency ") + names[i] + " must lie in (0, 1]");
}

double comb_ratio_squared(int n_modes, double tau, double tau_f)
{
    const double m = 2.0 * n_modes + 1.0;
    if (n_modes == 0)
        return 1.0;
    // Reduce to the nearest singular point k*pi so the small-offset branch
    // sees an accurate delta even far out on the comb.
    const double u = std::abs(tau) / tau_f;
    const double delta = std::numbers::pi * (u - std::nearbyint(u));
    const double s = std::sin(delta);
    double ratio;
    if (std::abs(s) < 1e-6)
    {
        const double d2 = delta * delta;
        const double m2 = m * m;
        ratio = m * (1.0 - (m2 - 1.0) * d2 / 6.0 +
                     d2 * d2 * ((m2 * m2 - 1.0) / 120.0 + (1.0 - m2) / 36.0));
    }
    else
    {
        // sin((2N+1)(k pi + delta)) / sin(k pi + delta) = sin((2N+1) delta) / sin(delta)
        ratio = std::sin(m * delta) / s;
    }
    return ratio * ratio;
}

double eval_g2_ideal(const CombModelParams &p, double tau)
{
    p.validate();
    const double a = std::abs(tau);
    return p.c1 * (std::exp(-p.omega_w * a) * comb_ratio_squared(p.n_modes, a, p.tau_f) + p.c2);
}

double eval_g2_convolved(const CombModelParams &p, double tau, int tooth_truncation)
{
    p.validate();
    if (tooth_truncation < 1)
        fail("tooth_truncation must be >= 1");
    const double a = std::abs(tau);
    const double centre = a / p.tau_f;
    const auto n_lo = static_cast<long long>(std::ceil(centre - tooth_truncation));
    const auto n_hi = static_cast<long long>(std::floor(centre + tooth_truncation));
    const double inv_w2 = 1.0 / (p.tau_w * p.tau_w);
    double teeth = 0.0;
    for (long long n = n_lo; n <= n_hi; ++n)
    {
        const double dt = a - static_cast<double>(n) * p.tau_f;
        teeth += std::exp(-kFourLn2 * dt * dt * inv_w2);
    }
    return p.c1 * (std::exp(-p.omega_w * a) * teeth + p.c2);
}

double fsr_from_round_trip(double tau_f)
{
    if (!positive_finite(tau_f))
        fail("round-trip time must be > 0");
    return 1.0 / tau_f;
}

double cavity_length_from_round_trip(double tau_f)
{
    if (!positive_finite(tau_f))
        fail("round-trip time must be > 0");
    return kSpeedOfLight * tau_f;
}

double finesse(double fsr_hz, double linewidth_fwhm_hz)
{
    if (!positive_finite(fsr_hz) || !positive_finite(linewidth_fwhm_hz))
        fail("finesse requires positive fsr and linewidth");
    return fsr_hz / linewidth_fwhm_hz;
}

double predicted_linewidth(const CavityDesign &design)
{
    design.validate();
    const double rho = design.r_output * (1.0 - design.internal_loss);
    const double fsr = design.speed_of_light / design.round_trip_length;
    return 0.5 * fsr * (1.0 - rho) / (std::numbers::pi * std::sqrt(rho));
}

} // namespace cspdc
