#include "cspdc/fit.hpp"

#include "cspdc/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace cspdc
{
namespace
{
using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat5 = Eigen::Matrix<double, 5, 5>;

constexpr double kMaxDamping = 1e16;

struct Samples
{
    std::vector<double> tau;
    std::vector<double> y;
};

double weighted_chi2(const Samples &s, const std::vector<double> &model, const std::vector<double> &weights)
{
    // Fixed-order summation keeps results run-to-run identical.
    double chi2 = 0.0;
    for (std::size_t k = 0; k < s.y.size(); ++k)
    {
        const double r = s.y[k] - model[k];
        chi2 += weights[k] * r * r;
    }
    return chi2;
}

void evaluate(const Samples &s, const CombModelParams &p, int truncation, std::vector<double> &model)
{
    model.resize(s.tau.size());
    for (std::size_t k = 0; k < s.tau.size(); ++k)
        model[k] = comb_model_gradient(p, s.tau[k], truncation).value;
}

// Projects onto c2 >= 0; returns false if the remaining invariants fail.
bool admissible(CombModelParams &p)
{
    p.c2 = std::max(p.c2, 0.0);
    return p.is_valid();
}

CombFitResult run_fit(const Samples &s, const CombModelParams &init, const FitOptions &opt)
{
    init.validate();
    if (s.tau.size() <= kNumFitParams)
        throw ConfigError("fit needs more than " + std::to_string(kNumFitParams) + " bins, got " +
                          std::to_string(s.tau.size()));
    if (opt.max_iterations < 1 || !(opt.step_tolerance > 0.0) || opt.tooth_truncation < 1)
        throw ConfigError("invalid fit options");

    // Work in units of the starting values so the normal equations are well scaled.
    ParamVector scale = to_vector(init);
    for (auto &v : scale)
        v = std::abs(v);
    scale[static_cast<std::size_t>(FitParam::c2)] = std::max(scale[1], 1e-3);

    const std::size_t n = s.tau.size();
    CombModelParams p = init;
    std::vector<double> model(n), weights(n), trial(n);
    Eigen::Matrix<double, Eigen::Dynamic, 5> jac(n, 5);

    auto linearise = [&](const CombModelParams &at) {
        for (std::size_t k = 0; k < n; ++k)
        {
            const auto g = comb_model_gradient(at, s.tau[k], opt.tooth_truncation);
            model[k] = g.value;
            weights[k] = 1.0 / std::max(g.value, 1.0);
            for (std::size_t i = 0; i < kNumFitParams; ++i)
                jac(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = g.d[i] * scale[i];
        }
    };

    CombFitResult result;
    result.n_bins_used = n;
    double damping = opt.initial_damping;
    linearise(p);
    double chi2 = weighted_chi2(s, model, weights);

    bool converged = false;
    int iter = 0;
    while (iter < opt.max_iterations && !converged)
    {
        ++iter;
        Mat5 a = Mat5::Zero();
        Vec5 grad = Vec5::Zero();
        for (std::size_t k = 0; k < n; ++k)
        {
            const Vec5 row = jac.row(static_cast<Eigen::Index>(k)).transpose();
            a.noalias() += weights[k] * row * row.transpose();
            grad += weights[k] * (s.y[k] - model[k]) * row;
        }

        bool accepted = false;
        while (!accepted)
        {
            Mat5 damped = a;
            damped.diagonal() += damping * a.diagonal().cwiseMax(1e-300);
            const Vec5 step = damped.ldlt().solve(grad);

            ParamVector v = to_vector(p);
            double rel_step = 0.0;
            for (std::size_t i = 0; i < kNumFitParams; ++i)
            {
                const double dv = step(static_cast<Eigen::Index>(i)) * scale[i];
                rel_step = std::max(rel_step, std::abs(dv) / std::max(std::abs(v[i]), scale[i] * 1e-12));
                v[i] += dv;
            }
            if (!std::isfinite(rel_step))
            {
                damping *= 10.0;
            }
            else
            {
                CombModelParams candidate = from_vector(v, p);
                if (admissible(candidate))
                {
                    evaluate(s, candidate, opt.tooth_truncation, trial);
                    const double trial_chi2 = weighted_chi2(s, trial, weights);
                    if (trial_chi2 <= chi2)
                    {
                        p = candidate;
                        damping = std::max(damping / 10.0, 1e-12);
                        accepted = true;
                    }
                    else
                    {
                        damping *= 10.0;
                    }
                }
                else
                {
                    damping *= 10.0;
                }
            }
            if (rel_step < opt.step_tolerance)
            {
                converged = true;
                break;
            }
            if (damping > kMaxDamping)
                break;
        }
        if (accepted)
        {
            linearise(p);
            chi2 = weighted_chi2(s, model, weights);
        }
        if (!accepted && !converged)
            break; // damping exhausted without progress
    }

    result.params = p;
    result.n_iterations = iter;

    Mat5 a = Mat5::Zero();
    for (std::size_t k = 0; k < n; ++k)
    {
        const Vec5 row = jac.row(static_cast<Eigen::Index>(k)).transpose();
        a.noalias() += weights[k] * row * row.transpose();
    }
    const Eigen::FullPivLU<Mat5> lu(a);
    bool errors_finite = lu.isInvertible();
    if (errors_finite)
    {
        const Mat5 cov = lu.inverse();
        for (std::size_t i = 0; i < kNumFitParams; ++i)
        {
            const double var = cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
            result.std_errors[i] = var >= 0.0 ? std::sqrt(var) * scale[i] : std::numeric_limits<double>::quiet_NaN();
            errors_finite = errors_finite && std::isfinite(result.std_errors[i]);
        }
    }
    else
    {
        result.std_errors.fill(std::numeric_limits<double>::quiet_NaN());
    }
    result.chi2_reduced = chi2 / static_cast<double>(n - kNumFitParams);
    result.converged = converged && errors_finite && p.is_valid();
    return result;
}

// ---------------------------------------------------------------------------
// Initialisation

struct Tooth
{
    long long index = 0;
    double area = 0.0;
    double sigma = 0.0;
};

double parabolic_offset(double left, double mid, double right)
{
    const double denom = left - 2.0 * mid + right;
    if (denom >= 0.0)
        return 0.0;
    return std::clamp(0.5 * (left - right) / denom, -0.5, 0.5);
}

} // namespace

std::string_view fit_param_name(FitParam p) noexcept
{
    switch (p)
    {
    case FitParam::c1:
        return "c1";
    case FitParam::c2:
        return "c2";
    case FitParam::tau_f:
        return "tau_f";
    case FitParam::tau_w:
        return "tau_w";
    case FitParam::omega_w:
        return "omega_w";
    }
    return "?";
}

ParamVector to_vector(const CombModelParams &p) noexcept { return {p.c1, p.c2, p.tau_f, p.tau_w, p.omega_w}; }

CombModelParams from_vector(const ParamVector &v, const CombModelParams &base) noexcept
{
    CombModelParams p = base;
    p.c1 = v[0];
    p.c2 = v[1];
    p.tau_f = v[2];
    p.tau_w = v[3];
    p.omega_w = v[4];
    return p;
}

ModelGradient comb_model_gradient(const CombModelParams &p, double tau, int tooth_truncation) noexcept
{
    const double a = std::abs(tau);
    const double centre = a / p.tau_f;
    const auto n_lo = static_cast<long long>(std::ceil(centre - tooth_truncation));
    const auto n_hi = static_cast<long long>(std::floor(centre + tooth_truncation));
    const double inv_w2 = 1.0 / (p.tau_w * p.tau_w);

    double teeth = 0.0, d_tau_f = 0.0, d_tau_w = 0.0;
    for (long long n = n_lo; n <= n_hi; ++n)
    {
        const double nn = static_cast<double>(n);
        const double dt = a - nn * p.tau_f;
        const double g = std::exp(-kFourLn2 * dt * dt * inv_w2);
        teeth += g;
        d_tau_f += g * 2.0 * kFourLn2 * dt * nn * inv_w2;
        d_tau_w += g * 2.0 * kFourLn2 * dt * dt * inv_w2 / p.tau_w;
    }
    const double env = std::exp(-p.omega_w * a);

    ModelGradient out;
    out.value = p.c1 * (env * teeth + p.c2);
    out.d[static_cast<std::size_t>(FitParam::c1)] = env * teeth + p.c2;
    out.d[static_cast<std::size_t>(FitParam::c2)] = p.c1;
    out.d[static_cast<std::size_t>(FitParam::tau_f)] = p.c1 * env * d_tau_f;
    out.d[static_cast<std::size_t>(FitParam::tau_w)] = p.c1 * env * d_tau_w;
    out.d[static_cast<std::size_t>(FitParam::omega_w)] = -p.c1 * a * env * teeth;
    return out;
}

CombModelParams initialize_comb(const CoincidenceHistogram &h)
{
    h.validate();
    const std::size_t nb = h.n_bins();
    if (nb < 16)
        throw InitializationError("histogram too small to locate a comb (" + std::to_string(nb) + " bins)");
    const double bw = static_cast<double>(h.bin_width_ps) / kPicosecondsPerSecond;
    const double extent = static_cast<double>(h.tau_max_ps) / kPicosecondsPerSecond;
    std::vector<double> y(h.counts.begin(), h.counts.end());
    std::vector<double> centre(nb);
    for (std::size_t k = 0; k < nb; ++k)
        centre[k] = h.bin_center_ps(k) / kPicosecondsPerSecond;

    // Comb period from the autocorrelation of the mean-subtracted histogram.
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(nb);
    const std::size_t max_lag = nb / 2;
    std::vector<double> ac(max_lag + 1, 0.0);
    for (std::size_t lag = 0; lag <= max_lag; ++lag)
        for (std::size_t k = 0; k + lag < nb; ++k)
            ac[lag] += (y[k] - mean) * (y[k + lag] - mean);
    if (!(ac[0] > 0.0))
        throw InitializationError("histogram is flat; no comb structure");

    std::size_t first_min = 0;
    for (std::size_t lag = 1; lag + 1 <= max_lag; ++lag)
    {
        const double here = (ac[lag - 1] + ac[lag] + ac[lag + 1]) / 3.0;
        const double next = lag + 2 <= max_lag ? (ac[lag] + ac[lag + 1] + ac[lag + 2]) / 3.0 : ac[lag + 1];
        if (here <= next)
        {
            first_min = lag;
            break;
        }
    }
    if (first_min == 0)
        throw InitializationError("no periodic structure in the histogram autocorrelation");
    std::size_t best = first_min;
    for (std::size_t lag = first_min; lag < max_lag; ++lag)
        if (ac[lag] > ac[best])
            best = lag;
    if (best <= 1 || best >= max_lag || ac[best] < 0.1 * ac[0])
        throw InitializationError("no comb period found in the histogram autocorrelation");
    double tau_f = (static_cast<double>(best) + parabolic_offset(ac[best - 1], ac[best], ac[best + 1])) * bw;

    // Floor from bins near the midpoints between teeth, outer half of the window.
    auto floor_estimate = [&](double period, bool outer_only) {
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t k = 0; k < nb; ++k)
        {
            const double u = std::abs(centre[k]) / period;
            const double frac = std::abs(u - std::nearbyint(u));
            if (frac >= 0.4 && (!outer_only || std::abs(centre[k]) >= 0.5 * extent))
            {
                sum += y[k];
                ++count;
            }
        }
        return count > 0 ? sum / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
    };

    // Tooth centroids refine the period (regression through the origin).
    const auto max_tooth = static_cast<long long>(std::floor((extent - 0.5 * tau_f) / tau_f));
    if (max_tooth < 1)
        throw InitializationError("histogram window shorter than one comb period");
    double floor = floor_estimate(tau_f, true);
    if (!std::isfinite(floor))
        floor = floor_estimate(tau_f, false);
    {
        double num = 0.0, den = 0.0;
        for (long long n = -max_tooth; n <= max_tooth; ++n)
        {
            if (n == 0)
                continue;
            double mass = 0.0, moment = 0.0;
            const double c = static_cast<double>(n) * tau_f;
            for (std::size_t k = 0; k < nb; ++k)
            {
                if (std::abs(centre[k] - c) <= 0.25 * tau_f)
                {
                    const double excess = std::max(y[k] - floor, 0.0);
                    mass += excess;
                    moment += excess * centre[k];
                }
            }
            if (mass > 0.0)
            {
                const double pos = moment / mass;
                const double nn = static_cast<double>(n);
                num += mass * nn * pos;
                den += mass * nn * nn;
            }
        }
        if (den > 0.0)
            tau_f = num / den;
    }
    floor = floor_estimate(tau_f, true);
    if (!std::isfinite(floor))
        floor = floor_estimate(tau_f, false);

    // Tooth areas above the floor: significance and envelope decay.
    std::vector<Tooth> teeth;
    const auto teeth_available = static_cast<long long>(std::floor((extent - 0.5 * tau_f) / tau_f));
    for (long long n = -teeth_available; n <= teeth_available; ++n)
    {
        const double c = static_cast<double>(n) * tau_f;
        double area = 0.0, var = 0.0;
        for (std::size_t k = 0; k < nb; ++k)
        {
            if (std::abs(centre[k] - c) < 0.5 * tau_f)
            {
                area += y[k] - floor;
                var += std::max(y[k], 1.0);
            }
        }
        teeth.push_back({n, area, std::sqrt(var)});
    }
    std::size_t significant = 0;
    for (const auto &t : teeth)
        if (t.area > 3.0 * t.sigma)
            ++significant;
    if (significant < 3)
        throw InitializationError("fewer than three significant comb teeth (" + std::to_string(significant) + ")");

    double omega = 0.0;
    {
        double sw = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
        for (const auto &t : teeth)
        {
            if (!(t.area > 3.0 * t.sigma))
                continue;
            const double x = std::abs(static_cast<double>(t.index)) * tau_f;
            const double ly = std::log(t.area);
            const double w = (t.area / t.sigma) * (t.area / t.sigma); // 1 / var(ln area)
            sw += w;
            sx += w * x;
            sy += w * ly;
            sxx += w * x * x;
            sxy += w * x * ly;
        }
        const double det = sw * sxx - sx * sx;
        if (det > 0.0)
            omega = -(sw * sxy - sx * sy) / det;
    }
    if (!(omega > 0.0) || omega * tau_f >= 0.5)
        omega = 0.1 / extent;

    // Central peak: height and FWHM.
    std::size_t peak = nb / 2;
    for (std::size_t k = 0; k < nb; ++k)
        if (std::abs(centre[k]) <= 0.25 * tau_f && y[k] > y[peak])
            peak = k;
    const double height = y[peak] - floor;
    if (!(height > 0.0))
        throw InitializationError("central comb tooth not above the floor");
    const double half = floor + 0.5 * height;
    auto crossing = [&](int dir) {
        std::size_t k = peak;
        while (true)
        {
            const std::size_t next = dir > 0 ? k + 1 : k - 1;
            if ((dir > 0 && next >= nb) || (dir < 0 && k == 0) || std::abs(centre[next]) > 0.5 * tau_f)
                return centre[k];
            if (y[next] <= half)
            {
                const double t = (y[k] - half) / (y[k] - y[next]);
                return centre[k] + t * (centre[next] - centre[k]);
            }
            k = next;
        }
    };
    double tau_w = crossing(+1) - crossing(-1);
    tau_w = std::clamp(tau_w, bw, 0.9 * tau_f);

    CombModelParams p;
    p.c1 = height;
    p.c2 = std::max(floor, 0.0) / height;
    p.tau_f = tau_f;
    p.tau_w = tau_w;
    p.omega_w = omega;
    p.n_modes = 0;
    if (!p.is_valid())
        throw InitializationError("initial comb estimate is not a valid parameter set");
    return p;
}

CombFitResult fit_comb(const CoincidenceHistogram &h, const std::optional<CombModelParams> &init,
                       const FitOptions &options)
{
    h.validate();
    const CombModelParams start = init ? *init : initialize_comb(h);
    start.validate();
    const double extent = static_cast<double>(h.tau_max_ps) / kPicosecondsPerSecond;
    double window = options.window ? *options.window : std::min(12.0 / start.omega_w, extent);
    if (!(window > 0.0))
        throw ConfigError("fit window must be > 0");

    Samples s;
    for (std::size_t k = 0; k < h.n_bins(); ++k)
    {
        const double t = h.bin_center_ps(k) / kPicosecondsPerSecond;
        if (std::abs(t) <= window)
        {
            s.tau.push_back(t);
            s.y.push_back(static_cast<double>(h.counts[k]));
        }
    }
    auto result = run_fit(s, start, options);
    result.window = window;
    return result;
}

CombFitResult fit_comb_samples(std::span<const double> tau, std::span<const double> counts,
                               const CombModelParams &init, const FitOptions &options)
{
    if (tau.size() != counts.size())
        throw ConfigError("fit samples: delay and count arrays differ in length");
    Samples s{{tau.begin(), tau.end()}, {counts.begin(), counts.end()}};
    auto result = run_fit(s, init, options);
    double window = 0.0;
    for (const double t : tau)
        window = std::max(window, std::abs(t));
    result.window = window;
    return result;
}

} // namespace cspdc
