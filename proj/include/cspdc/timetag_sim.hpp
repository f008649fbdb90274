#ifndef CSPDC_TIMETAG_SIM_HPP
#define CSPDC_TIMETAG_SIM_HPP

// Seeded Monte Carlo generator of two-detector time-tag streams for a
// cavity-enhanced SPDC source observed through a fibre beam splitter.
//
// Results are a pure function of (configuration, seed). Random variates are
// drawn from raw mt19937_64 output with local transforms so that streams are
// bit-identical across standard library implementations.

#include "cspdc/biphoton_model.hpp"
#include "cspdc/timetag.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace cspdc
{
class Rng
{
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform on the open interval (0, 1).
    double uniform();
    double normal();
    double exponential(double rate);

private:
    std::mt19937_64 engine_;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

/// Independent, reproducible seed for sub-stream `index` of `base`.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept;

/// Draws signed pair delays (seconds) from the normalised, symmetrised
/// multimode-cavity density exp(-omega_w |tau|) |sin(M x)/sin(x)|^2,
/// truncated at |tau| <= 12 / omega_w.
///
/// Proposals pick a tooth n with probability proportional to
/// exp(-omega_w |n| tau_f) and a uniform offset within that period; rejection
/// against the exact density makes the draw exact. After kMaxRejections
/// consecutive rejections the proposed tooth centre is returned and counted.
class PairDelaySampler
{
public:
    static constexpr int kMaxRejections = 10000;
    static constexpr double kTruncationDecays = 12.0;

    /// c2 of the model is ignored. Throws ParameterError on invalid params.
    explicit PairDelaySampler(const CombModelParams &model);

    double sample(Rng &rng);
    double truncation() const noexcept { return truncation_; }
    std::uint64_t fallback_count() const noexcept { return fallbacks_; }

private:
    CombModelParams model_;
    double truncation_ = 0.0;
    long long n_max_ = 0;
    double p_centre_ = 1.0;     // probability of proposing tooth 0
    double tail_mass_ = 0.0;    // 1 - exp(-a n_max)
    double decay_per_tooth_ = 0.0;
    double accept_scale_ = 1.0; // 1 / (M^2 exp(a/2))
    std::uint64_t fallbacks_ = 0;
};

/// One-shot convenience wrapper around PairDelaySampler.
double sample_pair_delay(const CombModelParams &model, Rng &rng);

enum class Routing
{
    beam_splitter, // each photon picks a detector with probability 1/2
    opposite,      // first photon to detector 0, second to detector 1 (diagnostics)
};

struct SourceConfig
{
    double pump_power_mw = 0.0;
    double pair_rate_per_mw = 0.0; // generated pairs / (s mW)
    CombModelParams model;         // delay-density shape; c2 is forced to 0
    double duration = 0.0;         // seconds
    std::uint64_t seed = 0;
    Routing routing = Routing::beam_splitter;
    /// Keep the detector-1 minus detector-0 delay of every pair whose photons
    /// were both detected on different channels (before dead time).
    bool record_pair_delays = false;

    void validate() const;
    double pair_rate() const noexcept { return pump_power_mw * pair_rate_per_mw; }
};

struct DetectorConfig
{
    double efficiency = 1.0;
    double dark_rate = 0.0;   // counts / s
    double jitter_fwhm = 0.0; // seconds, Gaussian
    double dead_time = 0.0;   // seconds, nonparalyzable
    double afterpulse_prob = 0.0;
    double afterpulse_time_constant = 1e-6; // seconds, delay after dead time

    void validate() const;
};

struct ChannelStats
{
    std::uint64_t photons_detected = 0;
    std::uint64_t dark_counts = 0;
    std::uint64_t afterpulses = 0;
    std::uint64_t dead_time_losses = 0;
};

struct SimulationStats
{
    std::uint64_t pairs_generated = 0;
    std::uint64_t delay_fallbacks = 0;
    std::array<ChannelStats, 2> channels{};
};

struct SimulationResult
{
    std::array<TimeTagStream, 2> streams;
    SimulationStats stats;
    std::vector<std::int64_t> pair_delays_ps; // only with record_pair_delays
};

/// Pipeline: Poisson pair emission, pair delay, beam-splitter routing,
/// detection efficiency, Gaussian jitter, dark counts, sort, nonparalyzable
/// dead time, optional afterpulses.
/// Throws ConfigError / ParameterError on invalid configuration.
SimulationResult simulate(const SourceConfig &source, const DetectorConfig &det0,
                          const DetectorConfig &det1);

/// One simulation per pump power; run i uses seed derive_seed(source.seed, i).
std::vector<SimulationResult> sweep_pump(const SourceConfig &source, std::span<const double> powers_mw,
                                         const DetectorConfig &det0, const DetectorConfig &det1);

/// Expected singles rate of a detector before dead time:
/// pair_rate * 2 photons * 1/2 routing * efficiency + dark_rate.
double expected_singles_rate(const SourceConfig &source, const DetectorConfig &det);

} // namespace cspdc

#endif // CSPDC_TIMETAG_SIM_HPP
