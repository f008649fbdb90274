#include "cspdc/timetag_sim.hpp"

#include "cspdc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cspdc
{
namespace
{
constexpr double kFwhmToSigma = 0.42466090014400953; // 1 / (2 sqrt(2 ln 2))

std::int64_t to_ps(double seconds) { return std::llround(seconds * kPicosecondsPerSecond); }

void apply_dead_time(std::vector<std::uint64_t> &tags, std::uint64_t dead_ps, std::uint64_t &lost)
{
    if (dead_ps == 0 || tags.empty())
        return;
    std::size_t out = 1;
    std::uint64_t last = tags.front();
    for (std::size_t i = 1; i < tags.size(); ++i)
    {
        if (tags[i] - last >= dead_ps)
        {
            last = tags[i];
            tags[out++] = tags[i];
        }
    }
    lost += tags.size() - out;
    tags.resize(out);
}

void add_poisson_events(std::vector<std::uint64_t> &tags, double rate, std::uint64_t duration_ps, Rng &rng,
                        std::uint64_t &count)
{
    if (rate <= 0.0)
        return;
    double t = 0.0;
    const double end = static_cast<double>(duration_ps) / kPicosecondsPerSecond;
    while (true)
    {
        t += rng.exponential(rate);
        if (t >= end)
            break;
        const auto ps = static_cast<std::uint64_t>(t * kPicosecondsPerSecond);
        if (ps >= duration_ps)
            break;
        tags.push_back(ps);
        ++count;
    }
}

// Stream indices for derive_seed; fixed so that adding a stage never
// perturbs the others.
enum SubStream : std::uint64_t
{
    kPairStream = 0,
    kDarkStream0 = 1,
    kDarkStream1 = 2,
    kAfterpulseStream0 = 3,
    kAfterpulseStream1 = 4,
};
} // namespace

double Rng::uniform()
{
    // 53 random mantissa bits, shifted half an ulp off zero.
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal()
{
    if (has_spare_)
    {
        has_spare_ = false;
        return spare_normal_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double phi = kTwoPi * uniform();
    spare_normal_ = r * std::sin(phi);
    has_spare_ = true;
    return r * std::cos(phi);
}

double Rng::exponential(double rate) { return -std::log(uniform()) / rate; }

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept
{
    // splitmix64 finaliser over a golden-ratio stride.
    std::uint64_t z = base + (index + 1) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

PairDelaySampler::PairDelaySampler(const CombModelParams &model) : model_(model)
{
    model_.c2 = 0.0;
    model_.validate();
    const double a = model_.omega_w * model_.tau_f;
    truncation_ = kTruncationDecays / model_.omega_w;
    n_max_ = static_cast<long long>(std::floor(truncation_ / model_.tau_f + 0.5));
    decay_per_tooth_ = a;
    tail_mass_ = -std::expm1(-a * static_cast<double>(n_max_));
    // sum_{m=1}^{n_max} exp(-a m)
    const double tail_sum = n_max_ > 0 ? std::exp(-a) * tail_mass_ / -std::expm1(-a) : 0.0;
    p_centre_ = 1.0 / (1.0 + 2.0 * tail_sum);
    const double m = 2.0 * model_.n_modes + 1.0;
    accept_scale_ = 1.0 / (m * m * std::exp(0.5 * a));
}

double PairDelaySampler::sample(Rng &rng)
{
    long long n = 0;
    for (int attempt = 0; attempt < kMaxRejections; ++attempt)
    {
        n = 0;
        if (n_max_ > 0 && rng.uniform() >= p_centre_)
        {
            // truncated geometric on 1..n_max with ratio exp(-a)
            const double g = -std::log1p(-rng.uniform() * tail_mass_) / decay_per_tooth_;
            n = std::min<long long>(1 + static_cast<long long>(std::floor(g)), n_max_);
            if (rng.uniform() < 0.5)
                n = -n;
        }
        const double offset = (rng.uniform() - 0.5) * model_.tau_f;
        const double tau = static_cast<double>(n) * model_.tau_f + offset;
        const double abs_tau = std::abs(tau);
        if (abs_tau > truncation_)
            continue;
        const double excess = abs_tau - static_cast<double>(std::llabs(n)) * model_.tau_f;
        const double accept = std::exp(-model_.omega_w * excess) *
                              comb_ratio_squared(model_.n_modes, offset, model_.tau_f) * accept_scale_;
        if (rng.uniform() < accept)
            return tau;
    }
    ++fallbacks_;
    return static_cast<double>(n) * model_.tau_f;
}

double sample_pair_delay(const CombModelParams &model, Rng &rng)
{
    PairDelaySampler sampler(model);
    return sampler.sample(rng);
}

void SourceConfig::validate() const
{
    if (!(pump_power_mw > 0.0) || !std::isfinite(pump_power_mw))
        throw ConfigError("source.pump_power_mw must be > 0");
    if (!(pair_rate_per_mw > 0.0) || !std::isfinite(pair_rate_per_mw))
        throw ConfigError("source.pair_rate_per_mw must be > 0");
    if (!(duration > 0.0))
        throw ConfigError("source.duration_s must be > 0");
    if (duration >= kMaxDurationSeconds)
        throw ConfigError("source.duration_s = " + std::to_string(duration) +
                          " overflows the 64-bit picosecond time range");
    CombModelParams shape = model;
    shape.c2 = 0.0;
    shape.validate();
}

void DetectorConfig::validate() const
{
    if (!(efficiency >= 0.0 && efficiency <= 1.0))
        throw ConfigError("detector.efficiency must lie in [0, 1]");
    if (!(dark_rate >= 0.0) || !std::isfinite(dark_rate))
        throw ConfigError("detector.dark_rate_hz must be >= 0");
    if (!(jitter_fwhm >= 0.0) || !std::isfinite(jitter_fwhm))
        throw ConfigError("detector.jitter_fwhm_s must be >= 0");
    if (!(dead_time >= 0.0) || !std::isfinite(dead_time))
        throw ConfigError("detector.dead_time_s must be >= 0");
    if (!(afterpulse_prob >= 0.0 && afterpulse_prob < 1.0))
        throw ConfigError("detector.afterpulse_prob must lie in [0, 1)");
    if (afterpulse_prob > 0.0 && !(afterpulse_time_constant > 0.0))
        throw ConfigError("detector.afterpulse_time_constant_s must be > 0");
}

SimulationResult simulate(const SourceConfig &source, const DetectorConfig &det0, const DetectorConfig &det1)
{
    source.validate();
    det0.validate();
    det1.validate();

    const std::array<const DetectorConfig *, 2> dets{&det0, &det1};
    const auto duration_ps = static_cast<std::uint64_t>(std::ceil(source.duration * kPicosecondsPerSecond));
    const auto in_range = [duration_ps](std::int64_t t) {
        return t >= 0 && static_cast<std::uint64_t>(t) < duration_ps;
    };

    SimulationResult result;
    for (int ch = 0; ch < 2; ++ch)
    {
        result.streams[ch].channel_id = ch;
        result.streams[ch].duration = source.duration;
    }
    auto &stats = result.stats;

    // Pair photons: emission, delay, routing, survival, jitter.
    {
        Rng rng(derive_seed(source.seed, kPairStream));
        PairDelaySampler sampler(source.model);
        const double rate = source.pair_rate();
        const double end = source.duration;
        const std::array<double, 2> sigma_ps{dets[0]->jitter_fwhm * kFwhmToSigma * kPicosecondsPerSecond,
                                             dets[1]->jitter_fwhm * kFwhmToSigma * kPicosecondsPerSecond};
        double t = 0.0;
        while (true)
        {
            t += rng.exponential(rate);
            if (t >= end)
                break;
            ++stats.pairs_generated;
            const auto emitted = static_cast<std::int64_t>(t * kPicosecondsPerSecond);
            const std::int64_t delay = to_ps(sampler.sample(rng));
            const std::array<std::int64_t, 2> times{emitted, emitted + delay};

            std::array<int, 2> channel{-1, -1};
            std::array<std::int64_t, 2> detected{};
            for (int k = 0; k < 2; ++k)
            {
                const int ch = source.routing == Routing::opposite ? k : (rng.uniform() < 0.5 ? 0 : 1);
                if (rng.uniform() >= dets[ch]->efficiency)
                    continue;
                std::int64_t when = times[k];
                if (sigma_ps[ch] > 0.0)
                    when += std::llround(rng.normal() * sigma_ps[ch]);
                if (!in_range(when))
                    continue;
                channel[k] = ch;
                detected[k] = when;
                result.streams[ch].tags.push_back(static_cast<std::uint64_t>(when));
                ++stats.channels[ch].photons_detected;
            }
            if (source.record_pair_delays && channel[0] >= 0 && channel[1] >= 0 && channel[0] != channel[1])
            {
                const int first = channel[0] == 0 ? 0 : 1;
                result.pair_delays_ps.push_back(detected[1 - first] - detected[first]);
            }
        }
        stats.delay_fallbacks = sampler.fallback_count();
    }

    for (int ch = 0; ch < 2; ++ch)
    {
        auto &tags = result.streams[ch].tags;
        auto &cs = stats.channels[ch];
        const DetectorConfig &det = *dets[ch];

        Rng dark_rng(derive_seed(source.seed, ch == 0 ? kDarkStream0 : kDarkStream1));
        add_poisson_events(tags, det.dark_rate, duration_ps, dark_rng, cs.dark_counts);

        std::sort(tags.begin(), tags.end());
        const auto dead_ps = static_cast<std::uint64_t>(to_ps(det.dead_time));
        apply_dead_time(tags, dead_ps, cs.dead_time_losses);

        if (det.afterpulse_prob > 0.0)
        {
            Rng ap_rng(derive_seed(source.seed, ch == 0 ? kAfterpulseStream0 : kAfterpulseStream1));
            std::vector<std::uint64_t> extra;
            for (const std::uint64_t t : tags)
            {
                if (ap_rng.uniform() >= det.afterpulse_prob)
                    continue;
                const double lag = det.dead_time + ap_rng.exponential(1.0 / det.afterpulse_time_constant);
                const std::uint64_t when = t + static_cast<std::uint64_t>(to_ps(lag));
                if (when < duration_ps)
                    extra.push_back(when);
            }
            cs.afterpulses = extra.size();
            std::sort(extra.begin(), extra.end());
            if (!extra.empty())
            {
                const auto mid = tags.insert(tags.end(), extra.begin(), extra.end());
                std::inplace_merge(tags.begin(), mid, tags.end());
                apply_dead_time(tags, dead_ps, cs.dead_time_losses);
            }
        }
    }
    return result;
}

std::vector<SimulationResult> sweep_pump(const SourceConfig &source, std::span<const double> powers_mw,
                                         const DetectorConfig &det0, const DetectorConfig &det1)
{
    if (powers_mw.empty())
        throw ConfigError("pump sweep needs at least one power");
    std::vector<SimulationResult> out;
    out.reserve(powers_mw.size());
    for (std::size_t i = 0; i < powers_mw.size(); ++i)
    {
        SourceConfig cfg = source;
        cfg.pump_power_mw = powers_mw[i];
        cfg.seed = derive_seed(source.seed, i);
        out.push_back(simulate(cfg, det0, det1));
    }
    return out;
}

double expected_singles_rate(const SourceConfig &source, const DetectorConfig &det)
{
    return source.pair_rate() * 2.0 * 0.5 * det.efficiency + det.dark_rate;
}

} // namespace cspdc
