#ifndef CSPDC_CORRELATOR_HPP
#define CSPDC_CORRELATOR_HPP

#include "cspdc/timetag.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace cspdc
{
/// Counts of t_b - t_a delays in half-open bins
/// [tau_min + k * bin_width, tau_min + (k + 1) * bin_width), tau_min = -tau_max.
struct CoincidenceHistogram
{
    std::int64_t bin_width_ps = 0;
    std::int64_t tau_min_ps = 0;
    std::int64_t tau_max_ps = 0;
    std::vector<std::uint64_t> counts;
    std::uint64_t n_tags_1 = 0;
    std::uint64_t n_tags_2 = 0;
    double duration = 0.0; // seconds

    /// Zero-count histogram with the given geometry. Throws ConfigError.
    static CoincidenceHistogram empty(std::int64_t bin_width_ps, std::int64_t tau_max_ps);

    void validate() const;
    std::size_t n_bins() const noexcept { return counts.size(); }
    std::int64_t bin_lower_ps(std::size_t k) const noexcept
    {
        return tau_min_ps + static_cast<std::int64_t>(k) * bin_width_ps;
    }
    double bin_center_ps(std::size_t k) const noexcept
    {
        return static_cast<double>(bin_lower_ps(k)) + 0.5 * static_cast<double>(bin_width_ps);
    }
    std::uint64_t total() const noexcept;
    bool same_geometry(const CoincidenceHistogram &other) const noexcept;

    friend bool operator==(const CoincidenceHistogram &, const CoincidenceHistogram &) = default;
};

struct CorrelatorOptions
{
    /// Worker threads; 0 picks std::thread::hardware_concurrency().
    unsigned threads = 0;
    /// Streams of a (tags) below this size are always processed serially.
    std::size_t min_tags_per_thread = 1u << 16;
};

/// All-pairs cross-correlation of two sorted streams within |t_b - t_a| < tau_max
/// via a linear sliding-window sweep. When a and b are the same object,
/// identical-index self pairs are skipped. The result does not depend on the
/// thread count.
///
/// Throws ValidationError for unsorted input and ConfigError when tau_max is
/// not a positive multiple of bin_width.
CoincidenceHistogram correlate(const TimeTagStream &a, const TimeTagStream &b, std::int64_t bin_width_ps,
                               std::int64_t tau_max_ps, const CorrelatorOptions &options = {});

/// Element-wise sum; durations and tag counts add. Throws ConfigError on
/// mismatched geometry.
CoincidenceHistogram merge_histograms(const CoincidenceHistogram &h1, const CoincidenceHistogram &h2);

/// Splits the record into consecutive time chunks of chunk_ps, correlates
/// each chunk of a against the part of b that can pair with it (the chunk
/// widened by tau_max on both sides), and merges the partial histograms.
/// Equal to correlate(a, b, ...) bin for bin.
CoincidenceHistogram correlate_chunked(const TimeTagStream &a, const TimeTagStream &b, std::int64_t bin_width_ps,
                                       std::int64_t tau_max_ps, std::uint64_t chunk_ps);

} // namespace cspdc

#endif // CSPDC_CORRELATOR_HPP
