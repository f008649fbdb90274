#include "cspdc/correlator.hpp"

#include "cspdc/errors.hpp"

#include <algorithm>
#include <limits>
#include <span>
#include <string>
#include <thread>

namespace cspdc
{
namespace
{
constexpr auto kMaxTag = static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max());

void check_geometry(std::int64_t bin_width_ps, std::int64_t tau_max_ps)
{
    if (bin_width_ps < 1)
        throw ConfigError("bin width must be >= 1 ps");
    if (tau_max_ps <= 0)
        throw ConfigError("tau_max must be > 0 ps");
    if (tau_max_ps % bin_width_ps != 0)
        throw ConfigError("tau_max (" + std::to_string(tau_max_ps) + " ps) is not a multiple of the bin width (" +
                          std::to_string(bin_width_ps) + " ps)");
}

void check_stream(const TimeTagStream &s, const char *name)
{
    if (!s.is_sorted())
        throw ValidationError(std::string("correlate: stream ") + name + " is not sorted");
    if (!s.tags.empty() && s.tags.back() > kMaxTag)
        throw ValidationError(std::string("correlate: stream ") + name + " has tags beyond 2^63 ps");
}

struct Slice
{
    std::span<const std::uint64_t> tags;
    std::size_t first_index = 0; // index of tags[0] in the parent stream
};

// Accumulates every pair (a_i, b_j) with -tau_max <= b_j - a_i < tau_max.
// With `aliased`, a and b index the same parent stream and equal parent
// indices are skipped.
void accumulate(Slice a, Slice b, bool aliased, std::int64_t bin_width, std::int64_t tau_max,
                std::vector<std::uint64_t> &counts)
{
    const auto &bt = b.tags;
    if (a.tags.empty() || bt.empty())
        return;
    std::size_t lo = 0;
    for (std::size_t i = 0; i < a.tags.size(); ++i)
    {
        const auto ta = static_cast<std::int64_t>(a.tags[i]);
        while (lo < bt.size() && static_cast<std::int64_t>(bt[lo]) + tau_max < ta)
            ++lo;
        const std::size_t self = a.first_index + i;
        for (std::size_t j = lo; j < bt.size(); ++j)
        {
            const std::int64_t d = static_cast<std::int64_t>(bt[j]) - ta;
            if (d >= tau_max)
                break;
            if (aliased && b.first_index + j == self)
                continue;
            ++counts[static_cast<std::size_t>((d + tau_max) / bin_width)];
        }
    }
}

std::size_t n_bins_for(std::int64_t bin_width_ps, std::int64_t tau_max_ps)
{
    return static_cast<std::size_t>(2 * tau_max_ps / bin_width_ps);
}
} // namespace

CoincidenceHistogram CoincidenceHistogram::empty(std::int64_t bin_width_ps, std::int64_t tau_max_ps)
{
    check_geometry(bin_width_ps, tau_max_ps);
    CoincidenceHistogram h;
    h.bin_width_ps = bin_width_ps;
    h.tau_min_ps = -tau_max_ps;
    h.tau_max_ps = tau_max_ps;
    h.counts.assign(n_bins_for(bin_width_ps, tau_max_ps), 0);
    return h;
}

void CoincidenceHistogram::validate() const
{
    if (tau_min_ps != -tau_max_ps)
        throw ValidationError("histogram window must be symmetric (tau_min = -tau_max)");
    try
    {
        check_geometry(bin_width_ps, tau_max_ps);
    }
    catch (const ConfigError &e)
    {
        throw ValidationError(std::string("histogram geometry: ") + e.what());
    }
    if (counts.size() != n_bins_for(bin_width_ps, tau_max_ps))
        throw ValidationError("histogram has " + std::to_string(counts.size()) + " bins, geometry implies " +
                              std::to_string(n_bins_for(bin_width_ps, tau_max_ps)));
    if (!(duration >= 0.0))
        throw ValidationError("histogram duration must be >= 0");
}

std::uint64_t CoincidenceHistogram::total() const noexcept
{
    std::uint64_t sum = 0;
    for (const auto c : counts)
        sum += c;
    return sum;
}

bool CoincidenceHistogram::same_geometry(const CoincidenceHistogram &other) const noexcept
{
    return bin_width_ps == other.bin_width_ps && tau_min_ps == other.tau_min_ps && tau_max_ps == other.tau_max_ps &&
           counts.size() == other.counts.size();
}

CoincidenceHistogram correlate(const TimeTagStream &a, const TimeTagStream &b, std::int64_t bin_width_ps,
                               std::int64_t tau_max_ps, const CorrelatorOptions &options)
{
    check_geometry(bin_width_ps, tau_max_ps);
    check_stream(a, "a");
    check_stream(b, "b");

    auto h = CoincidenceHistogram::empty(bin_width_ps, tau_max_ps);
    h.n_tags_1 = a.tags.size();
    h.n_tags_2 = b.tags.size();
    h.duration = std::max(a.duration, b.duration);
    const bool aliased = &a == &b || (a.tags.data() == b.tags.data() && a.tags.size() == b.tags.size());

    unsigned threads = options.threads != 0 ? options.threads : std::max(1u, std::thread::hardware_concurrency());
    const std::size_t min_per = std::max<std::size_t>(1, options.min_tags_per_thread);
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(1, a.tags.size() / min_per)));

    const Slice whole_b{b.tags, 0};
    if (threads <= 1)
    {
        accumulate({a.tags, 0}, whole_b, aliased, bin_width_ps, tau_max_ps, h.counts);
        return h;
    }

    // Slabs of a; each worker scans only the part of b its slab can reach.
    std::vector<std::vector<std::uint64_t>> partial(threads, std::vector<std::uint64_t>(h.counts.size(), 0));
    std::vector<std::thread> workers;
    const std::size_t per = (a.tags.size() + threads - 1) / threads;
    for (unsigned w = 0; w < threads; ++w)
    {
        const std::size_t begin = std::min(a.tags.size(), w * per);
        const std::size_t end = std::min(a.tags.size(), begin + per);
        workers.emplace_back([&, w, begin, end] {
            accumulate({std::span(a.tags).subspan(begin, end - begin), begin}, whole_b, aliased, bin_width_ps,
                       tau_max_ps, partial[w]);
        });
    }
    for (auto &t : workers)
        t.join();
    for (const auto &p : partial)
        for (std::size_t k = 0; k < p.size(); ++k)
            h.counts[k] += p[k];
    return h;
}

CoincidenceHistogram merge_histograms(const CoincidenceHistogram &h1, const CoincidenceHistogram &h2)
{
    if (!h1.same_geometry(h2))
        throw ConfigError("cannot merge histograms with different bin width or window");
    CoincidenceHistogram out = h1;
    for (std::size_t k = 0; k < out.counts.size(); ++k)
        out.counts[k] += h2.counts[k];
    out.n_tags_1 += h2.n_tags_1;
    out.n_tags_2 += h2.n_tags_2;
    out.duration += h2.duration;
    return out;
}

CoincidenceHistogram correlate_chunked(const TimeTagStream &a, const TimeTagStream &b, std::int64_t bin_width_ps,
                                       std::int64_t tau_max_ps, std::uint64_t chunk_ps)
{
    check_geometry(bin_width_ps, tau_max_ps);
    check_stream(a, "a");
    check_stream(b, "b");
    if (chunk_ps == 0)
        throw ConfigError("chunk length must be > 0 ps");
    const bool aliased = &a == &b || (a.tags.data() == b.tags.data() && a.tags.size() == b.tags.size());

    std::uint64_t last = 0;
    if (!a.tags.empty())
        last = a.tags.back();
    if (!b.tags.empty())
        last = std::max(last, b.tags.back());

    const auto span_a = std::span<const std::uint64_t>(a.tags);
    const auto span_b = std::span<const std::uint64_t>(b.tags);
    const auto reach = static_cast<std::uint64_t>(tau_max_ps);

    auto merged = CoincidenceHistogram::empty(bin_width_ps, tau_max_ps);
    for (std::uint64_t start = 0; start <= last; start += chunk_ps)
    {
        const std::uint64_t stop = start + chunk_ps;
        const auto a_lo = std::lower_bound(span_a.begin(), span_a.end(), start);
        const auto a_hi = std::lower_bound(a_lo, span_a.end(), stop);
        const auto b_lo = std::lower_bound(span_b.begin(), span_b.end(), start > reach ? start - reach : 0);
        const auto b_hi = std::lower_bound(b_lo, span_b.end(), stop + reach);

        auto part = CoincidenceHistogram::empty(bin_width_ps, tau_max_ps);
        part.n_tags_1 = static_cast<std::uint64_t>(a_hi - a_lo);
        part.n_tags_2 = static_cast<std::uint64_t>(std::lower_bound(span_b.begin(), span_b.end(), stop) -
                                                   std::lower_bound(span_b.begin(), span_b.end(), start));
        part.duration = static_cast<double>(chunk_ps) / kPicosecondsPerSecond;
        accumulate({{a_lo, a_hi}, static_cast<std::size_t>(a_lo - span_a.begin())},
                   {{b_lo, b_hi}, static_cast<std::size_t>(b_lo - span_b.begin())}, aliased, bin_width_ps, tau_max_ps,
                   part.counts);
        merged = merge_histograms(merged, part);
        if (stop < start) // wrapped
            break;
    }
    // Chunk durations only sum approximately; report the record duration.
    merged.duration = std::max(a.duration, b.duration);
    return merged;
}

} // namespace cspdc
