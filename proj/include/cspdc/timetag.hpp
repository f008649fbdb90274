#ifndef CSPDC_TIMETAG_HPP
#define CSPDC_TIMETAG_HPP

#include <cstdint>
#include <limits>
#include <vector>

namespace cspdc
{
inline constexpr double kPicosecondsPerSecond = 1e12;

/// Largest representable stream duration. Tags stay below 2^63 ps so that
/// delays between any two tags fit a signed 64-bit integer.
inline constexpr double kMaxDurationSeconds =
    static_cast<double>(std::numeric_limits<std::int64_t>::max()) / kPicosecondsPerSecond;

/// One detector channel: nondecreasing picosecond timestamps in [0, duration).
struct TimeTagStream
{
    int channel_id = 0;
    std::vector<std::uint64_t> tags;
    double duration = 0.0; // seconds

    /// Throws ValidationError if tags are unsorted, out of range, or the
    /// channel id is not 0 or 1.
    void validate() const;
    bool is_sorted() const noexcept;
    std::uint64_t duration_ps() const;
};

} // namespace cspdc

#endif // CSPDC_TIMETAG_HPP
