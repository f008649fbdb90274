#include "cspdc/timetag.hpp"

#include "cspdc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cspdc
{
bool TimeTagStream::is_sorted() const noexcept { return std::is_sorted(tags.begin(), tags.end()); }

std::uint64_t TimeTagStream::duration_ps() const
{
    if (!(duration >= 0.0) || duration > kMaxDurationSeconds)
        throw ValidationError("time-tag stream duration out of range");
    return static_cast<std::uint64_t>(std::ceil(duration * kPicosecondsPerSecond));
}

void TimeTagStream::validate() const
{
    if (channel_id != 0 && channel_id != 1)
        throw ValidationError("time-tag stream channel id must be 0 or 1, got " + std::to_string(channel_id));
    if (!is_sorted())
        throw ValidationError("time-tag stream " + std::to_string(channel_id) + " is not sorted");
    if (!tags.empty() && tags.back() >= duration_ps())
        throw ValidationError("time-tag stream " + std::to_string(channel_id) + " has tags beyond its duration");
}

} // namespace cspdc
