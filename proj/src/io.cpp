#include "cspdc/io.hpp"

#include "cspdc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

namespace cspdc
{
using nlohmann::json;

namespace
{
constexpr std::array<std::uint8_t, 4> kMagic{'T', 'T', 'G', '1'};
constexpr std::size_t kHeaderSize = 16;

void put_le(std::vector<std::uint8_t> &out, std::uint64_t v, int bytes)
{
    for (int i = 0; i < bytes; ++i)
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(const std::vector<std::uint8_t> &in, std::size_t at, int bytes)
{
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i)
        v |= static_cast<std::uint64_t>(in[at + static_cast<std::size_t>(i)]) << (8 * i);
    return v;
}

// Field access with path-qualified diagnostics.
const json &field(const json &j, const char *key, const std::string &path)
{
    if (!j.is_object())
        throw ConfigError(path + " must be a JSON object");
    const auto it = j.find(key);
    if (it == j.end() || it->is_null())
        throw ConfigError("missing required field '" + path + "." + key + "'");
    return *it;
}

double number(const json &j, const char *key, const std::string &path)
{
    const json &v = field(j, key, path);
    if (!v.is_number())
        throw ConfigError("field '" + path + "." + key + "' must be a number");
    return v.get<double>();
}

double number_or(const json &j, const char *key, const std::string &path, double fallback)
{
    if (!j.contains(key) || j.at(key).is_null())
        return fallback;
    return number(j, key, path);
}

std::int64_t integer(const json &j, const char *key, const std::string &path)
{
    const json &v = field(j, key, path);
    if (!v.is_number_integer())
        throw ConfigError("field '" + path + "." + key + "' must be an integer");
    return v.get<std::int64_t>();
}

double nullable(const json &j, const char *key)
{
    if (!j.contains(key) || j.at(key).is_null())
        return std::numeric_limits<double>::quiet_NaN();
    return j.at(key).get<double>();
}

std::optional<double> optional_number(const json &j, const char *key)
{
    if (!j.contains(key) || j.at(key).is_null())
        return std::nullopt;
    return j.at(key).get<double>();
}

template <class T> json maybe(const std::optional<T> &v) { return v ? json(*v) : json(nullptr); }

CombModelParams params_at(const json &j, const std::string &path, bool source_model)
{
    CombModelParams p;
    p.tau_f = number(j, "tau_f_s", path);
    if (j.contains("omega_w_rad_s"))
        p.omega_w = number(j, "omega_w_rad_s", path);
    else if (j.contains("linewidth_hz"))
        p.omega_w = kTwoPi * number(j, "linewidth_hz", path);
    else
        throw ConfigError("missing required field '" + path + ".omega_w_rad_s' (or linewidth_hz)");
    if (j.contains("n_modes"))
    {
        const auto n = integer(j, "n_modes", path);
        if (n < 0 || n > std::numeric_limits<int>::max())
            throw ConfigError("field '" + path + ".n_modes' out of range");
        p.n_modes = static_cast<int>(n);
    }
    else if (source_model)
    {
        throw ConfigError("missing required field '" + path + ".n_modes'");
    }
    if (source_model)
    {
        // Only the delay-density shape matters to the simulator.
        p.c1 = number_or(j, "c1", path, 1.0);
        p.c2 = number_or(j, "c2", path, 0.0);
        p.tau_w = number_or(j, "tau_w_s", path, std::min(0.5, 1.0 / (2.0 * p.n_modes + 1.0)) * p.tau_f);
    }
    else
    {
        p.c1 = number(j, "c1", path);
        p.c2 = number(j, "c2", path);
        p.tau_w = number(j, "tau_w_s", path);
    }
    return p;
}

DetectorConfig detector_at(const json &j, const std::string &path)
{
    DetectorConfig d;
    d.efficiency = number(j, "efficiency", path);
    d.dark_rate = number(j, "dark_rate_hz", path);
    d.jitter_fwhm = number(j, "jitter_fwhm_s", path);
    d.dead_time = number_or(j, "dead_time_s", path, 0.0);
    d.afterpulse_prob = number_or(j, "afterpulse_prob", path, 0.0);
    d.afterpulse_time_constant = number_or(j, "afterpulse_time_constant_s", path, d.afterpulse_time_constant);
    return d;
}

json detector_to_json(const DetectorConfig &d)
{
    return {{"efficiency", d.efficiency},
            {"dark_rate_hz", d.dark_rate},
            {"jitter_fwhm_s", d.jitter_fwhm},
            {"dead_time_s", d.dead_time},
            {"afterpulse_prob", d.afterpulse_prob},
            {"afterpulse_time_constant_s", d.afterpulse_time_constant}};
}

// Re-tags domain errors from component validation as configuration errors.
template <class F> void as_config_error(const std::string &path, F &&f)
{
    try
    {
        f();
    }
    catch (const ConfigError &)
    {
        throw;
    }
    catch (const std::invalid_argument &e)
    {
        throw ConfigError(path + ": " + e.what());
    }
}
} // namespace

std::vector<std::uint8_t> encode_timetags(const TimeTagStream &s)
{
    if (s.channel_id < 0 || s.channel_id > 255)
        throw ValidationError("channel id does not fit the time-tag header");
    if (!s.is_sorted())
        throw ValidationError("refusing to write an unsorted time-tag stream");
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderSize + 8 * s.tags.size());
    for (const auto byte : kMagic)
        out.push_back(byte);
    put_le(out, kTimeTagFormatVersion, 2);
    put_le(out, static_cast<std::uint64_t>(s.channel_id), 1);
    put_le(out, 0, 1);
    put_le(out, s.tags.size(), 8);
    for (const auto t : s.tags)
        put_le(out, t, 8);
    return out;
}

TimeTagStream decode_timetags(const std::vector<std::uint8_t> &bytes, std::optional<double> duration)
{
    if (bytes.size() < kHeaderSize)
        throw ValidationError("time-tag file shorter than its 16-byte header");
    if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin()))
        throw ValidationError("time-tag file has wrong magic (expected TTG1)");
    const auto version = get_le(bytes, 4, 2);
    if (version != kTimeTagFormatVersion)
        throw ValidationError("unsupported time-tag format version " + std::to_string(version));
    TimeTagStream s;
    s.channel_id = static_cast<int>(bytes[6]);
    const std::uint64_t count = get_le(bytes, 8, 8);
    if (count > (bytes.size() - kHeaderSize) / 8 || bytes.size() != kHeaderSize + 8 * count)
        throw ValidationError("time-tag file size does not match its tag count " + std::to_string(count));
    s.tags.resize(count);
    for (std::uint64_t i = 0; i < count; ++i)
        s.tags[i] = get_le(bytes, kHeaderSize + 8 * i, 8);
    if (!s.is_sorted())
        throw ValidationError("time-tag file is not sorted");
    if (!s.tags.empty() && s.tags.back() > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
        throw ValidationError("time-tag file has tags beyond 2^63 ps");
    if (duration)
        s.duration = *duration;
    else
        s.duration = s.tags.empty() ? 0.0 : static_cast<double>(s.tags.back() + 1) / kPicosecondsPerSecond;
    if (duration)
        s.validate();
    return s;
}

void write_timetags(const std::filesystem::path &path, const TimeTagStream &s)
{
    const auto bytes = encode_timetags(s);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw std::runtime_error("failed writing " + path.string());
}

TimeTagStream read_timetags(const std::filesystem::path &path, std::optional<double> duration)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ValidationError("cannot open time-tag file " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try
    {
        return decode_timetags(bytes, duration);
    }
    catch (const ValidationError &e)
    {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

json histogram_to_json(const CoincidenceHistogram &h)
{
    return {{"bin_width_ps", h.bin_width_ps}, {"tau_min_ps", h.tau_min_ps}, {"tau_max_ps", h.tau_max_ps},
            {"n_tags_1", h.n_tags_1},         {"n_tags_2", h.n_tags_2},     {"duration_s", h.duration},
            {"counts", h.counts}};
}

CoincidenceHistogram histogram_from_json(const json &j)
{
    CoincidenceHistogram h;
    try
    {
        h.bin_width_ps = j.at("bin_width_ps").get<std::int64_t>();
        h.tau_min_ps = j.at("tau_min_ps").get<std::int64_t>();
        h.tau_max_ps = j.at("tau_max_ps").get<std::int64_t>();
        h.n_tags_1 = j.value("n_tags_1", std::uint64_t{0});
        h.n_tags_2 = j.value("n_tags_2", std::uint64_t{0});
        h.duration = j.value("duration_s", 0.0);
        h.counts = j.at("counts").get<std::vector<std::uint64_t>>();
    }
    catch (const json::exception &e)
    {
        throw ValidationError(std::string("histogram document: ") + e.what());
    }
    h.validate();
    return h;
}

std::string histogram_to_csv(const CoincidenceHistogram &h)
{
    std::ostringstream os;
    os << "delay_ps,count\n";
    const bool whole = h.bin_width_ps % 2 == 0;
    char buf[64];
    for (std::size_t k = 0; k < h.n_bins(); ++k)
    {
        if (whole)
            std::snprintf(buf, sizeof buf, "%lld", static_cast<long long>(h.bin_lower_ps(k) + h.bin_width_ps / 2));
        else
            std::snprintf(buf, sizeof buf, "%.1f", h.bin_center_ps(k));
        os << buf << ',' << h.counts[k] << '\n';
    }
    return os.str();
}

CoincidenceHistogram histogram_from_csv(const std::string &text)
{
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("delay_ps,count", 0) != 0)
        throw ValidationError("histogram CSV must start with the header 'delay_ps,count'");
    std::vector<double> centres;
    std::vector<std::uint64_t> counts;
    while (std::getline(in, line))
    {
        if (line.empty())
            continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw ValidationError("histogram CSV row without a comma: " + line);
        try
        {
            centres.push_back(std::stod(line.substr(0, comma)));
            counts.push_back(std::stoull(line.substr(comma + 1)));
        }
        catch (const std::exception &)
        {
            throw ValidationError("histogram CSV row is not numeric: " + line);
        }
    }
    if (centres.size() < 2)
        throw ValidationError("histogram CSV needs at least two rows");
    const double width = centres[1] - centres[0];
    CoincidenceHistogram h;
    h.bin_width_ps = std::llround(width);
    h.tau_min_ps = std::llround(centres[0] - 0.5 * width);
    h.tau_max_ps = -h.tau_min_ps;
    h.counts = std::move(counts);
    for (std::size_t k = 0; k < centres.size(); ++k)
        if (std::abs(centres[k] - h.bin_center_ps(k)) > 1e-6)
            throw ValidationError("histogram CSV bin centres are not evenly spaced");
    h.validate();
    return h;
}

json params_to_json(const CombModelParams &p)
{
    return {{"c1", p.c1},
            {"c2", p.c2},
            {"tau_f_s", p.tau_f},
            {"tau_w_s", p.tau_w},
            {"omega_w_rad_s", p.omega_w},
            {"linewidth_hz", p.linewidth_hz()},
            {"n_modes", p.n_modes}};
}

CombModelParams params_from_json(const json &j) { return params_at(j, "params", false); }

json fit_to_json(const CombFitResult &r)
{
    json errors;
    const char *names[] = {"c1", "c2", "tau_f_s", "tau_w_s", "omega_w_rad_s"};
    for (std::size_t i = 0; i < kNumFitParams; ++i)
        errors[names[i]] = std::isfinite(r.std_errors[i]) ? json(r.std_errors[i]) : json(nullptr);
    return {{"params", params_to_json(r.params)},
            {"std_errors", errors},
            {"chi2_reduced", r.chi2_reduced},
            {"n_iterations", r.n_iterations},
            {"converged", r.converged},
            {"n_bins_used", r.n_bins_used},
            {"window_s", r.window}};
}

CombFitResult fit_from_json(const json &j)
{
    CombFitResult r;
    r.params = params_at(field(j, "params", "fit"), "fit.params", false);
    const json &errors = field(j, "std_errors", "fit");
    const char *names[] = {"c1", "c2", "tau_f_s", "tau_w_s", "omega_w_rad_s"};
    for (std::size_t i = 0; i < kNumFitParams; ++i)
        r.std_errors[i] = nullable(errors, names[i]);
    r.chi2_reduced = number(j, "chi2_reduced", "fit");
    r.n_iterations = static_cast<int>(integer(j, "n_iterations", "fit"));
    const json &conv = field(j, "converged", "fit");
    if (!conv.is_boolean())
        throw ConfigError("field 'fit.converged' must be a boolean");
    r.converged = conv.get<bool>();
    r.n_bins_used = j.value("n_bins_used", std::size_t{0});
    r.window = j.value("window_s", 0.0);
    return r;
}

json report_to_json(const SourceReport &r)
{
    return {{"linewidth_hz", r.linewidth_hz},
            {"fsr_hz", r.fsr_hz},
            {"cavity_length_m", r.cavity_length_m},
            {"finesse", r.finesse},
            {"tau_w_intrinsic_s", r.tau_w_intrinsic_s},
            {"n_modes", r.n_modes},
            {"g2_zero", maybe(r.g2_zero)},
            {"total_coincidences", r.total_coincidences},
            {"r_detect_per_s_mhz_mw", r.r_detect_per_s_mhz_mw},
            {"r_generation_per_s_mhz_mw", r.r_generation_per_s_mhz_mw},
            {"enhancement_factor", maybe(r.enhancement_factor)},
            {"finesse_squared", r.finesse_squared}};
}

SourceReport report_from_json(const json &j)
{
    SourceReport r;
    const std::string path = "report";
    r.linewidth_hz = number(j, "linewidth_hz", path);
    r.fsr_hz = number(j, "fsr_hz", path);
    r.cavity_length_m = number(j, "cavity_length_m", path);
    r.finesse = number(j, "finesse", path);
    r.tau_w_intrinsic_s = number(j, "tau_w_intrinsic_s", path);
    r.n_modes = static_cast<int>(integer(j, "n_modes", path));
    r.g2_zero = optional_number(j, "g2_zero");
    r.total_coincidences = number(j, "total_coincidences", path);
    r.r_detect_per_s_mhz_mw = number(j, "r_detect_per_s_mhz_mw", path);
    r.r_generation_per_s_mhz_mw = number(j, "r_generation_per_s_mhz_mw", path);
    r.enhancement_factor = optional_number(j, "enhancement_factor");
    r.finesse_squared = number(j, "finesse_squared", path);
    return r;
}

json efficiencies_to_json(const DetectionEfficiencies &e)
{
    return {{"t1", e.t1}, {"f", e.f}, {"t2", e.t2}, {"d", e.d}};
}

DetectionEfficiencies efficiencies_from_json(const json &j)
{
    const std::string path = "efficiencies";
    DetectionEfficiencies e{number(j, "t1", path), number(j, "f", path), number(j, "t2", path), number(j, "d", path)};
    as_config_error(path, [&] { e.validate(); });
    return e;
}

RunConfig run_config_from_json(const json &j)
{
    if (!j.is_object())
        throw ConfigError("run configuration must be a JSON object");
    RunConfig c;

    const json &src = field(j, "source", "config");
    c.source.pump_power_mw = number(src, "pump_power_mw", "source");
    c.source.pair_rate_per_mw = number(src, "pair_rate_per_mw", "source");
    c.source.duration = number(src, "duration_s", "source");
    {
        const json &seed = field(src, "seed", "source");
        if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<std::int64_t>() >= 0))
            throw ConfigError("field 'source.seed' must be a nonnegative integer");
        c.source.seed = seed.get<std::uint64_t>();
    }
    if (src.contains("routing"))
    {
        const auto routing = src.at("routing").get<std::string>();
        if (routing == "beam_splitter")
            c.source.routing = Routing::beam_splitter;
        else if (routing == "opposite")
            c.source.routing = Routing::opposite;
        else
            throw ConfigError("field 'source.routing' must be 'beam_splitter' or 'opposite'");
    }
    c.source.model = params_at(field(src, "model", "source"), "source.model", true);
    as_config_error("source", [&] { c.source.validate(); });

    const json &dets = field(j, "detectors", "config");
    if (!dets.is_array() || dets.size() != 2)
        throw ConfigError("field 'config.detectors' must be an array of two detector objects");
    for (std::size_t i = 0; i < 2; ++i)
    {
        const std::string path = "detectors[" + std::to_string(i) + "]";
        c.detectors[i] = detector_at(dets[i], path);
        as_config_error(path, [&] { c.detectors[i].validate(); });
    }

    if (j.contains("correlation"))
    {
        const json &corr = j.at("correlation");
        c.correlation.bin_width_ps = corr.contains("bin_width_ps") ? integer(corr, "bin_width_ps", "correlation")
                                                                    : c.correlation.bin_width_ps;
        c.correlation.tau_max_ps = corr.contains("tau_max_ps")
                                       ? integer(corr, "tau_max_ps", "correlation")
                                       : round_up_to_bins(40000, c.correlation.bin_width_ps);
        as_config_error("correlation", [&] { CoincidenceHistogram::empty(c.correlation.bin_width_ps, c.correlation.tau_max_ps); });
    }
    if (j.contains("fit"))
    {
        const json &fit = j.at("fit");
        if (fit.contains("max_iterations"))
            c.fit.max_iterations = static_cast<int>(integer(fit, "max_iterations", "fit"));
        c.fit.step_tolerance = number_or(fit, "step_tolerance", "fit", c.fit.step_tolerance);
        if (fit.contains("tooth_truncation"))
            c.fit.tooth_truncation = static_cast<int>(integer(fit, "tooth_truncation", "fit"));
        if (fit.contains("window_s"))
            c.fit.window = number(fit, "window_s", "fit");
    }
    if (j.contains("efficiencies"))
        c.efficiencies = efficiencies_from_json(j.at("efficiencies"));
    if (j.contains("output"))
        c.output_prefix = j.at("output").value("prefix", c.output_prefix);
    return c;
}

json run_config_to_json(const RunConfig &c)
{
    json model = params_to_json(c.source.model);
    model.erase("linewidth_hz");
    json fit = {{"max_iterations", c.fit.max_iterations},
                {"step_tolerance", c.fit.step_tolerance},
                {"tooth_truncation", c.fit.tooth_truncation}};
    if (c.fit.window)
        fit["window_s"] = *c.fit.window;
    return {{"source",
             {{"pump_power_mw", c.source.pump_power_mw},
              {"pair_rate_per_mw", c.source.pair_rate_per_mw},
              {"duration_s", c.source.duration},
              {"seed", c.source.seed},
              {"routing", c.source.routing == Routing::opposite ? "opposite" : "beam_splitter"},
              {"model", model}}},
            {"detectors", {detector_to_json(c.detectors[0]), detector_to_json(c.detectors[1])}},
            {"correlation", {{"bin_width_ps", c.correlation.bin_width_ps}, {"tau_max_ps", c.correlation.tau_max_ps}}},
            {"fit", fit},
            {"efficiencies", efficiencies_to_json(c.efficiencies)},
            {"output", {{"prefix", c.output_prefix}}}};
}

std::string config_hash(const json &j)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char ch : j.dump())
    {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

json read_json_file(const std::filesystem::path &path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open " + path.string());
    try
    {
        return json::parse(in);
    }
    catch (const json::parse_error &e)
    {
        throw ConfigError(path.string() + ": invalid JSON: " + e.what());
    }
}

void write_text_file(const std::filesystem::path &path, const std::string &text)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << text;
    if (!out)
        throw std::runtime_error("failed writing " + path.string());
}

std::int64_t round_up_to_bins(std::int64_t tau_ps, std::int64_t bin_width_ps)
{
    if (bin_width_ps < 1)
        throw ConfigError("bin width must be >= 1 ps");
    return (tau_ps + bin_width_ps - 1) / bin_width_ps * bin_width_ps;
}

} // namespace cspdc
