#ifndef CSPDC_IO_HPP
#define CSPDC_IO_HPP

// File formats: binary time-tag files, histogram CSV/JSON, fit and report
// JSON documents, and the run configuration.
//
// Time-tag file layout (all integers little-endian):
//   "TTG1" | u16 version (=1) | u8 channel | u8 reserved (=0) | u64 count | count x u64 ps

#include "cspdc/biphoton_model.hpp"
#include "cspdc/correlator.hpp"
#include "cspdc/fit.hpp"
#include "cspdc/metrology.hpp"
#include "cspdc/timetag.hpp"
#include "cspdc/timetag_sim.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cspdc
{
inline constexpr std::uint16_t kTimeTagFormatVersion = 1;

/// The file format carries no duration; decode/read set it to `duration` when
/// given, else to (last tag + 1 ps). Malformed input throws ValidationError.
std::vector<std::uint8_t> encode_timetags(const TimeTagStream &s);
TimeTagStream decode_timetags(const std::vector<std::uint8_t> &bytes, std::optional<double> duration = std::nullopt);
void write_timetags(const std::filesystem::path &path, const TimeTagStream &s);
TimeTagStream read_timetags(const std::filesystem::path &path, std::optional<double> duration = std::nullopt);

nlohmann::json histogram_to_json(const CoincidenceHistogram &h);
CoincidenceHistogram histogram_from_json(const nlohmann::json &j);
/// "delay_ps,count" rows at bin centres.
std::string histogram_to_csv(const CoincidenceHistogram &h);
/// Geometry is rebuilt from the bin centres; tag counts and duration are not
/// part of the CSV and come back as zero.
CoincidenceHistogram histogram_from_csv(const std::string &text);

nlohmann::json params_to_json(const CombModelParams &p);
/// Accepts omega_w_rad_s or linewidth_hz; n_modes defaults to 0.
CombModelParams params_from_json(const nlohmann::json &j);

nlohmann::json fit_to_json(const CombFitResult &r);
CombFitResult fit_from_json(const nlohmann::json &j);

nlohmann::json report_to_json(const SourceReport &r);
SourceReport report_from_json(const nlohmann::json &j);

nlohmann::json efficiencies_to_json(const DetectionEfficiencies &e);
DetectionEfficiencies efficiencies_from_json(const nlohmann::json &j);

struct CorrelationSettings
{
    std::int64_t bin_width_ps = 128;
    std::int64_t tau_max_ps = 40064; // 40 ns rounded up to a whole number of 128 ps bins
};

struct RunConfig
{
    SourceConfig source;
    std::array<DetectorConfig, 2> detectors;
    CorrelationSettings correlation;
    FitOptions fit;
    DetectionEfficiencies efficiencies = DetectionEfficiencies::reference_setup();
    std::string output_prefix = "run";
};

/// Parses and validates a run configuration. Missing or mistyped fields throw
/// ConfigError naming the JSON path of the field.
RunConfig run_config_from_json(const nlohmann::json &j);
nlohmann::json run_config_to_json(const RunConfig &c);

/// 64-bit FNV-1a of the compact JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json &j);

nlohmann::json read_json_file(const std::filesystem::path &path);
void write_text_file(const std::filesystem::path &path, const std::string &text);

/// Smallest multiple of bin_width that is >= tau.
std::int64_t round_up_to_bins(std::int64_t tau_ps, std::int64_t bin_width_ps);

} // namespace cspdc

#endif // CSPDC_IO_HPP
