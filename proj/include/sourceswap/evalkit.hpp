#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sourceswap/lattice.hpp"
#include "sourceswap/maskops.hpp"

namespace sourceswap {

namespace bridge {
class BridgeSession;
}

inline constexpr std::size_t kSsimWindow = 7;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// Mean over channels and region pixels of (a - b)^2.
double region_mse(const Image& a, const Image& b, const BinaryMask& region);

/// 1 - SSIM, where each region pixel's 7x7 window only pools pixels that are
/// themselves in the region. Averaged over channels and region pixels.
double region_ssim_distance(const Image& a, const Image& b, const BinaryMask& region);

struct RegionParams {
    std::string metric = "mse";  ///< "mse", "ssim", or any metric the bridge offers
    /// Unset: default_boundary_dilate_radius of the image size.
    std::optional<std::size_t> dilate_radius;
    std::size_t rect_margin = 0;
};

struct RegionScore {
    double value = 0.0;
    std::size_t region_pixel_count = 0;
    std::string metric_id;
};

bool is_builtin_metric(const std::string& metric);

/// Scores `result` against `source` over boundary_region(fine_mask, ...).
/// Non-built-in metrics go through `session`, which must then be non-null.
RegionScore region_metric(const Image& source, const Image& result, const BinaryMask& fine_mask,
                          const RegionParams& params, bridge::BridgeSession* session = nullptr);

struct EvalRow {
    std::string id;
    std::size_t region_pixel_count = 0;
    double value = 0.0;
    std::string metric_id;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    std::vector<bool> flagged;  ///< parallel to rows; true for non-finite values
    std::size_t counted = 0;
    std::size_t excluded = 0;
    double mean = 0.0;
    double median = 0.0;
};

/// Aggregates over the finite rows. Requires at least one row.
EvalReport build_report(std::vector<EvalRow> rows);

/// Columns: id, region_pixel_count, metric_id, value, flag. Two trailing rows
/// carry the mean and median (flag "aggregate").
std::string report_csv(const EvalReport& report);
nlohmann::json report_json(const EvalReport& report);

/// Writes <stem>.csv and <stem>.json.
EvalReport emit_report(std::vector<EvalRow> rows, const std::filesystem::path& stem);

/// RFC-4180 field quoting.
std::string csv_field(const std::string& text);

struct TwoAfcTrial {
    std::string pair_id;
    std::string left_method;
    std::string right_method;
    std::uint64_t seed = 0;
};

nlohmann::json to_json(const TwoAfcTrial& trial);

/// Side-by-side concatenation; all images must share height and channel count.
Image concat_horizontal(const std::vector<Image>& images);

/// Writes <dir>/<pair_id>.2afc.png (reference | source | left | right) and
/// returns the trial record.
nlohmann::json write_2afc_trial(const TwoAfcTrial& trial, const Image& reference,
                                const Image& source, const Image& left, const Image& right,
                                const std::filesystem::path& dir);

}  // namespace sourceswap
