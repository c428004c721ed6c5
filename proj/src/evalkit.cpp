#include "sourceswap/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "sourceswap/bridge.hpp"
#include "sourceswap/image_io.hpp"

namespace sourceswap {

namespace {

void check_inputs(const Image& a, const Image& b, const BinaryMask& region) {
    if (!a.same_shape(b)) throw ShapeMismatch("region metric: images differ in shape");
    if (region.height() != a.height() || region.width() != a.width()) {
        throw ShapeMismatch("region metric: region does not match image size");
    }
    if (region.is_empty()) throw InvalidArgument("region metric: empty region");
}

}  // namespace

double region_mse(const Image& a, const Image& b, const BinaryMask& region) {
    check_inputs(a, b, region);
    const auto idx = region.set_indices();
    double sum = 0.0;
    for (std::size_t c = 0; c < a.channels(); ++c) {
        const auto pa = a.plane(c);
        const auto pb = b.plane(c);
        for (std::size_t i : idx) {
            const double d = pa[i] - pb[i];
            sum += d * d;
        }
    }
    return sum / static_cast<double>(idx.size() * a.channels());
}

double region_ssim_distance(const Image& a, const Image& b, const BinaryMask& region) {
    check_inputs(a, b, region);
    const std::size_t h = a.height();
    const std::size_t w = a.width();
    const std::size_t r = kSsimWindow / 2;
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t c = 0; c < a.channels(); ++c) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                if (!region.at(y, x)) continue;
                double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
                std::size_t n = 0;
                for (std::size_t yy = y > r ? y - r : 0; yy <= std::min(h - 1, y + r); ++yy) {
                    for (std::size_t xx = x > r ? x - r : 0; xx <= std::min(w - 1, x + r); ++xx) {
                        if (!region.at(yy, xx)) continue;
                        const double va = a.at(c, yy, xx);
                        const double vb = b.at(c, yy, xx);
                        sa += va;
                        sb += vb;
                        saa += va * va;
                        sbb += vb * vb;
                        sab += va * vb;
                        ++n;
                    }
                }
                const double inv = 1.0 / static_cast<double>(n);
                const double ma = sa * inv;
                const double mb = sb * inv;
                const double va = std::max(0.0, saa * inv - ma * ma);
                const double vb = std::max(0.0, sbb * inv - mb * mb);
                const double cov = sab * inv - ma * mb;
                const double ssim = ((2 * ma * mb + kSsimC1) * (2 * cov + kSsimC2)) /
                                    ((ma * ma + mb * mb + kSsimC1) * (va + vb + kSsimC2));
                total += ssim;
                ++count;
            }
        }
    }
    return 1.0 - total / static_cast<double>(count);
}

bool is_builtin_metric(const std::string& metric) { return metric == "mse" || metric == "ssim"; }

RegionScore region_metric(const Image& source, const Image& result, const BinaryMask& fine_mask,
                          const RegionParams& params, bridge::BridgeSession* session) {
    if (fine_mask.is_empty()) throw InvalidArgument("region metric: fine mask is empty");
    const std::size_t radius = params.dilate_radius.value_or(
        default_boundary_dilate_radius(fine_mask.height(), fine_mask.width()));
    const BinaryMask region = boundary_region(fine_mask, radius, params.rect_margin);
    if (region.is_empty()) {
        throw InvalidArgument("region metric: boundary region is empty (mask covers its rectangle)");
    }
    RegionScore score;
    score.region_pixel_count = region.popcount();
    if (params.metric == "mse") {
        score.metric_id = "mse";
        score.value = region_mse(source, result, region);
    } else if (params.metric == "ssim") {
        score.metric_id = "1-ssim";
        score.value = region_ssim_distance(source, result, region);
    } else {
        if (session == nullptr) {
            throw InvalidArgument("metric '" + params.metric + "' needs a bridge connection");
        }
        check_inputs(source, result, region);
        score.metric_id = params.metric;
        score.value = session->metric(params.metric, source, result, region);
    }
    return score;
}

EvalReport build_report(std::vector<EvalRow> rows) {
    if (rows.empty()) throw InvalidArgument("report needs at least one row");
    EvalReport report;
    std::vector<double> finite;
    for (const auto& row : rows) {
        const bool bad = !std::isfinite(row.value);
        report.flagged.push_back(bad);
        if (!bad) finite.push_back(row.value);
    }
    report.rows = std::move(rows);
    report.counted = finite.size();
    report.excluded = report.rows.size() - finite.size();
    if (finite.empty()) {
        report.mean = report.median = std::nan("");
        return report;
    }
    double sum = 0.0;
    for (double v : finite) sum += v;
    report.mean = sum / static_cast<double>(finite.size());
    std::sort(finite.begin(), finite.end());
    const std::size_t n = finite.size();
    report.median = n % 2 == 1 ? finite[n / 2] : 0.5 * (finite[n / 2 - 1] + finite[n / 2]);
    return report;
}

std::string csv_field(const std::string& text) {
    if (text.find_first_of(",\"\r\n") == std::string::npos) return text;
    std::string out = "\"";
    for (char ch : text) {
        if (ch == '"') out += '"';
        out += ch;
    }
    out += '"';
    return out;
}

namespace {

std::string format_value(double v) {
    if (std::isnan(v)) return "nan";
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

std::string report_csv(const EvalReport& report) {
    std::string out = "id,region_pixel_count,metric_id,value,flag\r\n";
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        const auto& row = report.rows[i];
        out += csv_field(row.id) + ',' + std::to_string(row.region_pixel_count) + ',' +
               csv_field(row.metric_id) + ',' + format_value(row.value) + ',' +
               (report.flagged[i] ? "nan" : "") + "\r\n";
    }
    const std::string metric = report.rows.front().metric_id;
    out += "mean," + std::to_string(report.counted) + ',' + csv_field(metric) + ',' +
           format_value(report.mean) + ",aggregate\r\n";
    out += "median," + std::to_string(report.counted) + ',' + csv_field(metric) + ',' +
           format_value(report.median) + ",aggregate\r\n";
    return out;
}

nlohmann::json report_json(const EvalReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        const auto& row = report.rows[i];
        nlohmann::json j = {{"id", row.id},
                            {"region_pixel_count", row.region_pixel_count},
                            {"metric_id", row.metric_id},
                            {"flagged", static_cast<bool>(report.flagged[i])}};
        j["value"] = report.flagged[i] ? nlohmann::json(nullptr) : nlohmann::json(row.value);
        rows.push_back(std::move(j));
    }
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    return {{"rows", rows},
            {"aggregates",
             {{"mean", num(report.mean)},
              {"median", num(report.median)},
              {"counted", report.counted},
              {"excluded", report.excluded}}}};
}

EvalReport emit_report(std::vector<EvalRow> rows, const std::filesystem::path& stem) {
    EvalReport report = build_report(std::move(rows));
    if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
    auto write = [](const std::filesystem::path& path, const std::string& text) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << text;
        if (!out) throw IoError("cannot write " + path.string());
    };
    std::filesystem::path csv = stem;
    csv += ".csv";
    std::filesystem::path js = stem;
    js += ".json";
    write(csv, report_csv(report));
    write(js, report_json(report).dump(2) + "\n");
    return report;
}

nlohmann::json to_json(const TwoAfcTrial& t) {
    return {{"pair_id", t.pair_id},
            {"left_method", t.left_method},
            {"right_method", t.right_method},
            {"seed", t.seed}};
}

Image concat_horizontal(const std::vector<Image>& images) {
    if (images.empty()) throw InvalidArgument("concat_horizontal: no images");
    const std::size_t c = images.front().channels();
    const std::size_t h = images.front().height();
    std::size_t total_w = 0;
    for (const auto& img : images) {
        if (img.channels() != c || img.height() != h) {
            throw ShapeMismatch("concat_horizontal: heights or channel counts differ");
        }
        total_w += img.width();
    }
    Image out(c, h, total_w);
    std::size_t offset = 0;
    for (const auto& img : images) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t x = 0; x < img.width(); ++x) {
                    out.at(ch, y, offset + x) = img.at(ch, y, x);
                }
            }
        }
        offset += img.width();
    }
    return out;
}

nlohmann::json write_2afc_trial(const TwoAfcTrial& trial, const Image& reference,
                                const Image& source, const Image& left, const Image& right,
                                const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto path = std::filesystem::absolute(dir / (trial.pair_id + ".2afc.png"));
    save_image_png(concat_horizontal({reference, source, left, right}), path);
    nlohmann::json j = to_json(trial);
    j["image"] = path.string();
    return j;
}

}  // namespace sourceswap
