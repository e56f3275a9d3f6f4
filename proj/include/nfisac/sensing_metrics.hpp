#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nfisac/core.hpp"

namespace nfisac {

/// Exact Euclidean distance between two polar points in the sensing plane.
inline double planar_error(double r_hat, double r, double theta_hat, double theta) {
    const double dtheta = wrap_angle(theta_hat - theta);
    const double q = r_hat * r_hat + r * r - 2.0 * r_hat * r * std::cos(dtheta);
    return std::sqrt(std::max(q, 0.0));
}

struct LocalizationEstimate {
    double range = 0.0;
    double azimuth = 0.0;
    std::optional<int> class_id;
};

struct LocalizationTruth {
    double range = 0.0;
    double azimuth = 0.0;
    int class_id = 0;
};

struct MetricReport {
    std::optional<double> accuracy;  // absent when no class predictions were supplied
    double range_mae = 0.0;          // m
    double azimuth_mae_deg = 0.0;
    double planar_mae = 0.0;         // m
    double success_at_1m = 0.0;
    std::size_t sample_count = 0;
};

inline MetricReport aggregate(const std::vector<LocalizationEstimate>& predictions,
                              const std::vector<LocalizationTruth>& truths, double success_radius = 1.0) {
    require(predictions.size() == truths.size(), "aggregate: predictions and truths differ in length");
    MetricReport rep;
    rep.sample_count = predictions.size();
    if (predictions.empty()) return rep;

    double sr = 0.0, sa = 0.0, sp = 0.0;
    std::size_t hits = 0, cls_n = 0, cls_ok = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const auto& p = predictions[i];
        const auto& t = truths[i];
        const double pe = planar_error(p.range, t.range, p.azimuth, t.azimuth);
        sr += std::abs(p.range - t.range);
        sa += std::abs(rad_to_deg(wrap_angle(p.azimuth - t.azimuth)));
        sp += pe;
        if (pe <= success_radius) ++hits;
        if (p.class_id) {
            ++cls_n;
            if (*p.class_id == t.class_id) ++cls_ok;
        }
    }
    const double n = static_cast<double>(predictions.size());
    rep.range_mae = sr / n;
    rep.azimuth_mae_deg = sa / n;
    rep.planar_mae = sp / n;
    rep.success_at_1m = static_cast<double>(hits) / n;
    if (cls_n > 0) rep.accuracy = static_cast<double>(cls_ok) / static_cast<double>(cls_n);
    return rep;
}

inline constexpr const char* metric_csv_header = "accuracy,range_mae_m,azimuth_mae_deg,planar_mae_m,succ_1m,n";

inline std::string metric_csv_row(const MetricReport& r) {
    std::ostringstream out;
    out.precision(10);
    if (r.accuracy) out << *r.accuracy; else out << "nan";
    out << ',' << r.range_mae << ',' << r.azimuth_mae_deg << ',' << r.planar_mae << ',' << r.success_at_1m << ','
        << r.sample_count;
    return out.str();
}

struct GainMapPoint {
    double accuracy_gain = 0.0;             // same units as the inputs
    double relative_planar_reduction = 0.0;
};

/// Coordinates relative to single-task references.
inline GainMapPoint gain_map_point(double acc, double acc_single, double planar, double planar_single) {
    if (!(planar_single > 0.0)) throw InvalidConfig("gain_map_point: single-task planar error must be positive");
    return {acc - acc_single, (planar_single - planar) / planar_single};
}

}  // namespace nfisac
