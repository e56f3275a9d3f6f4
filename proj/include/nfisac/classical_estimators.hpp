#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "nfisac/array_geometry.hpp"
#include "nfisac/channel_dataset.hpp"
#include "nfisac/core.hpp"

namespace nfisac {

enum class EstimatorKind { periodogram, matched_filter };

inline std::string to_string(EstimatorKind k) {
    return k == EstimatorKind::periodogram ? "periodogram" : "matched-filter";
}

inline EstimatorKind estimator_from_string(const std::string& s) {
    if (s == "periodogram") return EstimatorKind::periodogram;
    if (s == "matched-filter" || s == "matched_filter") return EstimatorKind::matched_filter;
    throw InvalidConfig("unknown estimator '" + s + "' (expected periodogram or matched-filter)");
}

struct EstimationResult {
    double range_hat = 0.0;
    double azimuth_hat = 0.0;
    EstimatorKind estimator = EstimatorKind::matched_filter;
    double score_peak = 0.0;
    nlohmann::json grid_metadata = nlohmann::json::object();
};

/// Range-azimuth search region and refinement schedule of the matched filter.
/// The periodogram uses only the bounds (for clipping).
struct SearchGrid {
    double range_min = 4.0, range_max = 55.0;  // m
    double azimuth_min = deg_to_rad(-65.0), azimuth_max = deg_to_rad(65.0);
    double range_step = 0.5;                   // m
    double azimuth_step = deg_to_rad(1.0);
    int refinement_levels = 3;
    double shrink = 5.0;
};

inline void validate(const SearchGrid& g) {
    require(g.range_min > 0.0 && g.range_max >= g.range_min, "search grid: range bounds must satisfy 0 < min <= max");
    require(g.azimuth_max >= g.azimuth_min, "search grid: azimuth bounds out of order");
    require(g.azimuth_min >= -constants::pi && g.azimuth_max <= constants::pi, "search grid: azimuth outside [-pi, pi]");
    require(g.range_step > 0.0 && g.azimuth_step > 0.0, "search grid: steps must be positive");
    require(g.refinement_levels >= 0, "search grid: refinement levels must be >= 0");
    require(g.shrink > 1.0, "search grid: shrink factor must exceed 1");
}

inline nlohmann::json to_json(const SearchGrid& g) {
    return {{"range_min_m", g.range_min},
            {"range_max_m", g.range_max},
            {"azimuth_min_deg", rad_to_deg(g.azimuth_min)},
            {"azimuth_max_deg", rad_to_deg(g.azimuth_max)},
            {"range_step_m", g.range_step},
            {"azimuth_step_deg", rad_to_deg(g.azimuth_step)},
            {"refinement_levels", g.refinement_levels},
            {"shrink", g.shrink}};
}

struct SteeringPair {
    Eigen::VectorXcd tx;
    Eigen::VectorXcd rx;
};

namespace detail {

inline void phase_vector(const std::vector<Vec3>& elems, const Vec3& p, double k0, Eigen::VectorXcd& out) {
    out.resize(static_cast<Eigen::Index>(elems.size()));
    const double norm = 1.0 / std::sqrt(static_cast<double>(elems.size()));
    for (std::size_t i = 0; i < elems.size(); ++i) {
        const double d = (p - elems[i]).norm();
        if (!(d > 0.0)) throw NumericError("steering_vectors: candidate point coincides with an array element");
        out[static_cast<Eigen::Index>(i)] = std::polar(norm, -k0 * d);
    }
}

}  // namespace detail

/// Unit-norm spherical-wave phase vectors for the in-plane point (r cos t, r sin t, 0).
inline SteeringPair steering_vectors(const ArrayGeometry& array, double k0, double range, double azimuth) {
    const Vec3 p(range * std::cos(azimuth), range * std::sin(azimuth), 0.0);
    SteeringPair s;
    detail::phase_vector(array.tx_positions, p, k0, s.tx);
    detail::phase_vector(array.rx_positions, p, k0, s.rx);
    return s;
}

/// S(r, t) = sum_k |a_r^H H_k conj(a_t)|^2
inline double matched_filter_score(const std::vector<CMat>& slices, const ArrayGeometry& array,
                                   const std::vector<double>& wavenumbers, double range, double azimuth) {
    double total = 0.0;
    Eigen::VectorXcd at, ar;
    const Vec3 p(range * std::cos(azimuth), range * std::sin(azimuth), 0.0);
    for (std::size_t k = 0; k < slices.size(); ++k) {
        detail::phase_vector(array.tx_positions, p, wavenumbers[k], at);
        detail::phase_vector(array.rx_positions, p, wavenumbers[k], ar);
        const cplx v = ar.dot(slices[k] * at.conjugate());  // dot() conjugates its left operand
        total += std::norm(v);
    }
    return total;
}

namespace detail {

inline std::vector<CMat> slices_of(const ChannelTensor& h) {
    std::vector<CMat> out;
    for (std::size_t k = 0; k < h.n_k; ++k) out.push_back(h.slice(k));
    return out;
}

inline std::vector<double> axis_points(double lo, double hi, double step) {
    std::vector<double> pts;
    const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
    for (long i = 0; i <= n; ++i) pts.push_back(lo + static_cast<double>(i) * step);
    return pts;
}

}  // namespace detail

/// Coarse grid scan followed by re-gridding +-1 cell around the running argmax at each
/// refinement level. Ties resolve toward the lower azimuth index, then the lower range index.
inline EstimationResult matched_filter_estimate(const ChannelTensor& h, const ArrayGeometry& array,
                                                const std::vector<double>& subcarrier_freqs,
                                                const SearchGrid& grid = {}) {
    validate(grid);
    require(h.n_k == subcarrier_freqs.size(), "matched filter: subcarrier count differs from tensor depth");
    require(h.n_rx == array.n_rx() && h.n_tx == array.n_tx(), "matched filter: tensor shape differs from array");
    std::vector<double> ks;
    for (double f : subcarrier_freqs) ks.push_back(wavenumber(f));
    const auto slices = detail::slices_of(h);

    const auto ranges = detail::axis_points(grid.range_min, grid.range_max, grid.range_step);
    const auto azimuths = detail::axis_points(grid.azimuth_min, grid.azimuth_max, grid.azimuth_step);
    if (ranges.empty() || azimuths.empty()) throw InvalidConfig("matched filter: empty search grid");

    double best = -1.0, best_r = ranges.front(), best_t = azimuths.front();
    for (double t : azimuths)
        for (double r : ranges) {
            const double s = matched_filter_score(slices, array, ks, r, t);
            if (s > best) { best = s; best_r = r; best_t = t; }
        }

    nlohmann::json level_peaks = nlohmann::json::array({best});
    double step_r = grid.range_step, step_t = grid.azimuth_step;
    for (int level = 0; level < grid.refinement_levels; ++level) {
        const double fine_r = step_r / grid.shrink, fine_t = step_t / grid.shrink;
        const auto half = static_cast<long>(std::llround(grid.shrink));
        const double c_r = best_r, c_t = best_t;
        for (long it = -half; it <= half; ++it) {
            const double t = c_t + static_cast<double>(it) * fine_t;
            if (t < grid.azimuth_min - 1e-12 || t > grid.azimuth_max + 1e-12) continue;
            for (long ir = -half; ir <= half; ++ir) {
                const double r = c_r + static_cast<double>(ir) * fine_r;
                if (r < grid.range_min - 1e-12 || r > grid.range_max + 1e-12) continue;
                if (it == 0 && ir == 0) continue;  // already scored as the incumbent
                const double s = matched_filter_score(slices, array, ks, r, t);
                if (s > best) { best = s; best_r = r; best_t = t; }
            }
        }
        level_peaks.push_back(best);
        step_r = fine_r;
        step_t = fine_t;
    }

    EstimationResult res;
    res.estimator = EstimatorKind::matched_filter;
    res.range_hat = best_r;
    res.azimuth_hat = wrap_angle(best_t);
    res.score_peak = best;
    res.grid_metadata = to_json(grid);
    res.grid_metadata["level_peaks"] = level_peaks;
    res.grid_metadata["final_range_step_m"] = step_r;
    res.grid_metadata["final_azimuth_step_deg"] = rad_to_deg(step_t);
    return res;
}

enum class PeriodogramAxis { scan_tx, scan_rx };

struct PeriodogramOptions {
    int zero_pad = 8;
    PeriodogramAxis axis = PeriodogramAxis::scan_tx;  // collapse rx, scan tx (the y-axis array)
};

namespace detail {

/// Vertex offset in [-0.5, 0.5] of the parabola through three samples.
inline double parabolic_offset(double ym, double y0, double yp) {
    const double den = ym - 2.0 * y0 + yp;
    if (den == 0.0) return 0.0;
    return std::clamp(0.5 * (ym - yp) / den, -0.5, 0.5);
}

}  // namespace detail

/// Far-field 2-D periodogram: uniform collapse of one array dimension, zero-padded 2-D DFT
/// over (scanned antenna, subcarrier), peak with 3-point parabolic refinement on both axes.
inline EstimationResult periodogram_estimate(const ChannelTensor& h, const ArrayGeometry& array,
                                             const std::vector<double>& subcarrier_freqs,
                                             const SearchGrid& bounds = {},
                                             const PeriodogramOptions& opt = {}) {
    validate(bounds);
    require(opt.zero_pad >= 1, "periodogram: zero-pad factor must be >= 1");
    require(h.n_k == subcarrier_freqs.size(), "periodogram: subcarrier count differs from tensor depth");
    if (h.n_k < 2) throw NotApplicable("periodogram: needs at least 2 subcarriers (range axis undefined)");
    const bool scan_tx = opt.axis == PeriodogramAxis::scan_tx;
    const std::size_t n_scan = scan_tx ? h.n_tx : h.n_rx;
    const std::size_t n_collapse = scan_tx ? h.n_rx : h.n_tx;
    if (n_scan < 2) throw NotApplicable("periodogram: scanned array dimension needs at least 2 elements");

    // (i)-(ii) snapshot matrix y[a][k]
    const double w = 1.0 / std::sqrt(static_cast<double>(n_collapse));
    CMat y = CMat::Zero(static_cast<Eigen::Index>(n_scan), static_cast<Eigen::Index>(h.n_k));
    for (std::size_t r = 0; r < h.n_rx; ++r)
        for (std::size_t t = 0; t < h.n_tx; ++t)
            for (std::size_t k = 0; k < h.n_k; ++k) {
                const std::size_t a = scan_tx ? t : r;
                y(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(k)) += w * h.at(r, t, k);
            }

    // (iii) separable zero-padded DFT: inverse sense along frequency, forward along antennas
    const auto ma = static_cast<Eigen::Index>(static_cast<std::size_t>(opt.zero_pad) * n_scan);
    const auto mf = static_cast<Eigen::Index>(static_cast<std::size_t>(opt.zero_pad) * h.n_k);
    CMat tf(static_cast<Eigen::Index>(h.n_k), mf);
    for (Eigen::Index k = 0; k < tf.rows(); ++k)
        for (Eigen::Index m = 0; m < mf; ++m)
            tf(k, m) = std::polar(1.0, constants::two_pi * static_cast<double>((k * m) % mf) / static_cast<double>(mf));
    CMat ta(ma, static_cast<Eigen::Index>(n_scan));
    for (Eigen::Index m = 0; m < ma; ++m)
        for (Eigen::Index a = 0; a < ta.cols(); ++a)
            ta(m, a) = std::polar(1.0, -constants::two_pi * static_cast<double>((a * m) % ma) / static_cast<double>(ma));
    const RMat surface = (ta * (y * tf)).cwiseAbs();

    // (iv) peak
    Eigen::Index pa = 0, pf = 0;
    double peak = -1.0;
    for (Eigen::Index a = 0; a < ma; ++a)
        for (Eigen::Index f = 0; f < mf; ++f)
            if (surface(a, f) > peak) { peak = surface(a, f); pa = a; pf = f; }

    // (vi) parabolic refinement with circular neighbours
    const double da = detail::parabolic_offset(surface((pa + ma - 1) % ma, pf), peak, surface((pa + 1) % ma, pf));
    const double df = detail::parabolic_offset(surface(pa, (pf + mf - 1) % mf), peak, surface(pa, (pf + 1) % mf));

    // (v) bin -> (range, azimuth)
    const double f_first = subcarrier_freqs.front();
    const double spacing = (subcarrier_freqs.back() - f_first) / static_cast<double>(h.n_k - 1);
    require(spacing > 0.0, "periodogram: subcarrier frequencies must increase");
    double frac_f = (static_cast<double>(pf) + df) / static_cast<double>(mf);
    frac_f -= std::floor(frac_f);
    const double tau = frac_f / spacing;
    const double r_hat = std::clamp(0.5 * constants::c0 * tau, bounds.range_min, bounds.range_max);

    double u = (static_cast<double>(pa) + da) / static_cast<double>(ma);
    u -= std::floor(u + 0.5);  // [-0.5, 0.5)
    const double sin_t = std::clamp(u * array.carrier_wavelength() / array.element_spacing, -1.0, 1.0);
    const double t_hat = std::clamp(std::asin(sin_t), bounds.azimuth_min, bounds.azimuth_max);

    EstimationResult res;
    res.estimator = EstimatorKind::periodogram;
    res.range_hat = r_hat;
    res.azimuth_hat = wrap_angle(t_hat);
    res.score_peak = peak;
    res.grid_metadata = {{"zero_pad", opt.zero_pad},
                         {"scan_axis", scan_tx ? "tx" : "rx"},
                         {"collapse", "uniform"},
                         {"effective_spacing_hz", spacing},
                         {"bins", {ma, mf}},
                         {"peak_bin", {static_cast<double>(pa) + da, static_cast<double>(pf) + df}}};
    return res;
}

}  // namespace nfisac
