#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "nfisac/core.hpp"

namespace nfisac {

namespace detail {

/// e^x E1(x) for x >= 1 by the modified Lentz continued fraction
///   1 / (x + 1 - 1/(x + 3 - 4/(x + 5 - ...)))
inline double scaled_e1_fraction(double x) {
    constexpr double tiny = 1e-300, tol = 1e-16;
    double b = x + 1.0, c = 1.0 / tiny, d = 1.0 / b, h = d;
    for (int i = 1; i < 500; ++i) {
        const double a = -static_cast<double>(i) * i;
        b += 2.0;
        d = 1.0 / (a * d + b);
        c = b + a / c;
        const double del = c * d;
        h *= del;
        if (std::abs(del - 1.0) < tol) break;
    }
    return h;
}

inline void check_e1_argument(double x) {
    if (!(x > 0.0) || !std::isfinite(x)) throw InvalidConfig("expint_e1: argument must be positive and finite");
}

}  // namespace detail

/// E1(x) for x > 0: power series below 1, continued fraction at and above 1.
inline double expint_e1(double x) {
    detail::check_e1_argument(x);
    if (x >= 1.0) return detail::scaled_e1_fraction(x) * std::exp(-x);
    double sum = 0.0, term = 1.0;
    for (int n = 1; n < 200; ++n) {
        term *= -x / n;
        const double add = -term / n;
        sum += add;
        if (std::abs(add) < 1e-16 * std::abs(sum)) break;
    }
    return -constants::euler_gamma - std::log(x) + sum;
}

/// e^x E1(x), finite for large x where the unscaled product would overflow.
inline double expint_e1_scaled(double x) {
    detail::check_e1_argument(x);
    return x >= 1.0 ? detail::scaled_e1_fraction(x) : std::exp(x) * expint_e1(x);
}

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

struct RateConfig {
    long k_total = 64;
    double snr_fullband = db_to_linear(15.0);  // linear
    long mc_draws = 1000000;
    std::uint64_t seed = 0;
    int workers = 1;
};

inline void validate(const RateConfig& c) {
    require(c.k_total >= 1, "rate config: k_total must be >= 1");
    require(std::isfinite(c.snr_fullband) && c.snr_fullband > 0.0, "rate config: snr must be positive");
    require(c.mc_draws >= 1, "rate config: mc_draws must be >= 1");
    require(c.workers >= 1, "rate config: workers must be >= 1");
}

namespace detail {
inline void check_k_sense(const RateConfig& c, long k_sense) {
    validate(c);
    require(k_sense >= 0, "rate: k_sense must be >= 0");
    require(k_sense < c.k_total, "rate: k_sense must leave at least one communication tone");
}
}  // namespace detail

/// (K_c/K_tot) e^{1/g} E1(1/g) / ln 2 with g = snr K_tot / K_c.
inline double ergodic_rate_analytic(const RateConfig& c, long k_sense) {
    detail::check_k_sense(c, k_sense);
    const double kc = static_cast<double>(c.k_total - k_sense);
    const double g = c.snr_fullband * static_cast<double>(c.k_total) / kc;
    const double x = 1.0 / g;
    const double ex_e1 = expint_e1_scaled(x);
    return kc / static_cast<double>(c.k_total) * ex_e1 / std::log(2.0);
}

struct MonteCarloRate {
    double mean = 0.0;
    double standard_error = 0.0;
    long draws = 0;
};

/// Mean over draws of (K_c/K_tot) log2(1 + g |h|^2), h ~ CN(0, 1).
/// Draws are split into fixed chunks, each with its own seeded stream, and reduced in chunk
/// order so the result does not depend on the worker count.
inline MonteCarloRate ergodic_rate_mc_detailed(const RateConfig& c, long k_sense) {
    detail::check_k_sense(c, k_sense);
    const double kc = static_cast<double>(c.k_total - k_sense);
    const double g = c.snr_fullband * static_cast<double>(c.k_total) / kc;
    constexpr long chunk = 65536;
    const long n_chunks = (c.mc_draws + chunk - 1) / chunk;
    std::vector<double> sums(static_cast<std::size_t>(n_chunks), 0.0), sq(sums.size(), 0.0);

    auto run_chunk = [&](long ci) {
        std::seed_seq seq{static_cast<std::uint32_t>(c.seed), static_cast<std::uint32_t>(c.seed >> 32),
                          static_cast<std::uint32_t>(ci), 0x5ca1ab1eu};
        std::mt19937_64 rng(seq);
        std::exponential_distribution<double> gain(1.0);  // |h|^2 for h ~ CN(0,1)
        const long n = std::min(chunk, c.mc_draws - ci * chunk);
        double s = 0.0, s2 = 0.0;
        for (long i = 0; i < n; ++i) {
            const double v = std::log2(1.0 + g * gain(rng));
            s += v;
            s2 += v * v;
        }
        sums[static_cast<std::size_t>(ci)] = s;
        sq[static_cast<std::size_t>(ci)] = s2;
    };

    const int workers = static_cast<int>(std::min<long>(c.workers, n_chunks));
    if (workers <= 1) {
        for (long ci = 0; ci < n_chunks; ++ci) run_chunk(ci);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (long ci = w; ci < n_chunks; ci += workers) run_chunk(ci);
            });
        for (auto& t : pool) t.join();
    }

    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < sums.size(); ++i) {
        s += sums[i];
        s2 += sq[i];
    }
    const double n = static_cast<double>(c.mc_draws);
    const double mean = s / n;
    const double var = std::max(0.0, s2 / n - mean * mean) * n / std::max(1.0, n - 1.0);
    const double scale = kc / static_cast<double>(c.k_total);
    return {scale * mean, scale * std::sqrt(var / n), c.mc_draws};
}

inline double ergodic_rate_mc(const RateConfig& c, long k_sense) { return ergodic_rate_mc_detailed(c, k_sense).mean; }

struct QosTargets {
    double tau_cls = 0.98;
    double tau_loc = 1.50;  // m
};

inline void validate(const QosTargets& q) {
    require(q.tau_cls >= 0.0 && q.tau_cls <= 1.0, "qos: tau_cls must be in [0, 1]");
    require(std::isfinite(q.tau_loc) && q.tau_loc > 0.0, "qos: tau_loc must be positive");
}

struct CurvePoint {
    long k_s = 0;
    double accuracy = 0.0;
    double planar_error = 0.0;  // m
};

struct PerformanceCurve {
    std::vector<CurvePoint> points;
};

inline void validate(const PerformanceCurve& c) {
    for (std::size_t i = 1; i < c.points.size(); ++i)
        require(c.points[i].k_s > c.points[i - 1].k_s, "performance curve: k_s must be strictly increasing");
}

/// Smallest K_s meeting both targets; empty when none does.
inline std::optional<long> qos_min_bandwidth(const PerformanceCurve& curve, const QosTargets& q) {
    validate(q);
    validate(curve);
    require(!curve.points.empty(), "qos: empty performance curve");
    for (const auto& p : curve.points)
        if (p.accuracy >= q.tau_cls && p.planar_error <= q.tau_loc) return p.k_s;
    return std::nullopt;
}

inline std::string qos_report(const std::optional<long>& ks) { return ks ? std::to_string(*ks) : "Not met"; }

namespace detail {
inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline double parse_double(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw InvalidConfig("malformed " + what + ": '" + s + "'");
    }
}
}  // namespace detail

/// Columns k_s,accuracy,planar_mae_m in any order; rows must have increasing k_s.
inline PerformanceCurve parse_curve_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw InvalidConfig("curve csv: missing header");
    const auto header = detail::split_csv(line);
    auto col = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw InvalidConfig("curve csv: missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t ck = col("k_s"), ca = col("accuracy"), cp = col("planar_mae_m");
    PerformanceCurve curve;
    long row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        const auto cells = detail::split_csv(line);
        if (cells.size() != header.size())
            throw InvalidConfig("curve csv: row " + std::to_string(row) + " has wrong column count");
        CurvePoint p;
        const double k = detail::parse_double(cells[ck], "k_s");
        if (k != std::floor(k) || k < 0) throw InvalidConfig("curve csv: k_s must be a nonnegative integer");
        p.k_s = static_cast<long>(k);
        p.accuracy = detail::parse_double(cells[ca], "accuracy");
        p.planar_error = detail::parse_double(cells[cp], "planar_mae_m");
        curve.points.push_back(p);
    }
    validate(curve);
    return curve;
}

inline PerformanceCurve load_curve_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open curve file " + path);
    return parse_curve_csv(f);
}

struct RateRow {
    long k_s = 0;
    double rate_mc = 0.0;
    double rate_analytic = 0.0;
    double standard_error = 0.0;
};

inline std::string rates_csv(const std::vector<RateRow>& rows) {
    std::ostringstream out;
    out.precision(10);
    out << "k_s,rate_mc,rate_analytic\n";
    for (const auto& r : rows) out << r.k_s << ',' << r.rate_mc << ',' << r.rate_analytic << '\n';
    return out.str();
}

}  // namespace nfisac
