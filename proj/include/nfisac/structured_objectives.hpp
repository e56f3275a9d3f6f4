#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "nfisac/channel_dataset.hpp"
#include "nfisac/core.hpp"

namespace nfisac {

struct LossWeights {
    double lambda_r = 1.0;
    double lambda_theta = 1.8;
    double lambda_p = 0.2;
    double lambda_pk = 0.05;
    double lambda_c = 0.1;
    double epsilon_planar = 1e-6;  // m^2
};

inline void validate(const LossWeights& w) {
    for (double l : {w.lambda_r, w.lambda_theta, w.lambda_p, w.lambda_pk, w.lambda_c})
        require(std::isfinite(l) && l >= 0.0, "loss weights must be finite and nonnegative");
    require(std::isfinite(w.epsilon_planar) && w.epsilon_planar > 0.0, "epsilon_planar must be positive");
}

// ---------------------------------------------------------------------------
// Azimuth codec: a = [sin t, cos t]

inline Eigen::Vector2d encode_azimuth(double theta) { return {std::sin(theta), std::cos(theta)}; }

inline Eigen::Vector2d normalize_azimuth(const Eigen::Vector2d& v) {
    const double n = v.norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw NumericError("normalize_azimuth: zero or non-finite vector");
    return v / n;
}

inline double decode_azimuth(const Eigen::Vector2d& v) {
    if (v.x() == 0.0 && v.y() == 0.0) throw NumericError("decode_azimuth: zero vector");
    return wrap_angle(std::atan2(v.x(), v.y()));
}

// ---------------------------------------------------------------------------
// Individual terms. Each returns the batch-mean value; the *_grad variants return
// derivatives of that mean with respect to every prediction input.

inline double cross_entropy(const std::vector<Eigen::VectorXd>& logits, const std::vector<int>& labels) {
    require(logits.size() == labels.size(), "cross_entropy: logits and labels differ in length");
    if (logits.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const auto& z = logits[i];
        if (labels[i] < 0 || labels[i] >= z.size()) throw InvalidConfig("cross_entropy: invalid class label");
        const double m = z.maxCoeff();
        const double lse = m + std::log((z.array() - m).exp().sum());
        total += lse - z[labels[i]];
    }
    return total / static_cast<double>(logits.size());
}

inline std::vector<Eigen::VectorXd> cross_entropy_grad(const std::vector<Eigen::VectorXd>& logits,
                                                       const std::vector<int>& labels) {
    std::vector<Eigen::VectorXd> g;
    const double inv_b = 1.0 / static_cast<double>(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const auto& z = logits[i];
        Eigen::VectorXd p = (z.array() - z.maxCoeff()).exp();
        p /= p.sum();
        p[labels[i]] -= 1.0;
        g.push_back(p * inv_b);
    }
    return g;
}

/// (1/2B) sum (e^{-s} e^2 + s)
inline double hetero_nll(const std::vector<double>& errors, const std::vector<double>& log_vars) {
    require(errors.size() == log_vars.size(), "hetero_nll: errors and log-variances differ in length");
    if (errors.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < errors.size(); ++i)
        total += std::exp(-log_vars[i]) * errors[i] * errors[i] + log_vars[i];
    return total / (2.0 * static_cast<double>(errors.size()));
}

struct NllGrad {
    std::vector<double> d_error;
    std::vector<double> d_log_var;
};

inline NllGrad hetero_nll_grad(const std::vector<double>& errors, const std::vector<double>& log_vars) {
    NllGrad g;
    const double b = static_cast<double>(errors.size());
    for (std::size_t i = 0; i < errors.size(); ++i) {
        const double w = std::exp(-log_vars[i]);
        g.d_error.push_back(w * errors[i] / b);
        g.d_log_var.push_back((1.0 - w * errors[i] * errors[i]) / (2.0 * b));
    }
    return g;
}

/// Normalized azimuth error wrap(t_hat - t) / pi.
inline double normalized_azimuth_error(double theta_hat, double theta) {
    return wrap_angle(theta_hat - theta) / constants::pi;
}

struct PolarBatch {
    std::vector<double> r_hat, r, theta_hat, theta;

    std::size_t size() const { return r_hat.size(); }
    void check() const {
        require(r.size() == r_hat.size() && theta_hat.size() == r_hat.size() && theta.size() == r_hat.size(),
                "polar batch: inconsistent lengths");
    }
};

struct PolarGrad {
    std::vector<double> d_r_hat, d_theta_hat;
};

/// mean sqrt(r_hat^2 + r^2 - 2 r_hat r cos(dt) + eps)
inline double planar_loss(const PolarBatch& b, double epsilon) {
    b.check();
    require(epsilon > 0.0, "planar_loss: epsilon must be positive");
    if (b.size() == 0) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        const double dt = wrap_angle(b.theta_hat[i] - b.theta[i]);
        total += std::sqrt(b.r_hat[i] * b.r_hat[i] + b.r[i] * b.r[i] - 2.0 * b.r_hat[i] * b.r[i] * std::cos(dt) + epsilon);
    }
    return total / static_cast<double>(b.size());
}

inline PolarGrad planar_loss_grad(const PolarBatch& b, double epsilon) {
    PolarGrad g;
    const double n = static_cast<double>(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) {
        const double dt = wrap_angle(b.theta_hat[i] - b.theta[i]);
        const double q = std::sqrt(b.r_hat[i] * b.r_hat[i] + b.r[i] * b.r[i] -
                                   2.0 * b.r_hat[i] * b.r[i] * std::cos(dt) + epsilon);
        g.d_r_hat.push_back((b.r_hat[i] - b.r[i] * std::cos(dt)) / (q * n));
        g.d_theta_hat.push_back(b.r_hat[i] * b.r[i] * std::sin(dt) / (q * n));
    }
    return g;
}

namespace detail {
inline double sgn(double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); }
}  // namespace detail

/// mean | |r_hat - r| - |r dt| |
inline double coupling_loss(const PolarBatch& b) {
    b.check();
    if (b.size() == 0) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        const double dt = wrap_angle(b.theta_hat[i] - b.theta[i]);
        total += std::abs(std::abs(b.r_hat[i] - b.r[i]) - std::abs(b.r[i] * dt));
    }
    return total / static_cast<double>(b.size());
}

/// Subgradient 0 at the kinks.
inline PolarGrad coupling_loss_grad(const PolarBatch& b) {
    PolarGrad g;
    const double n = static_cast<double>(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) {
        const double dt = wrap_angle(b.theta_hat[i] - b.theta[i]);
        const double outer = detail::sgn(std::abs(b.r_hat[i] - b.r[i]) - std::abs(b.r[i] * dt));
        g.d_r_hat.push_back(outer * detail::sgn(b.r_hat[i] - b.r[i]) / n);
        g.d_theta_hat.push_back(-outer * detail::sgn(b.r[i] * dt) * b.r[i] / n);
    }
    return g;
}

/// (rx, tx) index of the largest entry of sum_k |H_k|, lexicographically smallest on ties.
inline Eigen::Vector2d peak_reference(const ChannelTensor& h) {
    require(h.size() > 0, "peak_reference: empty tensor");
    double best = -1.0;
    Eigen::Vector2d at(0.0, 0.0);
    for (std::size_t r = 0; r < h.n_rx; ++r)
        for (std::size_t t = 0; t < h.n_tx; ++t) {
            double m = 0.0;
            for (std::size_t k = 0; k < h.n_k; ++k) m += std::abs(h.at(r, t, k));
            if (m > best) {
                best = m;
                at = {static_cast<double>(r), static_cast<double>(t)};
            }
        }
    return at;
}

inline Eigen::Vector2d peak_reference(const ChannelSample& s) { return peak_reference(s.tensor); }

/// mean ||u_hat - u*||_1
inline double peak_loss(const std::vector<Eigen::Vector2d>& peak_hat, const std::vector<Eigen::Vector2d>& peak_ref) {
    require(peak_hat.size() == peak_ref.size(), "peak_loss: inputs differ in length");
    if (peak_hat.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < peak_hat.size(); ++i) total += (peak_hat[i] - peak_ref[i]).lpNorm<1>();
    return total / static_cast<double>(peak_hat.size());
}

inline std::vector<Eigen::Vector2d> peak_loss_grad(const std::vector<Eigen::Vector2d>& peak_hat,
                                                   const std::vector<Eigen::Vector2d>& peak_ref) {
    std::vector<Eigen::Vector2d> g;
    const double n = static_cast<double>(peak_hat.size());
    for (std::size_t i = 0; i < peak_hat.size(); ++i)
        g.emplace_back(detail::sgn(peak_hat[i].x() - peak_ref[i].x()) / n,
                       detail::sgn(peak_hat[i].y() - peak_ref[i].y()) / n);
    return g;
}

// ---------------------------------------------------------------------------
// Composite objective

struct Prediction {
    Eigen::VectorXd class_logits;
    double range_hat = 0.0;
    double log_var_range = 0.0;
    Eigen::Vector2d azimuth_vec = Eigen::Vector2d(0.0, 1.0);
    double log_var_azimuth = 0.0;
    Eigen::Vector2d peak_hat = Eigen::Vector2d::Zero();

    double azimuth_hat() const { return decode_azimuth(normalize_azimuth(azimuth_vec)); }
};

using BatchPredictions = std::vector<Prediction>;

struct TrainingTarget {
    int class_id = 0;
    double range = 0.0;
    double azimuth = 0.0;
    Eigen::Vector2d peak_ref = Eigen::Vector2d::Zero();
};

struct LossBreakdown {
    double cls = 0.0, nll_r = 0.0, nll_theta = 0.0, planar = 0.0, peak = 0.0, coupling = 0.0, total = 0.0;
};

inline constexpr const char* loss_csv_header = "cls,nll_r,nll_theta,planar,peak,coupling,total";

inline std::string loss_csv_row(const LossBreakdown& l) {
    std::ostringstream out;
    out.precision(17);
    out << l.cls << ',' << l.nll_r << ',' << l.nll_theta << ',' << l.planar << ',' << l.peak << ',' << l.coupling
        << ',' << l.total;
    return out.str();
}

namespace detail {

struct Unpacked {
    std::vector<Eigen::VectorXd> logits;
    std::vector<int> labels;
    std::vector<double> e_r, s_r, e_t, s_t;
    PolarBatch polar;
    std::vector<Eigen::Vector2d> u_hat, u_ref;
};

inline Unpacked unpack(const std::vector<Prediction>& batch, const std::vector<TrainingTarget>& truths) {
    require(batch.size() == truths.size(), "total_loss: batch and truths differ in length");
    Unpacked u;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& p = batch[i];
        const auto& t = truths[i];
        const double th = p.azimuth_hat();
        u.logits.push_back(p.class_logits);
        u.labels.push_back(t.class_id);
        u.e_r.push_back(p.range_hat - t.range);
        u.s_r.push_back(p.log_var_range);
        u.e_t.push_back(normalized_azimuth_error(th, t.azimuth));
        u.s_t.push_back(p.log_var_azimuth);
        u.polar.r_hat.push_back(p.range_hat);
        u.polar.r.push_back(t.range);
        u.polar.theta_hat.push_back(th);
        u.polar.theta.push_back(t.azimuth);
        u.u_hat.push_back(p.peak_hat);
        u.u_ref.push_back(t.peak_ref);
    }
    return u;
}

}  // namespace detail

/// L_cls + l_r L_r + l_t L_t + l_p L_pl + l_pk L_peak + l_c L_cp
inline LossBreakdown total_loss(const std::vector<Prediction>& batch, const std::vector<TrainingTarget>& truths,
                                const LossWeights& w = {}) {
    validate(w);
    const auto u = detail::unpack(batch, truths);
    LossBreakdown l;
    l.cls = cross_entropy(u.logits, u.labels);
    l.nll_r = hetero_nll(u.e_r, u.s_r);
    l.nll_theta = hetero_nll(u.e_t, u.s_t);
    l.planar = planar_loss(u.polar, w.epsilon_planar);
    l.peak = peak_loss(u.u_hat, u.u_ref);
    l.coupling = coupling_loss(u.polar);
    l.total = l.cls + w.lambda_r * l.nll_r + w.lambda_theta * l.nll_theta + w.lambda_p * l.planar +
              w.lambda_pk * l.peak + w.lambda_c * l.coupling;
    return l;
}

/// d total / d prediction, with the same layout as Prediction.
inline std::vector<Prediction> total_loss_grad(const std::vector<Prediction>& batch,
                                               const std::vector<TrainingTarget>& truths, const LossWeights& w = {}) {
    validate(w);
    const auto u = detail::unpack(batch, truths);
    const auto g_cls = cross_entropy_grad(u.logits, u.labels);
    const auto g_r = hetero_nll_grad(u.e_r, u.s_r);
    const auto g_t = hetero_nll_grad(u.e_t, u.s_t);
    const auto g_pl = planar_loss_grad(u.polar, w.epsilon_planar);
    const auto g_cp = coupling_loss_grad(u.polar);
    const auto g_pk = peak_loss_grad(u.u_hat, u.u_ref);

    std::vector<Prediction> out(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        auto& g = out[i];
        g.class_logits = g_cls[i];
        g.range_hat = w.lambda_r * g_r.d_error[i] + w.lambda_p * g_pl.d_r_hat[i] + w.lambda_c * g_cp.d_r_hat[i];
        g.log_var_range = w.lambda_r * g_r.d_log_var[i];
        g.log_var_azimuth = w.lambda_theta * g_t.d_log_var[i];
        g.peak_hat = w.lambda_pk * g_pk[i];
        // theta_hat = atan2(a0, a1) is scale-invariant, so normalization drops out of the chain rule
        const double d_theta = w.lambda_theta * g_t.d_error[i] / constants::pi + w.lambda_p * g_pl.d_theta_hat[i] +
                               w.lambda_c * g_cp.d_theta_hat[i];
        const Eigen::Vector2d a = batch[i].azimuth_vec;
        const double n2 = a.squaredNorm();
        g.azimuth_vec = d_theta * Eigen::Vector2d(a.y() / n2, -a.x() / n2);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Gradient check

/// Largest relative deviation between `analytic` and central differences of `f` at `x`.
/// The scale floor keeps near-zero components from dominating.
inline double gradient_check(const std::function<double(const std::vector<double>&)>& f,
                             const std::vector<double>& x, const std::vector<double>& analytic, double step,
                             double floor = 1e-8) {
    require(x.size() == analytic.size(), "gradient_check: input and gradient lengths differ");
    require(step > 0.0, "gradient_check: step must be positive");
    double worst = 0.0;
    std::vector<double> xp = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        auto at = [&](double offset) {
            xp[i] = x[i] + offset;
            const double v = f(xp);
            xp[i] = x[i];
            if (!std::isfinite(v)) throw NumericError("gradient_check: non-finite value");
            return v;
        };
        if (!std::isfinite(analytic[i])) throw NumericError("gradient_check: non-finite value");
        // five-point central stencil
        const double fd = (8.0 * (at(step) - at(-step)) - (at(2.0 * step) - at(-2.0 * step))) / (12.0 * step);
        const double scale = std::max({std::abs(fd), std::abs(analytic[i]), floor});
        worst = std::max(worst, std::abs(fd - analytic[i]) / scale);
    }
    return worst;
}

}  // namespace nfisac
