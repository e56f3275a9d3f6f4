#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nfisac/array_geometry.hpp"
#include "nfisac/core.hpp"
#include "nfisac/cta_operator.hpp"
#include "nfisac/em_forward.hpp"
#include "nfisac/structured_objectives.hpp"

namespace nfisac {

using GreenKernel = std::function<CMat3(double, const Vec3&, const Vec3&)>;

struct CheckResult {
    std::string name;
    bool passed = false;
    double value = 0.0;      // measured statistic
    double tolerance = 0.0;  // pass threshold on `value`
    std::string detail;
};

struct SelfcheckOptions {
    GreenKernel kernel = dyadic_green;
    int geometries = 1000;
    std::uint64_t seed = 7;
};

namespace selfcheck {

inline CheckResult make(std::string name, double value, double tol, bool pass, std::string detail = {}) {
    return {std::move(name), pass && std::isfinite(value), value, tol, std::move(detail)};
}

inline Vec3 random_point(std::mt19937_64& rng, double half) {
    std::uniform_real_distribution<double> u(-half, half);
    return {u(rng), u(rng), u(rng)};
}

/// max over random geometries of |eps0 E_dip - k0^2 G p| / |k0^2 G p|
inline CheckResult dipole_green_consistency(const SelfcheckOptions& opt) {
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> uk(1.0, 200.0), un(-1.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < opt.geometries; ++i) {
        const double k0 = uk(rng);
        const Vec3 src = random_point(rng, 2.0);
        Vec3 obs = random_point(rng, 2.0);
        if ((obs - src).norm() < 1e-3) obs += Vec3(0.01, 0.0, 0.0);
        const CVec3 p(cplx(un(rng), un(rng)), cplx(un(rng), un(rng)), cplx(un(rng), un(rng)));
        const CVec3 lhs = constants::eps0 * dipole_field(k0, obs, src, p);
        const CVec3 rhs = k0 * k0 * (opt.kernel(k0, obs, src) * p);
        worst = std::max(worst, (lhs - rhs).norm() / rhs.norm());
    }
    return make("dipole_green_consistency", worst, 1e-12, worst <= 1e-12,
                std::to_string(opt.geometries) + " random geometries");
}

/// G(r, r') against G(r', r)^T and against its own transpose.
inline CheckResult green_symmetry(const SelfcheckOptions& opt) {
    std::mt19937_64 rng(opt.seed + 1);
    std::uniform_real_distribution<double> uk(1.0, 200.0);
    double worst = 0.0;
    for (int i = 0; i < opt.geometries; ++i) {
        const double k0 = uk(rng);
        const Vec3 a = random_point(rng, 2.0), b = random_point(rng, 2.0);
        const CMat3 g = opt.kernel(k0, a, b);
        const double scale = g.norm();
        worst = std::max(worst, (g - opt.kernel(k0, b, a).transpose()).norm() / scale);
        worst = std::max(worst, (g - g.transpose()).norm() / scale);
    }
    return make("green_symmetry", worst, 1e-14, worst <= 1e-14);
}

inline VoxelContrasts cube_scene(int n, double pitch, const Vec3& center, cplx chi) {
    VoxelContrasts v;
    v.voxel_volume = pitch * pitch * pitch;
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            for (int c = 0; c < n; ++c) {
                const Vec3 off = (Vec3(a, b, c) - Vec3::Constant(0.5 * (n - 1))) * pitch;
                v.positions.push_back(center + off);
                v.chi.push_back(chi);
            }
    return v;
}

inline CheckResult zero_contrast() {
    const ArrayGeometry arr = build_cross_array(4, 4, 4.9e9);
    const double k0 = wavenumber(4.9e9);
    VoxelContrasts v = cube_scene(3, 0.01, Vec3(3.0, 0.5, 0.0), cplx{0.0});
    SolverOptions so;
    so.method = SolverMethod::dense_direct;
    const TotalFieldSolution sol = solve_total_fields(v, arr, k0, so);
    const CMat inc = detail::incident_stack(v, arr, k0);
    const double a_err = (sol.fields - inc).norm() / inc.norm();
    const double h_norm = channel_matrix(sol, v, arr, k0).entries.norm();
    const double value = std::max(a_err, h_norm);
    return make("zero_contrast", value, 1e-10, a_err <= 1e-10 && h_norm == 0.0,
                "A vs A_inc rel. err and |H| with chi = 0");
}

/// Least-squares slope of log|H_full - H_born| against log c.
inline CheckResult born_scaling() {
    const ArrayGeometry arr = build_cross_array(4, 4, 4.9e9);
    const double k0 = wavenumber(4.9e9);
    const double pitch = 2.0 * constants::pi / k0 / 10.0;
    std::vector<double> xs, ys;
    for (double c : {0.01, 0.02, 0.04, 0.07, 0.1}) {
        const VoxelContrasts v = cube_scene(3, pitch, Vec3(3.0, 0.4, 0.05), c * cplx(2.0, 0.5));
        SolverOptions full, born;
        full.method = SolverMethod::dense_direct;
        born.method = SolverMethod::born;
        const CMat hf = channel_matrix(solve_total_fields(v, arr, k0, full), v, arr, k0).entries;
        const CMat hb = channel_matrix(solve_total_fields(v, arr, k0, born), v, arr, k0).entries;
        xs.push_back(std::log(c));
        ys.push_back(std::log((hf - hb).norm()));
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) { mx += xs[i]; my += ys[i]; }
    mx /= static_cast<double>(xs.size());
    my /= static_cast<double>(ys.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    const double slope = sxy / sxx;
    return make("born_scaling_slope", std::abs(slope - 2.0), 0.1, std::abs(slope - 2.0) <= 0.1,
                "slope " + std::to_string(slope) + " over c in [0.01, 0.1]");
}

/// Single voxel against the Clausius-Mossotti dipole k0^2 B alpha A_inc.
inline CheckResult rayleigh_oracle() {
    const ArrayGeometry arr = build_cross_array(3, 3, 4.9e9);
    const double k0 = wavenumber(4.9e9);
    double worst = 0.0;
    for (double ka : {0.05, 0.15, 0.3}) {
        const double a = ka / k0;
        const double dv = 4.0 / 3.0 * constants::pi * a * a * a;
        for (cplx chi : {cplx(0.1, 0.0), cplx(0.5, 0.0), cplx(1.0, 0.0), cplx(0.6, -0.6), cplx(0.0, -1.0)}) {
            VoxelContrasts v;
            v.voxel_volume = dv;
            v.positions = {Vec3(2.0, 0.3, 0.0)};
            v.chi = {chi};
            SolverOptions so;
            so.method = SolverMethod::dense_direct;
            const CMat h = channel_matrix(solve_total_fields(v, arr, k0, so), v, arr, k0).entries;
            const cplx alpha = 3.0 * dv * chi / (chi + 3.0);
            const CMat ref =
                k0 * k0 * alpha * (receive_matrix(arr, k0, v.positions[0]) * incident_matrix(arr, k0, v.positions[0]));
            worst = std::max(worst, (h - ref).norm() / ref.norm());
        }
    }
    return make("rayleigh_clausius_mossotti", worst, 0.1, worst <= 0.1, "|chi| <= 1, k0 a <= 0.3");
}

/// Identical tx/rx elements with matched moment and polarization.
inline CheckResult reciprocity() {
    ArrayGeometry arr = build_cross_array(5, 5, 4.9e9);
    arr.rx_positions = arr.tx_positions;
    arr.rx_polarizations = arr.tx_dipole_moments;
    const double k0 = wavenumber(4.9e9);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    VoxelContrasts v = cube_scene(3, 0.01, Vec3(2.5, -0.3, 0.02), cplx{0.0});
    for (auto& c : v.chi) c = cplx(1.0 + 2.0 * u(rng), -u(rng));
    SolverOptions so;
    so.method = SolverMethod::dense_direct;
    const CMat h = channel_matrix(solve_total_fields(v, arr, k0, so), v, arr, k0).entries;
    const double err = (h - h.transpose()).norm() / h.norm();
    return make("reciprocity", err, 1e-8, err <= 1e-8, "co-located arrays");
}

inline CheckResult codec_round_trip() {
    double worst = 0.0;
    const int n = 4096;
    for (int i = 0; i < n; ++i) {
        const double t = -constants::pi + constants::two_pi * i / n;
        worst = std::max(worst, std::abs(wrap_angle(decode_azimuth(encode_azimuth(t)) - t)));
    }
    return make("azimuth_codec_round_trip", worst, 1e-12, worst <= 1e-12);
}

/// Flattens one prediction into a parameter vector and back, for finite differences.
inline std::vector<double> flatten(const Prediction& p) {
    std::vector<double> x(p.class_logits.data(), p.class_logits.data() + p.class_logits.size());
    for (double v : {p.range_hat, p.log_var_range, p.azimuth_vec.x(), p.azimuth_vec.y(), p.log_var_azimuth,
                     p.peak_hat.x(), p.peak_hat.y()})
        x.push_back(v);
    return x;
}

inline Prediction unflatten(const std::vector<double>& x, Eigen::Index n_classes) {
    Prediction p;
    p.class_logits = Eigen::Map<const Eigen::VectorXd>(x.data(), n_classes);
    const auto* r = x.data() + n_classes;
    p.range_hat = r[0];
    p.log_var_range = r[1];
    p.azimuth_vec = {r[2], r[3]};
    p.log_var_azimuth = r[4];
    p.peak_hat = {r[5], r[6]};
    return p;
}

/// Central differences of total_loss against its analytic gradient on random batches kept
/// away from the L1 and coupling kinks.
inline CheckResult loss_gradients(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const LossWeights w;
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Prediction> batch;
        std::vector<TrainingTarget> truths;
        for (int b = 0; b < 4; ++b) {
            TrainingTarget t;
            t.class_id = b % 2;
            t.range = 10.0 + 5.0 * u(rng);
            t.azimuth = 0.8 * u(rng);
            t.peak_ref = {3.0, 5.0};
            Prediction p;
            p.class_logits = Eigen::Vector2d(u(rng), u(rng));
            p.range_hat = t.range + 2.0 * u(rng);
            p.log_var_range = u(rng);
            const double th = t.azimuth + 0.3 * u(rng);
            p.azimuth_vec = (1.0 + 0.5 * u(rng)) * encode_azimuth(th);
            p.log_var_azimuth = u(rng);
            p.peak_hat = t.peak_ref + Eigen::Vector2d(0.3 + 0.4 * std::abs(u(rng)), -0.3 - 0.4 * std::abs(u(rng)));
            // keep the coupling term away from its kinks
            const double dr = std::abs(p.range_hat - t.range);
            const double dt = std::abs(t.range * wrap_angle(p.azimuth_hat() - t.azimuth));
            if (std::abs(dr - dt) < 1e-2 || dr < 1e-2 || dt < 1e-2) { --b; continue; }
            batch.push_back(p);
            truths.push_back(t);
        }
        const auto grads = total_loss_grad(batch, truths, w);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            auto f = [&](const std::vector<double>& x) {
                auto mod = batch;
                mod[i] = unflatten(x, 2);
                return total_loss(mod, truths, w).total;
            };
            worst = std::max(worst, gradient_check(f, flatten(batch[i]), flatten(grads[i]), 1e-4, 1e-6));
        }
    }
    return make("loss_gradients", worst, 1e-6, worst <= 1e-6, "total_loss vs central differences, step 1e-4");
}

inline CheckResult cta_reductions(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    auto tokens = [&](Eigen::Index l, Eigen::Index d, Branch b) {
        TokenMatrix t;
        t.tokens = RMat(l, d);
        for (Eigen::Index i = 0; i < l; ++i)
            for (Eigen::Index c = 0; c < d; ++c) t.tokens(i, c) = n(rng);
        t.branch = b;
        return t;
    };
    const TokenMatrix fc = tokens(16, 32, Branch::semantic), fl = tokens(12, 32, Branch::geometric);
    CtaWeights w = random_cta_weights(32, 16, seed);

    bool ok = true;
    double dev = 0.0;
    const CtaOutput out = cross_attend(fc, fl, w);
    ok = ok && attention_rows_stochastic(out.attention_cls) && attention_rows_stochastic(out.attention_loc);
    ok = ok && out.f_cls.tokens.rows() == 16 && out.f_cls.tokens.cols() == 32 && out.f_loc.tokens.rows() == 12;

    CtaWeights w0 = w;
    w0.alpha_cls = w0.alpha_loc = 0.0;
    const CtaOutput z = cross_attend(fc, fl, w0);
    ok = ok && z.f_cls.tokens == fc.tokens && z.f_loc.tokens == fl.tokens;

    // reversing the geometric tokens permutes keys/values of the semantic branch
    TokenMatrix fl_rev = fl;
    fl_rev.tokens = fl.tokens.colwise().reverse();
    const CtaOutput pr = cross_attend(fc, fl_rev, w);
    dev = (pr.f_cls.tokens - out.f_cls.tokens).cwiseAbs().maxCoeff();
    ok = ok && dev <= 1e-9;
    return make("cta_reductions", dev, 1e-9, ok, "alpha = 0 exact, rows stochastic, key/value permutation");
}

}  // namespace selfcheck

inline std::vector<CheckResult> run_selfcheck(const SelfcheckOptions& opt = {}) {
    std::vector<CheckResult> out;
    auto guarded = [&](const std::string& name, const std::function<CheckResult()>& fn) {
        try {
            out.push_back(fn());
        } catch (const std::exception& e) {
            out.push_back({name, false, std::nan(""), 0.0, std::string("threw: ") + e.what()});
        }
    };
    guarded("dipole_green_consistency", [&] { return selfcheck::dipole_green_consistency(opt); });
    guarded("green_symmetry", [&] { return selfcheck::green_symmetry(opt); });
    guarded("zero_contrast", [] { return selfcheck::zero_contrast(); });
    guarded("born_scaling_slope", [] { return selfcheck::born_scaling(); });
    guarded("rayleigh_clausius_mossotti", [] { return selfcheck::rayleigh_oracle(); });
    guarded("reciprocity", [] { return selfcheck::reciprocity(); });
    guarded("azimuth_codec_round_trip", [] { return selfcheck::codec_round_trip(); });
    guarded("loss_gradients", [&] { return selfcheck::loss_gradients(opt.seed); });
    guarded("cta_reductions", [&] { return selfcheck::cta_reductions(opt.seed); });
    return out;
}

inline std::string selfcheck_report(const std::vector<CheckResult>& results) {
    std::ostringstream out;
    out << "check,status,value,tolerance,detail\n";
    out.precision(6);
    for (const auto& r : results) {
        std::string csv_safe = r.detail;
        std::replace(csv_safe.begin(), csv_safe.end(), ',', ';');
        out << r.name << ',' << (r.passed ? "PASS" : "FAIL") << ',' << std::scientific << r.value << ','
            << r.tolerance << ',' << csv_safe << '\n';
    }
    return out.str();
}

}  // namespace nfisac
