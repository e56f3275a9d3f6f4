#pragma once

#include <cmath>
#include <algorithm>
#include <string>
#include <vector>

#include <Eigen/LU>

#include "nfisac/array_geometry.hpp"
#include "nfisac/core.hpp"
#include "nfisac/target_scene.hpp"

namespace nfisac {

/// e^{-j k0 R} / (4 pi R)
inline cplx scalar_green(double k0, double distance) {
    if (!(distance > 0.0)) throw NumericError("scalar_green: distance must be positive (singular kernel)");
    return std::exp(-j * (k0 * distance)) / (4.0 * constants::pi * distance);
}

/// Closed form of (I + grad grad^T / k0^2) g(|r - r'|):
///   g * [ (1 - j/(kR) - 1/(kR)^2) I - (1 - 3j/(kR) - 3/(kR)^2) R^R^T ]
/// Symmetric in its arguments and as a matrix.
inline CMat3 dyadic_green(double k0, const Vec3& observation, const Vec3& source) {
    const Vec3 d = observation - source;
    const double r = d.norm();
    if (!(r > 0.0)) throw NumericError("dyadic_green: coincident observation and source points");
    const Vec3 u = d / r;
    const cplx g = scalar_green(k0, r);
    const double kr = k0 * r;
    const double inv = 1.0 / kr, inv2 = inv * inv;
    const cplx a = 1.0 - j * inv - inv2;
    const cplx b = -(1.0 - 3.0 * j * inv - 3.0 * inv2);
    CMat3 out;
    for (int p = 0; p < 3; ++p)
        for (int q = 0; q < 3; ++q)
            out(p, q) = g * ((p == q ? a : cplx{0.0}) + b * (u[p] * u[q]));
    return out;
}

/// Field of a small electric dipole with moment p at `source`, evaluated at `observation`.
/// The near-zone coefficient is (1/R^3 + j k0/R^2), the sign consistent with the e^{-jk0R}
/// kernel; with it eps0 * E equals k0^2 G p identically.
inline CVec3 dipole_field(double k0, const Vec3& observation, const Vec3& source, const CVec3& moment) {
    const Vec3 d = observation - source;
    const double r = d.norm();
    if (!(r > 0.0)) throw NumericError("dipole_field: coincident observation and source points");
    const Vec3 u = d / r;
    const Eigen::Matrix3cd uu = (u * u.transpose()).cast<cplx>();
    const Eigen::Matrix3cd eye = Eigen::Matrix3cd::Identity();
    const cplx phase = std::exp(-j * (k0 * r)) / (4.0 * constants::pi * constants::eps0);
    const cplx near = 1.0 / (r * r * r) + j * k0 / (r * r);
    const Eigen::Matrix3cd m = (k0 * k0 / r) * (eye - uu) + near * (3.0 * uu - eye);
    return phase * (m * moment);
}

/// Column t is the field of transmit element t at `position`.
inline CMat incident_matrix(const ArrayGeometry& array, double k0, const Vec3& position) {
    CMat a(3, static_cast<Eigen::Index>(array.n_tx()));
    for (std::size_t t = 0; t < array.n_tx(); ++t)
        a.col(static_cast<Eigen::Index>(t)) =
            dipole_field(k0, position, array.tx_positions[t], array.tx_dipole_moments[t]);
    return a;
}

/// Row r is q_r^H G(r_r, position).
inline CMat receive_matrix(const ArrayGeometry& array, double k0, const Vec3& position) {
    CMat b(static_cast<Eigen::Index>(array.n_rx()), 3);
    for (std::size_t r = 0; r < array.n_rx(); ++r)
        b.row(static_cast<Eigen::Index>(r)) =
            array.rx_polarizations[r].adjoint() * dyadic_green(k0, array.rx_positions[r], position);
    return b;
}

/// Voxel positions with per-voxel contrast at one subcarrier.
struct VoxelContrasts {
    std::vector<Vec3> positions;
    std::vector<cplx> chi;
    double voxel_volume = 0.0;

    std::size_t size() const { return positions.size(); }
};

inline VoxelContrasts scene_contrasts(const PlacedScene& scene, double angular_frequency) {
    VoxelContrasts v;
    v.positions = scene.world_positions;
    v.voxel_volume = scene.target.voxel_volume();
    v.chi.reserve(scene.size());
    for (std::size_t n = 0; n < scene.size(); ++n) v.chi.push_back(scene.contrast_at(n, angular_frequency));
    return v;
}

/// Radius of the sphere with volume dv.
inline double equivalent_radius(double dv) { return std::cbrt(3.0 * dv / (4.0 * constants::pi)); }

/// k0^2 times the integral of G over an equal-volume sphere around its own center:
/// principal-value part (2/3)[(1 + j k0 a) e^{-j k0 a} - 1] minus the depolarization 1/3.
inline cplx self_term(double k0, double dv) {
    const double ka = k0 * equivalent_radius(dv);
    const cplx m = (2.0 / 3.0) * ((1.0 + j * ka) * std::exp(-j * ka) - 1.0);
    return m - 1.0 / 3.0;
}

enum class SolverMethod { automatic, dense_direct, iterative, born };

inline std::string to_string(SolverMethod m) {
    switch (m) {
        case SolverMethod::automatic: return "automatic";
        case SolverMethod::dense_direct: return "dense_direct";
        case SolverMethod::iterative: return "iterative";
        case SolverMethod::born: return "born";
    }
    return "unknown";
}

inline SolverMethod solver_method_from_string(const std::string& s) {
    if (s == "automatic") return SolverMethod::automatic;
    if (s == "dense_direct") return SolverMethod::dense_direct;
    if (s == "iterative") return SolverMethod::iterative;
    if (s == "born") return SolverMethod::born;
    throw InvalidConfig("unknown solver method '" + s + "'");
}

struct SolverOptions {
    SolverMethod method = SolverMethod::automatic;
    std::size_t dense_max_unknowns = 3000;
    double tolerance = 1e-8;
    int max_iterations = 500;
    double min_rcond = 1e-15;
};

struct TotalFieldSolution {
    CMat fields;  // (3 N_s) x N_t, rows 3n..3n+2 hold A(r_n)
    std::size_t subcarrier = 0;
    std::string method;
    double residual = 0.0;
    int iterations = 0;
    double rcond = 0.0;  // dense path only
    std::vector<std::string> warnings;

    std::size_t voxel_count() const { return static_cast<std::size_t>(fields.rows() / 3); }
    auto transfer(std::size_t n) const { return fields.middleRows(static_cast<Eigen::Index>(3 * n), 3); }
};

namespace detail {

inline CMat incident_stack(const VoxelContrasts& v, const ArrayGeometry& array, double k0) {
    const auto ns = static_cast<Eigen::Index>(v.size());
    CMat b(3 * ns, static_cast<Eigen::Index>(array.n_tx()));
    for (Eigen::Index n = 0; n < ns; ++n) b.middleRows(3 * n, 3) = incident_matrix(array, k0, v.positions[n]);
    return b;
}

/// Dense VIE system: diagonal blocks (1 - s chi_n) I, off-diagonal -k0^2 dV G_nn' chi_n'.
inline CMat assemble_system(const VoxelContrasts& v, double k0) {
    const auto ns = static_cast<Eigen::Index>(v.size());
    const cplx s = self_term(k0, v.voxel_volume);
    const double scale = k0 * k0 * v.voxel_volume;
    CMat m = CMat::Zero(3 * ns, 3 * ns);
    for (Eigen::Index n = 0; n < ns; ++n) {
        m.block(3 * n, 3 * n, 3, 3) = (1.0 - s * v.chi[n]) * CMat3::Identity();
        for (Eigen::Index q = n + 1; q < ns; ++q) {
            const CMat3 g = dyadic_green(k0, v.positions[n], v.positions[q]);
            m.block(3 * n, 3 * q, 3, 3) = -scale * v.chi[q] * g;
            m.block(3 * q, 3 * n, 3, 3) = -scale * v.chi[n] * g;
        }
    }
    return m;
}

/// Matrix-free application of the system operator to a (3 N_s) x cols block.
inline CMat apply_system(const VoxelContrasts& v, double k0, const CMat& x) {
    const auto ns = static_cast<Eigen::Index>(v.size());
    const cplx s = self_term(k0, v.voxel_volume);
    const double scale = k0 * k0 * v.voxel_volume;
    CMat y(x.rows(), x.cols());
    for (Eigen::Index n = 0; n < ns; ++n) y.middleRows(3 * n, 3) = (1.0 - s * v.chi[n]) * x.middleRows(3 * n, 3);
    for (Eigen::Index n = 0; n < ns; ++n) {
        for (Eigen::Index q = n + 1; q < ns; ++q) {
            const CMat3 g = dyadic_green(k0, v.positions[n], v.positions[q]);
            y.middleRows(3 * n, 3).noalias() -= (scale * v.chi[q]) * (g * x.middleRows(3 * q, 3));
            y.middleRows(3 * q, 3).noalias() -= (scale * v.chi[n]) * (g * x.middleRows(3 * n, 3));
        }
    }
    return y;
}

inline double relative_residual(const CMat& applied, const CMat& rhs) {
    const double denom = rhs.norm();
    return denom > 0.0 ? (applied - rhs).norm() / denom : (applied - rhs).norm();
}

/// Block-Jacobi preconditioned BiCGSTAB, one independent recurrence per right-hand side
/// run in lockstep so each operator application computes the kernel once for all columns.
inline CMat bicgstab(const VoxelContrasts& v, double k0, const CMat& rhs, const SolverOptions& opt,
                     int& iterations_out) {
    const auto ns = static_cast<Eigen::Index>(v.size());
    const cplx s = self_term(k0, v.voxel_volume);
    Eigen::VectorXcd inv_diag(3 * ns);
    for (Eigen::Index n = 0; n < ns; ++n) {
        const cplx d = 1.0 - s * v.chi[n];
        if (std::abs(d) == 0.0) throw NumericError("iterative solve: singular diagonal block");
        inv_diag.segment(3 * n, 3).setConstant(1.0 / d);
    }
    auto op = [&](const CMat& x) -> CMat { return inv_diag.asDiagonal() * apply_system(v, k0, x); };

    const Eigen::Index cols = rhs.cols();
    const CMat b = inv_diag.asDiagonal() * rhs;
    CMat x = b;
    CMat r = b - op(x);
    CMat r_hat = r;
    CMat p = CMat::Zero(b.rows(), cols), vv = CMat::Zero(b.rows(), cols);
    Eigen::VectorXcd rho = Eigen::VectorXcd::Ones(cols), alpha = rho, omega = rho;
    Eigen::VectorXd bnorm(cols);
    for (Eigen::Index c = 0; c < cols; ++c) bnorm[c] = b.col(c).norm();
    std::vector<bool> done(static_cast<std::size_t>(cols), false);

    auto converged = [&](Eigen::Index c) {
        return bnorm[c] == 0.0 || r.col(c).norm() <= opt.tolerance * bnorm[c];
    };

    int it = 0;
    for (; it < opt.max_iterations; ++it) {
        bool all_done = true;
        for (Eigen::Index c = 0; c < cols; ++c) {
            done[static_cast<std::size_t>(c)] = done[static_cast<std::size_t>(c)] || converged(c);
            all_done = all_done && done[static_cast<std::size_t>(c)];
        }
        if (all_done) break;

        for (Eigen::Index c = 0; c < cols; ++c) {
            if (done[static_cast<std::size_t>(c)]) continue;
            cplx rho_new = r_hat.col(c).dot(r.col(c));
            if (std::abs(rho_new) < 1e-300) {  // breakdown: restart the shadow residual
                r_hat.col(c) = r.col(c);
                p.col(c).setZero();
                vv.col(c).setZero();
                rho[c] = alpha[c] = omega[c] = 1.0;
                rho_new = r_hat.col(c).dot(r.col(c));
            }
            const cplx beta = (rho_new / rho[c]) * (alpha[c] / omega[c]);
            p.col(c) = r.col(c) + beta * (p.col(c) - omega[c] * vv.col(c));
            rho[c] = rho_new;
        }
        vv = op(p);
        CMat sres = r;
        for (Eigen::Index c = 0; c < cols; ++c) {
            if (done[static_cast<std::size_t>(c)]) continue;
            alpha[c] = rho[c] / r_hat.col(c).dot(vv.col(c));
            sres.col(c) = r.col(c) - alpha[c] * vv.col(c);
        }
        const CMat t = op(sres);
        for (Eigen::Index c = 0; c < cols; ++c) {
            if (done[static_cast<std::size_t>(c)]) continue;
            const double tt = t.col(c).squaredNorm();
            omega[c] = tt > 0.0 ? t.col(c).dot(sres.col(c)) / tt : cplx{0.0};
            x.col(c) += alpha[c] * p.col(c) + omega[c] * sres.col(c);
            r.col(c) = sres.col(c) - omega[c] * t.col(c);
            if (omega[c] == cplx{0.0}) done[static_cast<std::size_t>(c)] = true;
        }
    }
    iterations_out = it;
    for (Eigen::Index c = 0; c < cols; ++c)
        if (!converged(c))
            throw NumericError("iterative solve did not converge after " + std::to_string(opt.max_iterations) +
                               " iterations (relative residual " +
                               std::to_string(bnorm[c] > 0 ? r.col(c).norm() / bnorm[c] : r.col(c).norm()) + ")");
    return x;
}

}  // namespace detail

/// Solves A = A_inc + k0^2 dV sum_n' G(r_n, r_n') chi_n' A(r_n') for every voxel at once.
inline TotalFieldSolution solve_total_fields(const VoxelContrasts& v, const ArrayGeometry& array, double k0,
                                             const SolverOptions& opt = {}) {
    require(v.size() >= 1, "solve_total_fields: scene has no voxels");
    require(v.chi.size() == v.positions.size(), "solve_total_fields: contrast/position length mismatch");
    require(v.voxel_volume > 0.0, "solve_total_fields: voxel volume must be positive");

    TotalFieldSolution sol;
    const double wavelength = constants::two_pi / k0;
    const double pitch = std::cbrt(v.voxel_volume);
    if (pitch > wavelength / 4.0)
        sol.warnings.push_back("voxel pitch " + std::to_string(pitch) + " m exceeds lambda/4 = " +
                               std::to_string(wavelength / 4.0) + " m; point collocation is coarse");

    const CMat rhs = detail::incident_stack(v, array, k0);
    SolverMethod method = opt.method;
    if (method == SolverMethod::automatic)
        method = 3 * v.size() <= opt.dense_max_unknowns ? SolverMethod::dense_direct : SolverMethod::iterative;
    sol.method = to_string(method);

    switch (method) {
        case SolverMethod::born:
            sol.fields = rhs;
            sol.residual = 0.0;
            break;
        case SolverMethod::dense_direct: {
            const CMat m = detail::assemble_system(v, k0);
            Eigen::PartialPivLU<CMat> lu(m);
            sol.rcond = lu.rcond();
            if (!(sol.rcond > opt.min_rcond))
                throw NumericError("solve_total_fields: singular system (reciprocal condition estimate " +
                                   std::to_string(sol.rcond) + ")");
            sol.fields = lu.solve(rhs);
            sol.residual = detail::relative_residual(m * sol.fields, rhs);
            break;
        }
        case SolverMethod::iterative: {
            sol.fields = detail::bicgstab(v, k0, rhs, opt, sol.iterations);
            sol.residual = detail::relative_residual(detail::apply_system(v, k0, sol.fields), rhs);
            break;
        }
        case SolverMethod::automatic: break;
    }
    if (!sol.fields.allFinite()) throw NumericError("solve_total_fields: non-finite total field");
    return sol;
}

struct ChannelMatrix {
    CMat entries;  // N_r x N_t
    std::size_t subcarrier = 0;
};

/// H = k0^2 dV sum_n B(r_n) chi_n A(r_n)
inline ChannelMatrix channel_matrix(const TotalFieldSolution& sol, const VoxelContrasts& v,
                                    const ArrayGeometry& array, double k0) {
    require(sol.voxel_count() == v.size(), "channel_matrix: solution and scene voxel lists differ in length");
    require(static_cast<std::size_t>(sol.fields.cols()) == array.n_tx(),
            "channel_matrix: solution column count differs from N_t");
    ChannelMatrix h;
    h.subcarrier = sol.subcarrier;
    h.entries = CMat::Zero(static_cast<Eigen::Index>(array.n_rx()), static_cast<Eigen::Index>(array.n_tx()));
    const double scale = k0 * k0 * v.voxel_volume;
    for (std::size_t n = 0; n < v.size(); ++n) {
        if (v.chi[n] == cplx{0.0}) continue;
        const CMat b = receive_matrix(array, k0, v.positions[n]);
        h.entries.noalias() += b * ((scale * v.chi[n]) * sol.transfer(n));
    }
    if (!h.entries.allFinite()) throw NumericError("channel_matrix: non-finite entries");
    return h;
}

struct SimulationReport {
    std::vector<double> residuals;
    std::vector<std::string> warnings;
    std::string method;
};

/// One channel matrix per selected subcarrier of `grid`.
inline std::vector<ChannelMatrix> simulate_sample(const PlacedScene& scene, const ArrayGeometry& array,
                                                  const FrequencyGrid& grid, const SolverOptions& opt = {},
                                                  SimulationReport* report = nullptr) {
    std::vector<ChannelMatrix> out;
    for (std::size_t idx : grid.selected_indices) {
        const double f = grid.subcarrier_frequencies.at(idx);
        const double k0 = grid.wavenumbers.at(idx);
        const VoxelContrasts v = scene_contrasts(scene, constants::two_pi * f);
        TotalFieldSolution sol = solve_total_fields(v, array, k0, opt);
        sol.subcarrier = idx;
        out.push_back(channel_matrix(sol, v, array, k0));
        if (report) {
            report->residuals.push_back(sol.residual);
            report->method = sol.method;
            for (auto& w : sol.warnings)
                if (std::find(report->warnings.begin(), report->warnings.end(), w) == report->warnings.end())
                    report->warnings.push_back(w);
        }
    }
    return out;
}

}  // namespace nfisac
