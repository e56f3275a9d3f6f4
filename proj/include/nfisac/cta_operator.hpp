#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>

#include "nfisac/core.hpp"

namespace nfisac {

enum class Branch { semantic, geometric };

struct TokenMatrix {
    RMat tokens;  // L x d_f
    Branch branch = Branch::semantic;

    Eigen::Index length() const { return tokens.rows(); }
    Eigen::Index dim() const { return tokens.cols(); }
};

inline void validate(const TokenMatrix& t) {
    require(t.tokens.rows() >= 1, "token matrix: needs at least one token");
    require(t.tokens.cols() >= 1, "token matrix: feature dimension must be positive");
    require(t.tokens.allFinite(), "token matrix: non-finite entries");
}

struct CtaWeights {
    RMat wq_cls, wk_cls, wv_cls;  // d_f x d_a each
    RMat wq_loc, wk_loc, wv_loc;
    double alpha_cls = 0.1;
    double alpha_loc = 0.1;

    Eigen::Index d_f() const { return wq_cls.rows(); }
    Eigen::Index d_a() const { return wq_cls.cols(); }
};

inline void validate(const CtaWeights& w) {
    const Eigen::Index df = w.d_f(), da = w.d_a();
    require(df > 0 && da > 0, "cta weights: empty projection");
    for (const RMat* m : {&w.wq_cls, &w.wk_cls, &w.wv_cls, &w.wq_loc, &w.wk_loc, &w.wv_loc}) {
        require(m->rows() == df && m->cols() == da, "cta weights: projection shapes differ");
        require(m->allFinite(), "cta weights: non-finite projection entries");
    }
    require(std::isfinite(w.alpha_cls) && std::isfinite(w.alpha_loc), "cta weights: mixing coefficients must be finite");
}

/// Gaussian entries scaled by 1/sqrt(d_f), alpha = 0.1.
inline CtaWeights random_cta_weights(Eigen::Index d_f, Eigen::Index d_a, std::uint64_t seed) {
    require(d_f > 0 && d_a > 0, "cta weights: dimensions must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(static_cast<double>(d_f)));
    auto draw = [&] {
        RMat m(d_f, d_a);
        for (Eigen::Index c = 0; c < d_a; ++c)
            for (Eigen::Index r = 0; r < d_f; ++r) m(r, c) = n(rng);
        return m;
    };
    CtaWeights w;
    w.wq_cls = draw();
    w.wk_cls = draw();
    w.wv_cls = draw();
    w.wq_loc = draw();
    w.wk_loc = draw();
    w.wv_loc = draw();
    return w;
}

/// Row-wise softmax(Q K^T / sqrt(d_a)).
inline RMat attention_map(const RMat& q, const RMat& k, double d_a) {
    require(d_a > 0.0, "attention: d_a must be positive");
    require(q.cols() == k.cols(), "attention: query and key widths differ");
    RMat logits = (q * k.transpose()) / std::sqrt(d_a);
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        logits.row(i) = (logits.row(i).array() - m).exp();
        logits.row(i) /= logits.row(i).sum();
    }
    return logits;
}

inline bool attention_rows_stochastic(const RMat& map, double tol = 1e-6) {
    if (!map.allFinite()) return false;
    if ((map.array() < 0.0).any()) return false;
    for (Eigen::Index i = 0; i < map.rows(); ++i)
        if (std::abs(map.row(i).sum() - 1.0) > tol) return false;
    return true;
}

struct CtaOutput {
    TokenMatrix f_cls;
    TokenMatrix f_loc;
    RMat attention_cls;  // L_cls x L_loc, semantic queries over geometric keys
    RMat attention_loc;  // L_loc x L_cls
};

/// F_cls' = F_cls + a_cls softmax(Q_cls K_loc^T / sqrt(d_a)) V_loc, and symmetrically for F_loc.
/// Values are projected down and back up, V = F W_V W_V^T, so they stay d_f wide.
inline CtaOutput cross_attend(const TokenMatrix& f_cls, const TokenMatrix& f_loc, const CtaWeights& w) {
    validate(f_cls);
    validate(f_loc);
    validate(w);
    require(f_cls.dim() == f_loc.dim(), "cross_attend: branch feature dimensions differ");
    require(f_cls.dim() == w.d_f(), "cross_attend: token dimension differs from weights");
    const double da = static_cast<double>(w.d_a());

    const RMat q_cls = f_cls.tokens * w.wq_cls;
    const RMat k_cls = f_cls.tokens * w.wk_cls;
    const RMat v_cls = f_cls.tokens * w.wv_cls * w.wv_cls.transpose();
    const RMat q_loc = f_loc.tokens * w.wq_loc;
    const RMat k_loc = f_loc.tokens * w.wk_loc;
    const RMat v_loc = f_loc.tokens * w.wv_loc * w.wv_loc.transpose();

    CtaOutput out;
    out.attention_cls = attention_map(q_cls, k_loc, da);
    out.attention_loc = attention_map(q_loc, k_cls, da);
    out.f_cls.branch = f_cls.branch;
    out.f_loc.branch = f_loc.branch;
    if (w.alpha_cls == 0.0)
        out.f_cls.tokens = f_cls.tokens;
    else
        out.f_cls.tokens = f_cls.tokens + w.alpha_cls * (out.attention_cls * v_loc);
    if (w.alpha_loc == 0.0)
        out.f_loc.tokens = f_loc.tokens;
    else
        out.f_loc.tokens = f_loc.tokens + w.alpha_loc * (out.attention_loc * v_cls);
    return out;
}

/// Mean over tokens, then an optional linear map (identity when absent).
inline Eigen::VectorXd pool(const TokenMatrix& t, const std::optional<RMat>& projection = std::nullopt) {
    if (t.tokens.rows() == 0) throw InvalidConfig("pool: empty token matrix");
    const Eigen::VectorXd mean = t.tokens.colwise().mean().transpose();
    if (!projection) return mean;
    require(projection->cols() == mean.size(), "pool: projection width differs from token dimension");
    return *projection * mean;
}

}  // namespace nfisac
