#pragma once

// Convergence-rate bounds for batch-sampling block Kaczmarz.
//
// All spectral work happens in reduced coordinates: with Q an orthonormal
// basis of range(A^T) and At = A Q (m x d), every quadratic form on range(A^T)
// becomes a d x d matrix. For a set E, the part of range(A^T) orthogonal to
// range(A_E^T) is spanned by the trailing d - r columns of a pivoted
// Householder factor of At_E^T, so W_E^T A^T D^2 A W_E is a trailing block
// of H^T (At^T D^2 At) H.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "kaczmarz/error.hpp"
#include "kaczmarz/linalg.hpp"
#include "kaczmarz/sampling.hpp"
#include "kaczmarz/solver.hpp"

namespace kaczmarz {

enum class ScalingLabel { identity, inv_row_norm, custom };

inline const char* to_string(ScalingLabel l) {
    switch (l) {
        case ScalingLabel::identity: return "identity";
        case ScalingLabel::inv_row_norm: return "inv-row-norm";
        case ScalingLabel::custom: return "custom";
    }
    return "custom";
}

inline ScalingLabel scaling_label_from_string(const std::string& s) {
    if (s == "identity") return ScalingLabel::identity;
    if (s == "inv-row-norm") return ScalingLabel::inv_row_norm;
    if (s == "custom") return ScalingLabel::custom;
    throw ConfigError("unknown scaling candidate '" + s + "'");
}

/// Nonsingular diagonal S, stored as its diagonal.
struct Scaling {
    Vec diag;
    ScalingLabel label = ScalingLabel::custom;

    static Scaling identity(Eigen::Index m) { return {Vec::Ones(m), ScalingLabel::identity}; }

    static Scaling inv_row_norm(const Mat& a) {
        Vec d(a.rows());
        for (Eigen::Index j = 0; j < a.rows(); ++j) {
            const double norm = a.row(j).norm();
            if (!(norm > 0.0)) {
                throw ZeroRowError("inv-row-norm scaling: row " + std::to_string(j + 1) + " is zero");
            }
            d(j) = 1.0 / norm;
        }
        return {d, ScalingLabel::inv_row_norm};
    }

    static Scaling custom(Vec d) {
        require_finite(d, "scaling");
        for (Eigen::Index j = 0; j < d.size(); ++j) {
            if (d(j) == 0.0) {
                throw ParamError("scaling entry " + std::to_string(j + 1) + " is zero");
            }
        }
        return {std::move(d), ScalingLabel::custom};
    }

    static Scaling from_label(ScalingLabel label, const Mat& a) {
        switch (label) {
            case ScalingLabel::identity: return identity(a.rows());
            case ScalingLabel::inv_row_norm: return inv_row_norm(a);
            case ScalingLabel::custom: break;
        }
        throw ConfigError("custom scaling needs explicit entries");
    }
};

/// ||S_tau A_tau||_2^2 for a tuple or set of rows (repeats kept).
inline double scaled_block_norm_sq(const Mat& a, const Scaling& s, std::span<const int> rows) {
    Mat block = select_rows(a, rows);
    for (Eigen::Index i = 0; i < block.rows(); ++i) {
        block.row(i) *= s.diag(rows[static_cast<std::size_t>(i)]);
    }
    return spectral_norm_sq(block);
}

/// beta^S_{i,j}: one length-m vector per tuple coordinate i.
inline std::vector<Vec> beta_matrices(const Mat& a, const JointTable& table, const Scaling& s) {
    if (a.rows() != table.m() || s.diag.size() != a.rows()) {
        throw DimError("beta_matrices: dimension mismatch");
    }
    const int q = table.q();
    const auto m = static_cast<Eigen::Index>(table.m());
    std::vector<Vec> beta(static_cast<std::size_t>(q), Vec::Constant(m, -1.0));
    double global = 0.0;
    for (const auto& e : table.entries()) {
        if (!(e.prob > 0.0)) continue;
        const double norm = scaled_block_norm_sq(a, s, e.tuple);
        global = std::max(global, norm);
        for (int i = 0; i < q; ++i) {
            double& slot = beta[static_cast<std::size_t>(i)](e.tuple[static_cast<std::size_t>(i)]);
            slot = std::max(slot, norm);
        }
    }
    if (!(global > 0.0)) {
        throw ZeroBlockError("beta_matrices: every supported block is zero");
    }
    for (auto& b : beta) {
        for (Eigen::Index j = 0; j < m; ++j) {
            if (b(j) < 0.0) b(j) = global;  // p_ij = 0
        }
    }
    return beta;
}

/// Exact D^2 = S (sum_i B_{S;i}^{-1} P_i) S.
inline Vec dsq_exact(const Mat& a, const JointTable& table, const Scaling& s) {
    const auto beta = beta_matrices(a, table, s);
    const Marginals p = marginals(table);
    Vec d2 = Vec::Zero(a.rows());
    for (Eigen::Index j = 0; j < a.rows(); ++j) {
        double acc = 0.0;
        for (int i = 0; i < table.q(); ++i) {
            const double bij = beta[static_cast<std::size_t>(i)](j);
            if (p(i, j) > 0.0) {
                if (!(bij > 0.0)) {
                    throw ZeroBlockError("dsq: block through row " + std::to_string(j + 1) + " is zero");
                }
                acc += p(i, j) / bij;
            }
        }
        d2(j) = s.diag(j) * s.diag(j) * acc;
    }
    return d2;
}

/// Paving D^2 = S^2 B_S^{-1} P_hat, B_S holding the scaled norm of each row's block.
inline Vec dsq_paving(const Mat& a, const SetScheme& scheme, const Scaling& s) {
    if (scheme.kind() != SchemeKind::paving) {
        throw SchemeKindError(std::string("paving bound needs a paving scheme, got ") + to_string(scheme.kind()));
    }
    const Vec ph = phat(scheme);
    Vec d2(a.rows());
    for (const auto& set : scheme.sets()) {
        const double norm = scaled_block_norm_sq(a, s, set.rows);
        if (!(norm > 0.0)) {
            throw ZeroBlockError("dsq: block starting at row " + std::to_string(set.rows.front() + 1) + " is zero");
        }
        for (int j : set.rows) {
            d2(j) = s.diag(j) * s.diag(j) * ph(j) / norm;
        }
    }
    return d2;
}

/// beta^S = max over supported sets of ||S_E A_E||_2^2.
inline double beta_s(const Mat& a, const SetScheme& scheme, const Scaling& s) {
    double best = 0.0;
    for (std::size_t k : scheme.support()) {
        best = std::max(best, scaled_block_norm_sq(a, s, scheme.sets()[k].rows));
    }
    if (!(best > 0.0)) {
        throw ZeroBlockError("every supported block is zero");
    }
    return best;
}

/// Relaxed D^2 = S P_hat S / beta^S.
inline Vec dsq_relaxed(const Mat& a, const SetScheme& scheme, const Scaling& s) {
    const double beta = beta_s(a, scheme, s);
    return s.diag.cwiseAbs2().cwiseProduct(phat(scheme)) / beta;
}

/// Orthonormal basis Q of range(A^T) and At = A Q.
struct RowSpace {
    Mat q;
    Mat reduced;

    [[nodiscard]] Eigen::Index dim() const { return q.cols(); }

    static RowSpace of(const Mat& a, RankTol tol = {}) {
        RowSpace rs;
        rs.q = range_basis(a.transpose(), tol);
        if (rs.q.cols() == 0) {
            throw DegenerateError("matrix has rank zero");
        }
        rs.reduced = a * rs.q;
        return rs;
    }

    /// At^T D^2 At.
    [[nodiscard]] Mat gram(const Vec& d2) const {
        if (d2.size() != reduced.rows()) {
            throw DimError("weight vector has wrong length");
        }
        return reduced.transpose() * d2.asDiagonal() * reduced;
    }
};

struct XiResult {
    double xi = 1.0;
    /// xi_E per scheme set; NaN for zero-probability or excluded sets.
    std::vector<double> per_set;
    /// Sets whose W_E is empty (they solve the system outright).
    std::vector<bool> excluded;
};

/// Precomputed geometry of a matrix and a set scheme, shared by all bounds.
class BoundContext {
public:
    BoundContext(const Mat& a, const SetScheme& scheme, RankTol tol = {})
        : a_(a), scheme_(scheme), tol_(tol), rows_(RowSpace::of(a, tol)) {
        if (a.rows() != scheme.m()) {
            throw DimError("scheme and matrix disagree on m");
        }
        const Eigen::Index d = rows_.dim();
        geometry_.resize(scheme.size());
        for (std::size_t k : scheme.support()) {
            const auto& set = scheme.sets()[k];
            const Mat block_t = select_rows(rows_.reduced, set.rows).transpose();  // d x |E|
            SetGeometry g;
            g.rank = svd_thin(block_t).rank(tol);
            if (g.rank == 0) {
                throw ZeroBlockError("block starting at row " + std::to_string(set.rows.front() + 1) + " is zero");
            }
            g.qr.compute(block_t);
            g.complement = d - g.rank;
            geometry_[k] = std::move(g);
        }
    }

    [[nodiscard]] const Mat& matrix() const { return a_; }
    [[nodiscard]] const SetScheme& scheme() const { return scheme_; }
    [[nodiscard]] const RowSpace& row_space() const { return rows_; }
    [[nodiscard]] RankTol tol() const { return tol_; }

    [[nodiscard]] PositiveSpectrum spectrum(const Vec& d2) const { return positive_spectrum(rows_.gram(d2), tol_); }

    [[nodiscard]] double eta(const Vec& d2) const { return spectrum(d2).min_positive; }

    [[nodiscard]] XiResult xi(const Vec& d2) const {
        const Mat g = rows_.gram(d2);
        XiResult out;
        out.per_set.assign(scheme_.size(), std::numeric_limits<double>::quiet_NaN());
        out.excluded.assign(scheme_.size(), false);
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k : scheme_.support()) {
            const auto& geo = geometry_[k];
            if (geo.complement == 0) {
                out.excluded[k] = true;
                continue;
            }
            const Mat rotated = rotate(geo, g);
            const Eigen::Index c = geo.complement;
            const Mat w = rotated.bottomRightCorner(c, c);
            out.per_set[k] = smallest_positive_eig(0.5 * (w + w.transpose()), tol_);
            best = std::min(best, out.per_set[k]);
        }
        out.xi = std::isfinite(best) ? best : 1.0;
        return out;
    }

    /// Orthonormal basis of range(A_E^T) in reduced coordinates (d x r).
    [[nodiscard]] Mat set_basis(std::size_t k) const {
        const auto& geo = geometry_.at(k);
        auto h = geo.qr.householderQ();
        h.setLength(geo.rank);
        const Mat full = h;
        return full.leftCols(geo.rank);
    }

    /// Orthonormal basis of range(A^T) minus range(A_E^T), in the original space (n x (d - r)).
    [[nodiscard]] Mat complement_in_full(std::size_t k) const {
        const auto& geo = geometry_.at(k);
        auto h = geo.qr.householderQ();
        h.setLength(geo.rank);
        const Mat full = h;
        return rows_.q * full.rightCols(geo.complement);
    }

    /// sum_E Pr(E) V_E V_E^T in reduced coordinates.
    [[nodiscard]] Mat expected_projector() const {
        const Eigen::Index d = rows_.dim();
        Mat sum = Mat::Zero(d, d);
        for (std::size_t k : scheme_.support()) {
            const Mat v = set_basis(k);
            sum.noalias() += scheme_.sets()[k].prob * (v * v.transpose());
        }
        return 0.5 * (sum + sum.transpose());
    }

private:
    struct SetGeometry {
        Eigen::ColPivHouseholderQR<Mat> qr;
        Eigen::Index rank = 0;
        Eigen::Index complement = 0;
    };

    [[nodiscard]] static Mat rotate(const SetGeometry& geo, const Mat& g) {
        auto h = geo.qr.householderQ();
        h.setLength(geo.rank);
        Mat t = h.adjoint() * g;
        t = t * h;
        return t;
    }

    const Mat& a_;
    const SetScheme& scheme_;
    RankTol tol_;
    RowSpace rows_;
    std::vector<SetGeometry> geometry_;
};

inline double eta(const Mat& a, const Vec& d2, RankTol tol = {}) {
    return positive_spectrum(RowSpace::of(a, tol).gram(d2), tol).min_positive;
}

inline XiResult xi(const Mat& a, const Vec& d2, const SetScheme& scheme, RankTol tol = {}) {
    return BoundContext(a, scheme, tol).xi(d2);
}

/// E(xi_tau); excluded sets count as b = lambda_max(A^T D^2 A).
inline double expected_xi(const SetScheme& scheme, const XiResult& x, double b) {
    double acc = 0.0;
    for (std::size_t k : scheme.support()) {
        acc += scheme.sets()[k].prob * (x.excluded[k] ? b : x.per_set[k]);
    }
    return acc;
}

/// xi_E values used as samples: per-set values with b substituted for
/// excluded sets.
inline std::vector<double> xi_samples(const SetScheme& scheme, const XiResult& x, double b) {
    std::vector<double> out = x.per_set;
    for (std::size_t k : scheme.support()) {
        if (x.excluded[k]) out[k] = b;
    }
    return out;
}

/// Hoeffding radius for ell samples in [a, b] at confidence 1 - delta.
inline double epsilon_from_samples(double a, double b, long long ell, double delta) {
    if (!(delta > 0.0 && delta < 1.0)) {
        throw ParamError("delta must lie in (0, 1), got " + std::to_string(delta));
    }
    if (ell < 1) {
        throw ParamError("sample count must be >= 1");
    }
    if (!(b >= a)) {
        throw ParamError("sample range has b < a");
    }
    return (b - a) * std::sqrt(std::log(2.0 / delta) / (2.0 * static_cast<double>(ell)));
}

/// (1 - xi)^k (1 - eta).
inline double envelope(double eta_v, double xi_v, int k) {
    return std::pow(1.0 - xi_v, k) * (1.0 - eta_v);
}

struct FirstStep {
    double first = 1.0;  // 1 - eta
    double step = 1.0;   // 1 - xi
    double eta = 0.0;
    double xi = 0.0;
};

inline FirstStep first_step(const BoundContext& ctx, const Vec& d2) {
    FirstStep out;
    out.eta = ctx.eta(d2);
    out.xi = ctx.xi(d2).xi;
    out.first = 1.0 - out.eta;
    out.step = 1.0 - out.xi;
    return out;
}

inline double bound_thm1(const Mat& a, const JointTable& table, const Scaling& s, int k, RankTol tol = {}) {
    const SetScheme scheme = effective_scheme(table);
    const BoundContext ctx(a, scheme, tol);
    const auto fs = first_step(ctx, dsq_exact(a, table, s));
    return envelope(fs.eta, fs.xi, k);
}

inline FirstStep bound_cor2(const Mat& a, const SetScheme& scheme, const Scaling& s, RankTol tol = {}) {
    return first_step(BoundContext(a, scheme, tol), dsq_relaxed(a, scheme, s));
}

inline FirstStep bound_thm3(const Mat& a, const SetScheme& scheme, const Scaling& s, RankTol tol = {}) {
    return first_step(BoundContext(a, scheme, tol), dsq_paving(a, scheme, s));
}

inline double bound_nd14(const Mat& a, const SetScheme& scheme, RankTol tol = {}) {
    if (scheme.kind() != SchemeKind::paving) {
        throw SchemeKindError(std::string("nd14 needs a paving scheme, got ") + to_string(scheme.kind()));
    }
    const double beta = beta_s(a, scheme, Scaling::identity(a.rows()));
    const double lam = positive_spectrum(RowSpace::of(a, tol).gram(Vec::Ones(a.rows())), tol).min_positive;
    return 1.0 - lam / (beta * static_cast<double>(scheme.size()));
}

inline double bound_gm21(const BoundContext& ctx) {
    return 1.0 - smallest_positive_eig(ctx.expected_projector(), ctx.tol());
}

inline double bound_gm21(const Mat& a, const SetScheme& scheme, RankTol tol = {}) {
    return bound_gm21(BoundContext(a, scheme, tol));
}

struct BoundValue {
    double raw = std::numeric_limits<double>::quiet_NaN();
    double value = std::numeric_limits<double>::quiet_NaN();  // clamped to [0, 1]
    bool clamped = false;
    std::string scaling;  // candidate that attained the minimum

    static BoundValue of(double raw, std::string label = {}) {
        BoundValue v;
        v.raw = raw;
        v.value = std::clamp(raw, 0.0, 1.0);
        v.clamped = v.value != raw;
        v.scaling = std::move(label);
        return v;
    }
};

/// Every S-dependent quantity for one scaling candidate.
struct CandidateBounds {
    std::string scaling;
    double eta = 0.0, xi = 0.0;              // exact D^2
    double eta_hat = 0.0, xi_hat = 0.0;      // relaxed
    std::optional<double> eta_tilde, xi_tilde;  // paving only
    double beta_s = 0.0;
    double a = 0.0, b = 0.0;
    double expected_xi = 0.0;
    double epsilon = 0.0;
    double thm4 = 0.0;  // raw
    /// xi_E under the exact D^2, with b for excluded sets (for covariance checks).
    std::vector<double> xi_per_set;
};

struct BoundOptions {
    long long ell = 30;
    double delta = 0.05;
    /// Tuple table for the exact bound; the canonical table of the scheme
    /// is used when absent.
    std::optional<JointTable> table;
};

inline CandidateBounds evaluate_candidate(const BoundContext& ctx, const Scaling& s, const BoundOptions& opt) {
    const Mat& a = ctx.matrix();
    const SetScheme& scheme = ctx.scheme();
    if (s.diag.size() != a.rows()) {
        throw DimError("scaling has wrong length");
    }
    CandidateBounds c;
    c.scaling = to_string(s.label);

    const Vec d2 = opt.table ? dsq_exact(a, *opt.table, s) : dsq_exact(a, canonical_joint_table(scheme), s);
    const PositiveSpectrum spec = ctx.spectrum(d2);
    const XiResult x = ctx.xi(d2);
    c.eta = spec.min_positive;
    c.xi = x.xi;
    c.a = spec.min_positive;
    c.b = spec.max;
    c.expected_xi = expected_xi(scheme, x, c.b);
    c.epsilon = epsilon_from_samples(c.a, c.b, opt.ell, opt.delta);
    c.thm4 = 1.0 + c.epsilon - c.expected_xi;
    c.xi_per_set = xi_samples(scheme, x, c.b);

    c.beta_s = beta_s(a, scheme, s);
    const Vec d2_rel = s.diag.cwiseAbs2().cwiseProduct(phat(scheme)) / c.beta_s;
    c.eta_hat = ctx.eta(d2_rel);
    c.xi_hat = ctx.xi(d2_rel).xi;

    if (scheme.kind() == SchemeKind::paving) {
        const Vec d2_pav = dsq_paving(a, scheme, s);
        if (d2_pav == d2) {
            c.eta_tilde = c.eta;
            c.xi_tilde = c.xi;
        } else {
            c.eta_tilde = ctx.eta(d2_pav);
            c.xi_tilde = ctx.xi(d2_pav).xi;
        }
    }
    return c;
}

struct BoundReport {
    std::vector<CandidateBounds> candidates;
    BoundValue thm1_first, thm1_step, cor2_first, cor2_step, thm4, gm21;
    std::optional<BoundValue> thm3_first, thm3_step, nd14;
    /// Taken from the candidate that attains thm1_step.
    double eta = 0.0, xi = 0.0;
    std::string scaling_label;
    /// Taken from the candidate that attains thm4.
    double epsilon = 0.0, a = 0.0, b = 0.0, expected_xi = 0.0;
    double delta = 0.05;
    long long ell = 30;

    /// (1 - xi)^k (1 - eta) for the thm1_step winner.
    [[nodiscard]] double thm1_envelope(int k) const { return envelope(eta, xi, k); }
};

namespace detail {

template <class F>
BoundValue min_over(const std::vector<CandidateBounds>& cands, F value_of) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < cands.size(); ++i) {
        if (value_of(cands[i]) < value_of(cands[best])) best = i;
    }
    return BoundValue::of(value_of(cands[best]), cands[best].scaling);
}

inline std::size_t argmin_label(const std::vector<CandidateBounds>& cands, const std::string& label) {
    for (std::size_t i = 0; i < cands.size(); ++i) {
        if (cands[i].scaling == label) return i;
    }
    return 0;
}

}  // namespace detail

inline BoundReport minimize_over_S(const BoundContext& ctx, const std::vector<Scaling>& candidates,
                                   const BoundOptions& opt = {}) {
    if (candidates.empty()) {
        throw ConfigError("no scaling candidates");
    }
    BoundReport r;
    r.delta = opt.delta;
    r.ell = opt.ell;
    for (const auto& s : candidates) {
        r.candidates.push_back(evaluate_candidate(ctx, s, opt));
    }
    const auto& c = r.candidates;
    r.thm1_first = detail::min_over(c, [](const CandidateBounds& x) { return 1.0 - x.eta; });
    r.thm1_step = detail::min_over(c, [](const CandidateBounds& x) { return 1.0 - x.xi; });
    r.cor2_first = detail::min_over(c, [](const CandidateBounds& x) { return 1.0 - x.eta_hat; });
    r.cor2_step = detail::min_over(c, [](const CandidateBounds& x) { return 1.0 - x.xi_hat; });
    r.thm4 = detail::min_over(c, [](const CandidateBounds& x) { return x.thm4; });
    if (c.front().xi_tilde) {
        r.thm3_first = detail::min_over(c, [](const CandidateBounds& x) { return 1.0 - *x.eta_tilde; });
        r.thm3_step = detail::min_over(c, [](const CandidateBounds& x) { return 1.0 - *x.xi_tilde; });
    }
    if (ctx.scheme().kind() == SchemeKind::paving) {
        r.nd14 = BoundValue::of(bound_nd14(ctx.matrix(), ctx.scheme(), ctx.tol()));
    }
    r.gm21 = BoundValue::of(bound_gm21(ctx));

    const auto& w1 = c[detail::argmin_label(c, r.thm1_step.scaling)];
    r.eta = w1.eta;
    r.xi = w1.xi;
    r.scaling_label = w1.scaling;
    const auto& w4 = c[detail::argmin_label(c, r.thm4.scaling)];
    r.epsilon = w4.epsilon;
    r.a = w4.a;
    r.b = w4.b;
    r.expected_xi = w4.expected_xi;
    return r;
}

inline std::vector<Scaling> default_candidates(const Mat& a) {
    return {Scaling::identity(a.rows()), Scaling::inv_row_norm(a)};
}

inline BoundReport minimize_over_S(const Mat& a, const SetScheme& scheme, const BoundOptions& opt = {},
                                   RankTol tol = {}) {
    const BoundContext ctx(a, scheme, tol);
    return minimize_over_S(ctx, default_candidates(a), opt);
}

/// Sample covariance with 1/(n-1) normalization.
inline double sample_covariance(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw DimError("sample_covariance: length mismatch");
    }
    const std::size_t n = x.size();
    if (n < 2) {
        throw SampleError("sample covariance needs at least two samples");
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        acc += (x[i] - mx) * (y[i] - my);
    }
    return acc / static_cast<double>(n - 1);
}

/// Cov(xi_{tau^(k-1)}, ||x^(k) - x_ref||) across trials that reached step k.
inline double covariance_check(const std::vector<TrialTrace>& traces, const std::vector<double>& xi_per_set, int k) {
    if (k < 1) {
        throw ParamError("covariance_check: k must be >= 1");
    }
    std::vector<double> xs, ys;
    const auto kk = static_cast<std::size_t>(k);
    for (const auto& t : traces) {
        if (t.selected.size() >= kk && t.sq_errors.size() > kk) {
            xs.push_back(xi_per_set.at(t.selected[kk - 1]));
            ys.push_back(std::sqrt(t.sq_errors[kk]));
        }
    }
    return sample_covariance(xs, ys);
}

}  // namespace kaczmarz
