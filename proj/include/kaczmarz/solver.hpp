#pragma once

// Randomized Kaczmarz (single row) and batch-sampling block Kaczmarz
// iterations. Each block step reads only the rows of the drawn set: the full
// residual b - Ax is never formed inside the loop.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "kaczmarz/error.hpp"
#include "kaczmarz/linalg.hpp"
#include "kaczmarz/rng.hpp"
#include "kaczmarz/sampling.hpp"

namespace kaczmarz {

struct SolveConfig {
    int max_iter = 5000;
    double rse_tol = 1e-8;
    bool record_errors = true;
    bool record_sets = true;
    /// Factorize every block of the scheme once up front instead of per step.
    bool cache_factorizations = false;
    RankTol tol{};

    void validate() const {
        if (max_iter < 1) throw ConfigError("max_iter must be >= 1");
        if (!(rse_tol > 0.0)) throw ConfigError("rse_tol must be positive");
    }
};

struct TrialTrace {
    /// ||x^(k) - x_ref||^2 for k = 0..iters (only endpoints when not recording).
    std::vector<double> sq_errors;
    std::vector<double> rse;
    int iters = 0;
    /// Index into the scheme's set list of the set drawn at each step.
    std::vector<std::size_t> selected;
    bool converged = false;
    /// Some block residual was not annihilated by its projection.
    bool inconsistent = false;

    [[nodiscard]] std::vector<double> step_ratios() const {
        std::vector<double> out;
        for (std::size_t k = 1; k < sq_errors.size(); ++k) {
            out.push_back(sq_errors[k - 1] > 0.0 ? sq_errors[k] / sq_errors[k - 1] : 0.0);
        }
        return out;
    }
};

/// Projection of x onto the hyperplane of row j.
inline Vec rk_step(const Mat& a, const Vec& b, const Vec& x, int j) {
    if (j < 0 || j >= a.rows()) {
        throw DimError("rk_step: row index out of range");
    }
    const double norm_sq = a.row(j).squaredNorm();
    if (!(norm_sq > 0.0)) {
        throw ZeroRowError("rk_step: row " + std::to_string(j + 1) + " is zero");
    }
    const double residual = b(j) - a.row(j).dot(x);
    return x + (residual / norm_sq) * a.row(j).transpose();
}

/// Projection of x onto {z : A_E z = b_E}.
inline Vec rbsk_step(const Mat& a, const Vec& b, const Vec& x, const IndexSet& rows, RankTol tol = {}) {
    if (rows.empty()) {
        throw DimError("rbsk_step: empty row set");
    }
    const Mat block = select_rows(a, rows);
    const ThinSvd f = svd_thin(block);
    const Eigen::Index r = f.rank(tol);
    if (r == 0) {
        throw ZeroBlockError("rbsk_step: selected block is zero");
    }
    const Vec residual = select_entries(b, rows) - block * x;
    return x + apply_pseudoinverse(f, r, residual);
}

/// Block pseudoinverse application for every set of a scheme, optionally
/// with all factorizations computed once.
class BlockProjector {
public:
    BlockProjector(const Mat& a, const SetScheme& scheme, RankTol tol, bool cache)
        : a_(&a), scheme_(&scheme), tol_(tol) {
        if (a.rows() != scheme.m()) {
            throw DimError("scheme and matrix disagree on m");
        }
        if (cache) {
            cache_.reserve(scheme.size());
            for (const auto& s : scheme.sets()) {
                cache_.push_back(factor(s.rows));
            }
        }
    }

    struct Step {
        Vec correction;
        /// Norm of the part of the block residual outside range(A_E).
        double leftover = 0.0;
        /// Scale against which `leftover` is judged.
        double scale = 0.0;
    };

    [[nodiscard]] Step correction(std::size_t set, const Vec& x, const Vec& b) const {
        if (!cache_.empty()) {
            return apply(cache_[set], x, b);
        }
        return apply(factor(scheme_->sets()[set].rows), x, b);
    }

    [[nodiscard]] const SetScheme& scheme() const { return *scheme_; }
    [[nodiscard]] const Mat& matrix() const { return *a_; }

private:
    struct Factor {
        IndexSet rows;
        Mat block;
        Mat u;
        Vec inv_sigma;
        Mat v;
        double frob = 0.0;
    };

    [[nodiscard]] Factor factor(const IndexSet& rows) const {
        Factor f;
        f.rows = rows;
        f.block = select_rows(*a_, rows);
        const ThinSvd svd = svd_thin(f.block);
        const Eigen::Index r = svd.rank(tol_);
        if (r == 0) {
            throw ZeroBlockError("block of rows starting at " + std::to_string(rows.front() + 1) + " is zero");
        }
        f.u = svd.U.leftCols(r);
        f.inv_sigma = svd.sigma.head(r).cwiseInverse();
        f.v = svd.V.leftCols(r);
        f.frob = f.block.norm();
        return f;
    }

    static Step apply(const Factor& f, const Vec& x, const Vec& b) {
        const Vec residual = select_entries(b, f.rows) - f.block * x;
        const Vec coords = f.u.transpose() * residual;
        Step out;
        out.correction = f.v * coords.cwiseProduct(f.inv_sigma);
        out.leftover = (residual - f.u * coords).norm();
        out.scale = select_entries(b, f.rows).norm() + f.frob * x.norm();
        return out;
    }

    const Mat* a_;
    const SetScheme* scheme_;
    RankTol tol_;
    std::vector<Factor> cache_;
};

/// Least-norm solution A^+ b of a consistent system, given any solution:
/// the orthogonal projection of x_star onto range(A^T).
inline Vec least_norm_reference(const Mat& a, const Vec& x_star, RankTol tol = {}) {
    if (x_star.size() != a.cols()) {
        throw DimError("least_norm_reference: solution has wrong length");
    }
    const Mat q = range_basis(a.transpose(), tol);
    return q * (q.transpose() * x_star);
}

inline constexpr double kLeftoverTol = 1e-8;
inline constexpr int kInconsistentStrikes = 3;

/// One seeded run from x^(0) = 0 with a precomputed projector and reference.
inline TrialTrace run_trial(const BlockProjector& projector, const SetSampler& sampler, const Vec& b,
                            const Vec& x_ref, const SolveConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const Mat& a = projector.matrix();
    if (b.size() != a.rows() || x_ref.size() != a.cols()) {
        throw DimError("run_trial: dimension mismatch");
    }
    Rng rng(seed);
    TrialTrace trace;
    Vec x = Vec::Zero(a.cols());
    const double e0 = x_ref.squaredNorm();
    double err = e0;
    double rse = e0 > 0.0 ? 1.0 : 0.0;
    trace.sq_errors.push_back(err);
    trace.rse.push_back(rse);
    int strikes = 0;
    while (trace.iters < cfg.max_iter && !(rse < cfg.rse_tol)) {
        const std::size_t set = sampler.draw_index(rng);
        const auto step = projector.correction(set, x, b);
        x += step.correction;
        if (step.leftover > kLeftoverTol * step.scale && ++strikes >= kInconsistentStrikes) {
            trace.inconsistent = true;
        }
        err = (x - x_ref).squaredNorm();
        rse = err / e0;
        ++trace.iters;
        if (cfg.record_sets) {
            trace.selected.push_back(set);
        }
        if (cfg.record_errors) {
            trace.sq_errors.push_back(err);
            trace.rse.push_back(rse);
        }
    }
    if (!cfg.record_errors && trace.iters > 0) {
        trace.sq_errors.push_back(err);
        trace.rse.push_back(rse);
    }
    trace.converged = rse < cfg.rse_tol;
    return trace;
}

/// Convenience overload: computes the least-norm reference from x_star and
/// factorizes blocks according to cfg.
inline TrialTrace run_trial(const Mat& a, const Vec& b, const SetScheme& scheme, const SolveConfig& cfg,
                            std::uint64_t seed, const Vec& x_star) {
    const BlockProjector projector(a, scheme, cfg.tol, cfg.cache_factorizations);
    const SetSampler sampler(scheme);
    return run_trial(projector, sampler, b, least_norm_reference(a, x_star, cfg.tol), cfg, seed);
}

/// Per-trial geometric-mean contraction (e_K / e_0)^(1/K), where K is the
/// last iteration whose squared error stays above 100 machine epsilons of e_0.
inline double empirical_rate(const TrialTrace& trace) {
    const auto& e = trace.sq_errors;
    if (e.size() < 2) {
        throw DegenerateError("empirical_rate: need at least two recorded errors");
    }
    if (!(e.front() > 0.0)) {
        throw DegenerateError("empirical_rate: initial error is zero");
    }
    const double floor = 100.0 * std::numeric_limits<double>::epsilon() * e.front();
    std::size_t last = 0;
    for (std::size_t k = 1; k < e.size(); ++k) {
        if (e[k] > floor) {
            last = k;
        }
    }
    if (last == 0) {
        // the very first step already reached the floor
        return e[1] / e[0];
    }
    return std::pow(e[last] / e[0], 1.0 / static_cast<double>(last));
}

/// Pooled one-step contraction of the mean squared error over an ensemble of
/// trials: sum_j sum_k e_{k+1}^(j) / sum_j sum_k e_k^(j) over the steps taken.
/// This is the sample counterpart of E||e_{k+1}||^2 / E||e_k||^2.
inline double pooled_contraction(const std::vector<TrialTrace>& traces) {
    double num = 0.0;
    double den = 0.0;
    for (const auto& t : traces) {
        for (std::size_t k = 1; k < t.sq_errors.size(); ++k) {
            num += t.sq_errors[k];
            den += t.sq_errors[k - 1];
        }
    }
    if (!(den > 0.0)) {
        throw DegenerateError("pooled_contraction: no steps with positive error");
    }
    return num / den;
}

}  // namespace kaczmarz
