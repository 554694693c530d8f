#pragma once

// Dense kernels shared by the solver and the bound calculator. Every rank
// decision (pseudoinverse, bases, positive eigenvalues) goes through RankTol
// so subspace dimensions stay mutually consistent.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "kaczmarz/error.hpp"

namespace kaczmarz {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Sorted, distinct, 0-based row indices.
using IndexSet = std::vector<int>;

/// Relative rank threshold: a singular value or eigenvalue counts as positive
/// iff it exceeds `relative` times the largest one.
struct RankTol {
    double relative = 1e-10;

    constexpr RankTol() = default;
    explicit RankTol(double rel) : relative(rel) {
        if (!(rel > 0.0 && rel < 1.0)) {
            throw ParamError("rank tolerance must lie in (0, 1), got " + std::to_string(rel));
        }
    }

    [[nodiscard]] double threshold(double largest) const { return relative * largest; }
};

inline void require_finite(const Eigen::Ref<const Mat>& m, const char* what) {
    if (!m.allFinite()) {
        throw InvalidMatrix(std::string(what) + " has non-finite entries");
    }
}

inline Mat select_rows(const Mat& a, std::span<const int> rows) {
    Mat out(static_cast<Eigen::Index>(rows.size()), a.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = a.row(rows[i]);
    }
    return out;
}

inline Vec select_entries(const Vec& v, std::span<const int> idx) {
    Vec out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
        out(static_cast<Eigen::Index>(i)) = v(idx[i]);
    }
    return out;
}

struct ThinSvd {
    Mat U;
    Vec sigma;  // nonincreasing
    Mat V;

    /// Number of singular values above the tolerance threshold.
    [[nodiscard]] Eigen::Index rank(RankTol tol) const {
        if (sigma.size() == 0 || sigma(0) <= 0.0) {
            return 0;
        }
        const double cut = tol.threshold(sigma(0));
        Eigen::Index r = 0;
        while (r < sigma.size() && sigma(r) > cut) {
            ++r;
        }
        return r;
    }
};

inline ThinSvd svd_thin(const Mat& m) {
    require_finite(m, "svd input");
    Eigen::BDCSVD<Mat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    return {svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

/// Applies the tol-filtered pseudoinverse V_r diag(1/sigma_r) U_r^T to y.
inline Vec apply_pseudoinverse(const ThinSvd& f, Eigen::Index rank, const Vec& y) {
    const Vec coeffs = (f.U.leftCols(rank).transpose() * y).cwiseQuotient(f.sigma.head(rank));
    return f.V.leftCols(rank) * coeffs;
}

inline Vec least_norm_solve(const Mat& m, const Vec& y, RankTol tol = {}) {
    if (y.size() != m.rows()) {
        throw DimError("least_norm_solve: rhs has " + std::to_string(y.size()) +
                       " entries, matrix has " + std::to_string(m.rows()) + " rows");
    }
    const ThinSvd f = svd_thin(m);
    return apply_pseudoinverse(f, f.rank(tol), y);
}

/// Eigenvalues of a symmetric matrix, ascending. Input is symmetrized first.
inline Vec symmetric_eigenvalues(const Mat& g) {
    require_finite(g, "symmetric matrix");
    if (g.rows() != g.cols()) {
        throw InvalidMatrix("eigenvalue input is not square");
    }
    if (g.size() == 0) {
        return Vec();
    }
    const double scale = std::max(g.norm(), 1e-300);
    if ((g - g.transpose()).norm() > 1e-12 * scale) {
        throw InvalidMatrix("eigenvalue input is not symmetric");
    }
    const Mat sym = 0.5 * (g + g.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

struct PositiveSpectrum {
    double min_positive = 0.0;  // 0 when no eigenvalue clears the threshold
    double max = 0.0;
};

inline PositiveSpectrum positive_spectrum(const Mat& g, RankTol tol = {}) {
    const Vec ev = symmetric_eigenvalues(g);
    PositiveSpectrum out;
    if (ev.size() == 0) {
        return out;
    }
    out.max = ev(ev.size() - 1);
    if (out.max <= 0.0) {
        return out;
    }
    const double cut = tol.threshold(out.max);
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev(i) > cut) {
            out.min_positive = ev(i);
            break;
        }
    }
    return out;
}

inline double smallest_positive_eig(const Mat& g, RankTol tol = {}) {
    return positive_spectrum(g, tol).min_positive;
}

/// Squared spectral norm, computed from the Gram matrix on the short side.
inline double spectral_norm_sq(const Mat& m) {
    if (m.size() == 0) {
        return 0.0;
    }
    const Mat gram = m.rows() <= m.cols() ? Mat(m * m.transpose()) : Mat(m.transpose() * m);
    Eigen::SelfAdjointEigenSolver<Mat> es(gram, Eigen::EigenvaluesOnly);
    return std::max(es.eigenvalues().maxCoeff(), 0.0);
}

/// Orthonormal basis of range(M); column count is the tol-rank of M.
inline Mat range_basis(const Mat& m, RankTol tol = {}) {
    const ThinSvd f = svd_thin(m);
    return f.U.leftCols(f.rank(tol));
}

/// Orthonormal basis of span(Qfull) ∩ span(Qsub)^⊥.
///
/// Orthonormalizing (I - Qsub Qsub^T) Qfull is done in the coordinates of
/// Qfull: with C = Qfull^T Qsub the projected matrix equals Qfull (I - C C^T),
/// whose range is Qfull times the orthogonal complement of range(C). That
/// complement is read off a full Householder factor of C.
inline Mat complement_basis(const Mat& q_full, const Mat& q_sub, RankTol tol = {}) {
    if (q_full.rows() != q_sub.rows()) {
        throw DimError("complement_basis: bases live in different spaces");
    }
    const Eigen::Index k = q_full.cols();
    const Eigen::Index s = q_sub.cols();
    if (s == 0) {
        return q_full;
    }
    if (s > k) {
        throw SubspaceError("complement_basis: subspace larger than the enclosing space");
    }
    const Mat c = q_full.transpose() * q_sub;
    const double leak = (q_sub - q_full * c).norm();
    if (leak > std::sqrt(tol.relative) * std::sqrt(static_cast<double>(s))) {
        throw SubspaceError("complement_basis: subspace is not contained in the enclosing span (residual " +
                            std::to_string(leak) + ")");
    }
    Eigen::HouseholderQR<Mat> qr(c);
    const Mat h = qr.householderQ();
    return q_full * h.rightCols(k - s);
}

}  // namespace kaczmarz
