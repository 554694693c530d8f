#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "kaczmarz/error.hpp"
#include "kaczmarz/linalg.hpp"
#include "kaczmarz/rng.hpp"

namespace kaczmarz {

/// Half-open row range [begin, end), 0-based.
struct RowRange {
    int begin = 0;
    int end = 0;

    [[nodiscard]] int size() const { return end - begin; }
};

inline void check_range(const Mat& a, RowRange r) {
    if (r.begin < 0 || r.end > a.rows() || r.size() <= 0) {
        throw DimError("row range [" + std::to_string(r.begin + 1) + ", " + std::to_string(r.end) +
                       "] is empty or outside the matrix");
    }
}

/// i.i.d. standard normal entries, filled column by column.
inline Mat gaussian(Eigen::Index m, Eigen::Index n, std::uint64_t seed) {
    if (m < 1 || n < 1) {
        throw DimError("gaussian: dimensions must be positive");
    }
    Rng rng(seed);
    Mat a(m, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < m; ++i) {
            a(i, j) = rng.normal();
        }
    }
    return a;
}

inline Mat two_scale(const Mat& a, RowRange block, double alpha) {
    check_range(a, block);
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ParamError("alpha must lie in (0, 1)");
    }
    if (a.middleRows(block.begin, block.size()).norm() == 0.0) {
        throw DegenerateError("two_scale: block is zero");
    }
    Mat out = a;
    out.middleRows(block.begin, block.size()) *= alpha;
    return out;
}

/// Haar-distributed k x k orthogonal matrix.
inline Mat haar_orthogonal(Eigen::Index k, std::uint64_t seed) {
    if (k < 1) {
        throw DimError("haar_orthogonal: k must be positive");
    }
    const Mat g = gaussian(k, k, seed);
    Eigen::HouseholderQR<Mat> qr(g);
    Mat q = qr.householderQ();
    const Mat& r = qr.matrixQR();
    for (Eigen::Index i = 0; i < k; ++i) {
        if (r(i, i) < 0.0) q.col(i) *= -1.0;
    }
    return q;
}

/// First k rows of an n x n Haar orthogonal matrix, computed economically:
/// orthonormalize the columns of an n x k Gaussian with the same sign rule
/// and transpose.
inline Mat haar_rows(Eigen::Index k, Eigen::Index n, std::uint64_t seed) {
    if (k < 1 || k > n) {
        throw DimError("haar_rows: need 1 <= k <= n");
    }
    const Mat g = gaussian(n, k, seed);
    Eigen::HouseholderQR<Mat> qr(g);
    Mat q = qr.householderQ() * Mat::Identity(n, k);
    const Mat& r = qr.matrixQR();
    for (Eigen::Index i = 0; i < k; ++i) {
        if (r(i, i) < 0.0) q.col(i) *= -1.0;
    }
    return q.transpose();
}

struct IllConditioned {
    Mat matrix;
    Vec sigma;  // prescribed block singular values
};

/// Replaces the block rows with U Sigma V^T, sigma_i = beta sigma_min+(A) - (i-1) decrement.
inline IllConditioned ill_conditioned(const Mat& a, RowRange block, double beta, double decrement,
                                      std::uint64_t seed, RankTol tol = {}) {
    check_range(a, block);
    const Eigen::Index q = block.size();
    if (q > a.cols()) {
        throw DimError("ill_conditioned: block has more rows than the matrix has columns");
    }
    if (!(beta > 0.0)) throw ParamError("beta must be positive");
    if (!(decrement >= 0.0)) throw ParamError("decrement must be nonnegative");
    const ThinSvd f = svd_thin(a);
    const Eigen::Index rank = f.rank(tol);
    if (rank == 0) {
        throw DegenerateError("ill_conditioned: matrix is zero");
    }
    const double smin = f.sigma(rank - 1);
    Vec sigma(q);
    for (Eigen::Index i = 0; i < q; ++i) {
        sigma(i) = beta * smin - static_cast<double>(i) * decrement;
        if (!(sigma(i) > 0.0)) {
            throw SpectrumError("prescribed singular value " + std::to_string(i + 1) + " is not positive (" +
                                std::to_string(sigma(i)) + ")");
        }
    }
    const Mat u = haar_orthogonal(q, splitmix64(seed));
    const Mat vt = haar_rows(q, a.cols(), splitmix64(seed ^ 0x5bd1e995ULL));
    IllConditioned out{a, sigma};
    out.matrix.middleRows(block.begin, q) = u * sigma.asDiagonal() * vt;
    return out;
}

inline Mat take_columns(const Mat& a, Eigen::Index n) {
    if (n < 1 || n > a.cols()) {
        throw DimError("take_columns: asked for " + std::to_string(n) + " of " + std::to_string(a.cols()) +
                       " columns");
    }
    return a.leftCols(n);
}

/// Columns picked by a seeded partial Fisher-Yates shuffle, kept in original order.
inline Mat take_random_columns(const Mat& a, Eigen::Index n, std::uint64_t seed) {
    if (n < 1 || n > a.cols()) {
        throw DimError("take_random_columns: bad column count");
    }
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(a.cols()));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<Eigen::Index>(i);
    Rng rng(seed);
    for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
        const std::size_t j = i + rng.index(idx.size() - i);
        std::swap(idx[i], idx[j]);
    }
    std::sort(idx.begin(), idx.begin() + n);
    Mat out(a.rows(), n);
    for (Eigen::Index c = 0; c < n; ++c) out.col(c) = a.col(idx[static_cast<std::size_t>(c)]);
    return out;
}

struct ConsistentSystem {
    Vec x_star;
    Vec b;
};

inline ConsistentSystem make_consistent_rhs(const Mat& a, std::uint64_t seed) {
    Rng rng(seed);
    Vec x(a.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
    Vec b = a * x;
    return {std::move(x), std::move(b)};
}

}  // namespace kaczmarz
