#pragma once

// Randomized numeric checks of the inequalities the bounds rest on. Each
// suite is seeded and returns the worst observed margin so failures can be
// reported with context.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "kaczmarz/bounds.hpp"
#include "kaczmarz/instances.hpp"
#include "kaczmarz/linalg.hpp"
#include "kaczmarz/rng.hpp"
#include "kaczmarz/sampling.hpp"

namespace kaczmarz::lemmas {

struct CheckResult {
    std::string name;
    bool passed = true;
    long cases = 0;
    /// Smallest margin seen; negative means a violation.
    double worst_margin = std::numeric_limits<double>::infinity();
    std::string detail;

    void record(double margin, const std::string& where) {
        ++cases;
        if (margin < worst_margin) {
            worst_margin = margin;
            if (margin < 0.0) {
                passed = false;
                detail = where;
            }
        }
    }
};

namespace detail {

inline double uniform_in(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

/// Gaussian matrix of the given rank (rank <= min(m, n)), unit spectral norm.
inline Mat random_matrix(Eigen::Index m, Eigen::Index n, Eigen::Index rank, Rng& rng) {
    const Mat l = gaussian(m, rank, rng.bits());
    const Mat r = gaussian(rank, n, rng.bits());
    Mat a = l * r;
    return a / std::sqrt(spectral_norm_sq(a));
}

inline Vec random_vector(Eigen::Index n, Rng& rng) {
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.normal();
    return v;
}

inline Vec random_scaling(Eigen::Index m, Rng& rng, double log10_span) {
    Vec s(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double mag = std::pow(10.0, uniform_in(rng, -log10_span, log10_span));
        s(i) = rng.uniform() < 0.5 ? -mag : mag;
    }
    return s;
}

inline void append_tuples(int m, int q, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
    if (static_cast<int>(cur.size()) == q) {
        out.push_back(cur);
        return;
    }
    for (int j = 0; j < m; ++j) {
        cur.push_back(j);
        append_tuples(m, q, cur, out);
        cur.pop_back();
    }
}

inline bool distinct(const std::vector<int>& t) { return effective_set(t).size() == t.size(); }

}  // namespace detail

/// Random joint table over ordered q-tuples of [0, m). With `full_sets`,
/// only tuples with q distinct indices are used (requires q <= m).
inline JointTable random_joint_table(int m, int q, bool full_sets, Rng& rng) {
    std::vector<std::vector<int>> all;
    std::vector<int> cur;
    detail::append_tuples(m, q, cur, all);
    if (full_sets) {
        std::erase_if(all, [](const std::vector<int>& t) { return !detail::distinct(t); });
    }
    std::vector<double> w(all.size(), 0.0);
    for (double& x : w) {
        if (rng.uniform() < 0.35) x = rng.uniform() + 1e-3;
    }
    // make sure every row is reachable
    for (int j = 0; j < m; ++j) {
        bool covered = false;
        for (std::size_t t = 0; t < all.size() && !covered; ++t) {
            covered = w[t] > 0.0 && std::find(all[t].begin(), all[t].end(), j) != all[t].end();
        }
        if (covered) continue;
        std::vector<std::size_t> holders;
        for (std::size_t t = 0; t < all.size(); ++t) {
            if (std::find(all[t].begin(), all[t].end(), j) != all[t].end()) holders.push_back(t);
        }
        w[holders[rng.index(holders.size())]] = rng.uniform() + 1e-3;
    }
    double total = 0.0;
    for (double x : w) total += x;
    std::vector<TupleProb> entries;
    for (std::size_t t = 0; t < all.size(); ++t) {
        if (w[t] > 0.0) entries.push_back({all[t], w[t] / total});
    }
    return {m, q, std::move(entries)};
}

/// ||M^+ u||^2 >= ||u||^2 / ||M||^2 for u in range(M).
inline CheckResult lemma_pinv_lower(std::uint64_t seed, int cases = 200) {
    CheckResult r{"pseudoinverse lower bound"};
    Rng rng(seed);
    for (int c = 0; c < cases; ++c) {
        const auto m = static_cast<Eigen::Index>(1 + rng.index(8));
        const auto n = static_cast<Eigen::Index>(1 + rng.index(8));
        const auto rank = static_cast<Eigen::Index>(1 + rng.index(static_cast<std::size_t>(std::min(m, n))));
        const Mat a = detail::random_matrix(m, n, rank, rng);
        const Vec u = a * detail::random_vector(n, rng);
        const double lhs = least_norm_solve(a, u).squaredNorm();
        const double rhs = u.squaredNorm() / spectral_norm_sq(a);
        r.record(lhs - rhs + 1e-10, "case " + std::to_string(c));
    }
    return r;
}

/// M^+ y = (S M)^+ (S y) for y in range(M) and nonsingular diagonal S.
inline CheckResult lemma_scaled_pinv(std::uint64_t seed, int cases = 200) {
    CheckResult r{"scaled pseudoinverse identity"};
    Rng rng(seed);
    for (int c = 0; c < cases; ++c) {
        const auto m = static_cast<Eigen::Index>(1 + rng.index(8));
        const auto n = static_cast<Eigen::Index>(1 + rng.index(8));
        const auto rank = static_cast<Eigen::Index>(1 + rng.index(static_cast<std::size_t>(std::min(m, n))));
        const Mat a = detail::random_matrix(m, n, rank, rng);
        const Vec y = a * detail::random_vector(n, rng);
        const Vec s = detail::random_scaling(m, rng, 1.0);
        const Vec plain = least_norm_solve(a, y);
        const Vec scaled = least_norm_solve(s.asDiagonal() * a, s.cwiseProduct(y));
        r.record(1e-8 * plain.norm() - (plain - scaled).norm(), "case " + std::to_string(c));
    }
    return r;
}

/// ||M u||^2 >= sigma_min+(M)^2 ||u||^2 for u in range(M^T).
inline CheckResult lemma_row_space_lower(std::uint64_t seed, int cases = 200) {
    CheckResult r{"row-space lower bound"};
    Rng rng(seed);
    for (int c = 0; c < cases; ++c) {
        const auto m = static_cast<Eigen::Index>(1 + rng.index(8));
        const auto n = static_cast<Eigen::Index>(1 + rng.index(8));
        const auto rank = static_cast<Eigen::Index>(1 + rng.index(static_cast<std::size_t>(std::min(m, n))));
        const Mat a = detail::random_matrix(m, n, rank, rng);
        const Vec u = a.transpose() * detail::random_vector(m, rng);
        const ThinSvd f = svd_thin(a);
        const double smin = f.sigma(f.rank(RankTol{}) - 1);
        r.record((a * u).squaredNorm() - smin * smin * u.squaredNorm() + 1e-10, "case " + std::to_string(c));
    }
    return r;
}

/// sum_{E containing j} Pr(E) <= sum_i p_ij <= sum_{E containing j} (q - |E| + 1) Pr(E),
/// with equality on both sides when every supported set has size q.
inline CheckResult lemma_coverage_sandwich(std::uint64_t seed, int tables = 200) {
    CheckResult r{"marginal coverage sandwich"};
    Rng rng(seed);
    for (int t = 0; t < tables; ++t) {
        const int m = 2 + static_cast<int>(rng.index(4));
        const int q = 1 + static_cast<int>(rng.index(3));
        const bool full = q <= m && t % 4 == 0;
        const JointTable table = random_joint_table(m, q, full, rng);
        const Marginals p = marginals(table);
        const SetScheme sets = effective_scheme(table);
        bool all_full = true;
        for (const auto& s : sets.sets()) all_full = all_full && static_cast<int>(s.rows.size()) == q;
        for (int j = 0; j < m; ++j) {
            double lower = 0.0, upper = 0.0;
            for (const auto& s : sets.sets()) {
                if (std::binary_search(s.rows.begin(), s.rows.end(), j)) {
                    lower += s.prob;
                    upper += (q - static_cast<int>(s.rows.size()) + 1) * s.prob;
                }
            }
            const double mid = p.col(j).sum();
            const std::string where = "table " + std::to_string(t) + " row " + std::to_string(j + 1);
            r.record(std::min(mid - lower, upper - mid) + 1e-12, where);
            if (all_full) {
                r.record(1e-12 - std::max(std::abs(mid - lower), std::abs(upper - mid)), where + " (equality)");
            }
        }
    }
    return r;
}

/// Monte Carlo: E||A_tau^+ r_tau||^2 >= sum_i ||B_{S;i}^{-1/2} P_i^{1/2} S r||^2 for
/// consistent residuals r = A e, at three standard errors.
inline CheckResult lemma_expected_step(std::uint64_t seed, int tables = 20, int draws = 4000) {
    CheckResult r{"expected step lower bound"};
    Rng rng(seed);
    for (int t = 0; t < tables; ++t) {
        const int m = 2 + static_cast<int>(rng.index(4));
        const int q = 1 + static_cast<int>(rng.index(3));
        const auto n = static_cast<Eigen::Index>(2 + rng.index(5));
        const JointTable table = random_joint_table(m, q, false, rng);
        const Mat a = gaussian(m, n, rng.bits());
        const Vec res = a * detail::random_vector(n, rng);
        const Scaling s = t % 2 == 0 ? Scaling::identity(m) : Scaling::custom(detail::random_scaling(m, rng, 1.0));

        const auto beta = beta_matrices(a, table, s);
        const Marginals p = marginals(table);
        double rhs = 0.0;
        for (int i = 0; i < q; ++i) {
            for (int j = 0; j < m; ++j) {
                const double sr = s.diag(j) * res(j);
                rhs += p(i, j) * sr * sr / beta[static_cast<std::size_t>(i)](j);
            }
        }

        std::vector<double> cumulative;
        double acc = 0.0;
        for (const auto& e : table.entries()) cumulative.push_back(acc += e.prob);
        std::vector<double> step(table.entries().size());
        for (std::size_t k = 0; k < step.size(); ++k) {
            const auto& tuple = table.entries()[k].tuple;
            step[k] = least_norm_solve(select_rows(a, tuple), select_entries(res, tuple)).squaredNorm();
        }
        double sum = 0.0, sum_sq = 0.0;
        for (int d = 0; d < draws; ++d) {
            const double u = rng.uniform() * acc;
            auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
            if (it == cumulative.end()) --it;
            const double v = step[static_cast<std::size_t>(it - cumulative.begin())];
            sum += v;
            sum_sq += v * v;
        }
        const double mean = sum / draws;
        const double var = std::max(0.0, (sum_sq - draws * mean * mean) / (draws - 1));
        const double se = std::sqrt(var / draws);
        r.record(mean + 3.0 * se - rhs + 1e-12 * std::max(1.0, rhs), "table " + std::to_string(t));
    }
    return r;
}

/// Nonnegative sample covariance implies mean(xy) >= mean(x) mean(y).
inline CheckResult lemma_covariance_product(std::uint64_t seed, int pairs = 100) {
    CheckResult r{"covariance product inequality"};
    Rng rng(seed);
    for (int c = 0; c < pairs; ++c) {
        const int n = 2 + static_cast<int>(rng.index(50));
        const double coupling = detail::uniform_in(rng, -0.5, 1.0);
        std::vector<double> x(static_cast<std::size_t>(n)), y(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            x[static_cast<std::size_t>(i)] = rng.uniform();
            y[static_cast<std::size_t>(i)] = coupling * x[static_cast<std::size_t>(i)] + 0.3 * rng.uniform();
        }
        double mx = 0.0, my = 0.0, mxy = 0.0;
        for (int i = 0; i < n; ++i) {
            mx += x[static_cast<std::size_t>(i)];
            my += y[static_cast<std::size_t>(i)];
            mxy += x[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i)];
        }
        mx /= n;
        my /= n;
        mxy /= n;
        const double cov = sample_covariance(x, y);
        // mean(xy) - mean(x) mean(y) = (n - 1) / n * cov
        const std::string where = "pair " + std::to_string(c);
        r.record(1e-12 - std::abs((mxy - mx * my) - cov * (n - 1) / n), where + " (identity)");
        if (cov >= 0.0) r.record(mxy - mx * my + 1e-12, where);
    }
    return r;
}

struct CoverageResult {
    long repetitions = 0;
    long deviations = 0;
    [[nodiscard]] double frequency() const { return static_cast<double>(deviations) / static_cast<double>(repetitions); }
};

/// Frequency with which the mean of ell uniform[0,1] samples misses 1/2 by eps or more.
inline CoverageResult hoeffding_coverage(long ell, double eps, long repetitions, std::uint64_t seed) {
    Rng rng(seed);
    CoverageResult out;
    out.repetitions = repetitions;
    for (long r = 0; r < repetitions; ++r) {
        double sum = 0.0;
        for (long i = 0; i < ell; ++i) sum += rng.uniform();
        if (std::abs(sum / static_cast<double>(ell) - 0.5) >= eps) ++out.deviations;
    }
    return out;
}

inline std::vector<CheckResult> run_all(std::uint64_t seed) {
    return {lemma_pinv_lower(derive_seed(seed, 1, 0)),         lemma_scaled_pinv(derive_seed(seed, 2, 0)),
            lemma_row_space_lower(derive_seed(seed, 3, 0)),    lemma_coverage_sandwich(derive_seed(seed, 4, 0)),
            lemma_expected_step(derive_seed(seed, 5, 0)),      lemma_covariance_product(derive_seed(seed, 6, 0))};
}

}  // namespace kaczmarz::lemmas
