#pragma once

// Batch-sampling distributions.
//
// A JointTable is the full distribution over ordered q-tuples of row indices
// (repeats allowed). A SetScheme only describes the induced distribution over
// effective sets, which is all the iteration itself needs. Indices are 0-based
// in memory and 1-based in every serialized form.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kaczmarz/error.hpp"
#include "kaczmarz/linalg.hpp"
#include "kaczmarz/rng.hpp"

namespace kaczmarz {

/// Largest support (tuples or sets) that may be enumerated.
inline constexpr std::size_t kEnumerationCap = 10'000;

inline constexpr double kProbabilitySumTol = 1e-12;

namespace detail {

inline void check_probability_sum(double total, const char* what) {
    if (std::abs(total - 1.0) > kProbabilitySumTol) {
        throw ParamError(std::string(what) + ": probabilities sum to " + std::to_string(total) + ", not 1");
    }
}

inline void check_coverage(std::span<const double> coverage, const char* what) {
    for (std::size_t j = 0; j < coverage.size(); ++j) {
        if (!(coverage[j] > 0.0)) {
            throw CoverageError(std::string(what) + ": row " + std::to_string(j + 1) +
                                " is never sampled with positive probability");
        }
    }
}

}  // namespace detail

/// Sorted distinct indices of a tuple.
inline IndexSet effective_set(std::span<const int> tuple) {
    IndexSet out(tuple.begin(), tuple.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

struct TupleProb {
    std::vector<int> tuple;
    double prob = 0.0;
};

/// Distribution over ordered q-tuples of row indices.
class JointTable {
public:
    JointTable(int m, int q, std::vector<TupleProb> entries) : m_(m), q_(q), entries_(std::move(entries)) {
        if (m < 1 || q < 1) {
            throw ParamError("joint table needs m >= 1 and q >= 1");
        }
        if (entries_.size() > kEnumerationCap) {
            throw SupportTooLarge("joint table has " + std::to_string(entries_.size()) +
                                  " tuples, cap is " + std::to_string(kEnumerationCap));
        }
        std::set<std::vector<int>> seen;
        double total = 0.0;
        std::vector<double> coverage(static_cast<std::size_t>(m), 0.0);
        for (const auto& e : entries_) {
            if (static_cast<int>(e.tuple.size()) != q) {
                throw ParamError("joint table tuple has wrong length");
            }
            if (!(e.prob >= 0.0)) {
                throw ParamError("joint table probability is negative");
            }
            for (int j : e.tuple) {
                if (j < 0 || j >= m) {
                    throw ParamError("joint table index out of range");
                }
                coverage[static_cast<std::size_t>(j)] += e.prob;
            }
            if (!seen.insert(e.tuple).second) {
                throw ParamError("joint table lists a tuple twice");
            }
            total += e.prob;
        }
        detail::check_probability_sum(total, "joint table");
        detail::check_coverage(coverage, "joint table");
    }

    [[nodiscard]] int m() const { return m_; }
    [[nodiscard]] int q() const { return q_; }
    [[nodiscard]] const std::vector<TupleProb>& entries() const { return entries_; }

private:
    int m_;
    int q_;
    std::vector<TupleProb> entries_;
};

/// q x m matrix of coordinate marginals p_{ij} = Pr(tau_i = j).
using Marginals = Mat;

inline Marginals marginals(const JointTable& table) {
    Marginals p = Mat::Zero(table.q(), table.m());
    for (const auto& e : table.entries()) {
        for (int i = 0; i < table.q(); ++i) {
            p(i, e.tuple[static_cast<std::size_t>(i)]) += e.prob;
        }
    }
    return p;
}

/// Probability that a draw has effective set `set` (0 when unreachable).
inline double effset_prob(const JointTable& table, const IndexSet& set) {
    double total = 0.0;
    for (const auto& e : table.entries()) {
        if (effective_set(e.tuple) == set) {
            total += e.prob;
        }
    }
    return total;
}

enum class SchemeKind { paving, uniform, nonunique, custom };

inline const char* to_string(SchemeKind k) {
    switch (k) {
        case SchemeKind::paving: return "paving";
        case SchemeKind::uniform: return "uniform";
        case SchemeKind::nonunique: return "nonunique";
        case SchemeKind::custom: return "custom";
    }
    return "custom";
}

inline SchemeKind scheme_kind_from_string(const std::string& s) {
    if (s == "paving") return SchemeKind::paving;
    if (s == "uniform") return SchemeKind::uniform;
    if (s == "nonunique") return SchemeKind::nonunique;
    if (s == "custom") return SchemeKind::custom;
    throw SchemeKindError("unknown scheme kind '" + s + "'");
}

struct WeightedSet {
    IndexSet rows;
    double prob = 0.0;
};

/// Distribution over effective sets.
class SetScheme {
public:
    SetScheme(int m, int q, SchemeKind kind, std::vector<WeightedSet> sets)
        : m_(m), q_(q), kind_(kind), sets_(std::move(sets)) {
        validate();
    }

    [[nodiscard]] int m() const { return m_; }
    [[nodiscard]] int q() const { return q_; }
    [[nodiscard]] SchemeKind kind() const { return kind_; }
    [[nodiscard]] const std::vector<WeightedSet>& sets() const { return sets_; }
    [[nodiscard]] std::size_t size() const { return sets_.size(); }

    /// Indices of the positive-probability sets.
    [[nodiscard]] std::vector<std::size_t> support() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < sets_.size(); ++i) {
            if (sets_[i].prob > 0.0) {
                out.push_back(i);
            }
        }
        return out;
    }

    /// Same sets, new probabilities (renormalization is the caller's job).
    [[nodiscard]] SetScheme with_probs(std::span<const double> probs, SchemeKind kind) const {
        if (probs.size() != sets_.size()) {
            throw DimError("with_probs: wrong number of probabilities");
        }
        std::vector<WeightedSet> sets = sets_;
        for (std::size_t i = 0; i < sets.size(); ++i) {
            sets[i].prob = probs[i];
        }
        return {m_, q_, kind, std::move(sets)};
    }

private:
    void validate() const {
        if (m_ < 1 || q_ < 1) {
            throw ParamError("set scheme needs m >= 1 and q >= 1");
        }
        if (sets_.empty()) {
            throw ParamError("set scheme is empty");
        }
        std::set<IndexSet> seen;
        std::vector<double> coverage(static_cast<std::size_t>(m_), 0.0);
        std::vector<int> hits(static_cast<std::size_t>(m_), 0);
        double total = 0.0;
        for (const auto& s : sets_) {
            if (s.rows.empty() || static_cast<int>(s.rows.size()) > q_) {
                throw ParamError("set scheme: set size must lie in [1, q]");
            }
            if (!std::is_sorted(s.rows.begin(), s.rows.end()) ||
                std::adjacent_find(s.rows.begin(), s.rows.end()) != s.rows.end()) {
                throw ParamError("set scheme: set indices must be sorted and distinct");
            }
            if (s.rows.front() < 0 || s.rows.back() >= m_) {
                throw ParamError("set scheme: index out of range");
            }
            if (!(s.prob >= 0.0)) {
                throw ParamError("set scheme: negative probability");
            }
            if (!seen.insert(s.rows).second) {
                throw ParamError("set scheme lists a set twice");
            }
            for (int j : s.rows) {
                coverage[static_cast<std::size_t>(j)] += s.prob;
                ++hits[static_cast<std::size_t>(j)];
            }
            total += s.prob;
        }
        detail::check_probability_sum(total, "set scheme");
        if (kind_ == SchemeKind::paving &&
            std::any_of(hits.begin(), hits.end(), [](int h) { return h != 1; })) {
            throw PartitionError("paving scheme sets do not partition the rows");
        }
        detail::check_coverage(coverage, "set scheme");
    }

    int m_;
    int q_;
    SchemeKind kind_;
    std::vector<WeightedSet> sets_;
};

/// Distribution over distinct effective sets induced by a joint table.
inline SetScheme effective_scheme(const JointTable& table) {
    std::map<IndexSet, double> acc;
    for (const auto& e : table.entries()) {
        acc[effective_set(e.tuple)] += e.prob;
    }
    std::vector<WeightedSet> sets;
    sets.reserve(acc.size());
    for (auto& [rows, p] : acc) {
        sets.push_back({rows, p});
    }
    return {table.m(), table.q(), SchemeKind::custom, std::move(sets)};
}

/// Canonical tuple realization of a set scheme: each set becomes one tuple
/// listing its indices in increasing order, padded to length q by repeating
/// the last index.
inline JointTable canonical_joint_table(const SetScheme& scheme) {
    if (scheme.size() > kEnumerationCap) {
        throw SupportTooLarge("scheme support exceeds the enumeration cap");
    }
    std::vector<TupleProb> entries;
    entries.reserve(scheme.size());
    for (const auto& s : scheme.sets()) {
        std::vector<int> tuple = s.rows;
        tuple.resize(static_cast<std::size_t>(scheme.q()), s.rows.back());
        entries.push_back({std::move(tuple), s.prob});
    }
    return {scheme.m(), scheme.q(), std::move(entries)};
}

/// Diagonal of P-hat: total probability of the sets containing each row.
inline Vec phat(const SetScheme& scheme) {
    Vec out = Vec::Zero(scheme.m());
    for (const auto& s : scheme.sets()) {
        for (int j : s.rows) {
            out(j) += s.prob;
        }
    }
    for (Eigen::Index j = 0; j < out.size(); ++j) {
        if (!(out(j) > 0.0)) {
            throw CoverageError("phat: row " + std::to_string(j + 1) + " has zero coverage");
        }
    }
    return out;
}

/// Contiguous blocks {0..q-1}, {q..2q-1}, ... with uniform probabilities;
/// block_probs replaces the weights.
inline SetScheme natural_paving(int m, int q) {
    if (q < 1 || m < 1 || m % q != 0) {
        throw PartitionError("natural paving: block size " + std::to_string(q) + " does not divide m = " +
                             std::to_string(m));
    }
    const int blocks = m / q;
    std::vector<WeightedSet> sets;
    sets.reserve(static_cast<std::size_t>(blocks));
    for (int b = 0; b < blocks; ++b) {
        IndexSet rows(static_cast<std::size_t>(q));
        std::iota(rows.begin(), rows.end(), b * q);
        sets.push_back({std::move(rows), 1.0 / blocks});
    }
    return {m, q, SchemeKind::paving, std::move(sets)};
}

enum class BlockWeight { frobenius, spectral, uniform };

inline BlockWeight block_weight_from_string(const std::string& s) {
    if (s == "frobenius") return BlockWeight::frobenius;
    if (s == "spectral") return BlockWeight::spectral;
    if (s == "uniform") return BlockWeight::uniform;
    throw ConfigError("unknown block weighting '" + s + "'");
}

inline const char* to_string(BlockWeight w) {
    switch (w) {
        case BlockWeight::frobenius: return "frobenius";
        case BlockWeight::spectral: return "spectral";
        case BlockWeight::uniform: return "uniform";
    }
    return "frobenius";
}

/// Reweights the sets proportionally to the squared norm of their row blocks.
inline SetScheme block_probs(const Mat& a, const SetScheme& scheme, BlockWeight weight = BlockWeight::frobenius) {
    if (a.rows() != scheme.m()) {
        throw DimError("block_probs: scheme and matrix disagree on m");
    }
    std::vector<double> w(scheme.size());
    for (std::size_t i = 0; i < scheme.size(); ++i) {
        const Mat block = select_rows(a, scheme.sets()[i].rows);
        switch (weight) {
            case BlockWeight::frobenius: w[i] = block.squaredNorm(); break;
            case BlockWeight::spectral: w[i] = spectral_norm_sq(block); break;
            case BlockWeight::uniform: w[i] = 1.0; break;
        }
    }
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    if (!(total > 0.0)) {
        throw DegenerateError("block_probs: matrix has no nonzero block");
    }
    for (double& x : w) {
        x /= total;
    }
    const SchemeKind kind = scheme.kind() == SchemeKind::paving ? SchemeKind::paving : SchemeKind::custom;
    return scheme.with_probs(w, kind);
}

namespace detail {

inline double binomial(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    double r = 1.0;
    for (int i = 1; i <= k; ++i) {
        r = r * (n - k + i) / i;
    }
    return std::round(r);
}

// Appends every size-k subset of {0..m-1} in lexicographic order.
inline void append_subsets(int m, int k, std::vector<WeightedSet>& out) {
    IndexSet c(static_cast<std::size_t>(k));
    std::iota(c.begin(), c.end(), 0);
    while (true) {
        out.push_back({c, 0.0});
        int i = k - 1;
        while (i >= 0 && c[static_cast<std::size_t>(i)] == m - k + i) {
            --i;
        }
        if (i < 0) break;
        ++c[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < k; ++j) {
            c[static_cast<std::size_t>(j)] = c[static_cast<std::size_t>(j - 1)] + 1;
        }
    }
}

inline SetScheme equal_weight_scheme(int m, int q, int min_size, SchemeKind kind) {
    if (q < 1 || q > m) {
        throw ParamError("scheme needs 1 <= q <= m");
    }
    double count = 0.0;
    for (int t = min_size; t <= q; ++t) {
        count += binomial(m, t);
    }
    if (count > static_cast<double>(kEnumerationCap)) {
        throw SupportTooLarge("scheme support of " + std::to_string(count) + " sets exceeds the cap");
    }
    std::vector<WeightedSet> sets;
    sets.reserve(static_cast<std::size_t>(count));
    for (int t = min_size; t <= q; ++t) {
        append_subsets(m, t, sets);
    }
    const double p = 1.0 / static_cast<double>(sets.size());
    for (auto& s : sets) {
        s.prob = p;
    }
    return {m, q, kind, std::move(sets)};
}

}  // namespace detail

/// All size-q subsets, equally likely.
inline SetScheme uniform_scheme(int m, int q) {
    return detail::equal_weight_scheme(m, q, q, SchemeKind::uniform);
}

/// All nonempty subsets of size at most q, equally likely.
inline SetScheme nonunique_scheme(int m, int q) {
    return detail::equal_weight_scheme(m, q, 1, SchemeKind::nonunique);
}

/// Inverse-CDF sampler over the sets of a scheme.
class SetSampler {
public:
    explicit SetSampler(const SetScheme& scheme) : scheme_(&scheme), cumulative_(scheme.size()) {
        double acc = 0.0;
        for (std::size_t i = 0; i < scheme.size(); ++i) {
            acc += scheme.sets()[i].prob;
            cumulative_[i] = acc;
        }
    }

    [[nodiscard]] std::size_t draw_index(Rng& rng) const {
        const double u = rng.uniform() * cumulative_.back();
        auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
        if (it == cumulative_.end()) {
            --it;
        }
        // zero-probability sets repeat the previous cumulative value, so the
        // first strictly greater entry is never one of them
        return static_cast<std::size_t>(it - cumulative_.begin());
    }

    [[nodiscard]] const IndexSet& draw(Rng& rng) const { return scheme_->sets()[draw_index(rng)].rows; }

private:
    const SetScheme* scheme_;
    std::vector<double> cumulative_;
};

inline IndexSet draw(const SetScheme& scheme, Rng& rng) { return SetSampler(scheme).draw(rng); }

}  // namespace kaczmarz
