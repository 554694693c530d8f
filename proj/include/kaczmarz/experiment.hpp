#pragma once

// Sweep harness: for every (n, q) cell build the instance, pave it, run the
// seeded trials, evaluate every bound and summarize the empirical rates.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "kaczmarz/bounds.hpp"
#include "kaczmarz/error.hpp"
#include "kaczmarz/instances.hpp"
#include "kaczmarz/matrix_market.hpp"
#include "kaczmarz/rng.hpp"
#include "kaczmarz/sampling.hpp"
#include "kaczmarz/serialization.hpp"
#include "kaczmarz/solver.hpp"

namespace kaczmarz {

enum class Source { gaussian, matrix_market, identity };
enum class Modification { none, two_scale, ill_cond };

inline const char* to_string(Source s) {
    switch (s) {
        case Source::gaussian: return "gaussian";
        case Source::matrix_market: return "matrix-market";
        case Source::identity: return "identity";
    }
    return "gaussian";
}

inline const char* to_string(Modification m) {
    switch (m) {
        case Modification::none: return "none";
        case Modification::two_scale: return "two-scale";
        case Modification::ill_cond: return "ill-cond";
    }
    return "none";
}

struct InstanceSpec {
    Source source = Source::gaussian;
    int m = 0;  // ignored for matrix-market (taken from the file)
    std::string path;
    bool random_columns = false;
    Modification modification = Modification::none;
    double alpha = 0.2;
    double beta = 0.2;
    double decrement = 0.01;
    /// 1-based inclusive rows; defaults to the first block of q rows.
    std::optional<std::pair<int, int>> mod_block;
    std::uint64_t seed = 1;
};

struct ExperimentConfig {
    InstanceSpec instance;
    std::vector<int> q_list;
    std::vector<int> n_list;
    int trials = 30;
    SolveConfig solve;
    double delta = 0.05;
    std::vector<std::string> s_candidates{"identity", "inv-row-norm"};
    BlockWeight probs = BlockWeight::frobenius;
    std::string output;
    std::uint64_t seed = 0;
    /// Steps k at which Cov(xi_{tau^(k-1)}, ||x^(k) - x_ref||) is checked.
    std::vector<int> covariance_steps{1, 2, 5, 10, 50};
    bool export_traces = false;
};

namespace detail {

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

inline void reject_unknown(const Json& j, std::initializer_list<const char*> known, const char* where) {
    for (const auto& [key, value] : j.items()) {
        if (std::find_if(known.begin(), known.end(), [&](const char* k) { return key == k; }) == known.end()) {
            throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
        }
    }
}

}  // namespace detail

inline InstanceSpec instance_from_json(const Json& j) {
    detail::reject_unknown(j,
                           {"source", "m", "path", "columns", "modification", "alpha", "beta", "decrement",
                            "mod_block", "seed"},
                           "instance");
    InstanceSpec s;
    const auto source = detail::get_or<std::string>(j, "source", "gaussian");
    if (source == "gaussian") s.source = Source::gaussian;
    else if (source == "matrix-market") s.source = Source::matrix_market;
    else if (source == "identity") s.source = Source::identity;
    else throw ConfigError("unknown instance source '" + source + "'");
    s.m = detail::get_or<int>(j, "m", 0);
    s.path = detail::get_or<std::string>(j, "path", "");
    const auto columns = detail::get_or<std::string>(j, "columns", "first");
    if (columns != "first" && columns != "random") throw ConfigError("columns must be 'first' or 'random'");
    s.random_columns = columns == "random";
    const auto mod = detail::get_or<std::string>(j, "modification", "none");
    if (mod == "none") s.modification = Modification::none;
    else if (mod == "two-scale") s.modification = Modification::two_scale;
    else if (mod == "ill-cond") s.modification = Modification::ill_cond;
    else throw ConfigError("unknown modification '" + mod + "'");
    s.alpha = detail::get_or<double>(j, "alpha", 0.2);
    s.beta = detail::get_or<double>(j, "beta", 0.2);
    s.decrement = detail::get_or<double>(j, "decrement", 0.01);
    if (j.contains("mod_block") && !j.at("mod_block").is_null()) {
        const auto b = j.at("mod_block").get<std::vector<int>>();
        if (b.size() != 2) throw ConfigError("mod_block must be [first, last]");
        s.mod_block = std::make_pair(b[0], b[1]);
    }
    s.seed = detail::get_or<std::uint64_t>(j, "seed", 1);

    if (!(s.alpha > 0.0 && s.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (!(s.beta > 0.0)) throw ConfigError("beta must be positive");
    if (!(s.decrement >= 0.0)) throw ConfigError("decrement must be nonnegative");
    if (s.source != Source::matrix_market && s.m < 1) throw ConfigError("instance.m must be >= 1");
    if (s.source == Source::matrix_market && s.path.empty()) throw ConfigError("matrix-market source needs a path");
    if (s.mod_block && (s.mod_block->first < 1 || s.mod_block->second < s.mod_block->first)) {
        throw ConfigError("mod_block must satisfy 1 <= first <= last");
    }
    return s;
}

inline Json to_json(const InstanceSpec& s) {
    Json j = {{"source", to_string(s.source)},
              {"modification", to_string(s.modification)},
              {"alpha", s.alpha},
              {"beta", s.beta},
              {"decrement", s.decrement},
              {"seed", s.seed},
              {"columns", s.random_columns ? "random" : "first"}};
    if (s.source != Source::matrix_market) j["m"] = s.m;
    if (!s.path.empty()) j["path"] = s.path;
    j["mod_block"] = s.mod_block ? Json(std::vector<int>{s.mod_block->first, s.mod_block->second}) : Json(nullptr);
    return j;
}

inline ExperimentConfig config_from_json(const Json& j) {
    try {
        detail::reject_unknown(j,
                               {"instance", "q_list", "n_list", "trials", "solve", "delta", "s_candidates", "probs",
                                "output", "seed", "covariance_steps", "export_traces"},
                               "config");
        ExperimentConfig c;
        c.instance = instance_from_json(j.at("instance"));
        c.q_list = j.at("q_list").get<std::vector<int>>();
        c.n_list = detail::get_or<std::vector<int>>(j, "n_list", {});
        c.trials = detail::get_or<int>(j, "trials", 30);
        if (j.contains("solve")) {
            const Json& s = j.at("solve");
            detail::reject_unknown(s, {"max_iter", "rse_tol", "cache_factorizations", "rank_tol"}, "solve");
            c.solve.max_iter = detail::get_or<int>(s, "max_iter", 5000);
            c.solve.rse_tol = detail::get_or<double>(s, "rse_tol", 1e-8);
            c.solve.cache_factorizations = detail::get_or<bool>(s, "cache_factorizations", true);
            if (s.contains("rank_tol")) c.solve.tol = RankTol(s.at("rank_tol").get<double>());
        } else {
            c.solve.cache_factorizations = true;
        }
        c.solve.validate();
        c.delta = detail::get_or<double>(j, "delta", 0.05);
        c.s_candidates = detail::get_or<std::vector<std::string>>(j, "s_candidates", c.s_candidates);
        c.probs = block_weight_from_string(detail::get_or<std::string>(j, "probs", "frobenius"));
        c.output = detail::get_or<std::string>(j, "output", "");
        c.seed = detail::get_or<std::uint64_t>(j, "seed", 0);
        c.covariance_steps = detail::get_or<std::vector<int>>(j, "covariance_steps", c.covariance_steps);
        c.export_traces = detail::get_or<bool>(j, "export_traces", false);

        if (c.q_list.empty()) throw ConfigError("q_list is empty");
        if (c.trials < 2) throw ConfigError("trials must be >= 2");
        if (!(c.delta > 0.0 && c.delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
        if (c.s_candidates.empty()) throw ConfigError("s_candidates is empty");
        for (const auto& s : c.s_candidates) {
            if (scaling_label_from_string(s) == ScalingLabel::custom) {
                throw ConfigError("custom scaling cannot be named in a config");
            }
        }
        for (int k : c.covariance_steps) {
            if (k < 1) throw ConfigError("covariance_steps must be >= 1");
        }
        for (int n : c.n_list) {
            if (n < 1) throw ConfigError("n_list entries must be >= 1");
        }
        return c;
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("config json: ") + e.what());
    }
}

inline Json to_json(const ExperimentConfig& c) {
    return {{"instance", to_json(c.instance)},
            {"q_list", c.q_list},
            {"n_list", c.n_list},
            {"trials", c.trials},
            {"solve",
             {{"max_iter", c.solve.max_iter},
              {"rse_tol", c.solve.rse_tol},
              {"cache_factorizations", c.solve.cache_factorizations},
              {"rank_tol", c.solve.tol.relative}}},
            {"delta", c.delta},
            {"s_candidates", c.s_candidates},
            {"probs", to_string(c.probs)},
            {"output", c.output},
            {"seed", c.seed},
            {"covariance_steps", c.covariance_steps},
            {"export_traces", c.export_traces}};
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    Json j;
    try {
        in >> j;
    } catch (const Json::exception& e) {
        throw ConfigError("config '" + path + "' is not valid json: " + e.what());
    }
    return config_from_json(j);
}

struct Stats {
    double mean = 0.0, min = 0.0, max = 0.0, q25 = 0.0, q75 = 0.0;
};

/// Quantile by linear interpolation between order statistics at position
/// p (n - 1) of the sorted sample (the inclusive method).
inline double quantile_inclusive(const std::vector<double>& sorted, double p) {
    const double h = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline Stats stats(const std::vector<double>& values) {
    if (values.empty()) {
        throw SampleError("stats: no values");
    }
    std::vector<double> s = values;
    std::sort(s.begin(), s.end());
    Stats out;
    double acc = 0.0;
    for (double v : values) acc += v;
    out.mean = acc / static_cast<double>(values.size());
    out.min = s.front();
    out.max = s.back();
    out.q25 = quantile_inclusive(s, 0.25);
    out.q75 = quantile_inclusive(s, 0.75);
    return out;
}

inline double standard_error(const std::vector<double>& values) {
    if (values.size() < 2) throw SampleError("standard_error: need at least two values");
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(values.size() - 1) / static_cast<double>(values.size()));
}

struct CovarianceFlag {
    int k = 0;
    int samples = 0;
    double value = 0.0;
    bool negative = false;
};

struct CellResult {
    int n = 0;
    int q = 0;
    int m = 0;
    BoundReport bounds;
    Stats empirical;
    double pooled = 0.0;
    double rate_se = 0.0;
    std::vector<double> rates;
    std::vector<int> iters;
    int converged = 0;
    int inconsistent = 0;
    std::vector<CovarianceFlag> covariance;
    std::vector<TrialTrace> traces;  // kept only when export_traces is set
};

struct SweepResult {
    ExperimentConfig config;
    std::vector<CellResult> cells;
};

/// Stable key of a cell, independent of its position in the sweep.
inline std::uint64_t cell_key(int n, int q) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(n)) << 32) | static_cast<std::uint32_t>(q);
}

/// Builds matrices for the cells of a sweep; a Matrix Market file is read once.
class InstanceFactory {
public:
    explicit InstanceFactory(const InstanceSpec& spec) : spec_(spec) {
        if (spec.source == Source::matrix_market) {
            base_ = read_matrix_market(spec.path);
        }
    }

    [[nodiscard]] int rows() const {
        return spec_.source == Source::matrix_market ? static_cast<int>(base_.rows()) : spec_.m;
    }

    /// Column counts of the sweep; the identity source is square.
    [[nodiscard]] std::vector<int> columns(const std::vector<int>& n_list) const {
        if (spec_.source == Source::identity) {
            for (int n : n_list) {
                if (n != spec_.m) throw ConfigError("identity source is square: n must equal m");
            }
            return {spec_.m};
        }
        if (n_list.empty()) {
            if (spec_.source == Source::matrix_market) return {static_cast<int>(base_.cols())};
            throw ConfigError("n_list is empty");
        }
        return n_list;
    }

    [[nodiscard]] Mat build(int n, int q) const {
        Mat a;
        switch (spec_.source) {
            case Source::identity: a = Mat::Identity(spec_.m, spec_.m); break;
            case Source::gaussian: a = gaussian(spec_.m, n, derive_seed(spec_.seed, static_cast<std::uint64_t>(n), 0)); break;
            case Source::matrix_market:
                a = spec_.random_columns ? take_random_columns(base_, n, derive_seed(spec_.seed, static_cast<std::uint64_t>(n), 0))
                                         : take_columns(base_, n);
                break;
        }
        const RowRange block = modified_block(a, q);
        switch (spec_.modification) {
            case Modification::none: break;
            case Modification::two_scale: a = two_scale(a, block, spec_.alpha); break;
            case Modification::ill_cond:
                a = ill_conditioned(a, block, spec_.beta, spec_.decrement, derive_seed(spec_.seed, cell_key(n, q), 1))
                        .matrix;
                break;
        }
        return a;
    }

private:
    [[nodiscard]] RowRange modified_block(const Mat& a, int q) const {
        if (spec_.mod_block) {
            if (spec_.mod_block->second > a.rows()) throw ConfigError("mod_block extends past the last row");
            return {spec_.mod_block->first - 1, spec_.mod_block->second};
        }
        return {0, std::min<int>(q, static_cast<int>(a.rows()))};
    }

    InstanceSpec spec_;
    Mat base_;
};

inline std::vector<Scaling> candidates_from_labels(const Mat& a, const std::vector<std::string>& labels) {
    std::vector<Scaling> out;
    for (const auto& l : labels) out.push_back(Scaling::from_label(scaling_label_from_string(l), a));
    return out;
}

inline CellResult run_cell(const ExperimentConfig& cfg, const InstanceFactory& factory, int n, int q) {
    const std::uint64_t key = cell_key(n, q);
    CellResult cell;
    cell.n = n;
    cell.q = q;
    const Mat a = factory.build(n, q);
    cell.m = static_cast<int>(a.rows());
    const SetScheme scheme = block_probs(a, natural_paving(cell.m, q), cfg.probs);

    const BoundContext ctx(a, scheme, cfg.solve.tol);
    BoundOptions opt;
    opt.ell = cfg.trials;
    opt.delta = cfg.delta;
    cell.bounds = minimize_over_S(ctx, candidates_from_labels(a, cfg.s_candidates), opt);

    const ConsistentSystem sys = make_consistent_rhs(a, derive_seed(cfg.seed, key, 0xfffffffffULL));
    const Vec x_ref = least_norm_reference(a, sys.x_star, cfg.solve.tol);
    const BlockProjector projector(a, scheme, cfg.solve.tol, cfg.solve.cache_factorizations);
    const SetSampler sampler(scheme);

    std::vector<TrialTrace> traces;
    traces.reserve(static_cast<std::size_t>(cfg.trials));
    for (int t = 0; t < cfg.trials; ++t) {
        traces.push_back(run_trial(projector, sampler, sys.b, x_ref, cfg.solve,
                                   derive_seed(cfg.seed, key, static_cast<std::uint64_t>(t))));
        const auto& tr = traces.back();
        cell.rates.push_back(empirical_rate(tr));
        cell.iters.push_back(tr.iters);
        cell.converged += tr.converged ? 1 : 0;
        cell.inconsistent += tr.inconsistent ? 1 : 0;
    }
    cell.empirical = stats(cell.rates);
    cell.rate_se = standard_error(cell.rates);
    cell.pooled = pooled_contraction(traces);

    // xi samples of the candidate that attains the Hoeffding bound
    const auto& cands = cell.bounds.candidates;
    const auto winner = std::find_if(cands.begin(), cands.end(),
                                     [&](const CandidateBounds& c) { return c.scaling == cell.bounds.thm4.scaling; });
    const auto& xi_per_set = (winner == cands.end() ? cands.front() : *winner).xi_per_set;
    for (int k : cfg.covariance_steps) {
        const auto reached = std::count_if(traces.begin(), traces.end(), [&](const TrialTrace& t) {
            return t.selected.size() >= static_cast<std::size_t>(k);
        });
        if (reached < 2) continue;
        CovarianceFlag f;
        f.k = k;
        f.samples = static_cast<int>(reached);
        f.value = covariance_check(traces, xi_per_set, k);
        f.negative = f.value < 0.0;
        cell.covariance.push_back(f);
    }
    if (cfg.export_traces) cell.traces = std::move(traces);
    return cell;
}

inline SweepResult run_experiment(const ExperimentConfig& cfg) {
    const InstanceFactory factory(cfg.instance);
    const int m = factory.rows();
    std::vector<int> bad;
    for (int q : cfg.q_list) {
        if (q < 1 || q > m || m % q != 0) bad.push_back(q);
    }
    if (!bad.empty()) {
        std::string list;
        for (int q : bad) list += (list.empty() ? "" : ", ") + std::to_string(q);
        throw ConfigError("q values not dividing m = " + std::to_string(m) + ": " + list);
    }
    SweepResult out;
    out.config = cfg;
    for (int n : factory.columns(cfg.n_list)) {
        for (int q : cfg.q_list) {
            out.cells.push_back(run_cell(cfg, factory, n, q));
        }
    }
    return out;
}

inline Json to_json(const CellResult& c) {
    Json candidates = Json::array();
    for (const auto& cb : c.bounds.candidates) candidates.push_back(to_json(cb));
    Json cov = Json::array();
    for (const auto& f : c.covariance) {
        cov.push_back({{"k", f.k}, {"samples", f.samples}, {"value", f.value}, {"negative", f.negative}});
    }
    Json j = {{"n", c.n},
              {"q", c.q},
              {"m", c.m},
              {"bounds", to_json(c.bounds)},
              {"candidates", candidates},
              {"empirical",
               {{"mean", c.empirical.mean},
                {"min", c.empirical.min},
                {"max", c.empirical.max},
                {"q25", c.empirical.q25},
                {"q75", c.empirical.q75},
                {"se", c.rate_se},
                {"pooled", c.pooled},
                {"rates", c.rates}}},
              {"iters", c.iters},
              {"converged", c.converged},
              {"inconsistent", c.inconsistent},
              {"covariance", cov}};
    if (!c.traces.empty()) {
        Json traces = Json::array();
        for (const auto& t : c.traces) {
            traces.push_back({{"sq_errors", t.sq_errors}, {"ratios", t.step_ratios()}});
        }
        j["traces"] = traces;
    }
    return j;
}

inline Json to_json(const SweepResult& r) {
    Json cells = Json::array();
    for (const auto& c : r.cells) cells.push_back(to_json(c));
    return {{"config", to_json(r.config)}, {"cells", cells}};
}

inline std::string to_csv(const SweepResult& r) {
    std::ostringstream out;
    out << "n,q,series,value\n";
    char buf[64];
    auto row = [&](const CellResult& c, const char* series, double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << c.n << ',' << c.q << ',' << series << ',' << buf << '\n';
    };
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& c : r.cells) {
        row(c, "mean", c.empirical.mean);
        row(c, "min", c.empirical.min);
        row(c, "max", c.empirical.max);
        row(c, "q25", c.empirical.q25);
        row(c, "q75", c.empirical.q75);
        row(c, "nd14", c.bounds.nd14 ? c.bounds.nd14->value : nan);
        row(c, "gm21", c.bounds.gm21.value);
        row(c, "thm3", c.bounds.thm3_step ? c.bounds.thm3_step->value : nan);
        row(c, "thm4", c.bounds.thm4.value);
    }
    return out.str();
}

enum class OutputFormat { json, csv };

inline OutputFormat output_format_from_string(const std::string& s) {
    if (s == "json") return OutputFormat::json;
    if (s == "csv") return OutputFormat::csv;
    throw ConfigError("unknown output format '" + s + "'");
}

inline std::string render(const SweepResult& r, OutputFormat f) {
    return f == OutputFormat::json ? to_json(r).dump(2) + "\n" : to_csv(r);
}

inline void emit(const SweepResult& r, OutputFormat f, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << render(r, f);
    if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace kaczmarz
