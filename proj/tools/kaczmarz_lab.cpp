// kaczmarz-lab: instance generation, bound evaluation, single solves,
// experiment sweeps and lemma checks from a JSON config.
//
// Exit codes: 0 success, 2 configuration or input error, 3 numeric failure.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "kaczmarz/experiment.hpp"
#include "kaczmarz/lemmas.hpp"

namespace kz = kaczmarz;

namespace {

struct Options {
    std::string config;
    std::string out;
    std::string format = "json";
    std::optional<std::uint64_t> seed;
    std::optional<int> n;
    std::optional<int> q;
};

void write_text(const std::string& text, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw kz::IoError("cannot write '" + path + "'");
    out << text;
    if (!out) throw kz::IoError("write to '" + path + "' failed");
}

kz::ExperimentConfig load(const Options& o) {
    if (o.config.empty()) throw kz::ConfigError("--config is required");
    auto cfg = kz::load_config(o.config);
    if (o.seed) cfg.seed = *o.seed;
    return cfg;
}

/// The (n, q) cell a single-cell command works on: flags, else the first
/// entries of the sweep lists.
std::pair<int, int> pick_cell(const Options& o, const kz::ExperimentConfig& cfg, const kz::InstanceFactory& f) {
    const auto cols = f.columns(o.n ? std::vector<int>{*o.n} : cfg.n_list);
    const int q = o.q ? *o.q : cfg.q_list.front();
    if (q < 1 || f.rows() % q != 0) {
        throw kz::ConfigError("q = " + std::to_string(q) + " does not divide m = " + std::to_string(f.rows()));
    }
    return {cols.front(), q};
}

int cmd_gen(const Options& o) {
    const auto cfg = load(o);
    const kz::InstanceFactory factory(cfg.instance);
    const auto [n, q] = pick_cell(o, cfg, factory);
    std::ostringstream text;
    kz::write_matrix_market(text, factory.build(n, q));
    write_text(text.str(), o.out);
    return 0;
}

int cmd_bounds(const Options& o) {
    const auto cfg = load(o);
    const kz::InstanceFactory factory(cfg.instance);
    const auto [n, q] = pick_cell(o, cfg, factory);
    const kz::Mat a = factory.build(n, q);
    const auto scheme = kz::block_probs(a, kz::natural_paving(static_cast<int>(a.rows()), q), cfg.probs);
    const kz::BoundContext ctx(a, scheme, cfg.solve.tol);
    kz::BoundOptions opt;
    opt.ell = cfg.trials;
    opt.delta = cfg.delta;
    const auto report = kz::minimize_over_S(ctx, kz::candidates_from_labels(a, cfg.s_candidates), opt);
    kz::Json j = kz::to_json(report);
    j["n"] = n;
    j["q"] = q;
    j["m"] = a.rows();
    kz::Json cands = kz::Json::array();
    for (const auto& c : report.candidates) cands.push_back(kz::to_json(c));
    j["candidates"] = cands;
    write_text(j.dump(2) + "\n", o.out);
    return 0;
}

int cmd_solve(const Options& o) {
    const auto cfg = load(o);
    const kz::InstanceFactory factory(cfg.instance);
    const auto [n, q] = pick_cell(o, cfg, factory);
    const kz::Mat a = factory.build(n, q);
    const auto scheme = kz::block_probs(a, kz::natural_paving(static_cast<int>(a.rows()), q), cfg.probs);
    const std::uint64_t key = kz::cell_key(n, q);
    const auto sys = kz::make_consistent_rhs(a, kz::derive_seed(cfg.seed, key, 0xfffffffffULL));
    const auto trace = kz::run_trial(a, sys.b, scheme, cfg.solve, kz::derive_seed(cfg.seed, key, 0), sys.x_star);
    if (kz::output_format_from_string(o.format) == kz::OutputFormat::csv) {
        std::ostringstream out;
        out << "k,sq_error,rse\n";
        char buf[96];
        for (std::size_t k = 0; k < trace.sq_errors.size(); ++k) {
            std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", k, trace.sq_errors[k], trace.rse[k]);
            out << buf;
        }
        write_text(out.str(), o.out);
        return 0;
    }
    kz::Json j = {{"n", n},
                  {"q", q},
                  {"iters", trace.iters},
                  {"converged", trace.converged},
                  {"inconsistent", trace.inconsistent},
                  {"rate", kz::empirical_rate(trace)},
                  {"sq_errors", trace.sq_errors},
                  {"rse", trace.rse},
                  {"ratios", trace.step_ratios()},
                  {"selected", trace.selected}};
    write_text(j.dump(2) + "\n", o.out);
    return 0;
}

int cmd_experiment(const Options& o) {
    const auto cfg = load(o);
    const auto result = kz::run_experiment(cfg);
    for (const auto& c : result.cells) {
        for (const auto& f : c.covariance) {
            if (f.negative) {
                std::fprintf(stderr, "warning: n=%d q=%d: negative sample covariance %.3g at k=%d\n", c.n, c.q,
                             f.value, f.k);
            }
        }
        if (c.inconsistent > 0) {
            std::fprintf(stderr, "warning: n=%d q=%d: %d trials flagged inconsistent\n", c.n, c.q, c.inconsistent);
        }
    }
    const std::string path = o.out.empty() ? cfg.output : o.out;
    write_text(kz::render(result, kz::output_format_from_string(o.format)), path);
    return 0;
}

int cmd_lemmas(const Options& o) {
    const std::uint64_t seed = o.seed.value_or(2024);
    bool ok = true;
    for (const auto& r : kz::lemmas::run_all(seed)) {
        std::printf("%-34s %s  cases=%ld  worst_margin=%.3e%s%s\n", r.name.c_str(), r.passed ? "PASS" : "FAIL",
                    r.cases, r.worst_margin, r.detail.empty() ? "" : "  at ", r.detail.c_str());
        ok = ok && r.passed;
    }
    const auto cov = kz::lemmas::hoeffding_coverage(185, 0.1, 2000, kz::derive_seed(seed, 7, 0));
    const bool cov_ok = cov.frequency() <= 0.06;
    std::printf("%-34s %s  deviations=%ld/%ld\n", "hoeffding coverage", cov_ok ? "PASS" : "FAIL", cov.deviations,
                cov.repetitions);
    return ok && cov_ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Batch-sampling block Kaczmarz lab"};
    app.require_subcommand(1);
    Options o;

    auto add_common = [&](CLI::App* sub, bool cell) {
        sub->add_option("--config", o.config, "JSON experiment config");
        sub->add_option("--out", o.out, "output path (stdout when omitted)");
        sub->add_option("--format", o.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
        sub->add_option("--seed", o.seed, "override the config seed");
        if (cell) {
            sub->add_option("--n", o.n, "column count of the cell");
            sub->add_option("--q", o.q, "block size of the cell");
        }
    };
    auto* gen = app.add_subcommand("gen", "write one instance as Matrix Market");
    auto* bounds = app.add_subcommand("bounds", "evaluate every bound for one cell");
    auto* solve = app.add_subcommand("solve", "run one seeded trial");
    auto* experiment = app.add_subcommand("experiment", "run a full sweep");
    auto* lemmas = app.add_subcommand("lemmas", "run the randomized inequality checks");
    add_common(gen, true);
    add_common(bounds, true);
    add_common(solve, true);
    add_common(experiment, false);
    lemmas->add_option("--seed", o.seed, "root seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*gen) return cmd_gen(o);
        if (*bounds) return cmd_bounds(o);
        if (*solve) return cmd_solve(o);
        if (*experiment) return cmd_experiment(o);
        if (*lemmas) return cmd_lemmas(o);
    } catch (const kz::InputError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const kz::NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
