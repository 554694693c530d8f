#pragma once

// JSON forms of schemes and bound reports. Indices are 1-based on disk.

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

#include "kaczmarz/bounds.hpp"
#include "kaczmarz/error.hpp"
#include "kaczmarz/sampling.hpp"

namespace kaczmarz {

using Json = nlohmann::json;

inline Json to_json(const SetScheme& s) {
    Json sets = Json::array();
    for (const auto& w : s.sets()) {
        std::vector<int> idx;
        idx.reserve(w.rows.size());
        for (int j : w.rows) idx.push_back(j + 1);
        sets.push_back({{"idx", idx}, {"p", w.prob}});
    }
    return {{"m", s.m()}, {"q", s.q()}, {"kind", to_string(s.kind())}, {"sets", sets}};
}

inline SetScheme scheme_from_json(const Json& j) {
    try {
        const int m = j.at("m").get<int>();
        const int q = j.at("q").get<int>();
        const SchemeKind kind = scheme_kind_from_string(j.value("kind", std::string("custom")));
        std::vector<WeightedSet> sets;
        for (const auto& e : j.at("sets")) {
            WeightedSet w;
            for (int i : e.at("idx")) w.rows.push_back(i - 1);
            std::sort(w.rows.begin(), w.rows.end());
            w.prob = e.at("p").get<double>();
            sets.push_back(std::move(w));
        }
        return {m, q, kind, std::move(sets)};
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("scheme json: ") + e.what());
    }
}

namespace detail {

inline void put(Json& j, const std::string& name, const BoundValue& v) {
    j[name] = v.value;
    j[name + "_raw"] = v.raw;
    j[name + "_clamped"] = v.clamped;
    if (!v.scaling.empty()) j[name + "_scaling"] = v.scaling;
}

}  // namespace detail

/// Flat object: every bound with its raw value, clamp flag and winning
/// candidate, plus the Hoeffding parameters.
inline Json to_json(const BoundReport& r) {
    Json j = Json::object();
    detail::put(j, "thm1_first", r.thm1_first);
    detail::put(j, "thm1_step", r.thm1_step);
    detail::put(j, "cor2_first", r.cor2_first);
    detail::put(j, "cor2_step", r.cor2_step);
    if (r.thm3_first) detail::put(j, "thm3_first", *r.thm3_first);
    if (r.thm3_step) detail::put(j, "thm3_step", *r.thm3_step);
    detail::put(j, "thm4", r.thm4);
    if (r.nd14) detail::put(j, "nd14", *r.nd14);
    detail::put(j, "gm21", r.gm21);
    j["eta"] = r.eta;
    j["xi"] = r.xi;
    j["scaling_label"] = r.scaling_label;
    j["epsilon"] = r.epsilon;
    j["delta"] = r.delta;
    j["ell"] = r.ell;
    j["a"] = r.a;
    j["b"] = r.b;
    j["expected_xi"] = r.expected_xi;
    return j;
}

inline Json to_json(const CandidateBounds& c) {
    Json j = {{"scaling", c.scaling}, {"eta", c.eta},       {"xi", c.xi},
              {"eta_hat", c.eta_hat}, {"xi_hat", c.xi_hat}, {"beta_s", c.beta_s},
              {"a", c.a},             {"b", c.b},           {"expected_xi", c.expected_xi},
              {"epsilon", c.epsilon}, {"thm4_raw", c.thm4}};
    if (c.eta_tilde) j["eta_tilde"] = *c.eta_tilde;
    if (c.xi_tilde) j["xi_tilde"] = *c.xi_tilde;
    return j;
}

}  // namespace kaczmarz
