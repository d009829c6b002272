#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ptycho/experiments.hpp"

namespace ptycho {

using nlohmann::json;

/// Thrown when a config file or override fails validation; the message
/// names the offending field.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace cfgdetail {

inline void reject_unknown_keys(const json& j, const std::string& where,
                                const std::set<std::string>& allowed) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ValidationError("unknown key \"" + where + it.key() + "\"");
}

inline const json& require(const json& j, const std::string& where, const std::string& key) {
    if (!j.contains(key)) throw ValidationError("missing required field \"" + where + key + "\"");
    return j.at(key);
}

inline double as_number(const json& v, const std::string& field) {
    if (!v.is_number()) throw ValidationError("field \"" + field + "\" must be a number");
    return v.get<double>();
}

inline int as_int(const json& v, const std::string& field) {
    if (!v.is_number_integer())
        throw ValidationError("field \"" + field + "\" must be an integer");
    return v.get<int>();
}

inline std::uint64_t as_seed(const json& v, const std::string& field) {
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<long long>() < 0))
        throw ValidationError("field \"" + field + "\" must be a nonnegative integer seed");
    return v.get<std::uint64_t>();
}

inline std::string as_string(const json& v, const std::string& field) {
    if (!v.is_string()) throw ValidationError("field \"" + field + "\" must be a string");
    return v.get<std::string>();
}

}  // namespace cfgdetail

inline json to_json(const MaskSpec& m) {
    return json{{"kind", to_string(m.kind)}, {"m", m.m},       {"ell", m.ell},
                {"rho", m.rho},              {"beta", m.beta}, {"seed", m.seed}};
}

inline json to_json(const ObjectSpec& o) {
    return json{{"n", o.n}, {"angle_range", o.angle_range}, {"seed", o.seed}};
}

inline json to_json(const ExperimentConfig& cfg) {
    json j;
    j["version"] = 1;
    j["object"] = to_json(cfg.object);
    j["mask"] = to_json(cfg.mask);
    j["scheme"] = json{{"n", cfg.scheme.n},
                       {"q", cfg.scheme.q},
                       {"overlap", to_string(cfg.scheme.overlap)}};
    if (cfg.noise)
        j["noise"] = json{{"nsr_target", cfg.noise->nsr_target}, {"seed", cfg.noise->seed}};
    j["solver"] = json{{"dr_iters", cfg.solver.dr_iters},
                       {"ap_iters", cfg.solver.ap_iters},
                       {"init_seed", cfg.solver.init_seed}};
    if (cfg.solver.stop_rr) j["solver"]["stop_rr"] = *cfg.solver.stop_rr;
    if (cfg.sweep) {
        j["sweep"] = json{{"parameter", to_string(cfg.sweep->parameter)},
                          {"values", cfg.sweep->values}};
        if (cfg.sweep->repeats != 1) j["sweep"]["repeats"] = cfg.sweep->repeats;
    }
    j["out_dir"] = cfg.out_dir;
    return j;
}

/// Parse and validate a version-1 config. Unknown keys are errors; cross
/// constraints (n consistency, 2n/q divisibility, mask size) are enforced
/// here so every later stage can assume a coherent config.
inline ExperimentConfig parse_config(const json& j) {
    using namespace cfgdetail;
    if (!j.is_object()) throw ValidationError("config root must be a JSON object");
    reject_unknown_keys(j, "", {"version", "object", "mask", "scheme", "noise", "solver",
                                "sweep", "out_dir"});
    if (as_int(require(j, "", "version"), "version") != 1)
        throw ValidationError("field \"version\" must be 1");

    ExperimentConfig cfg;

    const json& jo = require(j, "", "object");
    reject_unknown_keys(jo, "object.", {"n", "angle_range", "seed"});
    cfg.object.n = as_int(require(jo, "object.", "n"), "object.n");
    if (jo.contains("angle_range"))
        cfg.object.angle_range = as_number(jo["angle_range"], "object.angle_range");
    if (jo.contains("seed")) cfg.object.seed = as_seed(jo["seed"], "object.seed");
    if (cfg.object.n < 8) throw ValidationError("field \"object.n\" must be >= 8");
    if (cfg.object.angle_range < 0.0 ||
        cfg.object.angle_range > 2.0 * std::numbers::pi + 1e-12)
        throw ValidationError("field \"object.angle_range\" must lie in [0, 2 pi]");

    const json& js = require(j, "", "scheme");
    reject_unknown_keys(js, "scheme.", {"n", "q", "overlap"});
    cfg.scheme.n = as_int(require(js, "scheme.", "n"), "scheme.n");
    cfg.scheme.q = as_int(require(js, "scheme.", "q"), "scheme.q");
    std::string ov = js.contains("overlap") ? as_string(js["overlap"], "scheme.overlap")
                                            : "half";
    if (ov == "half")
        cfg.scheme.overlap = Overlap::Half;
    else if (ov == "three_quarter")
        cfg.scheme.overlap = Overlap::ThreeQuarter;
    else
        throw ValidationError(
            "field \"scheme.overlap\" must be \"half\" or \"three_quarter\"");
    if (cfg.scheme.n != cfg.object.n)
        throw ValidationError("field \"scheme.n\" must equal object.n");
    if (cfg.scheme.q < 2) throw ValidationError("field \"scheme.q\" must be >= 2");
    if ((2 * cfg.scheme.n) % cfg.scheme.q != 0 ||
        ((2 * cfg.scheme.n) / cfg.scheme.q) % 2 != 0)
        throw ValidationError("field \"scheme.q\": 2n/q must be an even integer");
    int m = 2 * cfg.scheme.n / cfg.scheme.q;
    if (cfg.scheme.overlap == Overlap::ThreeQuarter && m % 4 != 0)
        throw ValidationError(
            "field \"scheme.overlap\": three_quarter requires 2n/q divisible by 4");

    const json& jm = require(j, "", "mask");
    reject_unknown_keys(jm, "mask.", {"kind", "m", "ell", "rho", "beta", "seed"});
    std::string kind = as_string(require(jm, "mask.", "kind"), "mask.kind");
    if (kind == "iid")
        cfg.mask.kind = MaskKind::IidRandom;
    else if (kind == "correlated")
        cfg.mask.kind = MaskKind::CorrelatedRandom;
    else if (kind == "fresnel")
        cfg.mask.kind = MaskKind::Fresnel;
    else if (kind == "plain")
        cfg.mask.kind = MaskKind::Plain;
    else
        throw ValidationError(
            "field \"mask.kind\" must be one of iid, correlated, fresnel, plain");
    cfg.mask.m = jm.contains("m") ? as_int(jm["m"], "mask.m") : m;
    if (jm.contains("ell")) cfg.mask.ell = as_int(jm["ell"], "mask.ell");
    if (jm.contains("rho")) cfg.mask.rho = as_number(jm["rho"], "mask.rho");
    if (jm.contains("beta")) {
        if (!jm["beta"].is_array() || jm["beta"].size() != 2)
            throw ValidationError("field \"mask.beta\" must be a 2-element array");
        cfg.mask.beta = {as_number(jm["beta"][0], "mask.beta[0]"),
                         as_number(jm["beta"][1], "mask.beta[1]")};
    }
    if (jm.contains("seed")) cfg.mask.seed = as_seed(jm["seed"], "mask.seed");
    if (cfg.mask.m != m)
        throw ValidationError("field \"mask.m\" must equal 2n/q = " + std::to_string(m));
    if (cfg.mask.kind == MaskKind::CorrelatedRandom &&
        (cfg.mask.ell < 1 || cfg.mask.ell > cfg.mask.m))
        throw ValidationError("field \"mask.ell\" must satisfy 1 <= ell <= m");

    if (j.contains("noise")) {
        const json& jn = j["noise"];
        reject_unknown_keys(jn, "noise.", {"nsr_target", "seed"});
        NoiseSpec ns;
        ns.nsr_target = as_number(require(jn, "noise.", "nsr_target"), "noise.nsr_target");
        if (jn.contains("seed")) ns.seed = as_seed(jn["seed"], "noise.seed");
        if (ns.nsr_target < 0.0)
            throw ValidationError("field \"noise.nsr_target\" must be >= 0");
        cfg.noise = ns;
    }

    if (j.contains("solver")) {
        const json& jv = j["solver"];
        reject_unknown_keys(jv, "solver.", {"dr_iters", "ap_iters", "init_seed", "stop_rr"});
        if (jv.contains("dr_iters"))
            cfg.solver.dr_iters = as_int(jv["dr_iters"], "solver.dr_iters");
        if (jv.contains("ap_iters"))
            cfg.solver.ap_iters = as_int(jv["ap_iters"], "solver.ap_iters");
        if (jv.contains("init_seed"))
            cfg.solver.init_seed = as_seed(jv["init_seed"], "solver.init_seed");
        if (jv.contains("stop_rr"))
            cfg.solver.stop_rr = as_number(jv["stop_rr"], "solver.stop_rr");
    }
    try {
        validate(cfg.solver);
    } catch (const ParameterError& e) {
        throw ValidationError(std::string("field \"solver\": ") + e.what());
    }

    if (j.contains("sweep")) {
        const json& jw = j["sweep"];
        reject_unknown_keys(jw, "sweep.", {"parameter", "values", "repeats"});
        SweepSpec sw;
        std::string param = as_string(require(jw, "sweep.", "parameter"), "sweep.parameter");
        if (param == "rho")
            sw.parameter = SweepParam::Rho;
        else if (param == "q")
            sw.parameter = SweepParam::Q;
        else if (param == "nsr")
            sw.parameter = SweepParam::Nsr;
        else if (param == "angle_range")
            sw.parameter = SweepParam::AngleRange;
        else
            throw ValidationError(
                "field \"sweep.parameter\" must be one of rho, q, nsr, angle_range");
        const json& vals = require(jw, "sweep.", "values");
        if (!vals.is_array() || vals.empty())
            throw ValidationError("field \"sweep.values\" must be a nonempty array");
        for (const auto& v : vals)
            sw.values.push_back(cfgdetail::as_number(v, "sweep.values[]"));
        if (jw.contains("repeats")) {
            sw.repeats = as_int(jw["repeats"], "sweep.repeats");
            if (sw.repeats < 1) throw ValidationError("field \"sweep.repeats\" must be >= 1");
        }
        if (sw.parameter == SweepParam::Nsr)
            for (double v : sw.values)
                if (v < 0.0)
                    throw ValidationError("field \"sweep.values\": nsr values must be >= 0");
        if (sw.parameter == SweepParam::AngleRange)
            for (double v : sw.values)
                if (v < 0.0 || v > 2.0 * std::numbers::pi + 1e-12)
                    throw ValidationError(
                        "field \"sweep.values\": angle_range values must lie in [0, 2 pi]");
        cfg.sweep = sw;
    }

    if (j.contains("out_dir")) cfg.out_dir = cfgdetail::as_string(j["out_dir"], "out_dir");
    return cfg;
}

/// Apply "dotted.path=value" overrides onto raw JSON before validation.
/// Values parse as JSON when possible, else as strings.
inline void apply_overrides(json& j, const std::vector<std::string>& overrides) {
    for (const auto& ov : overrides) {
        auto eq = ov.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ValidationError("override \"" + ov + "\" is not of the form key=value");
        std::string path = ov.substr(0, eq);
        std::string value = ov.substr(eq + 1);
        json parsed;
        try {
            parsed = json::parse(value);
        } catch (const json::parse_error&) {
            parsed = value;
        }
        json* node = &j;
        std::size_t start = 0;
        while (true) {
            auto dotpos = path.find('.', start);
            std::string key = path.substr(start, dotpos - start);
            if (key.empty())
                throw ValidationError("override \"" + ov + "\" has an empty path segment");
            if (dotpos == std::string::npos) {
                (*node)[key] = parsed;
                break;
            }
            node = &(*node)[key];
            start = dotpos + 1;
        }
    }
}

}  // namespace ptycho
