#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ptycho/complex_image.hpp"
#include "ptycho/masks.hpp"
#include "ptycho/parallel.hpp"
#include "ptycho/phantom.hpp"
#include "ptycho/rng.hpp"
#include "ptycho/scheme.hpp"
#include "ptycho/solvers.hpp"

namespace ptycho {

/// RE: min over real alpha of ||f - e^{i alpha} f_hat|| / ||f||, evaluated
/// at the closed-form optimal phase alpha* = arg<f_hat, f>.
inline double relative_error(const ComplexImage& f, const ComplexImage& f_hat) {
    if (!f.same_shape(f_hat)) throw DimensionError("relative_error: shape mismatch");
    return detail::phase_optimal_re(f, f_hat);
}

/// RR: || b - |A* f_hat| || / ||b||.
inline double relative_residual(const DataStack& b, const MeasurementOperator& op,
                                const ComplexImage& f_hat) {
    double nb = norm(b);
    if (nb == 0.0) throw ParameterError("relative_residual: ||b|| = 0 is undefined");
    return detail::residual_to(b, forward(op, f_hat)) / nb;
}

struct SchemeSpec {
    int n = 0;
    int q = 0;
    Overlap overlap = Overlap::Half;
};

enum class SweepParam { Rho, Q, Nsr, AngleRange };

inline std::string to_string(SweepParam p) {
    switch (p) {
        case SweepParam::Rho: return "rho";
        case SweepParam::Q: return "q";
        case SweepParam::Nsr: return "nsr";
        case SweepParam::AngleRange: return "angle_range";
    }
    return "?";
}

struct SweepSpec {
    SweepParam parameter = SweepParam::Rho;
    std::vector<double> values;
    int repeats = 1;  ///< independent noise draws per point (nsr sweeps)
};

struct ExperimentConfig {
    ObjectSpec object;
    MaskSpec mask;
    SchemeSpec scheme;
    std::optional<NoiseSpec> noise;
    SolverConfig solver;
    std::optional<SweepSpec> sweep;
    std::string out_dir = "out";
};

struct PipelineResult {
    ComplexImage f;
    ComplexImage f_hat;
    ComplexImage mask;
    DataStack b;
    SolverTrace trace;
    double re = std::numeric_limits<double>::quiet_NaN();
    double rr = std::numeric_limits<double>::quiet_NaN();
};

/// Build object, mask, operator and data from a config and run the solver.
inline PipelineResult run_pipeline(const ExperimentConfig& cfg, int jobs = 1) {
    PipelineResult out;
    out.f = make_rpp(cfg.object);
    out.mask = make_mask(cfg.mask);
    Scheme scheme = build_scheme(cfg.scheme.n, cfg.scheme.q, cfg.scheme.overlap);
    MeasurementOperator op = make_operator(scheme, out.mask, jobs);
    out.b = measure(op, out.f, cfg.noise);
    RunResult run_out = run(op, out.b, cfg.solver, &out.f);
    out.f_hat = std::move(run_out.x_hat);
    out.trace = std::move(run_out.trace);
    out.re = relative_error(out.f, out.f_hat);
    out.rr = relative_residual(out.b, op, out.f_hat);
    return out;
}

struct RhoRow {
    double rho;
    double re;
    double rr;
};

/// Fig. 2-style sweep: rerun the pipeline with the Fresnel parameter swept,
/// recording final RE/RR per value.
inline std::vector<RhoRow> run_rho_sweep(const ExperimentConfig& cfg, int jobs = 1) {
    if (!cfg.sweep || cfg.sweep->parameter != SweepParam::Rho)
        throw ParameterError("run_rho_sweep: sweep.parameter must be \"rho\"");
    if (cfg.mask.kind != MaskKind::Fresnel)
        throw ParameterError("run_rho_sweep: mask.kind must be \"fresnel\"");
    const auto& values = cfg.sweep->values;
    std::vector<RhoRow> rows(values.size());
    parallel_for(0, static_cast<int>(values.size()), jobs, [&](int i) {
        ExperimentConfig point = cfg;
        point.sweep.reset();
        point.mask.rho = values[i];
        PipelineResult r = run_pipeline(point, 1);
        rows[i] = {values[i], r.re, r.rr};
    });
    return rows;
}

struct QTraceRow {
    int q;
    int iter;  ///< -1 flags an inadmissible q that was skipped
    double re;
};

/// Fig. 4-style sweep: per q, rebuild the scheme and regenerate the mask at
/// m = 2n/q (correlated masks keep m/ell fixed, Fresnel masks keep rho),
/// recording the RE trace. Inadmissible q values produce a warning row.
inline std::vector<QTraceRow> run_q_sweep(const ExperimentConfig& cfg, int jobs = 1) {
    if (!cfg.sweep || cfg.sweep->parameter != SweepParam::Q)
        throw ParameterError("run_q_sweep: sweep.parameter must be \"q\"");
    const auto& values = cfg.sweep->values;
    std::vector<std::vector<QTraceRow>> per_point(values.size());
    parallel_for(0, static_cast<int>(values.size()), jobs, [&](int i) {
        int q = static_cast<int>(values[i]);
        ExperimentConfig point = cfg;
        point.sweep.reset();
        point.scheme.q = q;
        bool admissible = q == values[i] && q >= 2 && (2 * cfg.scheme.n) % q == 0 &&
                          ((2 * cfg.scheme.n) / q) % 2 == 0;
        if (admissible && cfg.scheme.overlap == Overlap::ThreeQuarter)
            admissible = ((2 * cfg.scheme.n) / q) % 4 == 0;
        if (!admissible) {
            per_point[i] = {{q, -1, std::numeric_limits<double>::quiet_NaN()}};
            return;
        }
        int m = 2 * cfg.scheme.n / q;
        point.mask.m = m;
        if (cfg.mask.kind == MaskKind::CorrelatedRandom && cfg.mask.m > 0) {
            // Preserve the m/ell complexity ratio across q.
            long scaled = static_cast<long>(m) * cfg.mask.ell;
            point.mask.ell = std::max(1, static_cast<int>(scaled / cfg.mask.m));
        }
        PipelineResult r = run_pipeline(point, 1);
        per_point[i].reserve(r.trace.size());
        for (const auto& row : r.trace) per_point[i].push_back({q, row.iter, row.re});
    });
    std::vector<QTraceRow> rows;
    for (const auto& p : per_point) rows.insert(rows.end(), p.begin(), p.end());
    return rows;
}

struct NsrRow {
    double nsr;
    double re;
};

/// Fig. 5-style sweep: per target NSR (and repeat), draw calibrated noise
/// from a stream derived from (noise seed, point, repeat) and record the
/// final RE.
inline std::vector<NsrRow> run_nsr_sweep(const ExperimentConfig& cfg, int jobs = 1) {
    if (!cfg.sweep || cfg.sweep->parameter != SweepParam::Nsr)
        throw ParameterError("run_nsr_sweep: sweep.parameter must be \"nsr\"");
    const auto& values = cfg.sweep->values;
    for (double v : values)
        if (v < 0.0) throw ParameterError("run_nsr_sweep: nsr values must be >= 0");
    int repeats = std::max(1, cfg.sweep->repeats);
    std::uint64_t base_seed = cfg.noise ? cfg.noise->seed : 0;
    int total = static_cast<int>(values.size()) * repeats;
    std::vector<NsrRow> rows(total);
    parallel_for(0, total, jobs, [&](int idx) {
        int i = idx / repeats;
        ExperimentConfig point = cfg;
        point.sweep.reset();
        point.noise = NoiseSpec{values[i], mix_seed(base_seed, static_cast<std::uint64_t>(idx))};
        if (values[i] == 0.0) point.noise.reset();
        PipelineResult res = run_pipeline(point, 1);
        rows[idx] = {values[i], res.re};
    });
    return rows;
}

struct AngleTraceRow {
    double angle_range;
    int iter;
    double re;
};

/// Fig. 3-style sweep: RE traces for objects of varying phase angle range.
inline std::vector<AngleTraceRow> run_angle_sweep(const ExperimentConfig& cfg,
                                                  int jobs = 1) {
    if (!cfg.sweep || cfg.sweep->parameter != SweepParam::AngleRange)
        throw ParameterError("run_angle_sweep: sweep.parameter must be \"angle_range\"");
    const auto& values = cfg.sweep->values;
    std::vector<std::vector<AngleTraceRow>> per_point(values.size());
    parallel_for(0, static_cast<int>(values.size()), jobs, [&](int i) {
        ExperimentConfig point = cfg;
        point.sweep.reset();
        point.object.angle_range = values[i];
        PipelineResult r = run_pipeline(point, 1);
        per_point[i].reserve(r.trace.size());
        for (const auto& row : r.trace)
            per_point[i].push_back({values[i], row.iter, row.re});
    });
    std::vector<AngleTraceRow> rows;
    for (const auto& p : per_point) rows.insert(rows.end(), p.begin(), p.end());
    return rows;
}

}  // namespace ptycho
