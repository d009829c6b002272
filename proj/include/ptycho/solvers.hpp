#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ptycho/complex_image.hpp"
#include "ptycho/rng.hpp"
#include "ptycho/scheme.hpp"

namespace ptycho {

/// Entrywise y/|y| with sgn(0) = 1.
inline cdouble sgn(cdouble v) {
    double a = std::abs(v);
    return a == 0.0 ? cdouble{1.0, 0.0} : v / a;
}

inline DataStack sgn(const DataStack& y) {
    DataStack out;
    out.kind = DataKind::ComplexField;
    out.blocks.reserve(y.blocks.size());
    for (const auto& blk : y.blocks) {
        ComplexImage s(blk.rows(), blk.cols());
        for (std::size_t i = 0; i < blk.size(); ++i) s[i] = sgn(blk[i]);
        out.blocks.push_back(std::move(s));
    }
    return out;
}

/// P1: orthogonal projection onto the range of A*, i.e. A* A y.
inline DataStack project_range(const MeasurementOperator& op, const DataStack& y) {
    return forward(op, adjoint(op, y));
}

/// P2: metric projection onto {|y| = b}, i.e. b .* sgn(y).
inline DataStack project_modulus(const DataStack& b, const DataStack& y) {
    if (b.blocks.size() != y.blocks.size())
        throw DimensionError("project_modulus: block count mismatch");
    DataStack out;
    out.kind = DataKind::ComplexField;
    out.blocks.reserve(y.blocks.size());
    for (std::size_t t = 0; t < y.blocks.size(); ++t) {
        const auto& bb = b.blocks[t];
        const auto& yb = y.blocks[t];
        if (!bb.same_shape(yb)) throw DimensionError("project_modulus: block shape mismatch");
        ComplexImage o(yb.rows(), yb.cols());
        for (std::size_t i = 0; i < yb.size(); ++i) o[i] = bb[i].real() * sgn(yb[i]);
        out.blocks.push_back(std::move(o));
    }
    return out;
}

/// One alternating-projections step y' = P1 P2 y.
inline DataStack ap_step(const MeasurementOperator& op, const DataStack& b,
                         const DataStack& y) {
    return project_range(op, project_modulus(b, y));
}

/// One Douglas-Rachford step y' = y + P1(2 P2 y - y) - P2 y.
inline DataStack dr_step(const MeasurementOperator& op, const DataStack& b,
                         const DataStack& y) {
    DataStack p2 = project_modulus(b, y);
    DataStack refl = p2;
    for (std::size_t t = 0; t < refl.blocks.size(); ++t)
        for (std::size_t i = 0; i < refl.blocks[t].size(); ++i)
            refl.blocks[t][i] = 2.0 * p2.blocks[t][i] - y.blocks[t][i];
    DataStack p1 = project_range(op, refl);
    DataStack out = y;
    for (std::size_t t = 0; t < out.blocks.size(); ++t)
        for (std::size_t i = 0; i < out.blocks[t].size(); ++i)
            out.blocks[t][i] += p1.blocks[t][i] - p2.blocks[t][i];
    return out;
}

struct SolverConfig {
    int dr_iters = 300;
    int ap_iters = 100;
    std::uint64_t init_seed = 0;
    std::optional<double> stop_rr;  ///< early-stop residual threshold, off by default
};

inline void validate(const SolverConfig& cfg) {
    if (cfg.dr_iters < 0 || cfg.ap_iters < 0)
        throw ParameterError("SolverConfig: iteration counts must be >= 0");
    if (cfg.dr_iters + cfg.ap_iters < 1)
        throw ParameterError("SolverConfig: dr_iters + ap_iters must be >= 1");
    if (cfg.stop_rr && *cfg.stop_rr < 0.0)
        throw ParameterError("SolverConfig: stop_rr must be >= 0");
}

enum class Algo { DR, AP };

struct TraceRow {
    Algo algo;
    int iter;        ///< 1-based over the whole run
    double re;       ///< NaN when no reference object was supplied
    double rr;
    double norm_x;
    double norm_b;
};

using SolverTrace = std::vector<TraceRow>;

struct RunResult {
    ComplexImage x_hat;
    SolverTrace trace;
};

namespace detail {

/// Phase-optimal relative error min_alpha ||f - e^{i alpha} g|| / ||f||,
/// evaluated at the closed-form minimizer alpha* = arg<g, f>.
inline double phase_optimal_re(const ComplexImage& f, const ComplexImage& g) {
    cdouble ip = dot(g, f);
    double fnorm = norm(f);
    if (fnorm == 0.0) throw ParameterError("relative_error: ||f|| = 0 is undefined");
    cdouble phase = std::abs(ip) == 0.0 ? cdouble{1.0, 0.0} : ip / std::abs(ip);
    double acc = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) acc += std::norm(f[i] - phase * g[i]);
    return std::sqrt(acc) / fnorm;
}

inline double residual_to(const DataStack& b, const DataStack& y) {
    double acc = 0.0;
    for (std::size_t t = 0; t < b.blocks.size(); ++t)
        for (std::size_t i = 0; i < b.blocks[t].size(); ++i) {
            double d = b.blocks[t][i].real() - std::abs(y.blocks[t][i]);
            acc += d * d;
        }
    return std::sqrt(acc);
}

}  // namespace detail

/// DR-initialized AP pipeline in the Fourier domain. Starts from a seeded
/// complex-Gaussian object scaled to ||x0|| = ||b||, runs dr_iters DR steps
/// then ap_iters AP steps, and returns x_hat = A y_final with the
/// per-iteration trace.
inline RunResult run(const MeasurementOperator& op, const DataStack& b,
                     const SolverConfig& cfg,
                     const ComplexImage* f_true = nullptr) {
    validate(cfg);
    double norm_b = norm(b);

    ComplexImage x0(op.scheme.n, op.scheme.n);
    Rng rng(cfg.init_seed);
    for (std::size_t i = 0; i < x0.size(); ++i) x0[i] = rng.cgaussian();
    double nx0 = norm(x0);
    if (nx0 > 0.0 && norm_b > 0.0)
        for (std::size_t i = 0; i < x0.size(); ++i) x0[i] *= norm_b / nx0;

    DataStack y = forward(op, x0);
    RunResult result;
    result.trace.reserve(cfg.dr_iters + cfg.ap_iters);

    int iter = 0;
    bool stopped = false;
    for (int phase = 0; phase < 2 && !stopped; ++phase) {
        Algo algo = phase == 0 ? Algo::DR : Algo::AP;
        int count = phase == 0 ? cfg.dr_iters : cfg.ap_iters;
        for (int k = 0; k < count; ++k) {
            DataStack p2 = project_modulus(b, y);
            ComplexImage x = adjoint(op, p2);      // = A y_next for both algorithms
            DataStack p1p2 = forward(op, x);       // P1 P2 y
            if (algo == Algo::AP) {
                y = std::move(p1p2);
            } else {
                DataStack p1y = project_range(op, y);
                for (std::size_t t = 0; t < y.blocks.size(); ++t)
                    for (std::size_t i = 0; i < y.blocks[t].size(); ++i)
                        y.blocks[t][i] += 2.0 * p1p2.blocks[t][i] - p1y.blocks[t][i] -
                                          p2.blocks[t][i];
            }
            TraceRow row;
            row.algo = algo;
            row.iter = ++iter;
            row.re = f_true ? detail::phase_optimal_re(*f_true, x)
                            : std::numeric_limits<double>::quiet_NaN();
            row.rr = norm_b > 0.0 ? detail::residual_to(b, algo == Algo::AP ? y : p1p2) / norm_b
                                  : 0.0;
            row.norm_x = norm(x);
            row.norm_b = norm_b;
            result.trace.push_back(row);
            if (cfg.stop_rr && row.rr < *cfg.stop_rr) {
                stopped = true;
                break;
            }
        }
    }
    result.x_hat = adjoint(op, y);
    return result;
}

struct ApFixedPointReport {
    double norm_x = 0.0;
    double norm_b = 0.0;
    bool is_solution = false;
};

/// Norm criterion distinguishing the true solution among AP fixed points:
/// all fixed points satisfy ||x|| <= ||b||, with equality only at the
/// solution.
inline ApFixedPointReport ap_fixed_point_test(const MeasurementOperator& op,
                                              const DataStack& b,
                                              const ComplexImage& x) {
    (void)op;
    ApFixedPointReport rep;
    rep.norm_x = norm(x);
    rep.norm_b = norm(b);
    rep.is_solution = std::abs(rep.norm_x - rep.norm_b) <= 1e-8 * rep.norm_b;
    return rep;
}

}  // namespace ptycho
