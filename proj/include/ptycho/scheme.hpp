#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ptycho/complex_image.hpp"
#include "ptycho/odft.hpp"
#include "ptycho/parallel.hpp"
#include "ptycho/rng.hpp"

namespace ptycho {

enum class Overlap { Half, ThreeQuarter };

inline std::string to_string(Overlap ov) {
    return ov == Overlap::Half ? "half" : "three_quarter";
}

/// Measurement geometry: q shifts per direction of an m x m mask domain
/// (m = 2n/q), stepping m/2 (50% overlap) or m/4 (75% overlap), with
/// periodic wraparound. Every object pixel is covered exactly `coverage`
/// times.
struct Scheme {
    int n = 0;
    int q = 0;
    int m = 0;
    Overlap overlap = Overlap::Half;
    std::vector<Grid> shifts;  ///< row-major in (k, l)

    int coverage() const { return overlap == Overlap::Half ? 4 : 16; }
};

inline Scheme build_scheme(int n, int q, Overlap overlap) {
    if (q < 2) throw ParameterError("build_scheme: q must be >= 2");
    if (n < 1) throw ParameterError("build_scheme: n must be >= 1");
    if ((2 * n) % q != 0 || ((2 * n) / q) % 2 != 0)
        throw ParameterError("build_scheme: 2n/q must be an even integer (n=" +
                             std::to_string(n) + ", q=" + std::to_string(q) + ")");
    int m = 2 * n / q;
    int step, per_dir;
    if (overlap == Overlap::Half) {
        step = m / 2;
        per_dir = q;
    } else {
        if (m % 4 != 0)
            throw ParameterError(
                "build_scheme: three-quarter overlap requires m = 2n/q divisible by 4 (m=" +
                std::to_string(m) + ")");
        step = m / 4;
        per_dir = 2 * q;
    }
    Scheme s;
    s.n = n;
    s.q = q;
    s.m = m;
    s.overlap = overlap;
    s.shifts.reserve(static_cast<std::size_t>(per_dir) * per_dir);
    for (int k = 0; k < per_dir; ++k)
        for (int l = 0; l < per_dir; ++l)
            s.shifts.push_back(Grid{step * k, step * l, m, m});
    return s;
}

enum class DataKind { ComplexField, Modulus };

/// Ordered stack of (2m-1) x (2m-1) frequency blocks, one per shift.
/// ComplexField holds pre-modulus fields; Modulus holds nonnegative reals
/// (stored in the real part).
struct DataStack {
    DataKind kind = DataKind::ComplexField;
    std::vector<ComplexImage> blocks;
};

inline double norm(const DataStack& y) {
    double s = 0.0;
    for (const auto& blk : y.blocks)
        for (std::size_t i = 0; i < blk.size(); ++i) s += std::norm(blk[i]);
    return std::sqrt(s);
}

inline cdouble dot(const DataStack& a, const DataStack& b) {
    if (a.blocks.size() != b.blocks.size())
        throw DimensionError("dot: block count mismatch");
    cdouble s = 0.0;
    for (std::size_t t = 0; t < a.blocks.size(); ++t) s += dot(a.blocks[t], b.blocks[t]);
    return s;
}

struct NoiseSpec {
    double nsr_target = 0.0;
    std::uint64_t seed = 0;
};

/// The stacked measurement map A* (forward) and its adjoint A. With the
/// unitary odft and nu = 1/sqrt(coverage), A* is isometric: A A* = I.
struct MeasurementOperator {
    Scheme scheme;
    ComplexImage mask;
    double nu = 0.0;
    int jobs = 1;  ///< per-block parallelism; results are order-independent
};

inline MeasurementOperator make_operator(Scheme scheme, ComplexImage mask, int jobs = 1) {
    if (mask.rows() != scheme.m || mask.cols() != scheme.m)
        throw DimensionError("make_operator: mask must be m x m with m = 2n/q");
    MeasurementOperator op;
    op.nu = 1.0 / std::sqrt(static_cast<double>(scheme.coverage()));
    op.scheme = std::move(scheme);
    op.mask = std::move(mask);
    op.jobs = jobs;
    return op;
}

/// A* x: per shift t, nu * odft(mask .* wrap_extract(x, t)).
inline DataStack forward(const MeasurementOperator& op, const ComplexImage& x) {
    if (x.rows() != op.scheme.n || x.cols() != op.scheme.n)
        throw DimensionError("forward: object must be n x n");
    int nblocks = static_cast<int>(op.scheme.shifts.size());
    DataStack y;
    y.kind = DataKind::ComplexField;
    y.blocks.resize(nblocks);
    parallel_for(0, nblocks, op.jobs, [&](int t) {
        ComplexImage patch = wrap_extract(x, op.scheme.shifts[t]);
        for (std::size_t i = 0; i < patch.size(); ++i) patch[i] *= op.mask[i];
        ComplexImage blk = odft(patch);
        for (std::size_t i = 0; i < blk.size(); ++i) blk[i] *= op.nu;
        y.blocks[t] = std::move(blk);
    });
    return y;
}

/// A y: sum over shifts of conj(mask) .* odft_adjoint(nu * block) embedded
/// periodically. The accumulation runs in shift order regardless of jobs.
inline ComplexImage adjoint(const MeasurementOperator& op, const DataStack& y) {
    int nblocks = static_cast<int>(op.scheme.shifts.size());
    if (static_cast<int>(y.blocks.size()) != nblocks)
        throw DimensionError("adjoint: block count does not match scheme");
    std::vector<ComplexImage> patches(nblocks);
    parallel_for(0, nblocks, op.jobs, [&](int t) {
        ComplexImage blk = y.blocks[t];
        for (std::size_t i = 0; i < blk.size(); ++i) blk[i] *= op.nu;
        ComplexImage patch = odft_adjoint(blk, op.scheme.m);
        for (std::size_t i = 0; i < patch.size(); ++i) patch[i] *= std::conj(op.mask[i]);
        patches[t] = std::move(patch);
    });
    ComplexImage acc(op.scheme.n, op.scheme.n, 0.0);
    for (int t = 0; t < nblocks; ++t) wrap_embed_add(acc, patches[t], op.scheme.shifts[t]);
    return acc;
}

inline DataStack modulus_of(const DataStack& y) {
    DataStack b;
    b.kind = DataKind::Modulus;
    b.blocks.reserve(y.blocks.size());
    for (const auto& blk : y.blocks) {
        ComplexImage mod(blk.rows(), blk.cols());
        for (std::size_t i = 0; i < blk.size(); ++i) mod[i] = std::abs(blk[i]);
        b.blocks.push_back(std::move(mod));
    }
    return b;
}

/// Modulus data b = |A* f|, optionally with additive complex Gaussian noise
/// rescaled so the realized NSR ||b - |A*f||| / ||A*f|| matches the target
/// to 0.1% (bisection on the noise scale).
inline DataStack measure(const MeasurementOperator& op, const ComplexImage& f,
                         const std::optional<NoiseSpec>& noise = std::nullopt) {
    DataStack y = forward(op, f);
    if (!noise || noise->nsr_target == 0.0) {
        if (noise && noise->nsr_target < 0.0)
            throw ParameterError("measure: nsr_target must be >= 0");
        return modulus_of(y);
    }
    if (noise->nsr_target < 0.0) throw ParameterError("measure: nsr_target must be >= 0");

    DataStack z;
    z.kind = DataKind::ComplexField;
    Rng rng(noise->seed);
    z.blocks.reserve(y.blocks.size());
    for (const auto& blk : y.blocks) {
        ComplexImage zb(blk.rows(), blk.cols());
        for (std::size_t i = 0; i < zb.size(); ++i) zb[i] = rng.cgaussian();
        z.blocks.push_back(std::move(zb));
    }

    double signal = norm(y);
    double znorm = norm(z);
    if (signal == 0.0) throw ParameterError("measure: zero signal, NSR undefined");

    auto realized = [&](double s) {
        double acc = 0.0;
        for (std::size_t t = 0; t < y.blocks.size(); ++t) {
            const auto& yb = y.blocks[t];
            const auto& zb = z.blocks[t];
            for (std::size_t i = 0; i < yb.size(); ++i) {
                double d = std::abs(yb[i] + s * zb[i]) - std::abs(yb[i]);
                acc += d * d;
            }
        }
        return std::sqrt(acc) / signal;
    };

    double target = noise->nsr_target;
    double lo = 0.0;
    double hi = target * signal / znorm;
    while (realized(hi) < target) hi *= 2.0;
    double scale = hi;
    for (int it = 0; it < 200; ++it) {
        scale = 0.5 * (lo + hi);
        double r = realized(scale);
        if (std::abs(r - target) <= 1e-3 * target) break;
        (r < target ? lo : hi) = scale;
    }

    DataStack b;
    b.kind = DataKind::Modulus;
    b.blocks.reserve(y.blocks.size());
    for (std::size_t t = 0; t < y.blocks.size(); ++t) {
        const auto& yb = y.blocks[t];
        const auto& zb = z.blocks[t];
        ComplexImage mod(yb.rows(), yb.cols());
        for (std::size_t i = 0; i < yb.size(); ++i)
            mod[i] = std::abs(yb[i] + scale * zb[i]);
        b.blocks.push_back(std::move(mod));
    }
    return b;
}

}  // namespace ptycho
