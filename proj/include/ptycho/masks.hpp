#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

#include "ptycho/complex_image.hpp"
#include "ptycho/rng.hpp"

namespace ptycho {

enum class MaskKind { IidRandom, CorrelatedRandom, Fresnel, Plain };

struct MaskSpec {
    MaskKind kind = MaskKind::IidRandom;
    int m = 0;                          ///< side length in pixels
    int ell = 1;                        ///< correlation length (CorrelatedRandom)
    double rho = 0.0;                   ///< Fresnel parameter
    std::array<double, 2> beta{0.0, 0.0};
    std::uint64_t seed = 0;
};

/// e^{i theta} with theta i.i.d. uniform on [0, 2 pi), drawn row-major.
inline ComplexImage make_iid_mask(int m, std::uint64_t seed) {
    if (m < 1) throw ParameterError("make_iid_mask: m must be >= 1");
    Rng rng(seed);
    ComplexImage mask(m, m);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        double theta = rng.uniform(2.0 * std::numbers::pi);
        mask[i] = std::polar(1.0, theta);
    }
    return mask;
}

/// Correlated phase mask: the i.i.d. complex mask convolved periodically
/// with the box {max(|k1|,|k2|) <= ell/2}, then renormalized pixelwise to
/// unit modulus. The box lives on the torus (offsets taken as centered
/// residues), so ell = m averages every pixel exactly once and ell = 1 is
/// the identity. sgn(0) = 1: exactly-zero sums map to value 1.
inline ComplexImage make_correlated_mask(int m, int ell, std::uint64_t seed) {
    if (m < 1) throw ParameterError("make_correlated_mask: m must be >= 1");
    if (ell < 1 || ell > m)
        throw ParameterError("make_correlated_mask: require 1 <= ell <= m");
    ComplexImage iid = make_iid_mask(m, seed);
    if (ell == 1) return iid;

    std::vector<int> taps;
    for (int r = 0; r < m; ++r) {
        int s = r <= m / 2 ? r : r - m;  // centered residue
        if (std::abs(s) * 2 <= ell) taps.push_back(r);
    }

    // The box is separable: two 1-D circular passes.
    ComplexImage pass(m, m, 0.0);
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < m; ++c) {
            cdouble s = 0.0;
            for (int t : taps) s += iid(r, wrap_index(c + t, m));
            pass(r, c) = s;
        }
    ComplexImage mask(m, m);
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < m; ++c) {
            cdouble s = 0.0;
            for (int t : taps) s += pass(wrap_index(r + t, m), c);
            double mod = std::abs(s);
            mask(r, c) = mod == 0.0 ? cdouble{1.0, 0.0} : s / mod;
        }
    return mask;
}

/// Fresnel phase mask exp{i pi rho ((k1-b1)^2 + (k2-b2)^2) / m} with
/// 1-based pixel coordinates k1, k2. rho = 0 gives the plain mask.
inline ComplexImage make_fresnel_mask(int m, double rho,
                                      std::array<double, 2> beta = {0.0, 0.0}) {
    if (m < 1) throw ParameterError("make_fresnel_mask: m must be >= 1");
    ComplexImage mask(m, m);
    for (int r = 0; r < m; ++r) {
        double k1 = (r + 1) - beta[0];
        for (int c = 0; c < m; ++c) {
            double k2 = (c + 1) - beta[1];
            double phase = std::numbers::pi * rho * (k1 * k1 + k2 * k2) / m;
            mask(r, c) = std::polar(1.0, phase);
        }
    }
    return mask;
}

inline ComplexImage make_mask(const MaskSpec& spec) {
    switch (spec.kind) {
        case MaskKind::IidRandom:
            return make_iid_mask(spec.m, spec.seed);
        case MaskKind::CorrelatedRandom:
            return make_correlated_mask(spec.m, spec.ell, spec.seed);
        case MaskKind::Fresnel:
            return make_fresnel_mask(spec.m, spec.rho, spec.beta);
        case MaskKind::Plain:
            return make_fresnel_mask(spec.m, 0.0, spec.beta);
    }
    throw ParameterError("make_mask: unknown mask kind");
}

inline std::string to_string(MaskKind kind) {
    switch (kind) {
        case MaskKind::IidRandom: return "iid";
        case MaskKind::CorrelatedRandom: return "correlated";
        case MaskKind::Fresnel: return "fresnel";
        case MaskKind::Plain: return "plain";
    }
    return "?";
}

}  // namespace ptycho
