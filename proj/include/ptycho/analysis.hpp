#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "ptycho/complex_image.hpp"
#include "ptycho/masks.hpp"
#include "ptycho/parallel.hpp"
#include "ptycho/rng.hpp"
#include "ptycho/scheme.hpp"
#include "ptycho/solvers.hpp"

namespace ptycho {

/// B* x = conj(sgn(A* f)) .* (A* x), the adjoint of B = A diag{sgn(A* f)}.
/// Im(B* f) = 0 and Re(B* f) = |A* f|.
inline DataStack apply_B_adjoint(const MeasurementOperator& op, const ComplexImage& f,
                                 const ComplexImage& x) {
    DataStack sf = sgn(forward(op, f));
    DataStack y = forward(op, x);
    for (std::size_t t = 0; t < y.blocks.size(); ++t)
        for (std::size_t i = 0; i < y.blocks[t].size(); ++i)
            y.blocks[t][i] *= std::conj(sf.blocks[t][i]);
    return y;
}

enum class SpectralMethod { DenseSVD, PowerIteration };

/// Singular structure of the real matrix mapping G(x) to Re(B* x).
/// gamma = sigma[1] is the spectral gap governing local convergence rates
/// (DR: gamma, AP: gamma^2).
struct SpectralReport {
    double gamma = 0.0;
    std::vector<double> sigma;  ///< descending; dense method only fills all 2N
    SpectralMethod method = SpectralMethod::DenseSVD;
    double residual = 0.0;      ///< method self-consistency
};

struct PowerIterationError : NumericalError {
    PowerIterationError(const std::string& msg, double estimate)
        : NumericalError(msg), last_gamma(estimate) {}
    double last_gamma;
};

namespace detail {

inline std::size_t stack_entries(const DataStack& y) {
    std::size_t total = 0;
    for (const auto& blk : y.blocks) total += blk.size();
    return total;
}

/// Flatten a stack block-by-block, row-major within blocks.
inline void stack_to_vec(const DataStack& y, Eigen::VectorXcd& out) {
    out.resize(static_cast<Eigen::Index>(stack_entries(y)));
    Eigen::Index k = 0;
    for (const auto& blk : y.blocks)
        for (std::size_t i = 0; i < blk.size(); ++i) out[k++] = blk[i];
}

/// Fixed per-operator context for the real-linear map w -> Re(B* x(w)),
/// w = [Re x; Im x] in R^{2N}.
struct BMapContext {
    const MeasurementOperator* op;
    DataStack sgn_f;   // sgn(A* f)
    int n;
    Eigen::Index m_total;

    BMapContext(const MeasurementOperator& oper, const ComplexImage& f)
        : op(&oper), sgn_f(sgn(forward(oper, f))), n(oper.scheme.n),
          m_total(static_cast<Eigen::Index>(stack_entries(sgn_f))) {}

    ComplexImage image_from(const Eigen::VectorXd& w) const {
        ComplexImage x(n, n);
        Eigen::Index nn = static_cast<Eigen::Index>(x.size());
        for (Eigen::Index i = 0; i < nn; ++i) x[i] = {w[i], w[nn + i]};
        return x;
    }

    /// C w = Re(B* x).
    Eigen::VectorXd apply(const Eigen::VectorXd& w) const {
        ComplexImage x = image_from(w);
        DataStack y = forward(*op, x);
        Eigen::VectorXd out(m_total);
        Eigen::Index k = 0;
        for (std::size_t t = 0; t < y.blocks.size(); ++t) {
            const auto& sb = sgn_f.blocks[t];
            const auto& yb = y.blocks[t];
            for (std::size_t i = 0; i < yb.size(); ++i)
                out[k++] = (std::conj(sb[i]) * yb[i]).real();
        }
        return out;
    }

    /// C^T v = G(A (sgn(A* f) .* v)) for real v.
    Eigen::VectorXd apply_transpose(const Eigen::VectorXd& v) const {
        DataStack s;
        s.kind = DataKind::ComplexField;
        s.blocks.reserve(sgn_f.blocks.size());
        Eigen::Index k = 0;
        for (const auto& sb : sgn_f.blocks) {
            ComplexImage blk(sb.rows(), sb.cols());
            for (std::size_t i = 0; i < blk.size(); ++i) blk[i] = sb[i] * v[k++];
            s.blocks.push_back(std::move(blk));
        }
        ComplexImage x = adjoint(*op, s);
        Eigen::Index nn = static_cast<Eigen::Index>(x.size());
        Eigen::VectorXd out(2 * nn);
        for (Eigen::Index i = 0; i < nn; ++i) {
            out[i] = x[i].real();
            out[nn + i] = x[i].imag();
        }
        return out;
    }

    Eigen::VectorXd top_right_vector(const ComplexImage& f) const {
        Eigen::Index nn = static_cast<Eigen::Index>(f.size());
        Eigen::VectorXd w(2 * nn);
        for (Eigen::Index i = 0; i < nn; ++i) {
            w[i] = f[i].real();
            w[nn + i] = f[i].imag();
        }
        w.normalize();
        return w;
    }
};

}  // namespace detail

/// Materialize the 2n^2-column real matrix by probing every pixel with unit
/// real and imaginary impulses, then take its full SVD. Guarded to desk
/// sizes; larger problems should use compute_gamma_power.
inline SpectralReport compute_gamma_dense(const MeasurementOperator& op,
                                          const ComplexImage& f) {
    const Scheme& sc = op.scheme;
    bool tractable = (sc.overlap == Overlap::Half && sc.n <= 32) ||
                     (sc.overlap == Overlap::ThreeQuarter && sc.n <= 16);
    if (!tractable)
        throw ParameterError(
            "compute_gamma_dense: problem too large to materialize (n <= 32 for half "
            "overlap, n <= 16 for three-quarter); use compute_gamma_power instead");

    detail::BMapContext ctx(op, f);
    Eigen::Index nn = static_cast<Eigen::Index>(sc.n) * sc.n;
    Eigen::MatrixXd C(ctx.m_total, 2 * nn);

    // One forward per pixel: B*(i e_j) = i B*(e_j), so the imaginary-probe
    // column is -Im of the real-probe response. Probes parallelize across
    // columns, so the per-block parallelism inside forward is disabled.
    MeasurementOperator op_seq = op;
    op_seq.jobs = 1;
    parallel_for(0, static_cast<int>(nn), op.jobs, [&](int j) {
        ComplexImage probe(sc.n, sc.n, 0.0);
        probe[static_cast<std::size_t>(j)] = 1.0;
        DataStack y = forward(op_seq, probe);
        Eigen::Index k = 0;
        for (std::size_t t = 0; t < y.blocks.size(); ++t) {
            const auto& sb = ctx.sgn_f.blocks[t];
            const auto& yb = y.blocks[t];
            for (std::size_t i = 0; i < yb.size(); ++i) {
                cdouble bx = std::conj(sb[i]) * yb[i];
                C(k, j) = bx.real();
                C(k, nn + j) = -bx.imag();
                ++k;
            }
        }
    });

    // Tall matrix: QR first, then SVD of R (same singular values, and the
    // right vectors transfer directly).
    Eigen::MatrixXd R;
    if (C.rows() > 2 * C.cols()) {
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(C);
        R = qr.matrixQR().topRows(C.cols()).triangularView<Eigen::Upper>();
    } else {
        R = C;
    }
    Eigen::BDCSVD<Eigen::MatrixXd> svd(R, Eigen::ComputeThinV);

    SpectralReport rep;
    rep.method = SpectralMethod::DenseSVD;
    rep.sigma.assign(svd.singularValues().data(),
                     svd.singularValues().data() + svd.singularValues().size());
    rep.gamma = rep.sigma.size() > 1 ? rep.sigma[1] : 0.0;
    if (rep.sigma.size() > 1) {
        Eigen::VectorXd v2 = svd.matrixV().col(1);
        rep.residual = std::abs(ctx.apply(v2).norm() - rep.gamma);
    }
    return rep;
}

/// Block power iteration for gamma: iterates C^T C on a small block kept
/// orthogonal to the known top singular vector G(f), with Rayleigh-Ritz
/// extraction. Throws PowerIterationError (carrying the last estimate) if
/// the self-consistency residual does not reach tol within max_iters.
inline SpectralReport compute_gamma_power(const MeasurementOperator& op,
                                          const ComplexImage& f, int max_iters = 2000,
                                          double tol = 1e-9,
                                          std::uint64_t seed = 0x243F6A8885A308D3ull) {
    detail::BMapContext ctx(op, f);
    Eigen::Index dim = 2 * static_cast<Eigen::Index>(f.size());
    Eigen::VectorXd w1 = ctx.top_right_vector(f);

    const int block = static_cast<int>(std::min<Eigen::Index>(8, dim - 1));
    Eigen::MatrixXd V(dim, block);
    Rng rng(seed);
    for (Eigen::Index i = 0; i < dim; ++i)
        for (int j = 0; j < block; ++j) V(i, j) = rng.gaussian();

    auto deflate = [&](Eigen::MatrixXd& M) {
        for (int j = 0; j < M.cols(); ++j) M.col(j) -= w1 * (w1.dot(M.col(j)));
    };

    auto orthonormalize = [&](Eigen::MatrixXd& M) {
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(M);
        M = qr.householderQ() * Eigen::MatrixXd::Identity(dim, M.cols());
    };

    deflate(V);
    orthonormalize(V);

    SpectralReport rep;
    rep.method = SpectralMethod::PowerIteration;
    double gamma = 0.0;
    for (int it = 1; it <= max_iters; ++it) {
        Eigen::MatrixXd W(dim, block);
        for (int j = 0; j < block; ++j)
            W.col(j) = ctx.apply_transpose(ctx.apply(V.col(j)));
        deflate(W);

        // Rayleigh-Ritz on the current subspace.
        Eigen::MatrixXd H = V.transpose() * W;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (H + H.transpose()));
        Eigen::Index top;
        eig.eigenvalues().maxCoeff(&top);
        Eigen::VectorXd z = V * eig.eigenvectors().col(top);
        double theta = std::max(0.0, eig.eigenvalues()[top]);
        gamma = std::sqrt(theta);

        Eigen::VectorXd Tz = ctx.apply_transpose(ctx.apply(z));
        Tz -= w1 * w1.dot(Tz);
        double resid = (Tz - theta * z).norm();
        if (resid <= tol) {
            rep.gamma = gamma;
            rep.residual = resid;
            rep.sigma = {1.0, gamma};
            return rep;
        }
        V = W;
        orthonormalize(V);
    }
    throw PowerIterationError(
        "compute_gamma_power: no convergence within max_iters (last estimate " +
            std::to_string(gamma) + ")",
        gamma);
}

/// Rate-bound certificate from the second-smallest singular value test
/// vector: block row scaling v_j = a sin(2 pi j / q - c) with c a root of
/// p(c) = sum_j ||f_j||^2 sin(2 pi j / q - c). Certifies
/// ||Im(B* g)|| <= 2 sqrt(c_f) sin(pi / q) and the induced lower bound
/// gamma >= sqrt(1 - lhs^2).
struct BoundCertificate {
    int q = 0;
    double c_f = 0.0;        ///< max_j ||f_j||^2 / (2 min_j ||f_j||^2)
    double root_c = 0.0;     ///< root of p in [0, pi]
    double a = 0.0;          ///< normalization constant
    double lhs = 0.0;        ///< ||Im(B* g)||
    double rhs = 0.0;        ///< 2 sqrt(c_f) sin(pi / q)
    double gamma_lower = 0.0;
    bool degenerate = false;  ///< some row block carries zero energy
};

inline BoundCertificate certify_rate_bound(const MeasurementOperator& op,
                                           const ComplexImage& f, int q) {
    const Scheme& sc = op.scheme;
    if (q != sc.q) throw ParameterError("certify_rate_bound: q must match the scheme");
    if (f.rows() != sc.n || f.cols() != sc.n)
        throw DimensionError("certify_rate_bound: object must be n x n");

    BoundCertificate cert;
    cert.q = q;

    double fnorm = norm(f);
    if (fnorm == 0.0) throw ParameterError("certify_rate_bound: ||f|| = 0");
    ComplexImage fn(f.rows(), f.cols());
    for (std::size_t i = 0; i < f.size(); ++i) fn[i] = f[i] / fnorm;

    // Row-block energies of the q x q partition.
    int rows_per_block = sc.n / q;
    std::vector<double> energy(q, 0.0);
    for (int r = 0; r < sc.n; ++r) {
        int j = r / rows_per_block;
        for (int c = 0; c < sc.n; ++c) energy[j] += std::norm(fn(r, c));
    }
    double emin = *std::min_element(energy.begin(), energy.end());
    double emax = *std::max_element(energy.begin(), energy.end());
    if (emin == 0.0) {
        cert.degenerate = true;
        return cert;
    }
    cert.c_f = emax / (2.0 * emin);
    cert.rhs = 2.0 * std::sqrt(cert.c_f) * std::sin(std::numbers::pi / q);

    auto p = [&](double c) {
        double s = 0.0;
        for (int j = 1; j <= q; ++j)
            s += energy[j - 1] * std::sin(2.0 * std::numbers::pi * j / q - c);
        return s;
    };

    // p(0) = -p(pi), so [0, pi] brackets a root.
    double lo = 0.0, hi = std::numbers::pi;
    double plo = p(lo);
    if (plo == 0.0) {
        cert.root_c = 0.0;
    } else {
        while (hi - lo > 1e-12) {
            double mid = 0.5 * (lo + hi);
            double pm = p(mid);
            if (pm == 0.0) {
                lo = hi = mid;
                break;
            }
            if ((pm > 0.0) == (plo > 0.0)) {
                lo = mid;
                plo = pm;
            } else {
                hi = mid;
            }
        }
        cert.root_c = 0.5 * (lo + hi);
    }

    double denom = 0.0;
    for (int j = 1; j <= q; ++j) {
        double s = std::sin(2.0 * std::numbers::pi * j / q - cert.root_c);
        denom += energy[j - 1] * s * s;
    }
    if (denom == 0.0) {
        cert.degenerate = true;
        return cert;
    }
    cert.a = 1.0 / std::sqrt(denom);

    ComplexImage g(sc.n, sc.n);
    for (int r = 0; r < sc.n; ++r) {
        int j = r / rows_per_block + 1;
        double v = cert.a * std::sin(2.0 * std::numbers::pi * j / q - cert.root_c);
        for (int c = 0; c < sc.n; ++c) g(r, c) = v * fn(r, c);
    }

    DataStack bstar_g = apply_B_adjoint(op, f, g);
    double acc = 0.0;
    for (const auto& blk : bstar_g.blocks)
        for (std::size_t i = 0; i < blk.size(); ++i) {
            double im = blk[i].imag();
            acc += im * im;
        }
    cert.lhs = std::sqrt(acc);
    cert.gamma_lower = std::sqrt(std::max(0.0, 1.0 - cert.lhs * cert.lhs));
    return cert;
}

/// Conjugate inversion (Q x)_{ij} = conj(x_{m+1-i, m+1-j}): Fourier
/// magnitudes are invariant under it.
inline ComplexImage conjugate_inversion(const ComplexImage& x) {
    if (!x.is_square()) throw DimensionError("conjugate_inversion: image must be square");
    int m = x.rows();
    ComplexImage out(m, m);
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < m; ++c) out(r, c) = std::conj(x(m - 1 - r, m - 1 - c));
    return out;
}

struct TwinSymmetry {
    ComplexImage h;            ///< conj(Q mu) .* mu
    double twin_sign = 0.0;    ///< nearest +-1 to the common ratio h1 ./ h2
    double symmetry_residual = 0.0;
};

/// Quadrant statistics of h = conj(Q mu) .* mu without asserting the
/// Fresnel symmetry; the residual is O(1) for masks that lack it.
inline TwinSymmetry twin_symmetry_stats(const ComplexImage& mu) {
    if (!mu.is_square() || mu.rows() % 2 != 0)
        throw ParameterError("twin_symmetry_stats: mask side must be even");
    int m = mu.rows();
    int h = m / 2;
    ComplexImage qmu = conjugate_inversion(mu);
    ComplexImage hh(m, m);
    for (std::size_t i = 0; i < hh.size(); ++i) hh[i] = std::conj(qmu[i]) * mu[i];

    auto quad = [&](int r0, int c0) {
        ComplexImage q(h, h);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < h; ++c) q(r, c) = hh(r0 + r, c0 + c);
        return q;
    };
    ComplexImage h1 = quad(0, 0), h2 = quad(0, h), h3 = quad(h, 0), h4 = quad(h, h);

    // Least-squares scalar ratio h1 ./ h2, snapped to the nearest sign.
    cdouble ratio = dot(h2, h1) / dot(h2, h2);
    double s = ratio.real() >= 0.0 ? 1.0 : -1.0;

    double n1 = norm(h1);
    auto diff_norm = [&](const ComplexImage& a, const ComplexImage& b, double scale) {
        double acc = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) acc += std::norm(a[i] - scale * b[i]);
        return std::sqrt(acc);
    };
    double resid = std::max({diff_norm(h1, h4, 1.0), diff_norm(h1, h2, s),
                             diff_norm(h1, h3, s)}) /
                   n1;

    TwinSymmetry out;
    out.h = std::move(hh);
    out.twin_sign = s;
    out.symmetry_residual = resid;
    return out;
}

/// Verified quadrant symmetry h1 = h4 = s h2 = s h3 of a Fresnel mask with
/// integer rho. Errors if the mask does not satisfy it to 1e-10.
inline TwinSymmetry fresnel_h_symmetry(const ComplexImage& mu, double rho) {
    if (!mu.is_square() || mu.rows() % 2 != 0)
        throw ParameterError("fresnel_h_symmetry: mask side m must be even");
    if (std::abs(rho - std::round(rho)) > 1e-9)
        throw ParameterError("fresnel_h_symmetry: rho must be an integer");
    TwinSymmetry sym = twin_symmetry_stats(mu);
    if (sym.symmetry_residual > 1e-10)
        throw NumericalError("fresnel_h_symmetry: quadrant symmetry violated (residual " +
                             std::to_string(sym.symmetry_residual) + ")");
    return sym;
}

/// Twin object y = Q x .* conj(h) producing identical q = 2 ptychographic
/// data for an integer-rho Fresnel mask.
inline ComplexImage twin_image(const ComplexImage& x, const ComplexImage& mu, double rho) {
    if (!x.same_shape(mu))
        throw DimensionError("twin_image: object and mask must both be m x m (q = 2)");
    TwinSymmetry sym = fresnel_h_symmetry(mu, rho);
    ComplexImage qx = conjugate_inversion(x);
    ComplexImage y(x.rows(), x.cols());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = qx[i] * std::conj(sym.h[i]);
    return y;
}

}  // namespace ptycho
