#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "ptycho/analysis.hpp"
#include "ptycho/masks.hpp"
#include "ptycho/phantom.hpp"
#include "ptycho/scheme.hpp"

#include "oracles.hpp"

using namespace ptycho;

namespace {

struct Setup {
    MeasurementOperator op;
    ComplexImage f;
};

Setup rpp_setup(int n, int q, std::uint64_t mask_seed, std::uint64_t obj_seed) {
    Scheme s = build_scheme(n, q, Overlap::Half);
    MeasurementOperator op = make_operator(s, make_iid_mask(s.m, mask_seed), 1);
    ComplexImage f = make_rpp(ObjectSpec{n, 2.0 * std::numbers::pi, obj_seed});
    return {std::move(op), std::move(f)};
}

double stack_im_norm(const DataStack& y) {
    double acc = 0.0;
    for (const auto& blk : y.blocks)
        for (std::size_t i = 0; i < blk.size(); ++i) acc += blk[i].imag() * blk[i].imag();
    return std::sqrt(acc);
}

}  // namespace

TEST_CASE("B* f is the real data vector", "[analysis]") {
    Setup su = rpp_setup(16, 2, 1, 2);
    DataStack bf = apply_B_adjoint(su.op, su.f, su.f);
    DataStack b = measure(su.op, su.f);
    CHECK(stack_im_norm(bf) <= 1e-12 * norm(b));
    for (std::size_t t = 0; t < bf.blocks.size(); ++t)
        for (std::size_t i = 0; i < bf.blocks[t].size(); ++i)
            CHECK(std::abs(bf.blocks[t][i].real() - b.blocks[t][i].real()) <= 1e-12);
}

TEST_CASE("Im(B* x) is a contraction", "[analysis]") {
    Setup su = rpp_setup(16, 2, 3, 4);
    for (std::uint64_t seed : {5u, 6u, 7u}) {
        ComplexImage x = oracles::random_image(16, 16, seed);
        DataStack bx = apply_B_adjoint(su.op, su.f, x);
        CHECK(stack_im_norm(bx) <= norm(x) * (1.0 + 1e-12));
    }
}

TEST_CASE("dense spectral report has the proven structure", "[analysis]") {
    Setup su = rpp_setup(16, 2, 11, 12);
    SpectralReport rep = compute_gamma_dense(su.op, su.f);
    std::size_t dim = rep.sigma.size();
    REQUIRE(dim == 2u * 16u * 16u);

    CHECK(std::abs(rep.sigma.front() - 1.0) <= 1e-8);
    CHECK(std::abs(rep.sigma.back()) <= 1e-8);
    CHECK(rep.gamma < 1.0 - 1e-4);
    CHECK(rep.gamma == rep.sigma[1]);

    for (std::size_t k = 0; k < dim; ++k) {
        double pair = rep.sigma[k] * rep.sigma[k] +
                      rep.sigma[dim - 1 - k] * rep.sigma[dim - 1 - k];
        CHECK(std::abs(pair - 1.0) <= 1e-6);
    }
    CHECK(rep.residual <= 1e-8);
}

TEST_CASE("dense method is guarded to desk sizes", "[analysis]") {
    Setup su = rpp_setup(64, 4, 13, 14);
    CHECK_THROWS_WITH(compute_gamma_dense(su.op, su.f),
                      Catch::Matchers::ContainsSubstring("compute_gamma_power"));
}

TEST_CASE("power iteration matches the dense gamma", "[analysis]") {
    Setup su = rpp_setup(16, 2, 11, 12);
    SpectralReport dense = compute_gamma_dense(su.op, su.f);
    SpectralReport power = compute_gamma_power(su.op, su.f, 4000, 1e-9);
    CHECK(std::abs(power.gamma - dense.gamma) <= 1e-6);
    CHECK(power.gamma <= 1.0 + 1e-9);
    CHECK(power.residual <= 1e-9);

    SpectralReport power2 = compute_gamma_power(su.op, su.f, 4000, 1e-9, 777);
    CHECK(std::abs(power2.gamma - power.gamma) <= 1e-8);
}

TEST_CASE("gamma grows with q (rate bound trend)", "[analysis]") {
    ComplexImage f = make_rpp(ObjectSpec{16, 2.0 * std::numbers::pi, 21});
    Scheme s2 = build_scheme(16, 2, Overlap::Half);
    Scheme s8 = build_scheme(16, 8, Overlap::Half);
    MeasurementOperator op2 = make_operator(s2, make_iid_mask(s2.m, 22), 1);
    MeasurementOperator op8 = make_operator(s8, make_iid_mask(s8.m, 22), 1);
    double g2 = compute_gamma_dense(op2, f).gamma;
    double g8 = compute_gamma_dense(op8, f).gamma;
    CHECK(g2 < g8);
}

TEST_CASE("rate-bound certificate is consistent with the dense spectrum", "[analysis]") {
    Setup su = rpp_setup(16, 2, 31, 32);
    SpectralReport dense = compute_gamma_dense(su.op, su.f);
    BoundCertificate cert = certify_rate_bound(su.op, su.f, 2);
    REQUIRE_FALSE(cert.degenerate);
    CHECK(cert.lhs <= cert.rhs + 1e-10);
    CHECK(cert.gamma_lower <= dense.gamma + 1e-8);
    // lhs upper-bounds the second-smallest singular value
    double lam_2nm1 = dense.sigma[dense.sigma.size() - 2];
    CHECK(lam_2nm1 <= cert.lhs + 1e-8);
    // q >= 2 algebra: gamma_lower >= 1 - (2 c_f pi^2) / q^2
    double c_bound = 1.0 - 2.0 * cert.c_f * std::numbers::pi * std::numbers::pi / 4.0;
    CHECK(cert.gamma_lower >= c_bound - 1e-12);
}

TEST_CASE("certificate test vector is orthonormal to f", "[analysis]") {
    // Re-derive g from the reported (root_c, a) and check <g, f> = 0, ||g|| = 1.
    Setup su = rpp_setup(16, 4, 33, 34);
    BoundCertificate cert = certify_rate_bound(su.op, su.f, 4);
    REQUIRE_FALSE(cert.degenerate);

    double fnorm = norm(su.f);
    int rows_per_block = 16 / 4;
    ComplexImage g(16, 16);
    for (int r = 0; r < 16; ++r) {
        int j = r / rows_per_block + 1;
        double v = cert.a * std::sin(2.0 * std::numbers::pi * j / 4 - cert.root_c);
        for (int c = 0; c < 16; ++c) g(r, c) = v * su.f(r, c) / fnorm;
    }
    ComplexImage fn(16, 16);
    for (std::size_t i = 0; i < fn.size(); ++i) fn[i] = su.f[i] / fnorm;
    CHECK(std::abs(dot(g, fn)) <= 1e-10);
    CHECK(std::abs(norm(g) - 1.0) <= 1e-10);
}

TEST_CASE("uniform block energies give c_f = 1/2", "[analysis]") {
    int n = 16, q = 4;
    Scheme s = build_scheme(n, q, Overlap::Half);
    MeasurementOperator op = make_operator(s, make_iid_mask(s.m, 41), 1);
    // constant-modulus object: every row block carries the same energy
    ComplexImage f(n, n);
    Rng rng(42);
    for (std::size_t i = 0; i < f.size(); ++i)
        f[i] = std::polar(1.0, rng.uniform(2.0 * std::numbers::pi));
    BoundCertificate cert = certify_rate_bound(op, f, q);
    REQUIRE_FALSE(cert.degenerate);
    CHECK(cert.c_f == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("zero-energy row blocks degrade gracefully", "[analysis]") {
    int n = 16, q = 4;
    Scheme s = build_scheme(n, q, Overlap::Half);
    MeasurementOperator op = make_operator(s, make_iid_mask(s.m, 43), 1);
    ComplexImage f(n, n, 0.0);
    f(8, 8) = 1.0;  // all energy in one row block
    BoundCertificate cert = certify_rate_bound(op, f, q);
    CHECK(cert.degenerate);
}

TEST_CASE("conjugate inversion is an involution preserving Fourier magnitudes",
          "[analysis]") {
    ComplexImage x = oracles::random_image(8, 8, 51);
    ComplexImage qx = conjugate_inversion(x);
    CHECK(oracles::max_abs_diff(conjugate_inversion(qx), x) == 0.0);

    // real, centrally symmetric arrays are fixed points
    ComplexImage sym(6, 6);
    Rng rng(52);
    for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 6; ++c) {
            double v = rng.uniform01();
            sym(r, c) = v;
            sym(5 - r, 5 - c) = v;
        }
    CHECK(oracles::max_abs_diff(conjugate_inversion(sym), sym) == 0.0);

    ComplexImage fx = odft(x);
    ComplexImage fqx = odft(qx);
    for (std::size_t i = 0; i < fx.size(); ++i)
        CHECK(std::abs(std::abs(fx[i]) - std::abs(fqx[i])) <= 1e-12);
}

TEST_CASE("fresnel h-symmetry holds for integer rho", "[analysis]") {
    ComplexImage mu = make_fresnel_mask(8, 1.0);
    TwinSymmetry sym = fresnel_h_symmetry(mu, 1.0);
    CHECK(sym.symmetry_residual <= 1e-12);
    CHECK((sym.twin_sign == 1.0 || sym.twin_sign == -1.0));

    // rho = 0: h is identically one, sign +1
    TwinSymmetry plain = fresnel_h_symmetry(make_fresnel_mask(8, 0.0), 0.0);
    CHECK(plain.twin_sign == 1.0);
    for (std::size_t i = 0; i < plain.h.size(); ++i)
        CHECK(std::abs(plain.h[i] - cdouble{1.0, 0.0}) <= 1e-14);
}

TEST_CASE("fresnel h-symmetry fails for irrational rho", "[analysis]") {
    ComplexImage mu = make_fresnel_mask(8, 6.0 / (5.0 * std::numbers::pi));
    TwinSymmetry stats = twin_symmetry_stats(mu);
    CHECK(stats.symmetry_residual > 0.1);
    CHECK_THROWS_AS(fresnel_h_symmetry(mu, 6.0 / (5.0 * std::numbers::pi)),
                    ParameterError);
}

TEST_CASE("fresnel h-symmetry preconditions", "[analysis]") {
    CHECK_THROWS_AS(fresnel_h_symmetry(make_fresnel_mask(7, 1.0), 1.0), ParameterError);
    CHECK_THROWS_AS(fresnel_h_symmetry(make_fresnel_mask(8, 0.5), 0.5), ParameterError);
}

TEST_CASE("twin image produces identical q = 2 data", "[analysis]") {
    int n = 16;
    Scheme s = build_scheme(n, 2, Overlap::Half);
    ComplexImage mu = make_fresnel_mask(n, 1.0);
    MeasurementOperator op = make_operator(s, mu, 1);
    for (std::uint64_t seed : {61u, 62u}) {
        ComplexImage x = oracles::random_image(n, n, seed);
        ComplexImage y = twin_image(x, mu, 1.0);
        DataStack bx = measure(op, x);
        DataStack by = measure(op, y);
        double num = 0.0, den = 0.0;
        for (std::size_t t = 0; t < bx.blocks.size(); ++t)
            for (std::size_t i = 0; i < bx.blocks[t].size(); ++i) {
                double d = bx.blocks[t][i].real() - by.blocks[t][i].real();
                num += d * d;
                den += bx.blocks[t][i].real() * bx.blocks[t][i].real();
            }
        CHECK(std::sqrt(num / den) <= 1e-10);

        // the twin is a genuinely different object
        double re = detail::phase_optimal_re(x, y);
        CHECK(re > 0.1);
    }
}

TEST_CASE("twin of a real centrally symmetric object under the plain mask is itself",
          "[analysis]") {
    int n = 8;
    ComplexImage mu = make_fresnel_mask(n, 0.0);
    ComplexImage x(n, n);
    Rng rng(63);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            double v = rng.uniform01();
            x(r, c) = v;
            x(n - 1 - r, n - 1 - c) = v;
        }
    ComplexImage y = twin_image(x, mu, 0.0);
    CHECK(oracles::max_abs_diff(y, x) <= 1e-14);
}

TEST_CASE("twin twice preserves the modulus", "[analysis]") {
    int n = 16;
    ComplexImage mu = make_fresnel_mask(n, 2.0);
    ComplexImage x = oracles::random_image(n, n, 64);
    ComplexImage yy = twin_image(twin_image(x, mu, 2.0), mu, 2.0);
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(std::abs(std::abs(yy[i]) - std::abs(x[i])) <= 1e-10);
}
