#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

#include "ptycho/complex_image.hpp"
#include "ptycho/rng.hpp"

namespace ptycho {

struct ObjectSpec {
    int n = 0;                    ///< side length in pixels
    double angle_range = 2.0 * std::numbers::pi;
    std::uint64_t seed = 0;
};

namespace detail {

struct Ellipse {
    double value, a, b, x0, y0, phi_deg;
};

/// Ten-ellipse Shepp-Logan head phantom (modified contrast values).
inline constexpr std::array<Ellipse, 10> kSheppLogan{{
    {1.0, 0.6900, 0.9200, 0.00, 0.0000, 0.0},
    {-0.8, 0.6624, 0.8740, 0.00, -0.0184, 0.0},
    {-0.2, 0.1100, 0.3100, 0.22, 0.0000, -18.0},
    {-0.2, 0.1600, 0.4100, -0.22, 0.0000, 18.0},
    {0.1, 0.2100, 0.2500, 0.00, 0.3500, 0.0},
    {0.1, 0.0460, 0.0460, 0.00, 0.1000, 0.0},
    {0.1, 0.0460, 0.0460, 0.00, -0.1000, 0.0},
    {0.1, 0.0460, 0.0230, -0.08, -0.6050, 0.0},
    {0.1, 0.0230, 0.0230, 0.00, -0.6050, 0.0},
    {0.1, 0.0230, 0.0460, 0.06, -0.6050, 0.0},
}};

}  // namespace detail

/// Shepp-Logan modulus rasterized on pixel centers over [-1, 1]^2.
inline ComplexImage shepp_logan(int n) {
    if (n < 1) throw ParameterError("shepp_logan: n must be >= 1");
    ComplexImage img(n, n, 0.0);
    for (int r = 0; r < n; ++r) {
        double y = (n - (2.0 * r + 1.0)) / n;
        for (int c = 0; c < n; ++c) {
            double x = (2.0 * c + 1.0 - n) / n;
            double v = 0.0;
            for (const auto& e : detail::kSheppLogan) {
                double phi = e.phi_deg * std::numbers::pi / 180.0;
                double dx = x - e.x0, dy = y - e.y0;
                double u = dx * std::cos(phi) + dy * std::sin(phi);
                double w = -dx * std::sin(phi) + dy * std::cos(phi);
                if ((u * u) / (e.a * e.a) + (w * w) / (e.b * e.b) <= 1.0) v += e.value;
            }
            img(r, c) = v;
        }
    }
    return img;
}

/// Randomly phased phantom: Shepp-Logan modulus, pixel phases i.i.d.
/// uniform on [0, angle_range]. The modulus depends only on n; zero pixels
/// stay exactly zero (loose support).
inline ComplexImage make_rpp(const ObjectSpec& spec) {
    if (spec.n < 8) throw ParameterError("make_rpp: n must be >= 8");
    if (spec.angle_range < 0.0 || spec.angle_range > 2.0 * std::numbers::pi)
        throw ParameterError("make_rpp: angle_range must lie in [0, 2 pi]");
    ComplexImage img = shepp_logan(spec.n);
    Rng rng(spec.seed);
    for (std::size_t i = 0; i < img.size(); ++i) {
        double theta = rng.uniform01() * spec.angle_range;
        img[i] = img[i].real() * std::polar(1.0, theta);
        if (img[i].real() == 0.0 && img[i].imag() == 0.0) img[i] = 0.0;
    }
    return img;
}

}  // namespace ptycho
