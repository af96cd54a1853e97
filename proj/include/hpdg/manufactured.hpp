#pragma once

#include <cmath>
#include <functional>

namespace hpdg {

/// A smooth scalar field with closed-form derivatives up to second order.
struct ScalarField {
    std::function<double(double, double)> value, dx, dy, dxx, dxy, dyy;

    double laplacian(double x, double y) const { return dxx(x, y) + dyy(x, y); }
};

/// u(x,y) = x(1-x) y(1-y): a polynomial of total degree 4 with zero trace.
inline ScalarField bubble_solution() {
    ScalarField f;
    f.value = [](double x, double y) { return x * (1 - x) * y * (1 - y); };
    f.dx = [](double x, double y) { return (1 - 2 * x) * y * (1 - y); };
    f.dy = [](double x, double y) { return x * (1 - x) * (1 - 2 * y); };
    f.dxx = [](double, double y) { return -2 * y * (1 - y); };
    f.dyy = [](double x, double) { return -2 * x * (1 - x); };
    f.dxy = [](double x, double y) { return (1 - 2 * x) * (1 - 2 * y); };
    return f;
}

/// u(x,y) = exp(xy) sin(pi x) sin(pi y).
inline ScalarField exp_sine_solution() {
    auto E = [](double x, double y) { return std::exp(x * y); };
    auto S = [](double x, double y) { return std::sin(M_PI * x) * std::sin(M_PI * y); };
    auto Sx = [](double x, double y) { return M_PI * std::cos(M_PI * x) * std::sin(M_PI * y); };
    auto Sy = [](double x, double y) { return M_PI * std::sin(M_PI * x) * std::cos(M_PI * y); };
    auto Sxy = [](double x, double y) { return M_PI * M_PI * std::cos(M_PI * x) * std::cos(M_PI * y); };

    ScalarField f;
    f.value = [=](double x, double y) { return E(x, y) * S(x, y); };
    f.dx = [=](double x, double y) { return E(x, y) * (y * S(x, y) + Sx(x, y)); };
    f.dy = [=](double x, double y) { return E(x, y) * (x * S(x, y) + Sy(x, y)); };
    f.dxx = [=](double x, double y) {
        return E(x, y) * (y * y * S(x, y) + 2 * y * Sx(x, y) - M_PI * M_PI * S(x, y));
    };
    f.dyy = [=](double x, double y) {
        return E(x, y) * (x * x * S(x, y) + 2 * x * Sy(x, y) - M_PI * M_PI * S(x, y));
    };
    f.dxy = [=](double x, double y) {
        return E(x, y) * (x * y * S(x, y) + x * Sx(x, y) + y * Sy(x, y) + S(x, y) + Sxy(x, y));
    };
    return f;
}

} // namespace hpdg
