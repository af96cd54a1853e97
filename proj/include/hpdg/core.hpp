#pragma once

#include <cmath>
#include <stdexcept>

namespace hpdg {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

/// Geometry of an axis-aligned square element: lower-left corner and side length.
/// The reference element is [-1,1]^2 with the affine map
///   x = x0 + h*(xi+1)/2,  y = y0 + h*(eta+1)/2.
struct ElementGeom {
    double x0 = 0.0;
    double y0 = 0.0;
    double h = 1.0;

    double to_ref_x(double x) const { return 2.0 * (x - x0) / h - 1.0; }
    double to_ref_y(double y) const { return 2.0 * (y - y0) / h - 1.0; }
    double to_phys_x(double xi) const { return x0 + 0.5 * h * (xi + 1.0); }
    double to_phys_y(double eta) const { return y0 + 0.5 * h * (eta + 1.0); }

    bool contains(Point p, double tol = 1e-12) const {
        return p.x >= x0 - tol && p.x <= x0 + h + tol && p.y >= y0 - tol &&
               p.y <= y0 + h + tol;
    }
};

} // namespace hpdg
