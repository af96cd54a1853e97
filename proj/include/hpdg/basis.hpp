#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "hpdg/core.hpp"

namespace hpdg {

namespace detail {

inline constexpr int kMaxDegree = 48;

/// Values and first/second derivatives of the L2([-1,1])-orthonormal Legendre
/// polynomials L_k(x) = sqrt(k+1/2) P_k(x), k = 0..pmax, at a single point.
struct Legendre1D {
    std::array<double, kMaxDegree + 1> v, d1, d2;

    Legendre1D(double x, int pmax) {
        // three-term recurrences for P_k and its derivatives
        std::array<double, kMaxDegree + 1> p, dp, ddp;
        p[0] = 1.0;
        dp[0] = 0.0;
        ddp[0] = 0.0;
        if (pmax >= 1) {
            p[1] = x;
            dp[1] = 1.0;
            ddp[1] = 0.0;
        }
        for (int k = 1; k < pmax; ++k) {
            p[k + 1] = ((2 * k + 1) * x * p[k] - k * p[k - 1]) / (k + 1);
            dp[k + 1] = dp[k - 1] + (2 * k + 1) * p[k];
            ddp[k + 1] = ddp[k - 1] + (2 * k + 1) * dp[k];
        }
        for (int k = 0; k <= pmax; ++k) {
            const double scale = std::sqrt(k + 0.5);
            v[k] = scale * p[k];
            d1[k] = scale * dp[k];
            d2[k] = scale * ddp[k];
        }
    }
};

} // namespace detail

/// Gauss-Legendre rule on [-1,1]: exact for polynomials of degree 2m-1.
struct QuadratureRule1D {
    std::vector<double> points;
    std::vector<double> weights;
    int exactness = 0;
};

/// Tensor Gauss-Legendre rule on the reference square [-1,1]^2,
/// exact for partial degree 2m-1 per axis.
struct QuadratureRule {
    std::vector<Point> points;
    std::vector<double> weights;
    int exactness = 0;

    std::size_t size() const { return points.size(); }
};

inline QuadratureRule1D gauss_rule_1d(int m) {
    if (m < 1)
        throw std::invalid_argument("gauss_rule_1d: need at least one point");
    QuadratureRule1D rule;
    rule.points.resize(m);
    rule.weights.resize(m);
    rule.exactness = 2 * m - 1;
    for (int i = 0; i < m; ++i) {
        // Newton iteration on P_m from the Chebyshev-like initial guess
        double x = std::cos(M_PI * (i + 0.75) / (m + 0.5));
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 1; k < m; ++k) {
                double p2 = ((2 * k + 1) * x * p1 - k * p0) / (k + 1);
                p0 = p1;
                p1 = p2;
            }
            double dp = m * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15)
                break;
        }
        double p0 = 1.0, p1 = x;
        for (int k = 1; k < m; ++k) {
            double p2 = ((2 * k + 1) * x * p1 - k * p0) / (k + 1);
            p0 = p1;
            p1 = p2;
        }
        double dp = m * (x * p1 - p0) / (x * x - 1.0);
        rule.points[m - 1 - i] = x; // ascending order
        rule.weights[m - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    return rule;
}

inline QuadratureRule gauss_rule(int m) {
    const QuadratureRule1D r1 = gauss_rule_1d(m);
    QuadratureRule rule;
    rule.exactness = r1.exactness;
    rule.points.reserve(m * m);
    rule.weights.reserve(m * m);
    for (int j = 0; j < m; ++j) {
        for (int i = 0; i < m; ++i) {
            rule.points.push_back({r1.points[i], r1.points[j]});
            rule.weights.push_back(r1.weights[i] * r1.weights[j]);
        }
    }
    return rule;
}

enum class SpaceKind { Total, Partial };

/// L2-orthonormal polynomial basis on the reference square [-1,1]^2.
///
/// The basis is the tensor product of orthonormal Legendre polynomials; for
/// SpaceKind::Total it is restricted to index pairs with jx+jy <= p (graded
/// lexicographic order), which keeps it orthonormal. dim = (p+1)(p+2)/2 for
/// total degree, (p+1)^2 for partial degree.
class PolySpace {
  public:
    PolySpace(int degree, SpaceKind kind) : degree_(degree), kind_(kind) {
        if (degree < 1)
            throw std::invalid_argument("PolySpace: degree must be >= 1");
        if (degree > detail::kMaxDegree)
            throw std::invalid_argument("PolySpace: degree too large");
        if (kind == SpaceKind::Total) {
            for (int g = 0; g <= degree; ++g)
                for (int jx = 0; jx <= g; ++jx)
                    idx_.push_back({jx, g - jx});
        } else {
            for (int jx = 0; jx <= degree; ++jx)
                for (int jy = 0; jy <= degree; ++jy)
                    idx_.push_back({jx, jy});
        }
        sign_.assign(idx_.size(), 1.0);
    }

    int degree() const { return degree_; }
    SpaceKind kind() const { return kind_; }
    int dim() const { return static_cast<int>(idx_.size()); }
    const std::vector<std::array<int, 2>>& exponents() const { return idx_; }

    /// Copy with basis members reordered and/or sign-flipped. The result spans
    /// the same space and stays orthonormal; used to confirm that operator
    /// spectra do not depend on the basis convention.
    PolySpace reordered(const std::vector<int>& perm,
                        const std::vector<double>& signs) const {
        if (perm.size() != idx_.size() || signs.size() != idx_.size())
            throw std::invalid_argument("PolySpace::reordered: bad permutation size");
        PolySpace out(*this);
        for (std::size_t i = 0; i < perm.size(); ++i) {
            out.idx_[i] = idx_[static_cast<std::size_t>(perm[i])];
            out.sign_[i] = sign_[static_cast<std::size_t>(perm[i])] * signs[i];
            if (std::abs(std::abs(signs[i]) - 1.0) > 0)
                throw std::invalid_argument("PolySpace::reordered: signs must be +-1");
        }
        return out;
    }

    /// Reference-space evaluation at (xi,eta). Outputs are per basis function:
    /// val[i]; grad[2*i + {0,1}] = (d/dxi, d/deta); hess[3*i + {0,1,2}] =
    /// (xixi, xieta, etaeta). Null pointers skip the corresponding order.
    void eval_ref(double xi, double eta, double* val, double* grad,
                  double* hess) const {
        const detail::Legendre1D lx(xi, degree_);
        const detail::Legendre1D ly(eta, degree_);
        const int n = dim();
        for (int i = 0; i < n; ++i) {
            const int jx = idx_[i][0];
            const int jy = idx_[i][1];
            const double s = sign_[i];
            if (val)
                val[i] = s * lx.v[jx] * ly.v[jy];
            if (grad) {
                grad[2 * i + 0] = s * lx.d1[jx] * ly.v[jy];
                grad[2 * i + 1] = s * lx.v[jx] * ly.d1[jy];
            }
            if (hess) {
                hess[3 * i + 0] = s * lx.d2[jx] * ly.v[jy];
                hess[3 * i + 1] = s * lx.d1[jx] * ly.d1[jy];
                hess[3 * i + 2] = s * lx.v[jx] * ly.d2[jy];
            }
        }
    }

  private:
    int degree_;
    SpaceKind kind_;
    std::vector<std::array<int, 2>> idx_;
    std::vector<double> sign_;
};

inline std::shared_ptr<const PolySpace> make_poly_space(int p, SpaceKind kind) {
    return std::make_shared<const PolySpace>(p, kind);
}

/// Physical-space values/derivatives of all basis functions of `space` mapped
/// onto `elem`, evaluated at a physical point inside the element closure.
struct BasisValues {
    std::vector<double> value;
    std::vector<std::array<double, 2>> grad;   // filled for order >= 1
    std::vector<std::array<double, 3>> hess;   // (xx, xy, yy), order >= 2
};

inline BasisValues eval_basis(const PolySpace& space, const ElementGeom& elem,
                              Point p, int order) {
    if (order < 0 || order > 2)
        throw std::invalid_argument("eval_basis: order must be 0, 1 or 2");
    if (!elem.contains(p))
        throw std::invalid_argument("eval_basis: point outside element");
    const int n = space.dim();
    std::vector<double> val(n), grad, hess;
    if (order >= 1)
        grad.resize(2 * n);
    if (order >= 2)
        hess.resize(3 * n);
    space.eval_ref(elem.to_ref_x(p.x), elem.to_ref_y(p.y), val.data(),
                   order >= 1 ? grad.data() : nullptr,
                   order >= 2 ? hess.data() : nullptr);

    BasisValues out;
    out.value = std::move(val);
    const double j1 = 2.0 / elem.h;       // d(xi)/dx
    const double j2 = j1 * j1;
    if (order >= 1) {
        out.grad.resize(n);
        for (int i = 0; i < n; ++i)
            out.grad[i] = {j1 * grad[2 * i], j1 * grad[2 * i + 1]};
    }
    if (order >= 2) {
        out.hess.resize(n);
        for (int i = 0; i < n; ++i)
            out.hess[i] = {j2 * hess[3 * i], j2 * hess[3 * i + 1],
                           j2 * hess[3 * i + 2]};
    }
    return out;
}

/// Quadrature order used for element and face integrals: exact for the
/// degree-2p integrands of the bilinear forms, with margin.
inline int assembly_quadrature_points(int p) { return p + 2; }

} // namespace hpdg
