#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "hpdg/dofmap.hpp"
#include "hpdg/forms.hpp"
#include "hpdg/manufactured.hpp"
#include "hpdg/schwarz.hpp"
#include "hpdg/solvers.hpp"

namespace hpdg {

/// One control of the HJB problem: alpha = (theta, R(phi)) with diffusion
/// a = (1/2) R diag-form(theta) R^T, its renormalization gamma = tr a / |a|^2,
/// and tr a = 1 for this family.
struct Control {
    double theta = 0.0;
    double phi = 0.0;
    double a11 = 0.0, a12 = 0.0, a22 = 0.0;
    double gamma = 0.0;

    double contract(double hxx, double hxy, double hyy) const {
        return a11 * hxx + 2.0 * a12 * hxy + a22 * hyy;
    }
};

/// Discretization of the control set Lambda = [0, pi/3] x SO(2).
struct ControlGrid {
    std::vector<Control> controls;
    int n_theta = 0;
    int n_phi = 0;
    double max_cordes_ratio = 0.0; // max over controls of |a|^2 / (tr a)^2
    double cordes_epsilon = 0.0;   // from 1/(1+eps) = max ratio (d = 2)
};

inline ControlGrid build_control_grid(int n_theta, int n_phi) {
    if (n_theta < 1 || n_phi < 1)
        throw std::invalid_argument("build_control_grid: grid sizes must be >= 1");
    ControlGrid grid;
    grid.n_theta = n_theta;
    grid.n_phi = n_phi;
    grid.controls.reserve(static_cast<std::size_t>(n_theta) * n_phi);
    for (int i = 0; i < n_theta; ++i) {
        const double theta =
            n_theta == 1 ? 0.0 : (M_PI / 3.0) * i / (n_theta - 1);
        const double s = std::sin(theta), c = std::cos(theta);
        // M = [[1+s^2, s c], [s c, c^2]]
        const double m11 = 1.0 + s * s, m12 = s * c, m22 = c * c;
        for (int j = 0; j < n_phi; ++j) {
            const double phi = 2.0 * M_PI * j / n_phi;
            const double cr = std::cos(phi), sr = std::sin(phi);
            // a = (1/2) R M R^T
            Control ctl;
            ctl.theta = theta;
            ctl.phi = phi;
            ctl.a11 = 0.5 * (cr * (cr * m11 - sr * m12) - sr * (cr * m12 - sr * m22));
            ctl.a12 = 0.5 * (sr * (cr * m11 - sr * m12) + cr * (cr * m12 - sr * m22));
            ctl.a22 = 0.5 * (sr * (sr * m11 + cr * m12) + cr * (sr * m12 + cr * m22));
            const double frob =
                ctl.a11 * ctl.a11 + 2.0 * ctl.a12 * ctl.a12 + ctl.a22 * ctl.a22;
            const double tr = ctl.a11 + ctl.a22;
            ctl.gamma = tr / frob;
            grid.controls.push_back(ctl);
            grid.max_cordes_ratio = std::max(grid.max_cordes_ratio, frob / (tr * tr));
        }
    }
    grid.cordes_epsilon = 1.0 / grid.max_cordes_ratio - 1.0;
    return grid;
}

/// The manufactured HJB problem: f^alpha is chosen so that the exact solution
/// is exp(xy) sin(pi x) sin(pi y) while the maximizing control varies over the
/// domain; L^alpha u - f^alpha = -kappa (theta - theta*(x))^2 has supremum 0
/// at the spatially varying angle theta*(x,y) = (pi/3) x.
struct HjbProblem {
    ScalarField exact;
    double kappa = 1.0;
    std::function<double(double, double)> theta_star;

    double f(const Control& c, double x, double y) const {
        const double d = c.theta - theta_star(x, y);
        return c.contract(exact.dxx(x, y), exact.dxy(x, y), exact.dyy(x, y)) +
               kappa * d * d;
    }
};

inline HjbProblem make_hjb_problem() {
    HjbProblem p;
    p.exact = exp_sine_solution();
    p.kappa = 1.0;
    p.theta_star = [](double x, double) { return (M_PI / 3.0) * x; };
    return p;
}

namespace detail {

/// argmax over the control grid of gamma (a : H - f) given the discrete
/// Hessian H and the exact-solution Hessian U at a point; ties break to the
/// first control index.
inline std::pair<double, int>
sup_control(const ControlGrid& grid, double hxx, double hxy, double hyy,
            double uxx, double uxy, double uyy, double kappa, double tstar) {
    double best = 0.0;
    int best_idx = -1;
    const double dxx = hxx - uxx, dxy = hxy - uxy, dyy = hyy - uyy;
    for (std::size_t c = 0; c < grid.controls.size(); ++c) {
        const Control& ctl = grid.controls[c];
        const double dt = ctl.theta - tstar;
        const double val =
            ctl.gamma * (ctl.contract(dxx, dxy, dyy) - kappa * dt * dt);
        if (best_idx < 0 || val > best) {
            best = val;
            best_idx = static_cast<int>(c);
        }
    }
    return {best, best_idx};
}

} // namespace detail

/// F_gamma[u](x) = sup_alpha gamma^alpha (L^alpha u - f^alpha)(x) for a
/// discrete function u, together with the first maximizing control index.
inline std::pair<double, int>
evaluate_F_gamma(const DofMap& dm, const Eigen::VectorXd& coeffs,
                 const ControlGrid& grid, const HjbProblem& problem, double x,
                 double y) {
    const Mesh& mesh = dm.mesh();
    const int n = mesh.subdivisions();
    const int ix = std::min(static_cast<int>(x * n), n - 1);
    const int iy = std::min(static_cast<int>(y * n), n - 1);
    const int e = mesh.element_index(ix, iy);
    const PolySpace& space = dm.space(e);
    const ElementGeom geom = mesh.element(e);
    const int nb = space.dim();
    std::vector<double> hess(3 * nb);
    space.eval_ref(geom.to_ref_x(x), geom.to_ref_y(y), nullptr, nullptr,
                   hess.data());
    const double j2 = 4.0 / (geom.h * geom.h);
    double hxx = 0, hxy = 0, hyy = 0;
    for (int i = 0; i < nb; ++i) {
        const double c = coeffs[dm.offset(e) + i];
        hxx += c * hess[3 * i];
        hxy += c * hess[3 * i + 1];
        hyy += c * hess[3 * i + 2];
    }
    return detail::sup_control(grid, j2 * hxx, j2 * hxy, j2 * hyy,
                               problem.exact.dxx(x, y), problem.exact.dxy(x, y),
                               problem.exact.dyy(x, y), problem.kappa,
                               problem.theta_star(x, y));
}

/// Fixed matrices of the semismooth Newton iteration, assembled once:
/// the preconditioner form a_h, the jump form J_h, the Laplacian product L,
/// and the symmetric part S = (a_h - L + J_h)/2 of the nonlinear form.
struct NewtonOperators {
    Eigen::SparseMatrix<double> A, J, L, S;
};

inline NewtonOperators build_newton_operators(const DofMap& dm,
                                              const PenaltyConfig& cfg,
                                              SpdProbe probe = SpdProbe::Probe) {
    NewtonOperators ops;
    ops.A = assemble_ah(dm, cfg, probe);
    ops.J = assemble_jump_form(dm, cfg);
    ops.L = assemble_laplacian_product(dm);
    ops.S = 0.5 * (ops.A - ops.L + ops.J);
    return ops;
}

/// One linearization: the element-diagonal blocks of the frozen-argmax term
/// sum_K (gamma* a* : D^2 u, Lap v)_K, the right-hand side carrying the frozen
/// forcing, and the argmax control field (element-major by quadrature point).
struct NewtonSystem {
    std::vector<Eigen::MatrixXd> g_blocks;
    Eigen::VectorXd rhs;
    std::vector<int> argmax;
};

inline NewtonSystem assemble_newton_system(const Eigen::VectorXd& u_k,
                                           const ControlGrid& grid,
                                           const HjbProblem& problem,
                                           const DofMap& dm) {
    const Mesh& mesh = dm.mesh();
    NewtonSystem sys;
    sys.g_blocks.resize(dm.num_elements());
    sys.rhs = Eigen::VectorXd::Zero(dm.total_dofs());

    for (int e = 0; e < dm.num_elements(); ++e) {
        const PolySpace& space = dm.space(e);
        const ElementGeom geom = mesh.element(e);
        const int nb = space.dim();
        const QuadratureRule rule =
            gauss_rule(assembly_quadrature_points(space.degree()));
        const double j2 = 4.0 / (geom.h * geom.h);
        const double jac = geom.h * geom.h / 4.0;

        Eigen::MatrixXd& G = sys.g_blocks[e];
        G = Eigen::MatrixXd::Zero(nb, nb);
        std::vector<double> hess(3 * nb);
        Eigen::VectorXd lap(nb), frozen(nb);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            space.eval_ref(rule.points[q].x, rule.points[q].y, nullptr, nullptr,
                           hess.data());
            double hxx = 0, hxy = 0, hyy = 0;
            for (int i = 0; i < nb; ++i) {
                const double c = u_k[dm.offset(e) + i];
                hxx += c * hess[3 * i];
                hxy += c * hess[3 * i + 1];
                hyy += c * hess[3 * i + 2];
            }
            const double x = geom.to_phys_x(rule.points[q].x);
            const double y = geom.to_phys_y(rule.points[q].y);
            const auto [val, idx] = detail::sup_control(
                grid, j2 * hxx, j2 * hxy, j2 * hyy, problem.exact.dxx(x, y),
                problem.exact.dxy(x, y), problem.exact.dyy(x, y), problem.kappa,
                problem.theta_star(x, y));
            (void)val;
            sys.argmax.push_back(idx);
            const Control& ctl = grid.controls[idx];

            for (int i = 0; i < nb; ++i) {
                lap[i] = j2 * (hess[3 * i] + hess[3 * i + 2]);
                frozen[i] = ctl.gamma *
                            ctl.contract(j2 * hess[3 * i], j2 * hess[3 * i + 1],
                                         j2 * hess[3 * i + 2]);
            }
            const double w = jac * rule.weights[q];
            G.noalias() += w * (lap * frozen.transpose());
            const double fval = ctl.gamma * problem.f(ctl, x, y);
            sys.rhs.segment(dm.offset(e), nb) += (w * fval) * lap;
        }
    }
    return sys;
}

/// Matrix-free application of the Newton matrix S + blockdiag(G).
inline LinOp newton_operator(const DofMap& dm, const NewtonOperators& ops,
                             const NewtonSystem& sys) {
    return [&dm, &ops, &sys](const Eigen::VectorXd& x, Eigen::VectorXd& y) {
        y.noalias() = ops.S * x;
        for (int e = 0; e < dm.num_elements(); ++e)
            y.segment(dm.offset(e), dm.dim(e)).noalias() +=
                sys.g_blocks[e] * x.segment(dm.offset(e), dm.dim(e));
    };
}

/// sum_K || F_gamma[u] ||_{L2(K)}^2 evaluated by quadrature.
inline double hjb_residual_norm2(const DofMap& dm, const Eigen::VectorXd& u,
                                 const ControlGrid& grid,
                                 const HjbProblem& problem) {
    const Mesh& mesh = dm.mesh();
    double total = 0.0;
    for (int e = 0; e < dm.num_elements(); ++e) {
        const PolySpace& space = dm.space(e);
        const ElementGeom geom = mesh.element(e);
        const int nb = space.dim();
        const QuadratureRule rule =
            gauss_rule(assembly_quadrature_points(space.degree()));
        const double j2 = 4.0 / (geom.h * geom.h);
        const double jac = geom.h * geom.h / 4.0;
        std::vector<double> hess(3 * nb);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            space.eval_ref(rule.points[q].x, rule.points[q].y, nullptr, nullptr,
                           hess.data());
            double hxx = 0, hxy = 0, hyy = 0;
            for (int i = 0; i < nb; ++i) {
                const double c = u[dm.offset(e) + i];
                hxx += c * hess[3 * i];
                hxy += c * hess[3 * i + 1];
                hyy += c * hess[3 * i + 2];
            }
            const double x = geom.to_phys_x(rule.points[q].x);
            const double y = geom.to_phys_y(rule.points[q].y);
            const auto [val, idx] = detail::sup_control(
                grid, j2 * hxx, j2 * hxy, j2 * hyy, problem.exact.dxx(x, y),
                problem.exact.dxy(x, y), problem.exact.dyy(x, y), problem.kappa,
                problem.theta_star(x, y));
            (void)idx;
            total += jac * rule.weights[q] * val * val;
        }
    }
    return total;
}

struct NewtonOptions {
    double newton_tol = 1e-6;     // L2 norm of the step increment
    double gmres_reduction = 1e-6;
    int max_newton = 50;
    int gmres_maxit = 400;
};

struct NewtonReport {
    int newton_steps = 0;
    std::vector<int> gmres_per_step;
    std::vector<double> increment_l2;
    double final_h2_error = 0.0;
    double avg_gmres = 0.0;
    bool converged = false;
    bool no_refactorization = false;
    double residual_initial = 0.0;
    double residual_final = 0.0;
};

/// Semismooth Newton iteration for the HJB scheme. Each step freezes the
/// per-quadrature-point maximizing control of the current iterate and solves
/// the resulting nonsymmetric positive definite system by left-preconditioned
/// GMRES, warm-started at the current iterate. The preconditioner B (built
/// from a_h) is reused unchanged across all steps. The initial guess, unless
/// supplied, solves the linear singleton-control problem at theta = 0, R = I;
/// that solve is not counted as a Newton step.
inline std::pair<Eigen::VectorXd, NewtonReport>
semismooth_newton(const DofMap& dm, const NewtonOperators& ops,
                  const SchwarzPreconditioner& B, const ControlGrid& grid,
                  const HjbProblem& problem, const PenaltyConfig& cfg,
                  const NewtonOptions& opts = {},
                  const Eigen::VectorXd* initial = nullptr) {
    const std::size_t factorizations_before = B.factorization_count();
    const LinOp Bop = B.as_operator();

    Eigen::VectorXd u;
    if (initial) {
        u = *initial;
    } else {
        const ControlGrid g0 = build_control_grid(1, 1);
        const Eigen::VectorXd zero = Eigen::VectorXd::Zero(dm.total_dofs());
        const NewtonSystem sys0 = assemble_newton_system(zero, g0, problem, dm);
        const LinOp M0 = newton_operator(dm, ops, sys0);
        // solve the auxiliary linear problem tightly so that its own residual
        // does not register as a Newton increment later
        const double red0 = std::max(opts.gmres_reduction * 1e-3, 1e-13);
        auto [u0, rep0] =
            gmres_left(M0, Bop, sys0.rhs, zero, red0, opts.gmres_maxit);
        u = std::move(u0);
        if (!rep0.converged)
            throw std::runtime_error("semismooth_newton: initial solve did not converge");
    }

    NewtonReport rep;
    rep.residual_initial = hjb_residual_norm2(dm, u, grid, problem);

    for (int k = 1; k <= opts.max_newton; ++k) {
        const NewtonSystem sys = assemble_newton_system(u, grid, problem, dm);
        const LinOp M = newton_operator(dm, ops, sys);
        auto [next, solve_rep] =
            gmres_left(M, Bop, sys.rhs, u, opts.gmres_reduction, opts.gmres_maxit);
        const double inc = l2_norm(dm, next - u);
        u = std::move(next);
        rep.gmres_per_step.push_back(solve_rep.iterations);
        rep.increment_l2.push_back(inc);
        rep.newton_steps = k;
        if (!solve_rep.converged)
            throw std::runtime_error(
                "semismooth_newton: GMRES stagnated within a Newton step");
        if (inc < opts.newton_tol) {
            rep.converged = true;
            break;
        }
    }

    rep.residual_final = hjb_residual_norm2(dm, u, grid, problem);
    rep.no_refactorization = B.factorization_count() == factorizations_before;
    long total = 0;
    for (int g : rep.gmres_per_step)
        total += g;
    rep.avg_gmres =
        rep.newton_steps > 0 ? static_cast<double>(total) / rep.newton_steps : 0.0;
    rep.final_h2_error =
        broken_norms(dm, u, cfg, &problem.exact).h2_broken;
    return {u, rep};
}

} // namespace hpdg
