#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <ostream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "hpdg/dofmap.hpp"
#include "hpdg/manufactured.hpp"

namespace hpdg {

enum class PenaltyMode { DegreeScaled, ConstantDegree };

/// Face penalty parameters: mu_F = c_mu p~^2 / h~ and eta_F = c_eta p~^6 / h~^3
/// in degree-scaled mode, or mu_F = c_mu / h~ and eta_F = c_eta / h~^3 in
/// constant-degree mode. p~ is the larger neighbor degree, h~ the smaller
/// neighbor size.
struct PenaltyConfig {
    double c_mu = 10.0;
    double c_eta = 10.0;
    PenaltyMode mode = PenaltyMode::DegreeScaled;
};

inline std::pair<double, double> penalty(const FaceInfo& face, int p_ext,
                                         int p_int, const PenaltyConfig& cfg) {
    if (p_ext < 1 || (face.interior() && p_int < 1))
        throw std::invalid_argument("penalty: degrees must be >= 1");
    const double h = face.h_tilde;
    double mu, eta;
    if (cfg.mode == PenaltyMode::DegreeScaled) {
        const double p = face.interior() ? std::max(p_ext, p_int) : p_ext;
        mu = cfg.c_mu * p * p / h;
        eta = cfg.c_eta * std::pow(p, 6) / (h * h * h);
    } else {
        mu = cfg.c_mu / h;
        eta = cfg.c_eta / (h * h * h);
    }
    return {mu, eta};
}

struct BrokenNormReport {
    double l2 = 0.0;
    double h1_broken = 0.0;
    double h2_broken = 0.0;
    double jump_seminorm = 0.0;
    double norm_h2 = 0.0;
};

namespace detail {

/// Accumulates element-neighbor coupling blocks and converts them to a
/// compressed sparse matrix in one pass (column counts are known exactly).
class BlockSystemBuilder {
  public:
    explicit BlockSystemBuilder(const DofMap& dm) : dm_(&dm) {
        blocks_.resize(dm.num_elements());
    }

    Eigen::MatrixXd& block(int row_elem, int col_elem) {
        auto& list = blocks_[col_elem];
        for (auto& [r, m] : list)
            if (r == row_elem)
                return m;
        list.emplace_back(row_elem, Eigen::MatrixXd::Zero(dm_->dim(row_elem),
                                                          dm_->dim(col_elem)));
        return list.back().second;
    }

    Eigen::SparseMatrix<double> to_sparse() const {
        const int n = dm_->total_dofs();
        Eigen::SparseMatrix<double> A(n, n);
        Eigen::VectorXi per_col = Eigen::VectorXi::Zero(n);
        for (int ce = 0; ce < dm_->num_elements(); ++ce) {
            int rows = 0;
            for (const auto& [re, m] : blocks_[ce])
                rows += dm_->dim(re);
            for (int j = 0; j < dm_->dim(ce); ++j)
                per_col[dm_->offset(ce) + j] = rows;
        }
        A.reserve(per_col);
        for (int ce = 0; ce < dm_->num_elements(); ++ce) {
            auto list = blocks_[ce];
            std::sort(list.begin(), list.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            const int col0 = dm_->offset(ce);
            for (int j = 0; j < dm_->dim(ce); ++j)
                for (const auto& [re, m] : list) {
                    const int row0 = dm_->offset(re);
                    for (int i = 0; i < m.rows(); ++i)
                        A.insert(row0 + i, col0 + j) = m(i, j);
                }
        }
        A.makeCompressed();
        return A;
    }

  private:
    const DofMap* dm_;
    std::vector<std::vector<std::pair<int, Eigen::MatrixXd>>> blocks_;
};

/// Physical-space traces of one element's basis on a set of face points:
/// values, normal/tangential first derivatives, and the second derivatives
/// t.D2.t and t.D2.n that the 2-D tangential operators reduce to.
struct TraceData {
    Eigen::MatrixXd v, dn, dt, dtt, dtn; // (num points) x (basis dim)
};

inline TraceData face_traces(const PolySpace& space, const ElementGeom& geom,
                             const FaceInfo& face,
                             const std::vector<Point>& pts) {
    const int nq = static_cast<int>(pts.size());
    const int nb = space.dim();
    const double tx = -face.ny, ty = face.nx; // tangent; sign immaterial
    const double j1 = 2.0 / geom.h, j2 = j1 * j1;

    TraceData td;
    td.v.resize(nq, nb);
    td.dn.resize(nq, nb);
    td.dt.resize(nq, nb);
    td.dtt.resize(nq, nb);
    td.dtn.resize(nq, nb);
    std::vector<double> val(nb), grad(2 * nb), hess(3 * nb);
    for (int q = 0; q < nq; ++q) {
        space.eval_ref(geom.to_ref_x(pts[q].x), geom.to_ref_y(pts[q].y),
                       val.data(), grad.data(), hess.data());
        for (int i = 0; i < nb; ++i) {
            const double gx = j1 * grad[2 * i], gy = j1 * grad[2 * i + 1];
            const double hxx = j2 * hess[3 * i], hxy = j2 * hess[3 * i + 1],
                         hyy = j2 * hess[3 * i + 2];
            td.v(q, i) = val[i];
            td.dn(q, i) = gx * face.nx + gy * face.ny;
            td.dt(q, i) = gx * tx + gy * ty;
            td.dtt(q, i) = tx * tx * hxx + 2 * tx * ty * hxy + ty * ty * hyy;
            td.dtn(q, i) = tx * face.nx * hxx +
                           (tx * face.ny + ty * face.nx) * hxy +
                           ty * face.ny * hyy;
        }
    }
    return td;
}

enum class VolumeTerm { None, HessianProduct, LaplacianProduct };

inline Eigen::SparseMatrix<double>
assemble_form(const DofMap& dm, const PenaltyConfig* cfg, VolumeTerm volume,
              bool with_jumps, bool with_consistency_terms) {
    BlockSystemBuilder builder(dm);
    const Mesh& mesh = dm.mesh();

    if (volume != VolumeTerm::None) {
        for (int e = 0; e < dm.num_elements(); ++e) {
            const PolySpace& space = dm.space(e);
            const ElementGeom geom = mesh.element(e);
            const int nb = space.dim();
            const QuadratureRule rule =
                gauss_rule(assembly_quadrature_points(space.degree()));
            const double j2 = 4.0 / (geom.h * geom.h);
            const double jac = geom.h * geom.h / 4.0;
            Eigen::MatrixXd& blk = builder.block(e, e);
            std::vector<double> hess(3 * nb);
            Eigen::VectorXd hxx(nb), hxy(nb), hyy(nb);
            for (std::size_t q = 0; q < rule.size(); ++q) {
                space.eval_ref(rule.points[q].x, rule.points[q].y, nullptr,
                               nullptr, hess.data());
                for (int i = 0; i < nb; ++i) {
                    hxx[i] = j2 * hess[3 * i];
                    hxy[i] = j2 * hess[3 * i + 1];
                    hyy[i] = j2 * hess[3 * i + 2];
                }
                const double w = jac * rule.weights[q];
                if (volume == VolumeTerm::HessianProduct) {
                    blk.noalias() += w * (hxx * hxx.transpose());
                    blk.noalias() += (2 * w) * (hxy * hxy.transpose());
                    blk.noalias() += w * (hyy * hyy.transpose());
                } else {
                    const Eigen::VectorXd lap = hxx + hyy;
                    blk.noalias() += w * (lap * lap.transpose());
                }
            }
        }
    }

    if (with_jumps || with_consistency_terms) {
        for (const FaceInfo& face : mesh.faces()) {
            const int e_ext = face.ext_element;
            const int e_int = face.int_element;
            const bool interior = face.interior();
            const PolySpace& sp_ext = dm.space(e_ext);
            const int p_ext = sp_ext.degree();
            const int p_int = interior ? dm.space(e_int).degree() : 0;

            const auto [mu, eta] =
                cfg ? penalty(face, p_ext, interior ? p_int : p_ext, *cfg)
                    : std::pair<double, double>{0.0, 0.0};

            const int m = assembly_quadrature_points(
                interior ? std::max(p_ext, p_int) : p_ext);
            const QuadratureRule1D rule = gauss_rule_1d(m);
            const double len = face.length();
            std::vector<Point> pts(m);
            for (int q = 0; q < m; ++q) {
                const double s = 0.5 * (rule.points[q] + 1.0);
                pts[q] = {face.a.x + s * (face.b.x - face.a.x),
                          face.a.y + s * (face.b.y - face.a.y)};
            }

            const TraceData ext =
                face_traces(sp_ext, mesh.element(e_ext), face, pts);
            TraceData intr;
            const int nb_ext = sp_ext.dim();
            int nb_int = 0;
            if (interior) {
                intr = face_traces(dm.space(e_int), mesh.element(e_int), face, pts);
                nb_int = dm.space(e_int).dim();
            }
            const int nc = nb_ext + nb_int;

            Eigen::MatrixXd B = Eigen::MatrixXd::Zero(nc, nc);
            Eigen::VectorXd jv(nc), jdn(nc), jdt(nc), adtt(nc), adtn(nc);
            const double avg = interior ? 0.5 : 1.0;
            for (int q = 0; q < m; ++q) {
                for (int i = 0; i < nb_ext; ++i) {
                    jv[i] = ext.v(q, i);
                    jdn[i] = ext.dn(q, i);
                    jdt[i] = ext.dt(q, i);
                    adtt[i] = avg * ext.dtt(q, i);
                    adtn[i] = avg * ext.dtn(q, i);
                }
                for (int i = 0; i < nb_int; ++i) {
                    jv[nb_ext + i] = -intr.v(q, i);
                    jdn[nb_ext + i] = -intr.dn(q, i);
                    jdt[nb_ext + i] = -intr.dt(q, i);
                    adtt[nb_ext + i] = avg * intr.dtt(q, i);
                    adtn[nb_ext + i] = avg * intr.dtn(q, i);
                }
                const double w = 0.5 * len * rule.weights[q];
                if (with_jumps) {
                    if (interior)
                        B.noalias() += (w * mu) * (jdn * jdn.transpose());
                    B.noalias() += (w * mu) * (jdt * jdt.transpose());
                    B.noalias() += (w * eta) * (jv * jv.transpose());
                }
                if (with_consistency_terms) {
                    if (interior) {
                        B.noalias() += w * (adtt * jdn.transpose());
                        B.noalias() += w * (jdn * adtt.transpose());
                    }
                    B.noalias() -= w * (adtn * jdt.transpose());
                    B.noalias() -= w * (jdt * adtn.transpose());
                }
            }

            builder.block(e_ext, e_ext) += B.topLeftCorner(nb_ext, nb_ext);
            if (interior) {
                builder.block(e_ext, e_int) += B.topRightCorner(nb_ext, nb_int);
                builder.block(e_int, e_ext) += B.bottomLeftCorner(nb_int, nb_ext);
                builder.block(e_int, e_int) += B.bottomRightCorner(nb_int, nb_int);
            }
        }
    }

    return builder.to_sparse();
}

} // namespace detail

/// Largest entry asymmetry |A_ij - A_ji| of a sparse matrix.
inline double max_asymmetry(const Eigen::SparseMatrix<double>& A) {
    Eigen::SparseMatrix<double> D =
        A - Eigen::SparseMatrix<double>(A.transpose());
    double m = 0.0;
    for (int k = 0; k < D.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(D, k); it; ++it)
            m = std::max(m, std::abs(it.value()));
    return m;
}

inline double max_abs(const Eigen::SparseMatrix<double>& A) {
    double m = 0.0;
    for (int k = 0; k < A.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it)
            m = std::max(m, std::abs(it.value()));
    return m;
}

/// Jump stabilization form J_h: mu-weighted normal-derivative jumps on
/// interior faces, mu-weighted tangential-gradient jumps and eta-weighted
/// value jumps on all faces.
inline Eigen::SparseMatrix<double>
assemble_jump_form(const DofMap& dm, const PenaltyConfig& cfg) {
    return detail::assemble_form(dm, &cfg, detail::VolumeTerm::None, true, false);
}

/// Element-diagonal matrix of (Laplacian u, Laplacian v) products.
inline Eigen::SparseMatrix<double>
assemble_laplacian_product(const DofMap& dm) {
    return detail::assemble_form(dm, nullptr, detail::VolumeTerm::LaplacianProduct,
                                 false, false);
}

enum class SpdProbe { Probe, Skip };

/// The H2-type symmetric bilinear form a_h: elementwise Hessian products,
/// the jump form, and the interface consistency terms. In two dimensions the
/// tangential operators reduce to derivatives along the face:
/// div_T grad_T {u} = {t.D2u.t} and grad_T {grad u . n} = {t.D2u.n} t.
/// With SpdProbe::Probe, a Cholesky probe rejects assemblies that are not
/// positive definite (penalty constants below the coercivity threshold).
inline Eigen::SparseMatrix<double>
assemble_ah(const DofMap& dm, const PenaltyConfig& cfg,
            SpdProbe probe = SpdProbe::Probe) {
    Eigen::SparseMatrix<double> A = detail::assemble_form(
        dm, &cfg, detail::VolumeTerm::HessianProduct, true, true);
    if (probe == SpdProbe::Probe) {
        Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(A);
        if (llt.info() != Eigen::Success)
            throw std::runtime_error(
                "assemble_ah: matrix is not positive definite (coercivity "
                "violated; increase c_mu/c_eta)");
    }
    return A;
}

/// Load functional l_h(v) = sum_K (g, Laplacian v)_K for a pointwise source g
/// (typically g = Laplacian of the target solution).
inline Eigen::VectorXd
assemble_load_laplacian(const DofMap& dm,
                        const std::function<double(double, double)>& g) {
    Eigen::VectorXd b = Eigen::VectorXd::Zero(dm.total_dofs());
    const Mesh& mesh = dm.mesh();
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
            const double x = geom.to_phys_x(rule.points[q].x);
            const double y = geom.to_phys_y(rule.points[q].y);
            const double w = jac * rule.weights[q] * g(x, y);
            for (int i = 0; i < nb; ++i)
                b[dm.offset(e) + i] += w * j2 * (hess[3 * i] + hess[3 * i + 2]);
        }
    }
    return b;
}

/// Broken L2/H1/H2 norms and the penalty jump seminorm of a discrete function,
/// or of its difference with a smooth exact field when one is supplied.
inline BrokenNormReport broken_norms(const DofMap& dm,
                                     const Eigen::VectorXd& coeffs,
                                     const PenaltyConfig& cfg,
                                     const ScalarField* exact = nullptr) {
    if (coeffs.size() != dm.total_dofs())
        throw std::invalid_argument("broken_norms: coefficient size mismatch");
    const Mesh& mesh = dm.mesh();
    double l2 = 0.0, h1s = 0.0, h2s = 0.0, jmp = 0.0;

    for (int e = 0; e < dm.num_elements(); ++e) {
        const PolySpace& space = dm.space(e);
        const ElementGeom geom = mesh.element(e);
        const int nb = space.dim();
        const QuadratureRule rule = gauss_rule(space.degree() + 3);
        const double j1 = 2.0 / geom.h, j2 = j1 * j1;
        const double jac = geom.h * geom.h / 4.0;
        std::vector<double> val(nb), grad(2 * nb), hess(3 * nb);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            space.eval_ref(rule.points[q].x, rule.points[q].y, val.data(),
                           grad.data(), hess.data());
            double v = 0, gx = 0, gy = 0, hxx = 0, hxy = 0, hyy = 0;
            for (int i = 0; i < nb; ++i) {
                const double c = coeffs[dm.offset(e) + i];
                v += c * val[i];
                gx += c * grad[2 * i];
                gy += c * grad[2 * i + 1];
                hxx += c * hess[3 * i];
                hxy += c * hess[3 * i + 1];
                hyy += c * hess[3 * i + 2];
            }
            gx *= j1;
            gy *= j1;
            hxx *= j2;
            hxy *= j2;
            hyy *= j2;
            if (exact) {
                const double x = geom.to_phys_x(rule.points[q].x);
                const double y = geom.to_phys_y(rule.points[q].y);
                v -= exact->value(x, y);
                gx -= exact->dx(x, y);
                gy -= exact->dy(x, y);
                hxx -= exact->dxx(x, y);
                hxy -= exact->dxy(x, y);
                hyy -= exact->dyy(x, y);
            }
            const double w = jac * rule.weights[q];
            l2 += w * v * v;
            h1s += w * (gx * gx + gy * gy);
            h2s += w * (hxx * hxx + 2 * hxy * hxy + hyy * hyy);
        }
    }

    for (const FaceInfo& face : mesh.faces()) {
        const int e_ext = face.ext_element;
        const bool interior = face.interior();
        const int e_int = face.int_element;
        const int p_ext = dm.space(e_ext).degree();
        const int p_int = interior ? dm.space(e_int).degree() : p_ext;
        const auto [mu, eta] = penalty(face, p_ext, p_int, cfg);

        const int m = std::max(p_ext, p_int) + 3;
        const QuadratureRule1D rule = gauss_rule_1d(m);
        const double len = face.length();
        const double tx = -face.ny, ty = face.nx;

        auto side_eval = [&](int e, double x, double y, double& v, double& dn,
                             double& dt) {
            const PolySpace& space = dm.space(e);
            const ElementGeom geom = mesh.element(e);
            const int nb = space.dim();
            const double j1 = 2.0 / geom.h;
            std::vector<double> val(nb), grad(2 * nb);
            space.eval_ref(geom.to_ref_x(x), geom.to_ref_y(y), val.data(),
                           grad.data(), nullptr);
            v = 0;
            double gx = 0, gy = 0;
            for (int i = 0; i < nb; ++i) {
                const double c = coeffs[dm.offset(e) + i];
                v += c * val[i];
                gx += c * grad[2 * i];
                gy += c * grad[2 * i + 1];
            }
            gx *= j1;
            gy *= j1;
            if (exact) {
                v -= exact->value(x, y);
                gx -= exact->dx(x, y);
                gy -= exact->dy(x, y);
            }
            dn = gx * face.nx + gy * face.ny;
            dt = gx * tx + gy * ty;
        };

        for (int q = 0; q < m; ++q) {
            const double s = 0.5 * (rule.points[q] + 1.0);
            const double x = face.a.x + s * (face.b.x - face.a.x);
            const double y = face.a.y + s * (face.b.y - face.a.y);
            double v_e, dn_e, dt_e;
            side_eval(e_ext, x, y, v_e, dn_e, dt_e);
            double jv = v_e, jdn = dn_e, jdt = dt_e;
            if (interior) {
                double v_i, dn_i, dt_i;
                side_eval(e_int, x, y, v_i, dn_i, dt_i);
                jv -= v_i;
                jdn -= dn_i;
                jdt -= dt_i;
            }
            const double w = 0.5 * len * rule.weights[q];
            jmp += w * (mu * jdt * jdt + eta * jv * jv);
            if (interior)
                jmp += w * mu * jdn * jdn;
        }
    }

    BrokenNormReport rep;
    rep.l2 = std::sqrt(l2);
    rep.h1_broken = std::sqrt(l2 + h1s);
    rep.h2_broken = std::sqrt(l2 + h1s + h2s);
    rep.jump_seminorm = std::sqrt(jmp);
    rep.norm_h2 = std::sqrt(l2 + h1s + h2s + jmp);
    return rep;
}

/// Plain-text coordinate export (row col value per line, zero-based).
inline void export_coo(const Eigen::SparseMatrix<double>& A, std::ostream& os) {
    os.precision(17);
    for (int k = 0; k < A.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it)
            os << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

/// L2(Omega) norm of a discrete function; with the mapped orthonormal basis
/// the element mass matrix is (h/2)^2 times the identity.
inline double l2_norm(const DofMap& dm, const Eigen::VectorXd& coeffs) {
    double s = 0.0;
    for (int e = 0; e < dm.num_elements(); ++e) {
        const double scale = dm.mesh().element(e).h / 2.0;
        s += scale * scale *
             coeffs.segment(dm.offset(e), dm.dim(e)).squaredNorm();
    }
    return std::sqrt(s);
}

/// L2 projection of a smooth function into the broken polynomial space.
inline Eigen::VectorXd project(const DofMap& dm,
                               const std::function<double(double, double)>& f) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(dm.total_dofs());
    const Mesh& mesh = dm.mesh();
    for (int e = 0; e < dm.num_elements(); ++e) {
        const PolySpace& space = dm.space(e);
        const ElementGeom geom = mesh.element(e);
        const int nb = space.dim();
        const QuadratureRule rule = gauss_rule(space.degree() + 3);
        std::vector<double> val(nb);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            space.eval_ref(rule.points[q].x, rule.points[q].y, val.data(),
                           nullptr, nullptr);
            const double fx = f(geom.to_phys_x(rule.points[q].x),
                                geom.to_phys_y(rule.points[q].y));
            // reference Gram matrix is the identity, so the element Jacobian
            // cancels against the inverse mass matrix
            for (int i = 0; i < nb; ++i)
                c[dm.offset(e) + i] += rule.weights[q] * fx * val[i];
        }
    }
    return c;
}

} // namespace hpdg
