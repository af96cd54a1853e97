#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hpdg/dofmap.hpp"
#include "hpdg/forms.hpp"
#include "hpdg/mesh.hpp"
#include "hpdg/solvers.hpp"

namespace hpdg {

/// Column map from a local space (the coarse space, or the restriction of the
/// fine space to one subdomain) into the global fine space. Subdomain
/// injections are 0/1 dof selections; the coarse injection carries the exact
/// fine-basis expansion of each coarse basis function.
struct Injection {
    enum class Kind { Coarse, Subdomain };
    Kind kind = Kind::Subdomain;
    int subdomain_index = -1;
    Eigen::SparseMatrix<double> matrix; // n_fine x n_local

    int local_dim() const { return static_cast<int>(matrix.cols()); }
};

/// Exact imbedding of the coarse space V_{H,q} into the fine space V_{h,p}.
/// Each coarse basis function is expanded by per-fine-element L2 projection,
/// which reproduces it exactly since the spaces are nested (q_D <= p_K).
inline Injection build_coarse_injection(const DofMap& fine_dm,
                                        const DofMap& coarse_dm,
                                        const NestedHierarchy& hier) {
    if (!hier.has_coarse())
        throw std::invalid_argument("build_coarse_injection: hierarchy has no coarse mesh");
    if (coarse_dm.num_elements() != hier.coarse_n * hier.coarse_n)
        throw std::invalid_argument("build_coarse_injection: coarse dofmap mismatch");
    if (fine_dm.num_elements() != hier.fine.num_elements())
        throw std::invalid_argument("build_coarse_injection: fine dofmap mismatch");

    const Mesh coarse_mesh = hier.coarse_mesh();
    for (int e = 0; e < fine_dm.num_elements(); ++e) {
        if (coarse_dm.space(hier.parent[e]).degree() > fine_dm.space(e).degree())
            throw std::invalid_argument(
                "build_coarse_injection: coarse degree exceeds fine degree");
    }

    std::vector<Eigen::Triplet<double>> triplets;
    for (int e = 0; e < fine_dm.num_elements(); ++e) {
        const int d = hier.parent[e];
        const PolySpace& fine_sp = fine_dm.space(e);
        const PolySpace& coarse_sp = coarse_dm.space(d);
        const ElementGeom fg = hier.fine.element(e);
        const ElementGeom cg = coarse_mesh.element(d);
        const int nf = fine_sp.dim();
        const int ncs = coarse_sp.dim();

        const QuadratureRule rule = gauss_rule(
            assembly_quadrature_points(std::max(fine_sp.degree(), coarse_sp.degree())));
        Eigen::MatrixXd block = Eigen::MatrixXd::Zero(nf, ncs);
        std::vector<double> fv(nf), cv(ncs);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const double x = fg.to_phys_x(rule.points[q].x);
            const double y = fg.to_phys_y(rule.points[q].y);
            fine_sp.eval_ref(rule.points[q].x, rule.points[q].y, fv.data(),
                             nullptr, nullptr);
            coarse_sp.eval_ref(cg.to_ref_x(x), cg.to_ref_y(y), cv.data(),
                               nullptr, nullptr);
            // the reference Gram matrix of the fine basis is the identity
            for (int i = 0; i < nf; ++i)
                for (int j = 0; j < ncs; ++j)
                    block(i, j) += rule.weights[q] * fv[i] * cv[j];
        }
        for (int i = 0; i < nf; ++i)
            for (int j = 0; j < ncs; ++j)
                triplets.emplace_back(fine_dm.offset(e) + i,
                                      coarse_dm.offset(d) + j, block(i, j));
    }

    Injection inj;
    inj.kind = Injection::Kind::Coarse;
    inj.matrix.resize(fine_dm.total_dofs(), coarse_dm.total_dofs());
    inj.matrix.setFromTriplets(triplets.begin(), triplets.end());
    return inj;
}

/// 0/1 selection of the fine dofs supported on subdomain `s`.
inline Injection build_subdomain_injection(const DofMap& fine_dm,
                                           const NestedHierarchy& hier, int s) {
    if (s < 0 || s >= hier.subdomains.count())
        throw std::invalid_argument("build_subdomain_injection: bad subdomain index");
    std::vector<Eigen::Triplet<double>> triplets;
    int local = 0;
    for (int e : hier.subdomain_elements[s])
        for (int i = 0; i < fine_dm.dim(e); ++i)
            triplets.emplace_back(fine_dm.offset(e) + i, local++, 1.0);
    Injection inj;
    inj.kind = Injection::Kind::Subdomain;
    inj.subdomain_index = s;
    inj.matrix.resize(fine_dm.total_dofs(), local);
    inj.matrix.setFromTriplets(triplets.begin(), triplets.end());
    return inj;
}

/// Additive Schwarz preconditioner B = sum_i I_i A_i^{-1} I_i^T with
/// A_i = I_i^T A I_i factorized once by a sparse direct solver.
class SchwarzPreconditioner {
  public:
    SchwarzPreconditioner(const Eigen::SparseMatrix<double>& A,
                          std::vector<Injection> injections)
        : inj_(std::move(injections)) {
        if (inj_.empty())
            throw std::invalid_argument("SchwarzPreconditioner: no subspaces");
        n_ = A.rows();
        for (std::size_t i = 0; i < inj_.size(); ++i) {
            const auto& I = inj_[i].matrix;
            if (I.rows() != n_)
                throw std::invalid_argument("SchwarzPreconditioner: injection size mismatch");
            trans_.emplace_back(I.transpose());
            local_.emplace_back(
                Eigen::SparseMatrix<double>(trans_.back() * A * I));
            auto llt = std::make_unique<
                Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>>(local_.back());
            if (llt->info() != Eigen::Success)
                throw std::runtime_error(
                    "SchwarzPreconditioner: local matrix " + std::to_string(i) +
                    " is not positive definite");
            fact_.push_back(std::move(llt));
            ++factorizations_;
        }
    }

    Eigen::Index size() const { return n_; }
    int num_spaces() const { return static_cast<int>(inj_.size()); }
    std::size_t factorization_count() const { return factorizations_; }
    const Injection& injection(int i) const { return inj_[i]; }
    const Eigen::SparseMatrix<double>& local_matrix(int i) const { return local_[i]; }

    void apply(const Eigen::VectorXd& r, Eigen::VectorXd& z) const {
        z.setZero(n_);
        for (std::size_t i = 0; i < inj_.size(); ++i) {
            const Eigen::VectorXd rl = trans_[i] * r;
            z += inj_[i].matrix * fact_[i]->solve(rl);
        }
    }

    Eigen::VectorXd apply(const Eigen::VectorXd& r) const {
        Eigen::VectorXd z;
        apply(r, z);
        return z;
    }

    LinOp as_operator() const {
        return [this](const Eigen::VectorXd& x, Eigen::VectorXd& y) { apply(x, y); };
    }

    /// P_i x = I_i A_i^{-1} I_i^T A x (the a_h-orthogonal projection onto
    /// subspace i).
    Eigen::VectorXd project(int i, const Eigen::SparseMatrix<double>& A,
                            const Eigen::VectorXd& x) const {
        const Eigen::VectorXd ax = A * x;
        const Eigen::VectorXd rl = trans_[i] * ax;
        return inj_[i].matrix * fact_[i]->solve(rl);
    }

  private:
    std::vector<Injection> inj_;
    std::vector<Eigen::SparseMatrix<double>> trans_;
    std::vector<Eigen::SparseMatrix<double>> local_;
    std::vector<std::unique_ptr<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>>> fact_;
    Eigen::Index n_ = 0;
    std::size_t factorizations_ = 0;
};

/// Builds the two-level additive Schwarz preconditioner: the coarse space
/// (when a coarse dofmap is given) plus one exact solver per subdomain.
inline SchwarzPreconditioner
build_preconditioner(const Eigen::SparseMatrix<double>& A,
                     const NestedHierarchy& hier, const DofMap& fine_dm,
                     const DofMap* coarse_dm = nullptr) {
    std::vector<Injection> injections;
    if (coarse_dm)
        injections.push_back(build_coarse_injection(fine_dm, *coarse_dm, hier));
    for (int s = 0; s < hier.subdomains.count(); ++s)
        injections.push_back(build_subdomain_injection(fine_dm, hier, s));
    return SchwarzPreconditioner(A, std::move(injections));
}

enum class EigMethod { Auto, Dense, Lanczos };

struct ConditionReport {
    double kappa = 0.0;
    double lambda_min = 0.0;
    double lambda_max = 0.0;
    int iterations = 0;
};

/// Condition number of the preconditioned operator P = BA. P is self-adjoint
/// and positive in the A-inner product; its spectrum equals that of L^T B L
/// where A = L L^T, which the dense path solves directly. The Lanczos path
/// iterates on BA in the A-inner product with full reorthogonalization.
inline ConditionReport
condition_number_of_P(const Eigen::SparseMatrix<double>& A,
                      const SchwarzPreconditioner& B,
                      EigMethod method = EigMethod::Auto, double tol = 1e-3) {
    const Eigen::Index n = A.rows();
    if (method == EigMethod::Auto)
        method = n <= 5000 ? EigMethod::Dense : EigMethod::Lanczos;

    ConditionReport rep;
    if (method == EigMethod::Dense) {
        const DenseCholesky chol{Eigen::MatrixXd(A)};
        const Eigen::MatrixXd& L = chol.matrix_l();
        Eigen::MatrixXd BL(n, n);
        Eigen::VectorXd col(n), z(n);
        for (Eigen::Index j = 0; j < n; ++j) {
            col = L.col(j);
            B.apply(col, z);
            BL.col(j) = z;
        }
        Eigen::MatrixXd W = L.transpose() * BL;
        W = 0.5 * (W + W.transpose()).eval();
        const Eigen::VectorXd ev = dense_sym_eigenvalues(W);
        rep.lambda_min = ev[0];
        rep.lambda_max = ev[n - 1];
    } else {
        // lanczos_extreme hands the operator the metric image A v, so the
        // preconditioner application alone realizes w = B (A v).
        const ExtremeEigs e =
            lanczos_extreme(B.as_operator(), sparse_op(A), n, tol, 200);
        if (!e.converged)
            throw std::runtime_error(
                "condition_number_of_P: Lanczos did not converge within the iteration cap");
        rep.lambda_min = e.lambda_min;
        rep.lambda_max = e.lambda_max;
        rep.iterations = e.iterations;
    }
    if (rep.lambda_min <= 0.0)
        throw std::runtime_error("condition_number_of_P: nonpositive eigenvalue");
    rep.kappa = rep.lambda_max / rep.lambda_min;
    return rep;
}

} // namespace hpdg
