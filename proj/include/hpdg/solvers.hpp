#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace hpdg {

using LinOp = std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>;

inline LinOp sparse_op(const Eigen::SparseMatrix<double>& A) {
    return [&A](const Eigen::VectorXd& x, Eigen::VectorXd& y) { y.noalias() = A * x; };
}

inline LinOp identity_op() {
    return [](const Eigen::VectorXd& x, Eigen::VectorXd& y) { y = x; };
}

struct SolveReport {
    int iterations = 0;
    std::vector<double> residual_history; // [0] is the initial residual norm
    bool converged = false;
    double achieved_reduction = 1.0;
};

/// Preconditioned conjugate gradients. One iteration is one update of the
/// iterate (equivalently, one preconditioner application inside the loop);
/// convergence is measured on the Euclidean norm of the unpreconditioned
/// residual, relative to ||b - A x0||.
inline std::pair<Eigen::VectorXd, SolveReport>
pcg(const LinOp& A, const LinOp& B, const Eigen::VectorXd& b,
    const Eigen::VectorXd& x0, double reduction, int maxit) {
    if (reduction <= 0.0 || reduction >= 1.0)
        throw std::invalid_argument("pcg: reduction must lie in (0,1)");
    Eigen::VectorXd x = x0;
    Eigen::VectorXd r(b.size()), z(b.size()), q(b.size());
    A(x, r);
    r = b - r;
    SolveReport rep;
    const double r0 = r.norm();
    rep.residual_history.push_back(r0);
    if (r0 == 0.0) {
        rep.converged = true;
        rep.achieved_reduction = 0.0;
        return {x, rep};
    }
    B(r, z);
    Eigen::VectorXd p = z;
    double rz = r.dot(z);
    if (rz <= 0.0)
        throw std::runtime_error("pcg: preconditioner is not positive definite");
    for (int k = 1; k <= maxit; ++k) {
        A(p, q);
        const double pq = p.dot(q);
        if (pq <= 0.0)
            throw std::runtime_error("pcg: nonpositive curvature (operator not SPD)");
        const double alpha = rz / pq;
        x += alpha * p;
        r -= alpha * q;
        const double rn = r.norm();
        rep.residual_history.push_back(rn);
        rep.iterations = k;
        if (rn <= reduction * r0) {
            rep.converged = true;
            break;
        }
        B(r, z);
        const double rz_new = r.dot(z);
        if (rz_new <= 0.0)
            throw std::runtime_error("pcg: preconditioner is not positive definite");
        p = z + (rz_new / rz) * p;
        rz = rz_new;
    }
    rep.achieved_reduction = rep.residual_history.back() / r0;
    return {x, rep};
}

/// Left-preconditioned, unrestarted GMRES. Convergence is measured on the
/// preconditioned residual ||B(b - Ax)|| relative to its initial value; one
/// iteration is one application of B(A .) inside the Arnoldi loop.
inline std::pair<Eigen::VectorXd, SolveReport>
gmres_left(const LinOp& A, const LinOp& B, const Eigen::VectorXd& b,
           const Eigen::VectorXd& x0, double reduction, int maxit) {
    if (reduction <= 0.0 || reduction >= 1.0)
        throw std::invalid_argument("gmres_left: reduction must lie in (0,1)");
    const Eigen::Index n = b.size();
    maxit = static_cast<int>(std::min<Eigen::Index>(maxit, n));

    Eigen::VectorXd tmp(n), r(n);
    A(x0, tmp);
    tmp = b - tmp;
    B(tmp, r);

    SolveReport rep;
    const double beta = r.norm();
    rep.residual_history.push_back(beta);
    if (beta == 0.0) {
        rep.converged = true;
        rep.achieved_reduction = 0.0;
        return {x0, rep};
    }

    std::vector<Eigen::VectorXd> V;
    V.push_back(r / beta);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(maxit + 1, maxit);
    Eigen::VectorXd cs = Eigen::VectorXd::Zero(maxit);
    Eigen::VectorXd sn = Eigen::VectorXd::Zero(maxit);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(maxit + 1);
    g[0] = beta;

    int j = 0;
    bool done = false;
    for (; j < maxit && !done; ++j) {
        A(V[j], tmp);
        Eigen::VectorXd w(n);
        B(tmp, w);
        for (int i = 0; i <= j; ++i) { // modified Gram-Schmidt
            H(i, j) = w.dot(V[i]);
            w -= H(i, j) * V[i];
        }
        const double h_sub = w.norm();
        H(j + 1, j) = h_sub;

        for (int i = 0; i < j; ++i) {
            const double t = cs[i] * H(i, j) + sn[i] * H(i + 1, j);
            H(i + 1, j) = -sn[i] * H(i, j) + cs[i] * H(i + 1, j);
            H(i, j) = t;
        }
        const double denom = std::hypot(H(j, j), H(j + 1, j));
        cs[j] = H(j, j) / denom;
        sn[j] = H(j + 1, j) / denom;
        H(j, j) = denom;
        H(j + 1, j) = 0.0;
        g[j + 1] = -sn[j] * g[j];
        g[j] = cs[j] * g[j];

        const double res = std::abs(g[j + 1]);
        rep.residual_history.push_back(res);
        rep.iterations = j + 1;
        if (res <= reduction * beta) {
            rep.converged = true;
            done = true;
        } else if (h_sub <= 1e-300) {
            done = true; // exact subspace solution (lucky breakdown)
            rep.converged = true;
        }
        if (!done)
            V.push_back(w / h_sub);
    }

    const int k = rep.iterations;
    Eigen::VectorXd y =
        H.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
    Eigen::VectorXd x = x0;
    for (int i = 0; i < k; ++i)
        x += y[i] * V[i];
    rep.achieved_reduction = rep.residual_history.back() / beta;
    return {x, rep};
}

/// Dense Cholesky factorization A = L L^T. Reports the first nonpositive
/// pivot when the matrix is not positive definite.
class DenseCholesky {
  public:
    explicit DenseCholesky(Eigen::MatrixXd A) : L_(std::move(A)) {
        const Eigen::Index n = L_.rows();
        if (L_.cols() != n)
            throw std::invalid_argument("DenseCholesky: matrix must be square");
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j > 0)
                L_.col(j).tail(n - j).noalias() -=
                    L_.bottomLeftCorner(n - j, j) * L_.row(j).head(j).transpose();
            const double d = L_(j, j);
            if (d <= 0.0)
                throw std::runtime_error(
                    "DenseCholesky: nonpositive pivot at index " + std::to_string(j));
            const double s = std::sqrt(d);
            L_(j, j) = s;
            L_.col(j).tail(n - j - 1) /= s;
        }
        L_.triangularView<Eigen::StrictlyUpper>().setZero();
    }

    const Eigen::MatrixXd& matrix_l() const { return L_; }

    Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
        Eigen::VectorXd y = L_.triangularView<Eigen::Lower>().solve(b);
        return L_.transpose().triangularView<Eigen::Upper>().solve(y);
    }

    double log_det() const { return 2.0 * L_.diagonal().array().log().sum(); }
    double det() const { return std::exp(log_det()); }

  private:
    Eigen::MatrixXd L_;
};

/// Eigenvalues of a dense symmetric matrix, ascending.
inline Eigen::VectorXd dense_sym_eigenvalues(const Eigen::MatrixXd& A) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A,
                                                      Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("dense_sym_eigenvalues: eigensolver failed");
    return es.eigenvalues();
}

struct ExtremeEigs {
    double lambda_min = 0.0;
    double lambda_max = 0.0;
    int iterations = 0;
    bool converged = false;
};

namespace detail {

inline Eigen::VectorXd seeded_random_vector(Eigen::Index n, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        v[i] = dist(rng);
    return v;
}

inline ExtremeEigs tridiagonal_extremes(const std::vector<double>& alpha,
                                        const std::vector<double>& beta) {
    const int k = static_cast<int>(alpha.size());
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(k, k);
    for (int i = 0; i < k; ++i) {
        T(i, i) = alpha[i];
        if (i + 1 < k) {
            T(i, i + 1) = beta[i];
            T(i + 1, i) = beta[i];
        }
    }
    const Eigen::VectorXd ev = dense_sym_eigenvalues(T);
    return {ev[0], ev[k - 1], k, false};
}

} // namespace detail

/// Lanczos iteration for the extreme eigenvalues of an operator that is
/// self-adjoint in the inner product (x,y) = x^T M y, with full
/// reorthogonalization. For the additive Schwarz operator P = BA, pass
/// op = B(A .) and metric = A.
inline ExtremeEigs lanczos_extreme(const LinOp& op, const LinOp& metric,
                                   Eigen::Index n, double tol = 1e-3,
                                   int maxit = 200, unsigned seed = 20210103) {
    std::vector<Eigen::VectorXd> V, MV; // Lanczos vectors and metric images
    std::vector<double> alpha, beta;

    Eigen::VectorXd v = detail::seeded_random_vector(n, seed);
    Eigen::VectorXd mv(n);
    metric(v, mv);
    double nrm = std::sqrt(v.dot(mv));
    if (nrm <= 0.0)
        throw std::runtime_error("lanczos_extreme: metric is not positive definite");
    v /= nrm;
    mv /= nrm;

    ExtremeEigs prev{0, 0, 0, false};
    for (int k = 0; k < maxit; ++k) {
        V.push_back(v);
        MV.push_back(mv);
        Eigen::VectorXd w(n);
        op(mv, w); // w = B (A v_k)
        const double a = w.dot(mv);
        alpha.push_back(a);
        w -= a * v;
        if (k > 0)
            w -= beta.back() * V[k - 1];
        for (std::size_t i = 0; i < V.size(); ++i) // full reorthogonalization
            w -= w.dot(MV[i]) * V[i];

        Eigen::VectorXd mw(n);
        metric(w, mw);
        double b2 = w.dot(mw);
        double b = b2 > 0.0 ? std::sqrt(b2) : 0.0;

        ExtremeEigs cur = detail::tridiagonal_extremes(alpha, beta);
        cur.iterations = k + 1;
        if (b <= 1e-12 * std::abs(cur.lambda_max)) {
            cur.converged = true; // invariant subspace exhausted
            return cur;
        }
        if (k >= 8 &&
            std::abs(cur.lambda_min - prev.lambda_min) <=
                tol * std::abs(cur.lambda_min) &&
            std::abs(cur.lambda_max - prev.lambda_max) <=
                tol * std::abs(cur.lambda_max)) {
            cur.converged = true;
            return cur;
        }
        prev = cur;
        beta.push_back(b);
        v = w / b;
        mv = mw / b;
    }
    ExtremeEigs out = detail::tridiagonal_extremes(alpha, beta);
    out.iterations = maxit;
    out.converged = false;
    return out;
}

/// Extreme eigenvalues of a symmetric operator in the Euclidean inner product.
inline ExtremeEigs lanczos_extreme_sym(const LinOp& op, Eigen::Index n,
                                       double tol = 1e-6, int maxit = 200,
                                       unsigned seed = 20210103) {
    return lanczos_extreme(op, identity_op(), n, tol, maxit, seed);
}

/// Smallest eigenvalue of a sparse SPD matrix via shift-invert Lanczos at
/// zero; throws if the matrix is not positive definite.
inline double smallest_eigenvalue_spd(const Eigen::SparseMatrix<double>& A,
                                      double tol = 1e-6, int maxit = 200) {
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(A);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("smallest_eigenvalue_spd: matrix is not SPD");
    LinOp inv = [&llt](const Eigen::VectorXd& x, Eigen::VectorXd& y) {
        y = llt.solve(x);
    };
    const ExtremeEigs e = lanczos_extreme_sym(inv, A.rows(), tol, maxit);
    return 1.0 / e.lambda_max;
}

} // namespace hpdg
