#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <numeric>

#include "hpdg/solvers.hpp"

using namespace hpdg;

namespace {

LinOp dense_op(const Eigen::MatrixXd& A) {
    return [&A](const Eigen::VectorXd& x, Eigen::VectorXd& y) { y = A * x; };
}

// exact fraction arithmetic for the determinant oracle
struct Fraction {
    __int128 num = 0, den = 1;

    void reduce() {
        __int128 a = num < 0 ? -num : num, b = den < 0 ? -den : den;
        while (b) {
            __int128 t = a % b;
            a = b;
            b = t;
        }
        if (a == 0)
            a = 1;
        num /= a;
        den /= a;
        if (den < 0) {
            num = -num;
            den = -den;
        }
    }
    Fraction operator*(const Fraction& o) const {
        Fraction r{num * o.num, den * o.den};
        r.reduce();
        return r;
    }
    Fraction operator/(const Fraction& o) const {
        Fraction r{num * o.den, den * o.num};
        r.reduce();
        return r;
    }
    Fraction operator-(const Fraction& o) const {
        Fraction r{num * o.den - o.num * den, den * o.den};
        r.reduce();
        return r;
    }
    double value() const { return double(num) / double(den); }
};

// determinant by fraction-exact Gaussian elimination
Fraction exact_determinant(std::vector<std::vector<Fraction>> m) {
    const std::size_t n = m.size();
    Fraction det{1, 1};
    for (std::size_t k = 0; k < n; ++k) {
        det = det * m[k][k];
        for (std::size_t i = k + 1; i < n; ++i) {
            const Fraction f = m[i][k] / m[k][k];
            for (std::size_t j = k; j < n; ++j)
                m[i][j] = m[i][j] - f * m[k][j];
        }
    }
    return det;
}

} // namespace

TEST_CASE("pcg on a diagonal system") {
    Eigen::MatrixXd A = Eigen::Vector3d(1, 2, 3).asDiagonal();
    const Eigen::VectorXd b = Eigen::Vector3d(1, 1, 1);
    const Eigen::VectorXd x0 = Eigen::Vector3d::Zero();

    auto [x, rep] = pcg(dense_op(A), identity_op(), b, x0, 1e-12, 10);
    CHECK(rep.converged);
    CHECK(rep.iterations <= 3); // three distinct eigenvalues
    CHECK((A * x - b).norm() < 1e-10);
    CHECK(rep.residual_history.front() > 0.0);
    CHECK(rep.achieved_reduction <= 1e-12);
}

TEST_CASE("pcg with the exact inverse converges in one iteration") {
    Eigen::MatrixXd A(3, 3);
    A << 4, 1, 0, 1, 3, 1, 0, 1, 2;
    const Eigen::MatrixXd Ainv = A.inverse();
    const Eigen::VectorXd b = Eigen::Vector3d(1, -2, 5);
    auto [x, rep] =
        pcg(dense_op(A), dense_op(Ainv), b, Eigen::Vector3d::Zero(), 1e-10, 10);
    CHECK(rep.converged);
    CHECK(rep.iterations == 1);
}

TEST_CASE("pcg A-norm error is monotone") {
    Eigen::MatrixXd A(6, 6);
    A.setRandom();
    A = (A * A.transpose()).eval();
    A.diagonal().array() += 1.0;
    const Eigen::VectorXd b = Eigen::VectorXd::LinSpaced(6, 1.0, 2.0);
    const Eigen::VectorXd exact = A.ldlt().solve(b);

    double prev = 1e300;
    for (int k = 1; k <= 6; ++k) {
        auto [x, rep] =
            pcg(dense_op(A), identity_op(), b, Eigen::VectorXd::Zero(6), 1e-14, k);
        const Eigen::VectorXd e = x - exact;
        const double anorm = std::sqrt(e.dot(A * e));
        CHECK(anorm <= prev * (1.0 + 1e-12) + 1e-14);
        prev = anorm;
    }
}

TEST_CASE("pcg signals an indefinite operator") {
    Eigen::MatrixXd A = Eigen::Vector2d(1, -1).asDiagonal();
    const Eigen::VectorXd b = Eigen::Vector2d(0, 1);
    CHECK_THROWS_AS(
        pcg(dense_op(A), identity_op(), b, Eigen::Vector2d::Zero(), 1e-10, 10),
        std::runtime_error);
}

TEST_CASE("gmres on a 1x1 system") {
    Eigen::MatrixXd A(1, 1);
    A << 3.0;
    Eigen::VectorXd b(1);
    b << 6.0;
    auto [x, rep] = gmres_left(dense_op(A), identity_op(), b,
                               Eigen::VectorXd::Zero(1), 1e-12, 5);
    CHECK(rep.converged);
    CHECK(rep.iterations == 1);
    CHECK(x[0] == Catch::Approx(2.0));
}

TEST_CASE("gmres residual history is monotone non-increasing") {
    Eigen::MatrixXd A(8, 8);
    A.setRandom();
    A = (A * A.transpose()).eval();
    A.diagonal().array() += 2.0;
    const Eigen::VectorXd b = Eigen::VectorXd::Ones(8);
    auto [x, rep] = gmres_left(dense_op(A), identity_op(), b,
                               Eigen::VectorXd::Zero(8), 1e-12, 20);
    CHECK(rep.converged);
    for (std::size_t i = 1; i < rep.residual_history.size(); ++i)
        CHECK(rep.residual_history[i] <=
              rep.residual_history[i - 1] * (1.0 + 1e-14));
    CHECK((A * x - b).norm() < 1e-10);
}

TEST_CASE("gmres solves nonsymmetric systems") {
    Eigen::MatrixXd A(5, 5);
    A << 4, 1, 0, 0, 2,
         0, 3, 1, 0, 0,
         1, 0, 5, 1, 0,
         0, 1, 0, 4, 1,
         0, 0, 2, 0, 3;
    const Eigen::VectorXd b = Eigen::VectorXd::LinSpaced(5, -1.0, 1.0);
    auto [x, rep] = gmres_left(dense_op(A), identity_op(), b,
                               Eigen::VectorXd::Zero(5), 1e-12, 20);
    CHECK(rep.converged);
    CHECK((A * x - b).norm() < 1e-9 * b.norm());
}

TEST_CASE("solvers are reproducible run to run") {
    Eigen::MatrixXd A(10, 10);
    A.setRandom();
    A = (A * A.transpose()).eval();
    A.diagonal().array() += 1.0;
    const Eigen::VectorXd b = Eigen::VectorXd::Ones(10);

    auto [x1, r1] = pcg(dense_op(A), identity_op(), b, Eigen::VectorXd::Zero(10),
                        1e-10, 50);
    auto [x2, r2] = pcg(dense_op(A), identity_op(), b, Eigen::VectorXd::Zero(10),
                        1e-10, 50);
    CHECK(x1 == x2);
    CHECK(r1.residual_history == r2.residual_history);

    auto [y1, g1] = gmres_left(dense_op(A), identity_op(), b,
                               Eigen::VectorXd::Zero(10), 1e-10, 50);
    auto [y2, g2] = gmres_left(dense_op(A), identity_op(), b,
                               Eigen::VectorXd::Zero(10), 1e-10, 50);
    CHECK(y1 == y2);
    CHECK(g1.residual_history == g2.residual_history);
}

TEST_CASE("dense eigenvalues of a 2x2 matrix") {
    Eigen::MatrixXd A(2, 2);
    A << 2, 1, 1, 2;
    const Eigen::VectorXd ev = dense_sym_eigenvalues(A);
    CHECK(ev[0] == Catch::Approx(1.0));
    CHECK(ev[1] == Catch::Approx(3.0));
}

TEST_CASE("dense Cholesky") {
    const DenseCholesky id(Eigen::MatrixXd::Identity(4, 4));
    CHECK((id.matrix_l() - Eigen::MatrixXd::Identity(4, 4)).norm() == 0.0);

    // Hilbert 4x4 determinant against an exact rational-arithmetic oracle
    Eigen::MatrixXd H(4, 4);
    std::vector<std::vector<Fraction>> Hf(4, std::vector<Fraction>(4));
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            H(i, j) = 1.0 / (i + j + 1);
            Hf[i][j] = Fraction{1, i + j + 1};
        }
    const Fraction det_exact = exact_determinant(Hf);
    CHECK(det_exact.num == 1);
    CHECK(static_cast<long long>(det_exact.den) == 6048000LL);

    const DenseCholesky chol(H);
    CHECK(std::abs(chol.det() - det_exact.value()) <=
          1e-6 * std::abs(det_exact.value()));

    const Eigen::VectorXd b = Eigen::VectorXd::Ones(4);
    CHECK((H * chol.solve(b) - b).norm() < 1e-10);

    Eigen::MatrixXd indefinite = Eigen::MatrixXd::Identity(3, 3);
    indefinite(1, 1) = -1.0;
    CHECK_THROWS_WITH(DenseCholesky(indefinite),
                      Catch::Matchers::ContainsSubstring("pivot at index 1"));
}

TEST_CASE("lanczos extremes of a known spectrum") {
    Eigen::VectorXd d(40);
    for (int i = 0; i < 40; ++i)
        d[i] = 1.0 + i * 0.25;
    Eigen::MatrixXd A = d.asDiagonal();
    const ExtremeEigs e = lanczos_extreme_sym(dense_op(A), 40, 1e-10, 100);
    CHECK(e.lambda_min == Catch::Approx(1.0).epsilon(1e-6));
    CHECK(e.lambda_max == Catch::Approx(1.0 + 39 * 0.25).epsilon(1e-6));
}

TEST_CASE("smallest eigenvalue by shift-invert") {
    Eigen::SparseMatrix<double> A(3, 3);
    A.insert(0, 0) = 4.0;
    A.insert(1, 1) = 0.5;
    A.insert(2, 2) = 7.0;
    A.makeCompressed();
    CHECK(smallest_eigenvalue_spd(A) == Catch::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("a solving initial guess converges without iterating") {
    Eigen::MatrixXd A(3, 3);
    A << 4, 1, 0, 1, 3, 1, 0, 1, 2;
    const Eigen::VectorXd exact = Eigen::Vector3d(1, 2, 3);
    const Eigen::VectorXd b = A * exact;
    auto [x, rep] = pcg(dense_op(A), identity_op(), b, exact, 1e-10, 10);
    CHECK(rep.converged);
    CHECK(rep.iterations == 0);
    CHECK(rep.residual_history.front() == 0.0);
}

TEST_CASE("gmres reports exceeding the iteration cap") {
    Eigen::MatrixXd A(6, 6);
    A.setRandom();
    A = (A * A.transpose()).eval();
    A.diagonal().array() += 1.0;
    const Eigen::VectorXd b = Eigen::VectorXd::Ones(6);
    auto [x, rep] = gmres_left(dense_op(A), identity_op(), b,
                               Eigen::VectorXd::Zero(6), 1e-14, 2);
    CHECK(!rep.converged);
    CHECK(rep.iterations == 2);
    CHECK(rep.achieved_reduction > 1e-14);
}
