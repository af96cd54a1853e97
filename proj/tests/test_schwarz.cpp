#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <random>

#include "hpdg/schwarz.hpp"

using namespace hpdg;

namespace {

Eigen::VectorXd random_vector(int n, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i)
        v[i] = unit(rng);
    return v;
}

struct Exp1Setup {
    NestedHierarchy hier;
    DofMap fine_dm;
    DofMap coarse_dm;
    Eigen::SparseMatrix<double> A;

    Exp1Setup(int p, int q, SpaceKind kind = SpaceKind::Total)
        : hier(build_hierarchy(4, 2, SubdomainSpec{})),
          fine_dm(hier.fine, make_poly_space(p, kind)),
          coarse_dm_mesh(hier.coarse_mesh()),
          coarse_dm(coarse_dm_mesh, make_poly_space(q, kind)),
          A(assemble_ah(fine_dm, PenaltyConfig{10.0, 10.0, PenaltyMode::DegreeScaled})) {}

  private:
    Mesh coarse_dm_mesh;
};

} // namespace

TEST_CASE("coarse injection reproduces nested polynomials pointwise") {
    const NestedHierarchy hier = build_hierarchy(4, 2, SubdomainSpec{});
    const Mesh coarse = hier.coarse_mesh();
    const DofMap fine_dm(hier.fine, make_poly_space(3, SpaceKind::Total));
    const DofMap coarse_dm(coarse, make_poly_space(1, SpaceKind::Total));
    const Injection I0 = build_coarse_injection(fine_dm, coarse_dm, hier);

    // the global linear x lies in the coarse space
    const Eigen::VectorXd cx = project(coarse_dm, [](double x, double) { return x; });
    const Eigen::VectorXd fx = I0.matrix * cx;
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            const Point pt{0.1 + 0.2 * i, 0.1 + 0.2 * j};
            const int e = hier.fine.element_index(std::min(int(pt.x * 4), 3),
                                                  std::min(int(pt.y * 4), 3));
            const BasisValues bv =
                eval_basis(fine_dm.space(e), hier.fine.element(e), pt, 0);
            double v = 0;
            for (int k = 0; k < fine_dm.dim(e); ++k)
                v += fx[fine_dm.offset(e) + k] * bv.value[k];
            CHECK(std::abs(v - pt.x) < 1e-12);
        }
}

TEST_CASE("injected coarse functions have no jumps inside coarse elements") {
    const NestedHierarchy hier = build_hierarchy(4, 2, SubdomainSpec{});
    const Mesh coarse = hier.coarse_mesh();
    const DofMap fine_dm(hier.fine, make_poly_space(4, SpaceKind::Total));
    const DofMap coarse_dm(coarse, make_poly_space(3, SpaceKind::Total));
    const Injection I0 = build_coarse_injection(fine_dm, coarse_dm, hier);

    const Eigen::VectorXd vc = random_vector(coarse_dm.total_dofs(), 5);
    const Eigen::VectorXd vf = I0.matrix * vc;

    for (const FaceInfo& f : hier.fine.faces()) {
        if (!f.interior())
            continue;
        if (hier.parent[f.ext_element] != hier.parent[f.int_element])
            continue; // only faces interior to a coarse element
        for (double s : {0.2, 0.7}) {
            const Point pt{f.a.x + s * (f.b.x - f.a.x), f.a.y + s * (f.b.y - f.a.y)};
            auto side = [&](int e) {
                const BasisValues bv =
                    eval_basis(fine_dm.space(e), hier.fine.element(e), pt, 1);
                double v = 0, gx = 0, gy = 0;
                for (int k = 0; k < fine_dm.dim(e); ++k) {
                    const double c = vf[fine_dm.offset(e) + k];
                    v += c * bv.value[k];
                    gx += c * bv.grad[k][0];
                    gy += c * bv.grad[k][1];
                }
                return std::array<double, 3>{v, gx, gy};
            };
            const auto e = side(f.ext_element);
            const auto i = side(f.int_element);
            const double scale = std::abs(e[0]) + std::abs(e[1]) + std::abs(e[2]) + 1.0;
            CHECK(std::abs(e[0] - i[0]) < 1e-11 * scale);
            CHECK(std::abs(e[1] - i[1]) < 1e-10 * scale);
            CHECK(std::abs(e[2] - i[2]) < 1e-10 * scale);
        }
    }
}

TEST_CASE("coarse injection rejects coarse degree above fine degree") {
    const NestedHierarchy hier = build_hierarchy(4, 2, SubdomainSpec{});
    const Mesh coarse = hier.coarse_mesh();
    const DofMap fine_dm(hier.fine, make_poly_space(2, SpaceKind::Total));
    const DofMap coarse_dm(coarse, make_poly_space(3, SpaceKind::Total));
    CHECK_THROWS_AS(build_coarse_injection(fine_dm, coarse_dm, hier),
                    std::invalid_argument);
}

TEST_CASE("subdomain injections are orthonormal selections") {
    const NestedHierarchy hier = build_hierarchy(4, 2, SubdomainSpec{});
    const DofMap fine_dm(hier.fine, make_poly_space(2, SpaceKind::Total));
    for (int s = 0; s < 4; ++s) {
        const Injection I = build_subdomain_injection(fine_dm, hier, s);
        const Eigen::SparseMatrix<double> gram =
            Eigen::SparseMatrix<double>(I.matrix.transpose()) * I.matrix;
        const Eigen::MatrixXd dense(gram);
        CHECK((dense - Eigen::MatrixXd::Identity(I.local_dim(), I.local_dim()))
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
    }
}

TEST_CASE("energy identity: local matrices are exact restrictions") {
    const NestedHierarchy hier = build_hierarchy(4, 2, SubdomainSpec{});
    const Mesh coarse = hier.coarse_mesh();
    const DofMap fine_dm(hier.fine, make_poly_space(3, SpaceKind::Total));
    const DofMap coarse_dm(coarse, make_poly_space(2, SpaceKind::Total));
    const PenaltyConfig cfg{10.0, 10.0, PenaltyMode::DegreeScaled};
    const Eigen::SparseMatrix<double> A = assemble_ah(fine_dm, cfg);
    const SchwarzPreconditioner B = build_preconditioner(A, hier, fine_dm, &coarse_dm);

    // a_h(I_i v, I_i v) = v^T A_i v for the coarse space and every subdomain
    for (int i = 0; i < B.num_spaces(); ++i) {
        const Injection& inj = B.injection(i);
        const Eigen::VectorXd v = random_vector(inj.local_dim(), 17 + i);
        const Eigen::VectorXd gv = inj.matrix * v;
        const double through_global = gv.dot(A * gv);
        const double through_local = v.dot(B.local_matrix(i) * v);
        CHECK(std::abs(through_global - through_local) <=
              1e-12 * std::abs(through_global));
    }
}

TEST_CASE("preconditioner apply is symmetric as a bilinear map") {
    const NestedHierarchy hier = build_hierarchy(4, 2, SubdomainSpec{});
    const Mesh coarse = hier.coarse_mesh();
    const DofMap fine_dm(hier.fine, make_poly_space(3, SpaceKind::Total));
    const DofMap coarse_dm(coarse, make_poly_space(2, SpaceKind::Total));
    const PenaltyConfig cfg{10.0, 10.0, PenaltyMode::DegreeScaled};
    const Eigen::SparseMatrix<double> A = assemble_ah(fine_dm, cfg);
    const SchwarzPreconditioner B = build_preconditioner(A, hier, fine_dm, &coarse_dm);

    const Eigen::VectorXd r = random_vector(fine_dm.total_dofs(), 21);
    const Eigen::VectorXd s = random_vector(fine_dm.total_dofs(), 22);
    const double rs = r.dot(B.apply(s));
    const double sr = s.dot(B.apply(r));
    CHECK(std::abs(rs - sr) <= 1e-10 * std::abs(rs));
}

TEST_CASE("single subdomain with an exact solver gives kappa = 1") {
    SubdomainSpec spec;
    spec.sx = 1;
    spec.sy = 1;
    const NestedHierarchy hier = build_hierarchy(2, 0, spec);
    const DofMap dm(hier.fine, make_poly_space(2, SpaceKind::Total));
    const PenaltyConfig cfg{10.0, 10.0, PenaltyMode::DegreeScaled};
    const Eigen::SparseMatrix<double> A = assemble_ah(dm, cfg);
    const SchwarzPreconditioner B = build_preconditioner(A, hier, dm);
    const ConditionReport rep = condition_number_of_P(A, B, EigMethod::Dense);
    CHECK(std::abs(rep.kappa - 1.0) <= 1e-6);
}

TEST_CASE("strengthened Cauchy-Schwarz matrix of the quadrants has rho = 4") {
    const NestedHierarchy hier = build_hierarchy(4, 2, SubdomainSpec{});
    const int n = hier.subdomains.count();
    Eigen::MatrixXd E = Eigen::MatrixXd::Identity(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (hier.subdomains.adjacency[i][j])
                E(i, j) = 1.0;
    const Eigen::VectorXd ev = dense_sym_eigenvalues(E);
    CHECK(ev[n - 1] == Catch::Approx(4.0)); // N_c + 1
}

TEST_CASE("P_i are A-orthogonal projections") {
    const NestedHierarchy hier = build_hierarchy(4, 2, SubdomainSpec{});
    const Mesh coarse = hier.coarse_mesh();
    const DofMap fine_dm(hier.fine, make_poly_space(3, SpaceKind::Total));
    const DofMap coarse_dm(coarse, make_poly_space(2, SpaceKind::Total));
    const PenaltyConfig cfg{10.0, 10.0, PenaltyMode::DegreeScaled};
    const Eigen::SparseMatrix<double> A = assemble_ah(fine_dm, cfg);
    const SchwarzPreconditioner B = build_preconditioner(A, hier, fine_dm, &coarse_dm);

    const Eigen::VectorXd x = random_vector(fine_dm.total_dofs(), 33);
    for (int i = 0; i < B.num_spaces(); ++i) {
        const Eigen::VectorXd px = B.project(i, A, x);
        const Eigen::VectorXd ppx = B.project(i, A, px);
        CHECK((ppx - px).norm() <= 1e-8 * x.norm());
    }
}

TEST_CASE("golden condition numbers of the degree-sweep configuration") {
    // (p,q) = (2,2) and (4,3); the remaining reference cells run during
    // acceptance
    {
        const NestedHierarchy hier = build_hierarchy(4, 2, SubdomainSpec{});
        const Mesh coarse = hier.coarse_mesh();
        const DofMap fine_dm(hier.fine, make_poly_space(2, SpaceKind::Total));
        const DofMap coarse_dm(coarse, make_poly_space(2, SpaceKind::Total));
        const PenaltyConfig cfg{10.0, 10.0, PenaltyMode::DegreeScaled};
        const Eigen::SparseMatrix<double> A = assemble_ah(fine_dm, cfg);
        const SchwarzPreconditioner B =
            build_preconditioner(A, hier, fine_dm, &coarse_dm);
        const ConditionReport rep = condition_number_of_P(A, B, EigMethod::Dense);
        CHECK(std::abs(rep.kappa - 2.16e1) <= 0.05 * 2.16e1);
        CHECK(rep.lambda_max <= 5.0 * 1.01);
        CHECK(rep.lambda_min > 0.0);

        // Lanczos agrees with the dense spectrum
        const ConditionReport it =
            condition_number_of_P(A, B, EigMethod::Lanczos, 1e-6);
        CHECK(std::abs(it.kappa - rep.kappa) <= 1e-3 * rep.kappa);
    }
    {
        const NestedHierarchy hier = build_hierarchy(4, 2, SubdomainSpec{});
        const Mesh coarse = hier.coarse_mesh();
        const DofMap fine_dm(hier.fine, make_poly_space(4, SpaceKind::Total));
        const DofMap coarse_dm(coarse, make_poly_space(3, SpaceKind::Total));
        const PenaltyConfig cfg{10.0, 10.0, PenaltyMode::DegreeScaled};
        const Eigen::SparseMatrix<double> A = assemble_ah(fine_dm, cfg);
        const SchwarzPreconditioner B =
            build_preconditioner(A, hier, fine_dm, &coarse_dm);
        const ConditionReport rep = condition_number_of_P(A, B, EigMethod::Dense);
        CHECK(std::abs(rep.kappa - 3.16e2) <= 0.05 * 3.16e2);
        CHECK(rep.lambda_max <= 5.0 * 1.01);
    }
}

TEST_CASE("kappa(P) does not depend on the basis convention") {
    const NestedHierarchy hier = build_hierarchy(4, 2, SubdomainSpec{});
    const Mesh coarse = hier.coarse_mesh();
    const PenaltyConfig cfg{10.0, 10.0, PenaltyMode::DegreeScaled};

    auto kappa_with = [&](std::shared_ptr<const PolySpace> fine_sp,
                          std::shared_ptr<const PolySpace> coarse_sp) {
        const DofMap fine_dm(hier.fine, std::move(fine_sp));
        const DofMap coarse_dm(coarse, std::move(coarse_sp));
        const Eigen::SparseMatrix<double> A = assemble_ah(fine_dm, cfg);
        const SchwarzPreconditioner B =
            build_preconditioner(A, hier, fine_dm, &coarse_dm);
        return condition_number_of_P(A, B, EigMethod::Dense).kappa;
    };

    const auto fine_plain = make_poly_space(3, SpaceKind::Total);
    const auto coarse_plain = make_poly_space(2, SpaceKind::Total);

    std::vector<int> fperm(fine_plain->dim()), cperm(coarse_plain->dim());
    std::vector<double> fsign(fine_plain->dim()), csign(coarse_plain->dim());
    for (int i = 0; i < fine_plain->dim(); ++i) {
        fperm[i] = fine_plain->dim() - 1 - i;
        fsign[i] = i % 2 ? -1.0 : 1.0;
    }
    for (int i = 0; i < coarse_plain->dim(); ++i) {
        cperm[i] = coarse_plain->dim() - 1 - i;
        csign[i] = i % 3 == 1 ? -1.0 : 1.0;
    }
    const auto fine_flip = std::make_shared<const PolySpace>(
        fine_plain->reordered(fperm, fsign));
    const auto coarse_flip = std::make_shared<const PolySpace>(
        coarse_plain->reordered(cperm, csign));

    const double k1 = kappa_with(fine_plain, coarse_plain);
    const double k2 = kappa_with(fine_flip, coarse_flip);
    CHECK(std::abs(k1 - k2) <= 1e-6 * k1);
}

TEST_CASE("overlapping preconditioner builds and stays within the spectral bound") {
    SubdomainSpec spec;
    spec.overlapping = true;
    spec.delta = 0.25;
    const NestedHierarchy hier = build_hierarchy(8, 2, spec);
    const Mesh coarse = hier.coarse_mesh();
    const DofMap fine_dm(hier.fine, make_poly_space(2, SpaceKind::Partial));
    const DofMap coarse_dm(coarse, make_poly_space(2, SpaceKind::Partial));
    const PenaltyConfig cfg{10.0, 10.0, PenaltyMode::ConstantDegree};
    const Eigen::SparseMatrix<double> A = assemble_ah(fine_dm, cfg);
    const SchwarzPreconditioner B = build_preconditioner(A, hier, fine_dm, &coarse_dm);
    const ConditionReport rep = condition_number_of_P(A, B, EigMethod::Dense);
    CHECK(rep.lambda_max <= 5.0 * 1.01);
    CHECK(rep.lambda_min > 0.0);
}

TEST_CASE("local factorization failure signals lost coercivity") {
    const NestedHierarchy hier = build_hierarchy(4, 2, SubdomainSpec{});
    const Mesh coarse = hier.coarse_mesh();
    const DofMap fine_dm(hier.fine, make_poly_space(2, SpaceKind::Total));
    const DofMap coarse_dm(coarse, make_poly_space(2, SpaceKind::Total));
    const PenaltyConfig weak{1e-8, 1e-8, PenaltyMode::DegreeScaled};
    const Eigen::SparseMatrix<double> A =
        assemble_ah(fine_dm, weak, SpdProbe::Skip);
    CHECK_THROWS_WITH(build_preconditioner(A, hier, fine_dm, &coarse_dm),
                      Catch::Matchers::ContainsSubstring("not positive definite"));
}
