#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hpdg/experiments.hpp"

using namespace hpdg;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("log-log rate fit recovers exact power laws") {
    std::vector<double> x, y;
    for (double v : {1.0, 2.0, 4.0, 8.0, 17.0}) {
        x.push_back(v);
        y.push_back(3.7 * std::pow(v, 2.5));
    }
    const RateFit fit = fit_loglog(x, y);
    CHECK(std::abs(fit.slope - 2.5) < 1e-10);
    CHECK(std::abs(fit.intercept - std::log(3.7)) < 1e-10);
    CHECK(fit.r2 == Catch::Approx(1.0));
    CHECK(fit.points == 5);

    CHECK_THROWS_AS(fit_loglog({1.0, 2.0}, {1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("config parsing") {
    std::istringstream good(R"(# comment line
experiment = model
c_mu = 12.5
max_refinement = 5   # trailing comment
include_large = false
partition = overlapping
delta = 0.25
fine_n = 8
coarse_n = 2
)");
    const ExperimentConfig cfg = parse_config_stream(good);
    CHECK(cfg.experiment == "model");
    CHECK(cfg.c_mu == 12.5);
    CHECK(cfg.max_refinement == 5);
    CHECK(cfg.partition == "overlapping");

    std::istringstream unknown("experiment = cond\nnot_a_key = 3\n");
    CHECK_THROWS_WITH(parse_config_stream(unknown),
                      Catch::Matchers::ContainsSubstring("unknown key"));

    std::istringstream bad_value("experiment = nope\n");
    CHECK_THROWS_AS(parse_config_stream(bad_value), std::invalid_argument);

    // builder constraints are re-validated at parse time
    std::istringstream non_nested("fine_n = 4\ncoarse_n = 3\n");
    CHECK_THROWS_AS(parse_config_stream(non_nested), std::invalid_argument);

    std::istringstream bad_degree("p = 0\n");
    CHECK_THROWS_AS(parse_config_stream(bad_degree), std::invalid_argument);
}

TEST_CASE("sweep cell layout matches the decomposition tables") {
    // overlapped columns appear once delta >= 2h; nonoverlapping once H <= 1/2
    auto present = [](int col, int k) {
        return sweep_cell_present(kSweepGeometry[col], k);
    };
    // k = 2 (h = 1/4): only nonoverlap H = 2h
    CHECK(!present(0, 2));
    CHECK(present(3, 2));
    CHECK(!present(4, 2));
    // k = 3 (h = 1/8): overlap H=2delta, nonoverlap H=2h,4h
    CHECK(present(0, 3));
    CHECK(!present(1, 3));
    CHECK(present(3, 3));
    CHECK(present(4, 3));
    CHECK(!present(5, 3));
    // k = 4 (h = 1/16): overlap H=2,4 delta; all nonoverlap
    CHECK(present(0, 4));
    CHECK(present(1, 4));
    CHECK(!present(2, 4));
    CHECK(present(5, 4));
    // k = 5 (h = 1/32): everything
    for (int col = 0; col < 6; ++col)
        CHECK(present(col, 5));
}

TEST_CASE("sweep hierarchies realize the intended geometry") {
    {
        // overlap band of total width 1/4 across each seam: quadrants extend
        // by 1/8 per side
        const NestedHierarchy h = sweep_hierarchy(kSweepGeometry[0], 3);
        CHECK(h.fine.subdivisions() == 8);
        CHECK(h.coarse_n == 2);
        CHECK(h.subdomains.overlapping);
        CHECK(h.subdomains.delta == Catch::Approx(0.125));
        CHECK(h.subdomains.regions[0].x1 == Catch::Approx(0.625));
    }
    {
        const NestedHierarchy h = sweep_hierarchy(kSweepGeometry[4], 4);
        CHECK(h.fine.subdivisions() == 16);
        CHECK(h.coarse_n == 4); // H = 4h
        CHECK(!h.subdomains.overlapping);
        CHECK(h.subdomains.count() == 4);
    }
}

TEST_CASE("condition-number sweep reproduces the reference corner") {
    ExperimentConfig cfg;
    cfg.max_p = 3;
    const Exp1Result r = run_experiment_1(cfg);
    REQUIRE(r.cells.size() == 3);
    CHECK(r.cell(2, 2)->kappa == Catch::Approx(2.16e1).epsilon(0.05));
    CHECK(r.cell(3, 2)->kappa == Catch::Approx(3.34e2).epsilon(0.05));
    CHECK(r.cell(3, 3)->kappa == Catch::Approx(6.71e1).epsilon(0.05));
    CHECK(r.p_rate.empty()); // needs at least three rows per column
}

TEST_CASE("experiment outputs are deterministic") {
    ExperimentConfig cfg;
    cfg.max_p = 3;
    const Exp1Result r1 = run_experiment_1(cfg);
    const Exp1Result r2 = run_experiment_1(cfg);

    const std::string dir1 = "exp1_run1", dir2 = "exp1_run2";
    write_experiment_1_outputs(r1, dir1);
    write_experiment_1_outputs(r2, dir2);
    CHECK(slurp(dir1 + "/kappa_table.csv") == slurp(dir2 + "/kappa_table.csv"));
    CHECK(slurp(dir1 + "/summary_cond.json") == slurp(dir2 + "/summary_cond.json"));
    std::filesystem::remove_all(dir1);
    std::filesystem::remove_all(dir2);
}

TEST_CASE("experiment checkers flag out-of-range data") {
    // synthetic experiment-2 result with a growing column
    Exp2Result r;
    r.ks = {3, 4, 5};
    r.dofs = {576, 2304, 9216};
    r.rows.resize(3);
    for (std::size_t i = 0; i < 3; ++i)
        for (int col = 0; col < 6; ++col) {
            r.rows[i][col].present = true;
            r.rows[i][col].ok = true;
            r.rows[i][col].converged = true;
            r.rows[i][col].iterations = 20;
        }
    r.rows[0][1].iterations = 10;
    r.rows[1][1].iterations = 20;
    r.rows[2][1].iterations = 30; // monotone growth in column 1
    const auto checks = check_experiment_2(r);
    bool found = false;
    for (const auto& c : checks)
        if (c.name == "table2_columns_bounded") {
            found = true;
            CHECK(!c.pass);
        }
    CHECK(found);
}

TEST_CASE("residual history export") {
    SolveReport rep;
    rep.residual_history = {1.0, 0.25, 0.0625};
    write_residual_history_csv(rep, "residuals_test.csv");
    const std::string text = slurp("residuals_test.csv");
    CHECK(text.find("iteration,residual") == 0);
    CHECK(text.find("2,6.25") != std::string::npos);
    std::filesystem::remove("residuals_test.csv");
}

TEST_CASE("mesh-sweep drivers fill the reference dof columns") {
    ExperimentConfig cfg;
    cfg.max_refinement = 4;
    const Exp2Result r2 = run_experiment_2(cfg);
    REQUIRE(r2.ks == std::vector<int>{2, 3, 4});
    CHECK(r2.dofs == std::vector<int>{144, 576, 2304});
    // reference iteration counts, +-3
    CHECK(std::abs(r2.rows[1][3].iterations - 22) <= 3); // h=1/8, H=2h
    CHECK(std::abs(r2.rows[1][0].iterations - 18) <= 3); // h=1/8, H=2delta
    CHECK(std::abs(r2.rows[2][5].iterations - 43) <= 3); // h=1/16, H=8h

    const Exp3Result r3 = run_experiment_3(cfg);
    CHECK(r3.dofs == std::vector<int>{144, 576, 2304});
    for (std::size_t i = 0; i < r3.ks.size(); ++i)
        for (int col = 0; col < 6; ++col)
            if (r3.rows[i][col].present) {
                CHECK(r3.rows[i][col].ok);
                CHECK(r3.rows[i][col].newton_steps <= 8);
                CHECK(r3.rows[i][col].no_refactorization);
            }
}
