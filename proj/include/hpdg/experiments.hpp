#pragma once

#include <algorithm>
#include <array>
#include <numbers>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hpdg/forms.hpp"
#include "hpdg/hjb.hpp"
#include "hpdg/manufactured.hpp"
#include "hpdg/schwarz.hpp"
#include "hpdg/solvers.hpp"

namespace hpdg {

/// Least-squares fit of log(y) = slope * log(x) + intercept.
struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    int points = 0;
};

inline RateFit fit_loglog(const std::vector<double>& x,
                          const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 3)
        throw std::invalid_argument("fit_loglog: need at least 3 matching points");
    const int n = static_cast<int>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::vector<double> lx(n), ly(n);
    for (int i = 0; i < n; ++i) {
        lx[i] = std::log(x[i]);
        ly[i] = std::log(y[i]);
        sx += lx[i];
        sy += ly[i];
        sxx += lx[i] * lx[i];
        sxy += lx[i] * ly[i];
    }
    RateFit fit;
    fit.points = n;
    fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    fit.intercept = (sy - fit.slope * sx) / n;
    double ss_res = 0, ss_tot = 0;
    const double mean = sy / n;
    for (int i = 0; i < n; ++i) {
        const double pred = fit.slope * lx[i] + fit.intercept;
        ss_res += (ly[i] - pred) * (ly[i] - pred);
        ss_tot += (ly[i] - mean) * (ly[i] - mean);
    }
    fit.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
    return fit;
}

// ---------------------------------------------------------------------------
// configuration

struct ExperimentConfig {
    std::string experiment = "cond"; // cond | model | hjb
    std::string output_dir = ".";

    double c_mu = 10.0;
    double c_eta = 10.0;
    std::string penalty_mode = "default"; // default | degree-scaled | constant-degree

    double pcg_reduction = 1e-6;
    double gmres_reduction = 1e-6;
    double newton_tol = 1e-6;

    int max_p = 12;          // largest fine degree of the condition sweep
    int max_refinement = 7;  // largest k of the mesh sweeps, h = 2^-k
    bool include_large = false;

    int n_theta = 17;
    int n_phi = 16;

    // single-configuration fields (matrix export, validation)
    int fine_n = 4;
    int coarse_n = 2;
    int p = 2;
    int q = 2;
    std::string degree_kind = "total"; // total | partial
    std::string partition = "nonoverlapping";
    double delta = 0.25;

    SpaceKind space_kind() const {
        if (degree_kind == "total")
            return SpaceKind::Total;
        if (degree_kind == "partial")
            return SpaceKind::Partial;
        throw std::invalid_argument("config: degree_kind must be total or partial");
    }

    PenaltyConfig penalties(PenaltyMode fallback) const {
        PenaltyConfig cfg{c_mu, c_eta, fallback};
        if (penalty_mode == "degree-scaled")
            cfg.mode = PenaltyMode::DegreeScaled;
        else if (penalty_mode == "constant-degree")
            cfg.mode = PenaltyMode::ConstantDegree;
        else if (penalty_mode != "default")
            throw std::invalid_argument("config: bad penalty_mode");
        return cfg;
    }

    SubdomainSpec subdomain_spec() const {
        SubdomainSpec spec;
        if (partition == "overlapping") {
            spec.overlapping = true;
            spec.delta = delta;
        } else if (partition != "nonoverlapping") {
            throw std::invalid_argument("config: bad partition kind");
        }
        return spec;
    }

    void validate() const {
        if (experiment != "cond" && experiment != "model" && experiment != "hjb")
            throw std::invalid_argument("config: experiment must be cond, model or hjb");
        if (c_mu <= 0 || c_eta <= 0)
            throw std::invalid_argument("config: penalty constants must be positive");
        for (double r : {pcg_reduction, gmres_reduction, newton_tol})
            if (r <= 0 || r >= 1)
                throw std::invalid_argument("config: tolerances must lie in (0,1)");
        if (max_p < 2 || max_p > 12)
            throw std::invalid_argument("config: max_p must lie in [2,12]");
        if (max_refinement < 2 || max_refinement > 8)
            throw std::invalid_argument("config: max_refinement must lie in [2,8]");
        if (n_theta < 1 || n_phi < 1)
            throw std::invalid_argument("config: control grid sizes must be >= 1");
        // the single-configuration block must satisfy the same constraints the
        // builders enforce
        (void)PolySpace(p, space_kind());
        (void)PolySpace(q, space_kind());
        (void)build_hierarchy(fine_n, coarse_n, subdomain_spec());
        (void)penalties(PenaltyMode::DegreeScaled);
    }
};

inline ExperimentConfig parse_config_stream(std::istream& in) {
    ExperimentConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line = line.substr(0, hash);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        if (trim(line).empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        auto to_int = [&](const std::string& v) { return std::stoi(v); };
        auto to_double = [&](const std::string& v) { return std::stod(v); };
        auto to_bool = [&](const std::string& v) {
            if (v == "true" || v == "1")
                return true;
            if (v == "false" || v == "0")
                return false;
            throw std::invalid_argument("config: bad boolean '" + v + "'");
        };
        if (key == "experiment")
            cfg.experiment = value;
        else if (key == "output")
            cfg.output_dir = value;
        else if (key == "c_mu")
            cfg.c_mu = to_double(value);
        else if (key == "c_eta")
            cfg.c_eta = to_double(value);
        else if (key == "penalty_mode")
            cfg.penalty_mode = value;
        else if (key == "pcg_reduction")
            cfg.pcg_reduction = to_double(value);
        else if (key == "gmres_reduction")
            cfg.gmres_reduction = to_double(value);
        else if (key == "newton_tol")
            cfg.newton_tol = to_double(value);
        else if (key == "max_p")
            cfg.max_p = to_int(value);
        else if (key == "max_refinement")
            cfg.max_refinement = to_int(value);
        else if (key == "include_large")
            cfg.include_large = to_bool(value);
        else if (key == "n_theta")
            cfg.n_theta = to_int(value);
        else if (key == "n_phi")
            cfg.n_phi = to_int(value);
        else if (key == "fine_n")
            cfg.fine_n = to_int(value);
        else if (key == "coarse_n")
            cfg.coarse_n = to_int(value);
        else if (key == "p")
            cfg.p = to_int(value);
        else if (key == "q")
            cfg.q = to_int(value);
        else if (key == "degree_kind")
            cfg.degree_kind = value;
        else if (key == "partition")
            cfg.partition = value;
        else if (key == "delta")
            cfg.delta = to_double(value);
        else
            throw std::invalid_argument("config: unknown key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open config file: " + path);
    return parse_config_stream(in);
}

// ---------------------------------------------------------------------------
// experiment 1: condition numbers over the (p, q) degree grid

struct Exp1Cell {
    int p = 0;
    int q = 0;
    bool ok = false;
    double kappa = 0.0;
    double lambda_min = 0.0;
    double lambda_max = 0.0;
    std::string error;
};

struct Exp1Result {
    std::vector<Exp1Cell> cells;
    std::map<int, RateFit> p_rate; // per column q: fit of kappa ~ p^rate
    std::map<int, RateFit> q_rate; // per row p: fit of kappa ~ q^-rate

    const Exp1Cell* cell(int p, int q) const {
        for (const auto& c : cells)
            if (c.p == p && c.q == q)
                return &c;
        return nullptr;
    }
};

inline Exp1Result run_experiment_1(const ExperimentConfig& cfg) {
    Exp1Result result;
    const NestedHierarchy hier = build_hierarchy(4, 2, SubdomainSpec{});
    const Mesh coarse = hier.coarse_mesh();
    const PenaltyConfig pen = cfg.penalties(PenaltyMode::DegreeScaled);

    for (int p = 2; p <= cfg.max_p; ++p) {
        const DofMap fine_dm(hier.fine, make_poly_space(p, SpaceKind::Total));
        Eigen::SparseMatrix<double> A;
        std::string assembly_error;
        try {
            A = assemble_ah(fine_dm, pen, SpdProbe::Probe);
        } catch (const std::exception& e) {
            assembly_error = e.what();
        }
        for (int q = 2; q <= std::min(p, 6); ++q) {
            Exp1Cell cell;
            cell.p = p;
            cell.q = q;
            if (!assembly_error.empty()) {
                cell.error = assembly_error;
                result.cells.push_back(cell);
                continue;
            }
            try {
                const DofMap coarse_dm(coarse, make_poly_space(q, SpaceKind::Total));
                const SchwarzPreconditioner B =
                    build_preconditioner(A, hier, fine_dm, &coarse_dm);
                const ConditionReport rep =
                    condition_number_of_P(A, B, EigMethod::Dense);
                cell.ok = true;
                cell.kappa = rep.kappa;
                cell.lambda_min = rep.lambda_min;
                cell.lambda_max = rep.lambda_max;
            } catch (const std::exception& e) {
                cell.error = e.what();
            }
            result.cells.push_back(cell);
        }
    }

    // asymptotic rates from the last three populated entries per column / row
    for (int q = 2; q <= 6; ++q) {
        std::vector<double> ps, ks;
        for (const auto& c : result.cells)
            if (c.q == q && c.ok) {
                ps.push_back(c.p);
                ks.push_back(c.kappa);
            }
        if (ps.size() >= 3) {
            std::vector<double> x(ps.end() - 3, ps.end());
            std::vector<double> y(ks.end() - 3, ks.end());
            result.p_rate[q] = fit_loglog(x, y);
        }
    }
    for (int p = 2; p <= cfg.max_p; ++p) {
        std::vector<double> qs, ks;
        for (const auto& c : result.cells)
            if (c.p == p && c.ok) {
                qs.push_back(c.q);
                ks.push_back(c.kappa);
            }
        if (qs.size() >= 3) {
            std::vector<double> x(qs.end() - 3, qs.end());
            std::vector<double> y(ks.end() - 3, ks.end());
            RateFit fit = fit_loglog(x, y);
            fit.slope = -fit.slope; // kappa decreases with q; report the order
            result.q_rate[p] = fit;
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// experiments 2 and 3: mesh sweeps over the six decomposition columns

inline constexpr std::array<const char*, 6> kSweepColumns = {
    "overlap_H2delta", "overlap_H4delta", "overlap_H8delta",
    "nonoverlap_H2h",  "nonoverlap_H4h",  "nonoverlap_H8h"};

/// Column layout of Tables 2/3: overlapping columns fix the 2x2 coarse mesh
/// (H = 1/2) and use an overlap band of total width delta = H/r across each
/// interior seam, i.e. each quadrant extends by delta/2 per side;
/// nonoverlapping columns fix the quadrant subdomains and take a coarse mesh
/// of size H = r h. A cell is present when the geometry exists on the fine
/// grid (delta >= 2h, respectively H <= 1/2).
struct SweepColumn {
    bool overlapping;
    int ratio; // H/delta or H/h
};

inline constexpr std::array<SweepColumn, 6> kSweepGeometry = {
    SweepColumn{true, 2},  SweepColumn{true, 4},  SweepColumn{true, 8},
    SweepColumn{false, 2}, SweepColumn{false, 4}, SweepColumn{false, 8}};

inline bool sweep_cell_present(const SweepColumn& col, int k) {
    const int fine_n = 1 << k;
    if (col.overlapping) {
        const double extension = 0.25 / col.ratio; // delta/2 per side
        return extension * fine_n >= 1.0 - 1e-12;
    }
    return fine_n / col.ratio >= 2; // coarse mesh no coarser than 2x2
}

inline NestedHierarchy sweep_hierarchy(const SweepColumn& col, int k) {
    const int fine_n = 1 << k;
    SubdomainSpec spec;
    if (col.overlapping) {
        spec.overlapping = true;
        spec.delta = 0.25 / col.ratio; // extension per side = delta/2
        return build_hierarchy(fine_n, 2, spec);
    }
    return build_hierarchy(fine_n, fine_n / col.ratio, spec);
}

/// Penalties mu_F = c_mu / s and eta_F = c_eta / s^3 in the element side
/// length s. Faces carry diameters (s sqrt(2) on squares), so the factors
/// fold into the constants of the constant-degree mode; the reference
/// iteration counts of the mesh sweeps are reproduced with this length scale.
inline PenaltyConfig side_length_penalties(double c_mu, double c_eta) {
    return {c_mu * std::numbers::sqrt2, c_eta * 2.0 * std::numbers::sqrt2,
            PenaltyMode::ConstantDegree};
}

struct Exp2Cell {
    bool present = false;
    bool ok = false;
    int iterations = 0;
    bool converged = false;
    double build_seconds = 0.0;
    double solve_seconds = 0.0;
    std::string error;
};

struct Exp2Result {
    std::vector<int> ks;
    std::vector<int> dofs;
    std::vector<std::array<Exp2Cell, 6>> rows;
};

inline Exp2Result run_experiment_2(const ExperimentConfig& cfg) {
    using clock = std::chrono::steady_clock;
    Exp2Result result;
    const ScalarField u = exp_sine_solution();
    const PenaltyConfig pen = cfg.penalty_mode == "default"
                                  ? side_length_penalties(cfg.c_mu, cfg.c_eta)
                                  : cfg.penalties(PenaltyMode::ConstantDegree);
    const int k_max = cfg.include_large ? std::max(cfg.max_refinement, 8)
                                        : cfg.max_refinement;

    for (int k = 2; k <= k_max; ++k) {
        const int fine_n = 1 << k;
        const Mesh mesh(fine_n);
        const DofMap dm(mesh, make_poly_space(2, SpaceKind::Partial));
        const SpdProbe probe = fine_n <= 64 ? SpdProbe::Probe : SpdProbe::Skip;
        const Eigen::SparseMatrix<double> A = assemble_ah(dm, pen, probe);
        const Eigen::VectorXd b = assemble_load_laplacian(
            dm, [&u](double x, double y) { return u.laplacian(x, y); });
        const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(dm.total_dofs());

        result.ks.push_back(k);
        result.dofs.push_back(dm.total_dofs());
        std::array<Exp2Cell, 6> row;
        for (std::size_t c = 0; c < kSweepGeometry.size(); ++c) {
            Exp2Cell& cell = row[c];
            if (!sweep_cell_present(kSweepGeometry[c], k))
                continue;
            cell.present = true;
            try {
                const auto t0 = clock::now();
                const NestedHierarchy hier = sweep_hierarchy(kSweepGeometry[c], k);
                const Mesh coarse = hier.coarse_mesh();
                const DofMap coarse_dm(coarse, make_poly_space(2, SpaceKind::Partial));
                const SchwarzPreconditioner B =
                    build_preconditioner(A, hier, dm, &coarse_dm);
                const auto t1 = clock::now();
                auto [x, rep] = pcg(sparse_op(A), B.as_operator(), b, x0,
                                    cfg.pcg_reduction, 1000);
                const auto t2 = clock::now();
                cell.ok = true;
                cell.iterations = rep.iterations;
                cell.converged = rep.converged;
                cell.build_seconds = std::chrono::duration<double>(t1 - t0).count();
                cell.solve_seconds = std::chrono::duration<double>(t2 - t1).count();
            } catch (const std::exception& e) {
                cell.error = e.what();
            }
        }
        result.rows.push_back(row);
    }
    return result;
}

struct Exp3Cell {
    bool present = false;
    bool ok = false;
    double avg_gmres = 0.0;
    int newton_steps = 0;
    bool converged = false;
    bool no_refactorization = false;
    double final_h2_error = 0.0;
    std::string error;
};

struct Exp3Result {
    std::vector<int> ks;
    std::vector<int> dofs;
    std::vector<std::array<Exp3Cell, 6>> rows;
};

inline Exp3Result run_experiment_3(const ExperimentConfig& cfg) {
    Exp3Result result;
    const PenaltyConfig pen = cfg.penalty_mode == "default"
                                  ? side_length_penalties(cfg.c_mu, cfg.c_eta)
                                  : cfg.penalties(PenaltyMode::ConstantDegree);
    const ControlGrid grid = build_control_grid(cfg.n_theta, cfg.n_phi);
    const HjbProblem problem = make_hjb_problem();
    NewtonOptions opts;
    opts.newton_tol = cfg.newton_tol;
    opts.gmres_reduction = cfg.gmres_reduction;

    for (int k = 2; k <= cfg.max_refinement; ++k) {
        const int fine_n = 1 << k;
        const Mesh mesh(fine_n);
        const DofMap dm(mesh, make_poly_space(2, SpaceKind::Partial));
        const SpdProbe probe = fine_n <= 64 ? SpdProbe::Probe : SpdProbe::Skip;
        const NewtonOperators ops = build_newton_operators(dm, pen, probe);

        result.ks.push_back(k);
        result.dofs.push_back(dm.total_dofs());
        std::array<Exp3Cell, 6> row;
        for (std::size_t c = 0; c < kSweepGeometry.size(); ++c) {
            Exp3Cell& cell = row[c];
            if (!sweep_cell_present(kSweepGeometry[c], k))
                continue;
            cell.present = true;
            try {
                const NestedHierarchy hier = sweep_hierarchy(kSweepGeometry[c], k);
                const Mesh coarse = hier.coarse_mesh();
                const DofMap coarse_dm(coarse, make_poly_space(2, SpaceKind::Partial));
                const SchwarzPreconditioner B =
                    build_preconditioner(ops.A, hier, dm, &coarse_dm);
                auto [sol, rep] =
                    semismooth_newton(dm, ops, B, grid, problem, pen, opts);
                (void)sol;
                cell.ok = rep.converged;
                cell.avg_gmres = rep.avg_gmres;
                cell.newton_steps = rep.newton_steps;
                cell.converged = rep.converged;
                cell.no_refactorization = rep.no_refactorization;
                cell.final_h2_error = rep.final_h2_error;
                if (!rep.converged)
                    cell.error = "newton did not converge within the step cap";
            } catch (const std::exception& e) {
                cell.error = e.what();
            }
        }
        result.rows.push_back(row);
    }
    return result;
}

/// Broken-H2 errors of the model problem (direct solves) over h = 2^-k.
inline std::vector<std::pair<double, double>>
model_problem_errors(const std::vector<int>& ks, int p, SpaceKind kind,
                     const PenaltyConfig& pen) {
    const ScalarField u = exp_sine_solution();
    std::vector<std::pair<double, double>> out;
    for (int k : ks) {
        const Mesh mesh(1 << k);
        const DofMap dm(mesh, make_poly_space(p, kind));
        const Eigen::SparseMatrix<double> A = assemble_ah(dm, pen, SpdProbe::Skip);
        const Eigen::VectorXd b = assemble_load_laplacian(
            dm, [&u](double x, double y) { return u.laplacian(x, y); });
        Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(A);
        if (llt.info() != Eigen::Success)
            throw std::runtime_error("model_problem_errors: factorization failed");
        const Eigen::VectorXd x = llt.solve(b);
        const BrokenNormReport rep = broken_norms(dm, x, pen, &u);
        out.emplace_back(mesh.element_size(), rep.h2_broken);
    }
    return out;
}

// ---------------------------------------------------------------------------
// acceptance tolerances and checks

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

namespace acceptance {

struct GoldenKappa {
    int p, q;
    double value;
};

/// Reference condition numbers with a 5% tolerance.
inline constexpr std::array<GoldenKappa, 5> kGoldenKappas = {
    GoldenKappa{2, 2, 2.16e1}, GoldenKappa{4, 3, 3.16e2},
    GoldenKappa{6, 4, 1.31e3}, GoldenKappa{8, 5, 4.27e3},
    GoldenKappa{12, 6, 2.66e4}};
inline constexpr double kGoldenKappaRelTol = 0.05;
inline constexpr double kPRateLo = 5.6, kPRateHi = 6.4;
inline constexpr double kQRateLo = 2.6, kQRateHi = 3.4;

/// Reference PCG iteration counts for h = 1/8 .. 1/128 with a +-3 tolerance.
inline constexpr std::array<int, 5> kNonoverlapH2h = {22, 22, 20, 18, 17};
inline constexpr std::array<int, 5> kOverlapH2delta = {18, 18, 18, 18, 18};
inline constexpr int kIterationTol = 3;

inline constexpr int kMaxNewtonSteps = 8;
inline constexpr double kGmresAvgLo = 10.0, kGmresAvgHi = 35.0;
inline constexpr double kGmresGrowthTol = 5.0;

inline constexpr double kLambdaMaxBound = 5.0 * 1.01;

} // namespace acceptance

inline std::vector<CheckResult> check_experiment_1(const Exp1Result& r) {
    std::vector<CheckResult> checks;
    {
        CheckResult c{"table1_golden_kappas"};
        std::ostringstream os;
        c.pass = true;
        for (const auto& g : acceptance::kGoldenKappas) {
            const Exp1Cell* cell = r.cell(g.p, g.q);
            if (!cell || !cell->ok) {
                c.pass = false;
                os << " (" << g.p << "," << g.q << ") missing;";
                continue;
            }
            const double rel = std::abs(cell->kappa - g.value) / g.value;
            os << " (" << g.p << "," << g.q << ") " << std::scientific
               << std::setprecision(3) << cell->kappa << " vs " << g.value
               << " rel " << std::setprecision(2) << rel << ";";
            if (rel > acceptance::kGoldenKappaRelTol)
                c.pass = false;
        }
        c.detail = os.str();
        checks.push_back(c);
    }
    {
        CheckResult c{"table1_p_rates"};
        std::ostringstream os;
        c.pass = true;
        for (int q = 2; q <= 6; ++q) {
            auto it = r.p_rate.find(q);
            if (it == r.p_rate.end()) {
                c.pass = false;
                os << " q=" << q << " missing;";
                continue;
            }
            os << " q=" << q << ": " << std::fixed << std::setprecision(2)
               << it->second.slope << ";";
            if (it->second.slope < acceptance::kPRateLo ||
                it->second.slope > acceptance::kPRateHi)
                c.pass = false;
        }
        c.detail = os.str();
        checks.push_back(c);
    }
    {
        CheckResult c{"table1_q_rates"};
        std::ostringstream os;
        c.pass = true;
        for (int p = 10; p <= 12; ++p) {
            auto it = r.q_rate.find(p);
            if (it == r.q_rate.end()) {
                c.pass = false;
                os << " p=" << p << " missing;";
                continue;
            }
            os << " p=" << p << ": " << std::fixed << std::setprecision(2)
               << it->second.slope << ";";
            if (it->second.slope < acceptance::kQRateLo ||
                it->second.slope > acceptance::kQRateHi)
                c.pass = false;
        }
        c.detail = os.str();
        checks.push_back(c);
    }
    return checks;
}

inline std::vector<CheckResult> check_experiment_2(const Exp2Result& r) {
    std::vector<CheckResult> checks;
    auto row_of = [&](int k) -> const std::array<Exp2Cell, 6>* {
        for (std::size_t i = 0; i < r.ks.size(); ++i)
            if (r.ks[i] == k)
                return &r.rows[i];
        return nullptr;
    };
    auto column_check = [&](const char* name, int col,
                            const std::array<int, 5>& ref) {
        CheckResult c{name};
        std::ostringstream os;
        c.pass = true;
        for (int k = 3; k <= 7; ++k) {
            const auto* row = row_of(k);
            const int want = ref[k - 3];
            if (!row || !(*row)[col].ok) {
                c.pass = false;
                os << " k=" << k << " missing;";
                continue;
            }
            const int got = (*row)[col].iterations;
            os << " h=1/" << (1 << k) << ": " << got << " vs " << want << ";";
            if (std::abs(got - want) > acceptance::kIterationTol ||
                !(*row)[col].converged)
                c.pass = false;
        }
        c.detail = os.str();
        checks.push_back(c);
    };
    column_check("table2_nonoverlap_H2h", 3, acceptance::kNonoverlapH2h);
    column_check("table2_overlap_H2delta", 0, acceptance::kOverlapH2delta);

    CheckResult bound{"table2_columns_bounded"};
    std::ostringstream os;
    bound.pass = true;
    for (int col = 0; col < 6; ++col) {
        std::vector<int> its;
        for (std::size_t i = 0; i < r.ks.size(); ++i)
            if (r.rows[i][col].ok)
                its.push_back(r.rows[i][col].iterations);
        if (its.size() < 3)
            continue;
        const auto n = its.size();
        // sustained growth means two consecutive increments of >= 2 over the
        // last three refinements; single-count settling noise is not growth
        const bool grows = its[n - 2] - its[n - 3] >= 2 &&
                           its[n - 1] - its[n - 2] >= 2;
        os << " " << kSweepColumns[col] << ": [" << its[n - 3] << ","
           << its[n - 2] << "," << its[n - 1] << "]"
           << (grows ? " grows;" : ";");
        if (grows)
            bound.pass = false;
    }
    bound.detail = os.str();
    checks.push_back(bound);
    return checks;
}

inline std::vector<CheckResult> check_experiment_3(const Exp3Result& r) {
    std::vector<CheckResult> checks;
    {
        CheckResult c{"table3_newton_steps"};
        std::ostringstream os;
        c.pass = true;
        for (std::size_t i = 0; i < r.ks.size(); ++i)
            for (int col = 0; col < 6; ++col) {
                const Exp3Cell& cell = r.rows[i][col];
                if (!cell.present)
                    continue;
                if (!cell.ok || cell.newton_steps > acceptance::kMaxNewtonSteps ||
                    !cell.converged) {
                    c.pass = false;
                    os << " k=" << r.ks[i] << " " << kSweepColumns[col] << ": "
                       << (cell.ok ? std::to_string(cell.newton_steps) + " steps"
                                   : cell.error)
                       << ";";
                }
            }
        if (c.pass)
            c.detail = " all cells converged within " +
                       std::to_string(acceptance::kMaxNewtonSteps) + " steps";
        else
            c.detail = os.str();
        checks.push_back(c);
    }
    {
        CheckResult c{"table3_gmres_bounded"};
        std::ostringstream os;
        c.pass = true;
        std::vector<double> avgs;
        for (int k = 4; k <= 6; ++k) {
            bool found = false;
            for (std::size_t i = 0; i < r.ks.size(); ++i)
                if (r.ks[i] == k && r.rows[i][3].ok) {
                    avgs.push_back(r.rows[i][3].avg_gmres);
                    found = true;
                }
            if (!found) {
                c.pass = false;
                os << " k=" << k << " missing;";
            }
        }
        if (avgs.size() == 3) {
            os << " nonoverlap H=2h avg gmres: [" << std::fixed
               << std::setprecision(1) << avgs[0] << "," << avgs[1] << ","
               << avgs[2] << "]";
            for (double a : avgs)
                if (a < acceptance::kGmresAvgLo || a > acceptance::kGmresAvgHi)
                    c.pass = false;
            if (avgs[2] - avgs[0] > acceptance::kGmresGrowthTol)
                c.pass = false;
        }
        c.detail = os.str();
        checks.push_back(c);
    }
    {
        CheckResult c{"table3_no_refactorization"};
        c.pass = true;
        for (std::size_t i = 0; i < r.ks.size(); ++i)
            for (int col = 0; col < 6; ++col)
                if (r.rows[i][col].ok && !r.rows[i][col].no_refactorization)
                    c.pass = false;
        c.detail = c.pass ? " preconditioner factorized exactly once per cell"
                          : " a cell refactorized between Newton steps";
        checks.push_back(c);
    }
    return checks;
}

// ---------------------------------------------------------------------------
// output writers

namespace detail {

inline std::string format_double(double v, int prec = 6) {
    std::ostringstream os;
    os << std::scientific << std::setprecision(prec) << v;
    return os.str();
}

} // namespace detail

inline void write_experiment_1_outputs(const Exp1Result& r,
                                       const std::string& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream csv(dir + "/kappa_table.csv");
        csv << "p";
        for (int q = 2; q <= 6; ++q)
            csv << ",q=" << q;
        csv << ",q_rate\n";
        int pmax = 2;
        for (const auto& c : r.cells)
            pmax = std::max(pmax, c.p);
        for (int p = 2; p <= pmax; ++p) {
            csv << p;
            for (int q = 2; q <= 6; ++q) {
                const Exp1Cell* cell = r.cell(p, q);
                csv << ',';
                if (cell && cell->ok)
                    csv << detail::format_double(cell->kappa, 3);
            }
            csv << ',';
            if (auto it = r.q_rate.find(p); it != r.q_rate.end())
                csv << std::fixed << std::setprecision(2) << it->second.slope;
            csv << '\n';
        }
        csv << "p_rate";
        for (int q = 2; q <= 6; ++q) {
            csv << ',';
            if (auto it = r.p_rate.find(q); it != r.p_rate.end())
                csv << std::fixed << std::setprecision(2) << it->second.slope;
        }
        csv << ",\n";
    }
    {
        nlohmann::json j;
        j["experiment"] = "cond";
        for (const auto& c : r.cells) {
            nlohmann::json jc{{"p", c.p}, {"q", c.q}, {"ok", c.ok}};
            if (c.ok) {
                jc["kappa"] = c.kappa;
                jc["lambda_min"] = c.lambda_min;
                jc["lambda_max"] = c.lambda_max;
            } else {
                jc["error"] = c.error;
            }
            j["cells"].push_back(jc);
        }
        for (const auto& [q, fit] : r.p_rate)
            j["p_rates"][std::to_string(q)] = fit.slope;
        for (const auto& [p, fit] : r.q_rate)
            j["q_rates"][std::to_string(p)] = fit.slope;
        for (const auto& c : check_experiment_1(r))
            j["checks"].push_back({{"name", c.name}, {"pass", c.pass},
                                   {"detail", c.detail}});
        std::ofstream(dir + "/summary_cond.json") << j.dump(2) << '\n';
    }
}

inline void write_experiment_2_outputs(const Exp2Result& r,
                                       const std::string& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream csv(dir + "/iterations.csv");
        csv << "dof,h";
        for (const char* c : kSweepColumns)
            csv << ',' << c;
        csv << '\n';
        for (std::size_t i = 0; i < r.ks.size(); ++i) {
            csv << r.dofs[i] << ",1/" << (1 << r.ks[i]);
            for (int col = 0; col < 6; ++col) {
                csv << ',';
                if (r.rows[i][col].ok)
                    csv << r.rows[i][col].iterations;
            }
            csv << '\n';
        }
    }
    {
        std::ofstream csv(dir + "/timings.csv");
        csv << "dof,h,column,build_seconds,solve_seconds\n";
        for (std::size_t i = 0; i < r.ks.size(); ++i)
            for (int col = 0; col < 6; ++col)
                if (r.rows[i][col].ok)
                    csv << r.dofs[i] << ",1/" << (1 << r.ks[i]) << ','
                        << kSweepColumns[col] << ',' << std::fixed
                        << std::setprecision(3) << r.rows[i][col].build_seconds
                        << ',' << r.rows[i][col].solve_seconds << '\n';
    }
    {
        nlohmann::json j;
        j["experiment"] = "model";
        for (std::size_t i = 0; i < r.ks.size(); ++i) {
            for (int col = 0; col < 6; ++col) {
                const Exp2Cell& cell = r.rows[i][col];
                if (!cell.present)
                    continue;
                nlohmann::json jc{{"h", "1/" + std::to_string(1 << r.ks[i])},
                                  {"dof", r.dofs[i]},
                                  {"column", kSweepColumns[col]},
                                  {"ok", cell.ok}};
                if (cell.ok) {
                    jc["iterations"] = cell.iterations;
                    jc["converged"] = cell.converged;
                } else {
                    jc["error"] = cell.error;
                }
                j["cells"].push_back(jc);
            }
        }
        for (const auto& c : check_experiment_2(r))
            j["checks"].push_back({{"name", c.name}, {"pass", c.pass},
                                   {"detail", c.detail}});
        std::ofstream(dir + "/summary_model.json") << j.dump(2) << '\n';
    }
}

inline void write_experiment_3_outputs(const Exp3Result& r,
                                       const std::string& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream csv(dir + "/newton.csv");
        csv << "dof,h";
        for (const char* c : kSweepColumns)
            csv << ',' << c << "_avg_gmres," << c << "_newton_steps";
        csv << '\n';
        for (std::size_t i = 0; i < r.ks.size(); ++i) {
            csv << r.dofs[i] << ",1/" << (1 << r.ks[i]);
            for (int col = 0; col < 6; ++col) {
                const Exp3Cell& cell = r.rows[i][col];
                if (cell.ok)
                    csv << ',' << std::fixed << std::setprecision(1)
                        << cell.avg_gmres << ',' << cell.newton_steps;
                else
                    csv << ",,";
            }
            csv << '\n';
        }
    }
    {
        nlohmann::json j;
        j["experiment"] = "hjb";
        for (std::size_t i = 0; i < r.ks.size(); ++i) {
            for (int col = 0; col < 6; ++col) {
                const Exp3Cell& cell = r.rows[i][col];
                if (!cell.present)
                    continue;
                nlohmann::json jc{{"h", "1/" + std::to_string(1 << r.ks[i])},
                                  {"dof", r.dofs[i]},
                                  {"column", kSweepColumns[col]},
                                  {"ok", cell.ok}};
                if (cell.ok) {
                    jc["avg_gmres"] = cell.avg_gmres;
                    jc["newton_steps"] = cell.newton_steps;
                    jc["no_refactorization"] = cell.no_refactorization;
                    jc["h2_error"] = cell.final_h2_error;
                } else {
                    jc["error"] = cell.error;
                }
                j["cells"].push_back(jc);
            }
        }
        for (const auto& c : check_experiment_3(r))
            j["checks"].push_back({{"name", c.name}, {"pass", c.pass},
                                   {"detail", c.detail}});
        std::ofstream(dir + "/summary_hjb.json") << j.dump(2) << '\n';
    }
}

/// Residual history of a Krylov solve as a single CSV column.
inline void write_residual_history_csv(const SolveReport& rep,
                                       const std::string& path) {
    std::ofstream csv(path);
    csv << "iteration,residual\n";
    for (std::size_t i = 0; i < rep.residual_history.size(); ++i)
        csv << i << ',' << detail::format_double(rep.residual_history[i], 9)
            << '\n';
}

} // namespace hpdg
