#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "hpdg/experiments.hpp"

namespace {

int count_failed_cells(const hpdg::Exp1Result& r) {
    int bad = 0;
    for (const auto& c : r.cells)
        if (!c.ok)
            ++bad;
    return bad;
}

template <typename Result> int count_failed_cells(const Result& r) {
    int bad = 0;
    for (const auto& row : r.rows)
        for (const auto& cell : row)
            if (cell.present && !cell.ok)
                ++bad;
    return bad;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"hp-DG discretization of H2-type problems with additive "
                 "Schwarz preconditioners"};

    std::string experiment;
    std::string config_path;
    std::string output_dir;
    std::string export_matrix_path;
    int max_refinement = -1;
    bool include_large = false;

    app.add_option("-e,--experiment", experiment,
                   "experiment to run: cond, model or hjb");
    app.add_option("-c,--config", config_path, "key = value configuration file");
    app.add_option("-o,--output", output_dir, "output directory for CSV/JSON");
    app.add_option("--max-refinement", max_refinement,
                   "largest mesh refinement level k (h = 2^-k)");
    app.add_flag("--include-large", include_large,
                 "include the h = 1/256 row of the model-problem sweep");
    app.add_option("--export-matrix", export_matrix_path,
                   "write the assembled a_h matrix of the configured single "
                   "run in coordinate format and exit");

    CLI11_PARSE(app, argc, argv);

    hpdg::ExperimentConfig cfg;
    try {
        if (!config_path.empty())
            cfg = hpdg::parse_config_file(config_path);
        if (!experiment.empty())
            cfg.experiment = experiment;
        if (!output_dir.empty())
            cfg.output_dir = output_dir;
        if (max_refinement > 0)
            cfg.max_refinement = max_refinement;
        if (include_large)
            cfg.include_large = true;
        cfg.validate();
    } catch (const std::exception& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (!export_matrix_path.empty()) {
            const hpdg::Mesh mesh(cfg.fine_n);
            const hpdg::DofMap dm(mesh,
                                  hpdg::make_poly_space(cfg.p, cfg.space_kind()));
            const auto A = hpdg::assemble_ah(
                dm, cfg.penalties(hpdg::PenaltyMode::DegreeScaled),
                hpdg::SpdProbe::Skip);
            std::ofstream os(export_matrix_path);
            if (!os) {
                std::cerr << "cannot open " << export_matrix_path << '\n';
                return 2;
            }
            hpdg::export_coo(A, os);
            std::cout << "wrote " << A.nonZeros() << " entries to "
                      << export_matrix_path << '\n';
            return 0;
        }

        int failed_cells = 0;
        if (cfg.experiment == "cond") {
            const auto result = hpdg::run_experiment_1(cfg);
            hpdg::write_experiment_1_outputs(result, cfg.output_dir);
            failed_cells = count_failed_cells(result);
        } else if (cfg.experiment == "model") {
            const auto result = hpdg::run_experiment_2(cfg);
            hpdg::write_experiment_2_outputs(result, cfg.output_dir);
            failed_cells = count_failed_cells(result);
        } else {
            const auto result = hpdg::run_experiment_3(cfg);
            hpdg::write_experiment_3_outputs(result, cfg.output_dir);
            failed_cells = count_failed_cells(result);
        }
        if (failed_cells > 0) {
            std::cerr << failed_cells << " cell(s) did not complete\n";
            return 1;
        }
        std::cout << "experiment '" << cfg.experiment << "' completed; outputs in "
                  << cfg.output_dir << '\n';
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
