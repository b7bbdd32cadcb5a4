#include "rtadapt/config.hpp"
#include "rtadapt/report.hpp"
#include "rtadapt/simulator.hpp"
#include "rtadapt/solver.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <thread>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;

constexpr int kBootstrapResamples = 500;
constexpr std::uint64_t kBootstrapSeedOffset = 500009;

struct Overrides {
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<int> patients;
    std::optional<int> threads;
};

rtadapt::RunConfig load_and_validate(const std::string& config_path, const Overrides& overrides) {
    rtadapt::RunConfig config = rtadapt::parse_config_file(config_path);
    if (overrides.out) config.output_dir = *overrides.out;
    if (overrides.seed) config.base_seed = *overrides.seed;
    if (overrides.patients) config.patients = *overrides.patients;
    if (overrides.threads) config.threads = *overrides.threads;
    rtadapt::validate_config(config);
    return config;
}

void print_plan_summary(const rtadapt::Plan& plan, const rtadapt::RunAssets& assets,
                        double prescription, const std::string& label) {
    const rtadapt::VectorXd dose = assets.phantom.dose(plan.fluence, 0.0);
    const rtadapt::CriteriaOutcome outcome =
        rtadapt::evaluate_criteria(dose, assets.phantom, assets.criteria, prescription);
    std::cout << label << ": objective " << rtadapt::format_double(plan.objective) << "\n";
    for (size_t i = 0; i < assets.criteria.size(); ++i) {
        std::cout << "  " << assets.criteria[i].label() << " = "
                  << rtadapt::format_double(100.0 * outcome.dxx_value[i] / prescription)
                  << "% of prescription (" << (outcome.passed[i] ? "pass" : "fail") << ")\n";
    }
}

int cmd_plan(const std::string& config_path, const Overrides& overrides) {
    const rtadapt::RunConfig config = load_and_validate(config_path, overrides);
    const rtadapt::RunAssets assets = rtadapt::build_assets(config);
    std::filesystem::create_directories(config.output_dir);

    const bool want_nominal =
        config.plan_kind == rtadapt::PlanKind::Nominal || config.plan_kind == rtadapt::PlanKind::Both;
    const bool want_robust =
        config.plan_kind == rtadapt::PlanKind::Robust || config.plan_kind == rtadapt::PlanKind::Both;

    if (want_nominal) {
        const rtadapt::Plan plan =
            rtadapt::solve_nominal(assets.phantom, assets.nominal_spec, config.solver);
        const std::string path =
            (std::filesystem::path(config.output_dir) / "plan_nominal.txt").string();
        rtadapt::save_plan(plan, path);
        print_plan_summary(plan, assets, config.prescription, "nominal plan -> " + path);
    }
    if (want_robust) {
        const rtadapt::RobustProblem problem = rtadapt::robust_problem(assets, config);
        const rtadapt::Plan plan = rtadapt::solve_robust(problem, config.solver);
        const std::string path =
            (std::filesystem::path(config.output_dir) / "plan_robust.txt").string();
        rtadapt::save_plan(plan, path);
        print_plan_summary(plan, assets, config.prescription, "robust plan -> " + path);
    }
    return kExitOk;
}

int cmd_simulate(const std::string& config_path, const Overrides& overrides) {
    const rtadapt::RunConfig config = load_and_validate(config_path, overrides);
    const rtadapt::RunAssets assets = rtadapt::build_assets(config);

    rtadapt::Plan initial;
    const bool nominal_initial = config.strategy.kind == rtadapt::StrategyKind::MarginUpdate ||
                                 (config.strategy.kind == rtadapt::StrategyKind::None &&
                                  config.plan_kind == rtadapt::PlanKind::Nominal);
    if (nominal_initial) {
        initial = rtadapt::solve_nominal(assets.phantom, assets.nominal_spec, config.solver);
    } else {
        initial = rtadapt::solve_robust(rtadapt::robust_problem(assets, config), config.solver);
    }

    const rtadapt::TreatmentSetup setup = rtadapt::make_treatment_setup(assets, config, initial);
    const int threads = config.threads == 0
                            ? static_cast<int>(std::thread::hardware_concurrency())
                            : config.threads;
    const rtadapt::PopulationReport report = rtadapt::run_population(
        setup, assets.population, config.patients, config.base_seed, std::max(1, threads));

    std::vector<double> worst;
    worst.reserve(report.patients.size());
    for (const rtadapt::PatientResult& p : report.patients) worst.push_back(p.worst_abs_shift_mm);
    const rtadapt::BootstrapResult bootstrap = rtadapt::bootstrap_worst_error(
        worst, kBootstrapResamples, config.base_seed + kBootstrapSeedOffset);

    rtadapt::write_reports(config.output_dir, config, report, bootstrap);
    std::cout << "simulated " << report.size << " patients: success rate "
              << rtadapt::format_double(report.success_rate_pct) << "%\n"
              << "reports written to " << config.output_dir << "\n";
    return kExitOk;
}

int cmd_report(const std::string& input_dir) {
    namespace fs = std::filesystem;
    std::vector<std::string> run_dirs;
    if (fs::exists(fs::path(input_dir) / "summary.csv")) {
        run_dirs.push_back(input_dir);
    } else if (fs::is_directory(input_dir)) {
        for (const auto& entry : fs::directory_iterator(input_dir))
            if (entry.is_directory()) run_dirs.push_back(entry.path().string());
        std::sort(run_dirs.begin(), run_dirs.end());
    }
    if (run_dirs.empty()) {
        std::cerr << "no run directories under " << input_dir << "\n";
        return kExitConfig;
    }
    return rtadapt::print_run_comparison(run_dirs, std::cout) ? kExitOk : kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Robust and adaptive fluence planning on a 1D phantom"};
    app.require_subcommand(1);

    std::string config_path;
    std::string report_dir;
    Overrides overrides;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "run configuration file")->required();
        cmd->add_option("--out", overrides.out, "output directory (overrides run.output_dir)");
        cmd->add_option("--seed", overrides.seed, "base seed (overrides run.base_seed)");
        cmd->add_option("--patients", overrides.patients, "population size (overrides run.patients)");
        cmd->add_option("--threads", overrides.threads, "worker threads; 0 = hardware");
    };

    CLI::App* plan = app.add_subcommand("plan", "optimize and store treatment plans");
    add_common(plan);
    CLI::App* simulate = app.add_subcommand("simulate", "run a treatment population and write reports");
    add_common(simulate);
    CLI::App* report = app.add_subcommand("report", "compare simulate outputs");
    report->add_option("dir", report_dir, "directory of run outputs")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (plan->parsed()) return cmd_plan(config_path, overrides);
        if (simulate->parsed()) return cmd_simulate(config_path, overrides);
        if (report->parsed()) return cmd_report(report_dir);
    } catch (const rtadapt::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const rtadapt::SolverError& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return kExitSolver;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitOk;
}
