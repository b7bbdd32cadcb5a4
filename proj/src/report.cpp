#include "rtadapt/report.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace rtadapt {

namespace {

std::string strategy_name(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::None: return "none";
        case StrategyKind::ScenarioUpdate: return "scenario_update";
        case StrategyKind::AlphaUpdate: return "alpha_update";
        case StrategyKind::MarginUpdate: return "margin_update";
    }
    return "none";
}

std::ofstream open_csv(const std::string& directory, const std::string& name) {
    std::ofstream out(std::filesystem::path(directory) / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + name + " in " + directory);
    return out;
}

}  // namespace

SummaryRow summarize(const RunConfig& config, const PopulationReport& report) {
    SummaryRow row;
    row.strategy = strategy_name(config.strategy.kind);
    if (config.strategy.kind == StrategyKind::None)
        row.strategy += config.plan_kind == PlanKind::Nominal ? "_nominal" : "_robust";
    row.schedule = config.schedule_name;
    row.estimator = config.strategy.kind == StrategyKind::None ||
                            config.strategy.kind == StrategyKind::AlphaUpdate
                        ? "-"
                        : (config.strategy.estimator == EstimatorKind::Arithmetic ? "arithmetic"
                                                                                  : "exp_smoothing");
    row.beta = config.strategy.estimator == EstimatorKind::ExpSmoothing ? config.strategy.beta : 0.0;
    row.alpha_initial = config.strategy.alpha_initial;
    row.population = config.population_kind;
    row.patients = report.size;
    row.success_rate_pct = report.success_rate_pct;
    // Criteria order is fixed: coverage, right OAR, left OAR.
    row.ctv_d99_worst_pct = report.criterion_worst_pct[0];
    row.ctv_fail_pct = report.criterion_fail_pct[0];
    row.right_d30_worst_pct = report.criterion_worst_pct[1];
    row.right_fail_pct = report.criterion_fail_pct[1];
    row.left_d20_worst_pct = report.criterion_worst_pct[2];
    row.left_fail_pct = report.criterion_fail_pct[2];
    row.most_common_adaptations = report.most_common_adaptations;
    row.mean_adaptations = report.mean_adaptations;
    row.solver_failures = report.solver_failures;
    return row;
}

namespace {

const char* kSummaryHeader =
    "strategy,schedule,estimator,beta,alpha_initial,population,patients,success_rate_pct,"
    "ctv_d99_worst_pct,ctv_fail_pct,right_d30_worst_pct,right_fail_pct,left_d20_worst_pct,"
    "left_fail_pct,most_common_adaptations,mean_adaptations,solver_failures";

void write_summary_csv(const std::string& directory, const SummaryRow& row) {
    std::ofstream out = open_csv(directory, "summary.csv");
    out << kSummaryHeader << "\n";
    out << row.strategy << "," << row.schedule << "," << row.estimator << ","
        << format_double(row.beta) << "," << format_double(row.alpha_initial) << ","
        << row.population << "," << row.patients << "," << format_double(row.success_rate_pct)
        << "," << format_double(row.ctv_d99_worst_pct) << "," << format_double(row.ctv_fail_pct)
        << "," << format_double(row.right_d30_worst_pct) << "," << format_double(row.right_fail_pct)
        << "," << format_double(row.left_d20_worst_pct) << "," << format_double(row.left_fail_pct)
        << "," << row.most_common_adaptations << "," << format_double(row.mean_adaptations) << ","
        << row.solver_failures << "\n";
}

void write_candidates_csv(const std::string& directory, const PopulationReport& report) {
    std::ofstream out = open_csv(directory, "candidates.csv");
    out << "kind,fraction,rate_pct\n";
    for (const auto& [fraction, rate] : report.candidate_rate_pct)
        out << "at_fraction," << fraction << "," << format_double(rate) << "\n";
    out << "intersection,," << format_double(report.intersection_rate_pct) << "\n";
}

void write_histogram_csv(const std::string& directory, const std::string& name,
                         const PopulationReport& report, int criterion, bool at_least) {
    std::vector<double> stat;
    stat.reserve(report.patients.size());
    for (const PatientResult& p : report.patients) stat.push_back(p.final_dxx_pct[criterion]);
    const VectorXd grid = VectorXd::LinSpaced(121, 0.0, 120.0);
    const VectorXd curve = dose_probability_curve(stat, grid, at_least);
    std::ofstream out = open_csv(directory, name);
    out << "dose_pct,probability\n";
    for (int i = 0; i < grid.size(); ++i)
        out << format_double(grid(i)) << "," << format_double(curve(i)) << "\n";
}

void write_bootstrap_csv(const std::string& directory, const BootstrapResult& bootstrap) {
    std::ofstream out = open_csv(directory, "bootstrap.csv");
    out << "series,x,y\n";
    out << "full_sample_std,0," << format_double(bootstrap.full_sample_std) << "\n";
    out << "resample_mean,0," << format_double(bootstrap.resample_mean) << "\n";
    out << "resample_std,0," << format_double(bootstrap.resample_std) << "\n";
    for (int b = 0; b < bootstrap.bin_centers.size(); ++b)
        out << "density," << format_double(bootstrap.bin_centers(b)) << ","
            << format_double(bootstrap.densities(b)) << "\n";
}

void write_events_csv(const std::string& directory, const RunConfig& config,
                      const PopulationReport& report) {
    std::ofstream out = open_csv(directory, "events.csv");
    out << "patient,fraction,event,detail\n";
    for (size_t i = 0; i < report.patients.size(); ++i) {
        const PatientResult& p = report.patients[i];
        for (const EvaluationRecord& e : p.evaluations) {
            std::string detail;
            for (size_t c = 0; c < e.passed.size(); ++c) {
                if (!detail.empty()) detail += ';';
                detail += (e.passed[c] ? "pass:" : "fail:") + format_double(e.dxx_pct[c]);
            }
            out << i << "," << e.fraction << "," << (e.triggered ? "violation" : "evaluation")
                << "," << detail << "\n";
            if (e.adapted) {
                std::string state;
                switch (config.strategy.kind) {
                    case StrategyKind::AlphaUpdate: state = "alpha=" + format_double(e.alpha_after); break;
                    case StrategyKind::MarginUpdate: state = "margin_mm=" + format_double(e.margin_after); break;
                    default: state = "replanned"; break;
                }
                out << i << "," << e.fraction << ",adaptation," << state << "\n";
            }
            if (e.solver_failed) out << i << "," << e.fraction << ",solver_failure,plan_retained\n";
        }
    }
}

}  // namespace

void write_reports(const std::string& directory, const RunConfig& config,
                   const PopulationReport& report, const BootstrapResult& bootstrap) {
    std::filesystem::create_directories(directory);
    write_summary_csv(directory, summarize(config, report));
    write_candidates_csv(directory, report);
    write_histogram_csv(directory, "histogram_ctv.csv", report, 0, true);
    write_histogram_csv(directory, "histogram_right_oar.csv", report, 1, false);
    write_histogram_csv(directory, "histogram_left_oar.csv", report, 2, false);
    write_bootstrap_csv(directory, bootstrap);
    write_events_csv(directory, config, report);
}

std::vector<SummaryRow> read_summary_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
    if (line != kSummaryHeader) throw std::runtime_error(path + ": unexpected header");

    std::vector<SummaryRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 17) throw std::runtime_error(path + ": malformed row");
        SummaryRow row;
        row.strategy = cells[0];
        row.schedule = cells[1];
        row.estimator = cells[2];
        row.beta = std::stod(cells[3]);
        row.alpha_initial = std::stod(cells[4]);
        row.population = cells[5];
        row.patients = std::stoi(cells[6]);
        row.success_rate_pct = std::stod(cells[7]);
        row.ctv_d99_worst_pct = std::stod(cells[8]);
        row.ctv_fail_pct = std::stod(cells[9]);
        row.right_d30_worst_pct = std::stod(cells[10]);
        row.right_fail_pct = std::stod(cells[11]);
        row.left_d20_worst_pct = std::stod(cells[12]);
        row.left_fail_pct = std::stod(cells[13]);
        row.most_common_adaptations = std::stoi(cells[14]);
        row.mean_adaptations = std::stod(cells[15]);
        row.solver_failures = std::stoi(cells[16]);
        rows.push_back(std::move(row));
    }
    return rows;
}

bool print_run_comparison(const std::vector<std::string>& run_dirs, std::ostream& out) {
    std::vector<SummaryRow> rows;
    std::vector<std::string> missing;
    for (const std::string& dir : run_dirs) {
        const std::string path = (std::filesystem::path(dir) / "summary.csv").string();
        try {
            for (SummaryRow& row : read_summary_csv(path)) rows.push_back(std::move(row));
        } catch (const std::exception& e) {
            missing.push_back(std::string(e.what()));
        }
    }
    for (const std::string& m : missing) out << "missing: " << m << "\n";
    if (rows.empty()) return false;

    auto row_label = [](const SummaryRow& r) {
        std::string label = r.strategy;
        if (r.estimator != "-") {
            label += "/" + r.estimator;
            if (r.estimator == "exp_smoothing") label += "(b=" + format_double(r.beta) + ")";
        }
        label += " [" + r.population + "]";
        return label;
    };

    std::set<std::string> schedules;
    std::map<std::string, std::map<std::string, double>> matrix;
    for (const SummaryRow& r : rows) {
        schedules.insert(r.schedule);
        matrix[row_label(r)][r.schedule] = r.success_rate_pct;
    }

    out << "success rate (%) by strategy and schedule\n";
    out << std::left << std::setw(44) << "strategy";
    for (const std::string& s : schedules) out << std::right << std::setw(10) << s;
    out << "\n";
    for (const auto& [label, by_schedule] : matrix) {
        out << std::left << std::setw(44) << label;
        for (const std::string& s : schedules) {
            auto it = by_schedule.find(s);
            if (it == by_schedule.end()) out << std::right << std::setw(10) << "-";
            else out << std::right << std::setw(10) << std::fixed << std::setprecision(1) << it->second;
        }
        out << "\n";
    }
    out.unsetf(std::ios::fixed);

    // Pairwise ordering note when exactly two runs are compared.
    if (rows.size() == 2) {
        const SummaryRow& a = rows[0];
        const SummaryRow& b = rows[1];
        if (a.success_rate_pct != b.success_rate_pct) {
            const SummaryRow& hi = a.success_rate_pct > b.success_rate_pct ? a : b;
            const SummaryRow& lo = a.success_rate_pct > b.success_rate_pct ? b : a;
            out << row_label(hi) << " @" << hi.schedule << " succeeded more than " << row_label(lo)
                << " @" << lo.schedule << " (" << format_double(hi.success_rate_pct) << " vs "
                << format_double(lo.success_rate_pct) << ")\n";
        }
    }
    return true;
}

}  // namespace rtadapt
