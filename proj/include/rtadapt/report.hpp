#pragma once

#include "rtadapt/config.hpp"
#include "rtadapt/simulator.hpp"

#include <string>
#include <vector>

namespace rtadapt {

/// One summary.csv row; mirrors the population-level outcome table.
struct SummaryRow {
    std::string strategy;
    std::string schedule;
    std::string estimator;
    double beta = 0.0;
    double alpha_initial = 0.0;
    std::string population;
    int patients = 0;
    double success_rate_pct = 0.0;
    double ctv_d99_worst_pct = 0.0;
    double ctv_fail_pct = 0.0;
    double right_d30_worst_pct = 0.0;
    double right_fail_pct = 0.0;
    double left_d20_worst_pct = 0.0;
    double left_fail_pct = 0.0;
    int most_common_adaptations = 0;
    double mean_adaptations = 0.0;
    int solver_failures = 0;
};

SummaryRow summarize(const RunConfig& config, const PopulationReport& report);

/// Writes summary.csv, candidates.csv, histogram_{ctv,right_oar,left_oar}.csv,
/// bootstrap.csv and events.csv into `directory` (created if needed). Output
/// is byte-identical for identical inputs.
void write_reports(const std::string& directory, const RunConfig& config,
                   const PopulationReport& report, const BootstrapResult& bootstrap);

std::vector<SummaryRow> read_summary_csv(const std::string& path);

/// Console comparison across run directories: a strategy x schedule matrix of
/// success rates. Missing or unreadable files are reported individually.
/// Returns false when nothing could be read.
bool print_run_comparison(const std::vector<std::string>& run_dirs, std::ostream& out);

}  // namespace rtadapt
