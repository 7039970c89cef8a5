#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ironwan/cli/scenario.hpp"
#include "ironwan/netsim/netsim.hpp"

namespace ironwan::cli {

struct CellResult {
    Cell cell;
    netsim::RunMetrics metrics;
};

/// Runs every cell on `threads` workers. Results come back in cell order
/// whatever the thread count. `on_log` (if set) receives each cell's event
/// log before it is dropped; it may be called concurrently.
std::vector<CellResult> run_cells(const std::vector<Cell>& cells, std::size_t threads,
                                  const std::function<void(const Cell&, const core::EventLog&)>& on_log = {});

std::string metrics_csv_header();
std::string metrics_csv_row(const CellResult& r);
void write_metrics_csv(std::ostream& out, const std::vector<CellResult>& results);

/// Minimal CSV table: header names plus string rows.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::optional<std::size_t> column(const std::string& name) const;
};
/// Throws std::runtime_error on a row whose width differs from the header.
CsvTable read_csv(std::istream& in);

/// Box-plot statistics over the seeds of one cell.
struct Stats {
    std::size_t count = 0;
    double mean = 0.0;
    double min = 0.0;
    double p25 = 0.0;
    double median = 0.0;
    double p75 = 0.0;
    double max = 0.0;
};
/// Linear interpolation between closest ranks; `values` must not be empty.
double percentile(std::vector<double> values, double q);
Stats summarise(const std::vector<double>& values);

/// Per-cell statistics of pdr, min_node_pdr, no_retx, unique_per_node and overhead.
std::string summary_json(const std::vector<CellResult>& results);

/// Writes metrics.csv, summary.json and (when the scenario logs) logs/<cell>_seed<seed>.jsonl.
std::vector<CellResult> run_scenario(const ScenarioFile& file, const std::filesystem::path& out_dir, std::size_t threads);

}  // namespace ironwan::cli
