#include "ironwan/cli/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <istream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace ironwan::cli {

std::vector<CellResult> run_cells(const std::vector<Cell>& cells, std::size_t threads,
                                  const std::function<void(const Cell&, const core::EventLog&)>& on_log) {
    std::vector<CellResult> results(cells.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            try {
                auto run = netsim::run(cells[i].config);
                results[i].cell = cells[i];
                results[i].metrics = std::move(run.metrics);
                if (on_log) on_log(cells[i], run.log);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = cells.size();
            }
        }
    };
    threads = std::max<std::size_t>(1, std::min(threads, cells.size()));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    return results;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string{}; }

}  // namespace

std::string metrics_csv_header() {
    return "cell,system,gateways,networks,load,load_fraction,retx_limit,seed,nodes,generated,unique_received,"
           "unique_per_node,recovered,ack_required,acked,pdr,min_node_pdr,no_retx,no_retx_acked,unreachable_nodes,"
           "uplink_tx,rx1_acks,rx2_acks,dropped_acks,handovers,neighbour_downlinks,neighbour_acks,g2g_messages,"
           "band0_g2g,band1_downlinks,overhead,wcs_overhead,missing_reports,g2g_starved,ack_abandoned,duty_violations";
}

std::string metrics_csv_row(const CellResult& r) {
    const auto& m = r.metrics;
    const auto& c = r.cell;
    std::ostringstream o;
    o << c.id << ',' << netsim::to_string(m.system) << ',' << m.gateways << ',' << m.networks << ',' << c.load_label
      << ',' << fmt(m.load) << ',' << m.retx_limit << ',' << m.seed << ',' << m.nodes << ',' << m.generated << ','
      << m.unique_received << ',' << fmt(m.unique_per_node) << ',' << m.recovered << ',' << m.ack_required << ','
      << m.acked << ',' << fmt(m.pdr) << ',' << fmt(m.min_node_pdr) << ',' << fmt(m.no_retx) << ','
      << fmt(m.no_retx_acked) << ',' << m.unreachable_nodes << ',' << m.uplink_tx << ',' << m.rx1_acks << ','
      << m.rx2_acks << ',' << m.dropped_acks << ',' << m.handovers << ',' << m.neighbour_downlinks << ','
      << m.neighbour_acks << ',' << m.g2g_messages << ',' << m.band0_g2g << ',' << m.band1_downlinks << ','
      << m.overhead() << ',' << m.wcs_overhead << ',' << m.missing_reports << ',' << m.g2g_starved << ','
      << m.ack_abandoned << ',' << m.duty_violations;
    return o.str();
}

void write_metrics_csv(std::ostream& out, const std::vector<CellResult>& results) {
    out << metrics_csv_header() << '\n';
    for (const auto& r : results) out << metrics_csv_row(r) << '\n';
}

std::optional<std::size_t> CsvTable::column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
}

CsvTable read_csv(std::istream& in) {
    CsvTable table;
    std::string line;
    auto split = [](const std::string& text) {
        std::vector<std::string> out;
        std::string field;
        std::istringstream s(text);
        while (std::getline(s, field, ',')) out.push_back(field);
        if (!text.empty() && text.back() == ',') out.emplace_back();
        return out;
    };
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split(line);
        if (first) {
            table.header = std::move(fields);
            first = false;
            continue;
        }
        if (fields.size() != table.header.size()) {
            throw std::runtime_error("CSV row " + std::to_string(table.rows.size() + 1) + " has " +
                                     std::to_string(fields.size()) + " fields, header has " +
                                     std::to_string(table.header.size()));
        }
        table.rows.push_back(std::move(fields));
    }
    return table;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("percentile of an empty set");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (values[hi] - values[lo]) * (pos - static_cast<double>(lo));
}

Stats summarise(const std::vector<double>& values) {
    Stats s;
    s.count = values.size();
    if (values.empty()) return s;
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    s.min = *std::min_element(values.begin(), values.end());
    s.max = *std::max_element(values.begin(), values.end());
    s.p25 = percentile(values, 0.25);
    s.median = percentile(values, 0.5);
    s.p75 = percentile(values, 0.75);
    return s;
}

std::string summary_json(const std::vector<CellResult>& results) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<const CellResult*>> by_cell;
    for (const auto& r : results) {
        if (!by_cell.count(r.cell.id)) order.push_back(r.cell.id);
        by_cell[r.cell.id].push_back(&r);
    }
    using Getter = std::optional<double> (*)(const netsim::RunMetrics&);
    const std::vector<std::pair<const char*, Getter>> fields = {
        {"pdr", [](const netsim::RunMetrics& m) { return m.pdr; }},
        {"min_node_pdr", [](const netsim::RunMetrics& m) { return m.min_node_pdr; }},
        {"no_retx", [](const netsim::RunMetrics& m) { return std::optional<double>{m.no_retx}; }},
        {"unique_per_node", [](const netsim::RunMetrics& m) { return std::optional<double>{m.unique_per_node}; }},
        {"overhead", [](const netsim::RunMetrics& m) { return std::optional<double>{double(m.overhead())}; }},
    };
    nlohmann::ordered_json cells = nlohmann::ordered_json::array();
    for (const auto& id : order) {
        const auto& runs = by_cell[id];
        const auto& first = *runs.front();
        nlohmann::ordered_json cell;
        cell["cell"] = id;
        cell["system"] = netsim::to_string(first.metrics.system);
        cell["gateways"] = first.metrics.gateways;
        cell["networks"] = first.metrics.networks;
        cell["load"] = first.cell.load_label;
        cell["retx_limit"] = first.metrics.retx_limit;
        nlohmann::ordered_json seeds = nlohmann::ordered_json::array();
        for (const auto* r : runs) seeds.push_back(r->metrics.seed);
        cell["seeds"] = seeds;
        for (const auto& [name, get] : fields) {
            std::vector<double> values;
            for (const auto* r : runs) {
                if (auto v = get(r->metrics)) values.push_back(*v);
            }
            if (values.empty()) {
                cell[name] = nullptr;
                continue;
            }
            const auto s = summarise(values);
            cell[name] = {{"count", s.count}, {"mean", s.mean},     {"min", s.min}, {"p25", s.p25},
                          {"median", s.median}, {"p75", s.p75}, {"max", s.max}};
        }
        cells.push_back(std::move(cell));
    }
    return nlohmann::ordered_json{{"cells", cells}}.dump(2) + "\n";
}

std::vector<CellResult> run_scenario(const ScenarioFile& file, const std::filesystem::path& out_dir,
                                     std::size_t threads) {
    namespace fs = std::filesystem;
    const auto cells = expand(file);
    fs::create_directories(out_dir);
    const bool logs = file.base.event_log;
    if (logs) fs::create_directories(out_dir / "logs");

    auto results = run_cells(cells, threads, [&](const Cell& cell, const core::EventLog& log) {
        if (!logs) return;
        const auto path = out_dir / "logs" / (cell.id + "_seed" + std::to_string(cell.config.seed) + ".jsonl");
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + path.string());
        log.write_jsonl(out);
    });

    std::ofstream csv(out_dir / "metrics.csv", std::ios::binary);
    if (!csv) throw std::runtime_error("cannot write " + (out_dir / "metrics.csv").string());
    write_metrics_csv(csv, results);
    std::ofstream summary(out_dir / "summary.json", std::ios::binary);
    if (!summary) throw std::runtime_error("cannot write " + (out_dir / "summary.json").string());
    summary << summary_json(results);
    return results;
}

}  // namespace ironwan::cli
