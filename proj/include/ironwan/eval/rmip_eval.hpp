#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ironwan/core/types.hpp"
#include "ironwan/rmip/rmip.hpp"

namespace ironwan::eval {

/// One received uplink in a replayable trace.
struct TraceRecord {
    core::NodeAddr node;
    std::uint16_t counter = 0;
    core::SimTime arrival{};

    bool operator==(const TraceRecord&) const = default;
};

/// A period change written into a generated trace.
struct TraceChange {
    core::NodeAddr node;
    core::SimTime at{};  // arrival of the first message on the new period
    double old_period_s = 0.0;
    double new_period_s = 0.0;

    bool operator==(const TraceChange&) const = default;
};

/// Synthetic uplink log with LoED-like proportions: a periodic majority on
/// common reporting periods and an event-driven remainder.
struct TraceSpec {
    std::size_t nodes = 100;
    core::Micros duration = 24 * 3600 * core::kMicrosPerSecond;
    double periodic_fraction = 0.56;
    std::vector<double> periods_s{60.0, 120.0, 180.0, 300.0, 600.0, 900.0};
    double jitter_s = 0.5;       // uniform extra delay per message
    double loss = 0.02;          // independent per-message loss
    std::size_t changes = 0;     // periodic nodes that switch period once, mid-trace
    double aperiodic_mean_s = 600.0;  // exponential gaps for the event-driven nodes
    std::uint64_t seed = 1;

    void validate() const;
};

struct Trace {
    std::vector<TraceRecord> records;  // sorted by arrival, then node
    std::vector<TraceChange> changes;
    std::vector<core::NodeAddr> periodic_nodes;
};

Trace generate_trace(const TraceSpec& spec);

inline constexpr const char* kTraceHeader = "node_addr,counter,arrival_time_us";
inline constexpr const char* kTruthHeader = "node_addr,change_time_us,old_period_s,new_period_s";

void write_trace_csv(std::ostream& out, const std::vector<TraceRecord>& records);
void write_truth_csv(std::ostream& out, const std::vector<TraceChange>& changes);

struct TraceParse {
    std::vector<TraceRecord> records;
    std::size_t skipped = 0;  // unparseable lines
};
/// Accepts an optional header row; malformed lines are counted and skipped.
TraceParse read_trace_csv(std::istream& in);

struct TruthParse {
    std::vector<TraceChange> changes;
    std::size_t skipped = 0;
};
TruthParse read_truth_csv(std::istream& in);

/// Arrival stream of one node, in counter order as received.
struct NodeStream {
    core::NodeAddr node;
    std::vector<TraceRecord> records;
};

std::vector<NodeStream> split_by_node(const std::vector<TraceRecord>& records);

/// Periodic when at least 80% of the gaps sit within 2 s of a whole multiple
/// of the median gap (losses double a gap, they do not break the pattern).
bool looks_periodic(const NodeStream& stream);

/// Evaluation input: streams plus the ground-truth change instants.
struct ChangeBenchmark {
    std::vector<NodeStream> streams;
    std::vector<TraceChange> changes;
};

/// Builds `inject` changes by concatenating inter-arrival series: the first
/// half of one periodic node followed by the second half of another node
/// whose period differs by more than 2 s. Untouched periodic streams stay as
/// negatives. Known changes already in `truth` are kept. Aperiodic streams
/// are dropped: the predictor only targets periodic traffic.
ChangeBenchmark build_benchmark(const std::vector<TraceRecord>& records, const std::vector<TraceChange>& truth,
                                std::size_t inject, std::uint64_t seed);

struct ChangeScore {
    std::size_t n = 0;
    double e = 0.0;
    std::size_t injected = 0;
    std::size_t detected = 0;         // injected changes matched by a detection
    std::size_t detections = 0;       // ChangeDetected events
    std::size_t true_detections = 0;  // detections matched to some change
    std::size_t false_positives = 0;

    std::optional<double> precision() const;
    std::optional<double> recall() const;
};

/// Replays every stream through a fresh predictor. A detection matches a
/// change on the same stream when it falls within (n + 5) periods (the
/// longer of the two) after it.
ChangeScore score_changes(const ChangeBenchmark& bench, const rmip::RmipConfig& cfg);

std::string score_csv_header();
std::string score_csv_row(const ChangeScore& s);

/// The evaluation grid: n in 5..15, e in {0.5, 1, 1.5, 2} s.
std::vector<ChangeScore> score_grid(const ChangeBenchmark& bench);

}  // namespace ironwan::eval
