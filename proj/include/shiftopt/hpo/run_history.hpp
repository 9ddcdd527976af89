#pragma once

// Append-only evaluation log (the observation set behind the optimizer) and
// its JSON-lines persistence. History lines hold only deterministic fields
// plus a per-line checksum; wall-clock measurements and timestamps live in a
// sidecar metadata file so re-runs with the same seed are byte-identical.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "shiftopt/hpo/config_space.hpp"
#include "shiftopt/hpo/pareto.hpp"

namespace shiftopt {

struct RunRecord {
    std::size_t index = 0;
    HyperparameterConfig config;
    int fidelity = 0;
    std::uint64_t seed = 0;
    ObjectiveVector objectives;
    double val_accuracy = 0.0;
    double test_accuracy = 0.0;
    double wall_seconds = 0.0;  // sidecar only, never in the history line
};

struct RunHistory {
    std::vector<RunRecord> records;

    // Append-only: the record's index must equal the current size.
    void append(RunRecord record);
    std::size_t size() const { return records.size(); }
};

inline constexpr const char* kRunHistorySchema = "shiftopt-runhistory-v1";

// One deterministic JSONL line, checksummed; no trailing newline.
std::string history_line(const RunRecord& record);
RunRecord record_from_line(const std::string& line);

void save_history(const std::string& path, const RunHistory& history);

// Verifies schema and per-line checksums; throws std::runtime_error with a
// checksum message on any corruption.
RunHistory load_history(const std::string& path);

// Sidecar metadata: {"index":..,"timestamp":..,"wall_seconds":..} per line.
std::string meta_line(const RunRecord& record, const std::string& timestamp);

std::uint64_t fnv1a(const std::string& s);

}  // namespace shiftopt
