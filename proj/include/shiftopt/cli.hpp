#pragma once

// Command-line front end: `train` runs one configuration and writes a report
// plus an accuracy curve, `optimize` runs the MF / MFMO engine with resumable
// JSONL persistence, `report` turns a run history into plot-ready CSVs and a
// text table of the Pareto configurations.

#include <cstdint>
#include <optional>
#include <string>

namespace shiftopt {

int cmd_train(const std::string& experiment_path, const std::string& config_source,
              const std::optional<std::string>& out_override,
              std::optional<std::uint64_t> seed_override);

int cmd_optimize(const std::string& experiment_path, const std::string& mode,
                 std::optional<int> budget_override, std::optional<std::uint64_t> seed_override,
                 const std::optional<std::string>& out_override, bool resume);

int cmd_report(const std::string& history_path, const std::optional<std::string>& out_override);

// Exit codes: 0 on success (divergence-sentinel outcomes included), nonzero
// for usage, IO, and parse errors.
int run_cli(int argc, const char* const* argv);

}  // namespace shiftopt
