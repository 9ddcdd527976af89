#include "shiftopt/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "shiftopt/experiment.hpp"
#include "shiftopt/hpo/engine.hpp"
#include "shiftopt/trainer.hpp"

namespace shiftopt {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kCrlf = "\r\n";  // RFC 4180 line separator

std::string format_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

json loss_json(double v) {
    if (std::isinf(v)) return json("inf");
    return json(v);
}

std::string iso_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

struct EngineSetup {
    ExperimentConfig experiment;
    DatasetSplits splits;
    std::vector<LayerSpec> arch;
    EngineOptions options;
};

EngineSetup prepare(const std::string& experiment_path,
                    const std::optional<std::uint64_t>& seed_override,
                    const std::optional<std::string>& out_override) {
    EngineSetup s;
    s.experiment = ExperimentConfig::load(experiment_path);
    if (seed_override) s.experiment.hpo.seed = *seed_override;
    if (out_override) s.experiment.out_dir = *out_override;
    s.splits = s.experiment.build_dataset();
    s.arch = s.experiment.build_arch(s.splits.input_shape, s.splits.num_classes);

    NetworkModel probe = build_network(s.arch, s.splits.input_shape, 0);
    const int eligible = probe.eligible_layer_count();

    s.options.min_fidelity = s.experiment.hpo.min_fidelity;
    s.options.max_fidelity =
        s.experiment.hpo.max_fidelity > 0 ? s.experiment.hpo.max_fidelity : eligible;
    s.options.eta = s.experiment.hpo.eta;
    s.options.seed = s.experiment.hpo.seed;
    s.options.workers = s.experiment.hpo.workers;
    s.options.energy_model = s.experiment.energy_model;
    s.options.arch = s.arch;
    s.options.input_shape = s.splits.input_shape;
    s.options.include_test_energy = s.experiment.include_test_energy;
    return s;
}

json op_counts_json(const OpCounts& ops) {
    return json{{"multiplies", ops.multiplies},
                {"shifts", ops.shifts},
                {"adds", ops.adds},
                {"sign_flips", ops.sign_flips}};
}

json pareto_entry_json(const ParetoEntry& e) {
    return json{{"config", e.config.to_json()},
                {"fidelity", e.fidelity},
                {"history_index", e.history_index},
                {"objectives",
                 json{{"loss", loss_json(e.objectives.loss)}, {"emissions", e.objectives.emissions}}},
                {"val_accuracy", e.val_accuracy},
                {"test_accuracy", e.test_accuracy}};
}

// Pareto front over a history: per config its highest-fidelity finite record,
// then the non-dominated subset.
ParetoArchive front_of_history(const RunHistory& history) {
    ParetoArchive archive;
    for (const RunRecord& r : history.records) {
        ParetoEntry entry{r.config, r.objectives, r.fidelity, r.index, r.val_accuracy,
                          r.test_accuracy};
        update_archive(archive, entry);
    }
    return archive;
}

std::vector<ParetoEntry> sorted_front(const ParetoArchive& archive) {
    std::vector<ParetoEntry> entries = archive.entries;
    std::sort(entries.begin(), entries.end(), [](const ParetoEntry& a, const ParetoEntry& b) {
        if (a.objectives.loss != b.objectives.loss) return a.objectives.loss < b.objectives.loss;
        if (a.objectives.emissions != b.objectives.emissions)
            return a.objectives.emissions < b.objectives.emissions;
        return a.history_index < b.history_index;
    });
    return entries;
}

}  // namespace

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(const std::string& experiment_path, const std::string& config_source,
              const std::optional<std::string>& out_override,
              std::optional<std::uint64_t> seed_override) {
    EngineSetup s = prepare(experiment_path, seed_override, out_override);

    HyperparameterConfig config;
    if (config_source == "default") {
        config = s.experiment.space.default_config();
    } else {
        std::ifstream in(config_source, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open config file '" + config_source + "'");
        std::ostringstream buf;
        buf << in.rdbuf();
        std::string mapped;
        config = HyperparameterConfig::from_json(json::parse(buf.str()), &mapped);
        if (!mapped.empty())
            std::cerr << "warning: optimizer outside the supported set, mapped " << mapped << "\n";
        // Explicit config files validate against the full search space, not
        // any experiment narrowing.
        ConfigSpace{}.validate_config(config);
    }

    fs::create_directories(s.experiment.out_dir);
    const std::uint64_t seed = s.experiment.hpo.seed;

    NetworkModel model = build_network(s.arch, s.splits.input_shape, seed);
    TrainOptions topt;
    topt.energy_model = s.experiment.energy_model;
    topt.include_test_energy = s.experiment.include_test_energy;
    topt.record_curve = true;
    TrainResult res = train(std::move(model), s.splits, config, config.shift_depth, seed, topt);
    const TrainOutcome& out = res.outcome;

    const fs::path dir(s.experiment.out_dir);
    json report{{"schema", "shiftopt-train-report-v1"},
                {"config", config.to_json()},
                {"diverged", out.diverged},
                {"epochs_run", out.epochs_run},
                {"val_loss", loss_json(out.val_loss)},
                {"val_accuracy", out.val_accuracy},
                {"test_accuracy", out.test_accuracy},
                {"emissions_g", out.energy.emissions_g},
                {"total_joules", out.energy.total_joules},
                {"op_totals", op_counts_json(out.energy.op_totals)}};
    write_file((dir / "report.json").string(), report.dump(2) + "\n");

    std::ostringstream csv;
    csv << "epoch,train_loss,val_accuracy" << kCrlf;
    for (const EpochStat& e : out.curve)
        csv << e.epoch << ',' << format_double(e.train_loss) << ','
            << format_double(e.val_accuracy) << kCrlf;
    write_file((dir / "train_curve.csv").string(), csv.str());

    save_model(res.model, (dir / "model.json").string());

    json meta{{"timestamp", iso_timestamp()}, {"wall_seconds", out.wall_seconds}};
    write_file((dir / "train_meta.json").string(), meta.dump(2) + "\n");

    std::cout << "train: val_loss=" << format_double(out.val_loss)
              << " val_acc=" << format_double(out.val_accuracy)
              << " test_acc=" << format_double(out.test_accuracy)
              << " emissions_g=" << format_double(out.energy.emissions_g)
              << (out.diverged ? " (diverged)" : "") << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// optimize
// ---------------------------------------------------------------------------

int cmd_optimize(const std::string& experiment_path, const std::string& mode,
                 std::optional<int> budget_override, std::optional<std::uint64_t> seed_override,
                 const std::optional<std::string>& out_override, bool resume) {
    if (mode != "mf" && mode != "mfmo")
        throw std::runtime_error("optimize: mode must be 'mf' or 'mfmo'");
    EngineSetup s = prepare(experiment_path, seed_override, out_override);
    const int budget = budget_override ? *budget_override : s.experiment.hpo.budget;

    fs::create_directories(s.experiment.out_dir);
    const fs::path dir(s.experiment.out_dir);
    const std::string history_path = (dir / "runhistory.jsonl").string();
    const std::string meta_path = (dir / "runhistory.meta.jsonl").string();

    if (resume && fs::exists(history_path)) {
        // Throws with a checksum message if the file is corrupted.
        s.options.preloaded = load_history(history_path).records;
        std::cerr << "resume: replaying " << s.options.preloaded.size() << " persisted records\n";
    }

    std::ofstream history_out(history_path, std::ios::binary | std::ios::trunc);
    std::ofstream meta_out(meta_path, std::ios::binary | std::ios::trunc);
    if (!history_out || !meta_out)
        throw std::runtime_error("optimize: cannot open output files in '" + dir.string() + "'");
    s.options.on_record = [&](const RunRecord& r) {
        history_out << history_line(r) << '\n';
        history_out.flush();
        meta_out << meta_line(r, iso_timestamp()) << '\n';
        meta_out.flush();
    };

    if (mode == "mfmo") {
        MfmoResult result = run_mfmo(s.experiment.space, s.splits, s.options, budget);
        json entries = json::array();
        for (const ParetoEntry& e : sorted_front(result.archive)) entries.push_back(pareto_entry_json(e));
        json doc{{"schema", "shiftopt-pareto-v1"}, {"entries", std::move(entries)}};
        write_file((dir / "pareto.json").string(), doc.dump(2) + "\n");
        std::cout << "mfmo: " << result.history.size() << " evaluations, pareto front of "
                  << result.archive.entries.size() << "\n";
    } else {
        MfResult result = run_mf_single(s.experiment.space, s.splits, s.options, budget);
        const RunRecord& inc = result.incumbent;
        json doc{{"schema", "shiftopt-incumbent-v1"},
                 {"config", inc.config.to_json()},
                 {"fidelity", inc.fidelity},
                 {"history_index", inc.index},
                 {"objectives", json{{"loss", loss_json(inc.objectives.loss)},
                                     {"emissions", inc.objectives.emissions}}},
                 {"val_accuracy", inc.val_accuracy},
                 {"test_accuracy", inc.test_accuracy}};
        write_file((dir / "incumbent.json").string(), doc.dump(2) + "\n");
        std::cout << "mf: " << result.history.size() << " evaluations, incumbent val_loss="
                  << format_double(inc.objectives.loss) << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

namespace {

const char* kTableRows[] = {"Batch Size",
                            "Optimizer",
                            "Learning Rate",
                            "Momentum",
                            "Epochs",
                            "Weight Bits",
                            "Activation Integer Bits",
                            "Activation Fraction Bits",
                            "Shift Depth",
                            "Shift Type",
                            "Rounding",
                            "Weight Decay",
                            "Accuracy (in %)",
                            "Emissions (in gCO2eq)"};

std::string table_cell(const ParetoEntry& e, std::size_t row) {
    const HyperparameterConfig& c = e.config;
    switch (row) {
        case 0: return std::to_string(c.batch_size);
        case 1: return to_string(c.optimizer);
        case 2: return format_double(c.learning_rate);
        case 3: return format_double(c.momentum);
        case 4: return std::to_string(c.epochs);
        case 5: return std::to_string(c.weight_bits);
        case 6: return std::to_string(c.activation_integer_bits);
        case 7: return std::to_string(c.activation_fraction_bits);
        case 8: return std::to_string(c.shift_depth);
        case 9: return to_string(c.shift_type);
        case 10: return to_string(c.rounding);
        case 11: return format_double(c.weight_decay);
        case 12: return format_double(e.test_accuracy * 100.0);
        case 13: return format_double(e.objectives.emissions);
    }
    return "";
}

}  // namespace

int cmd_report(const std::string& history_path, const std::optional<std::string>& out_override) {
    const RunHistory history = load_history(history_path);
    const fs::path dir =
        out_override ? fs::path(*out_override) : fs::path(history_path).parent_path();
    fs::create_directories(dir.empty() ? "." : dir);
    if (history.records.empty())
        std::cerr << "warning: empty run history, writing header-only reports\n";

    const std::vector<ParetoEntry> front = sorted_front(front_of_history(history));

    std::ostringstream pareto_csv;
    pareto_csv << "config_id,loss,emissions" << kCrlf;
    for (const ParetoEntry& e : front)
        pareto_csv << e.history_index << ',' << format_double(e.objectives.loss) << ','
                   << format_double(e.objectives.emissions) << kCrlf;
    write_file((dir / "pareto_front.csv").string(), pareto_csv.str());

    // Best observed objective values per fidelity level.
    std::map<int, std::pair<double, double>> best;  // fidelity -> (loss, emissions)
    for (const RunRecord& r : history.records) {
        auto [it, inserted] = best.try_emplace(r.fidelity, r.objectives.loss, r.objectives.emissions);
        if (!inserted) {
            it->second.first = std::min(it->second.first, r.objectives.loss);
            it->second.second = std::min(it->second.second, r.objectives.emissions);
        }
    }
    std::ostringstream fid_csv;
    fid_csv << "fidelity,best_loss,best_emissions" << kCrlf;
    for (const auto& [fidelity, obj] : best)
        fid_csv << fidelity << ',' << format_double(obj.first) << ',' << format_double(obj.second)
                << kCrlf;
    write_file((dir / "fidelity_best.csv").string(), fid_csv.str());

    // Machine-readable companion to the CSV: the front's configurations,
    // re-loadable through `train --config`.
    json configs = json::array();
    for (const ParetoEntry& e : front)
        configs.push_back(json{{"config_id", e.history_index}, {"config", e.config.to_json()}});
    write_file((dir / "pareto_configs.json").string(),
               json{{"schema", "shiftopt-pareto-configs-v1"}, {"configs", std::move(configs)}}
                       .dump(2) +
                   "\n");

    // Table-1-style text table, one column per Pareto configuration.
    constexpr std::size_t kRows = sizeof(kTableRows) / sizeof(kTableRows[0]);
    std::vector<std::vector<std::string>> cells(kRows);
    for (std::size_t row = 0; row < kRows; ++row)
        for (const ParetoEntry& e : front) cells[row].push_back(table_cell(e, row));

    std::size_t name_width = 0;
    for (const char* name : kTableRows) name_width = std::max(name_width, std::string(name).size());
    std::vector<std::size_t> col_width(front.size());
    for (std::size_t c = 0; c < front.size(); ++c) {
        col_width[c] = std::string("POS ").size() + 4;
        for (std::size_t row = 0; row < kRows; ++row)
            col_width[c] = std::max(col_width[c], cells[row][c].size());
    }

    std::ostringstream table;
    table << "Parameter" << std::string(name_width - 9, ' ');
    for (std::size_t c = 0; c < front.size(); ++c) {
        std::string head = "POS " + std::to_string(c + 1);
        table << "  " << head << std::string(col_width[c] - head.size(), ' ');
    }
    table << '\n';
    for (std::size_t row = 0; row < kRows; ++row) {
        std::string name = kTableRows[row];
        table << name << std::string(name_width - name.size(), ' ');
        for (std::size_t c = 0; c < front.size(); ++c)
            table << "  " << cells[row][c]
                  << std::string(col_width[c] - cells[row][c].size(), ' ');
        table << '\n';
    }
    write_file((dir / "pareto_table.txt").string(), table.str());
    std::cout << "report: " << front.size() << " pareto configurations over "
              << history.records.size() << " records\n";
    return 0;
}

// ---------------------------------------------------------------------------
// argument parsing
// ---------------------------------------------------------------------------

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"deep shift network training with green multi-fidelity HPO"};
    app.require_subcommand(1);

    std::string experiment, config_source = "default", mode, history;
    std::string out;
    std::uint64_t seed = 0;
    int budget = 0;
    bool resume = false;

    CLI::App* train_cmd = app.add_subcommand("train", "train one configuration");
    train_cmd->add_option("--experiment", experiment, "experiment JSON file")->required();
    train_cmd->add_option("--config", config_source, "'default' or a config JSON file");
    train_cmd->add_option("--seed", seed, "override the experiment seed");
    train_cmd->add_option("--out", out, "output directory");

    CLI::App* opt_cmd = app.add_subcommand("optimize", "run MF or MFMO optimization");
    opt_cmd->add_option("--experiment", experiment, "experiment JSON file")->required();
    opt_cmd->add_option("--mode", mode, "mf | mfmo")
        ->required()
        ->check(CLI::IsMember({"mf", "mfmo"}));
    opt_cmd->add_option("--budget", budget, "total evaluation budget");
    opt_cmd->add_option("--seed", seed, "override the experiment seed");
    opt_cmd->add_option("--out", out, "output directory");
    opt_cmd->add_flag("--resume", resume, "resume from a persisted run history");

    CLI::App* report_cmd = app.add_subcommand("report", "summarize a run history");
    report_cmd->add_option("--history", history, "runhistory.jsonl path")->required();
    report_cmd->add_option("--out", out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        const auto opt_out = out.empty() ? std::nullopt : std::optional<std::string>(out);
        if (train_cmd->parsed()) {
            const auto opt_seed = train_cmd->count("--seed")
                                      ? std::optional<std::uint64_t>(seed)
                                      : std::nullopt;
            return cmd_train(experiment, config_source, opt_out, opt_seed);
        }
        if (opt_cmd->parsed()) {
            const auto opt_seed =
                opt_cmd->count("--seed") ? std::optional<std::uint64_t>(seed) : std::nullopt;
            const auto opt_budget =
                opt_cmd->count("--budget") ? std::optional<int>(budget) : std::nullopt;
            return cmd_optimize(experiment, mode, opt_budget, opt_seed, opt_out, resume);
        }
        return cmd_report(history, opt_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace shiftopt
