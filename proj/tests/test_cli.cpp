#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "shiftopt/cli.hpp"
#include "shiftopt/hpo/run_history.hpp"

using namespace shiftopt;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str(const std::string& rel = "") const {
        return rel.empty() ? path.string() : (path / rel).string();
    }
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string tiny_experiment_json() {
    return R"({
  "schema": "shiftopt-experiment-v1",
  "dataset": {"kind": "synthetic", "classes": 4, "height": 8, "width": 8,
              "train": 100, "val": 40, "test": 40, "seed": 5, "noise": 0.05},
  "arch": {"preset": "mlp", "hidden": [16]},
  "space": {"epochs": [5, 8]},
  "hpo": {"budget": 6, "eta": 2, "min_fidelity": 1, "max_fidelity": 2, "seed": 7}
})";
}

int cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"shiftopt"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST_CASE("cmd_train: default config smoke run with reproducible artifacts") {
    TempDir dir("shiftopt_cli_train");
    write_text(dir.str("exp.json"), tiny_experiment_json());

    const int rc = cli({"train", "--experiment", dir.str("exp.json"), "--out", dir.str("out")});
    CHECK(rc == 0);

    const json report = json::parse(read_text(dir.str("out/report.json")));
    CHECK(report.at("schema") == "shiftopt-train-report-v1");
    const double acc = report.at("test_accuracy").get<double>();
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
    CHECK(report.at("epochs_run").get<int>() == 8);  // default epochs clamp to the space

    const std::string curve = read_text(dir.str("out/train_curve.csv"));
    CHECK(curve.rfind("epoch,train_loss,val_accuracy\r\n", 0) == 0);

    // Byte-identical on re-run (timestamps live in the sidecar).
    const std::string report_bytes = read_text(dir.str("out/report.json"));
    const std::string model_bytes = read_text(dir.str("out/model.json"));
    CHECK(cli({"train", "--experiment", dir.str("exp.json"), "--out", dir.str("out")}) == 0);
    CHECK(read_text(dir.str("out/report.json")) == report_bytes);
    CHECK(read_text(dir.str("out/train_curve.csv")) == curve);
    CHECK(read_text(dir.str("out/model.json")) == model_bytes);
}

TEST_CASE("cmd_train: POS 1 config file parses (Ranger maps to SGD) and runs") {
    TempDir dir("shiftopt_cli_pos1");
    write_text(dir.str("exp.json"), tiny_experiment_json());
    write_text(dir.str("pos1.json"), R"({
  "batch_size": 97, "optimizer": "Ranger", "learning_rate": 0.0847,
  "momentum": 0.5016, "epochs": 67, "weight_bits": 4,
  "activation_integer_bits": 4, "activation_fraction_bits": 4,
  "shift_depth": 5, "shift_type": "Q", "rounding": "stochastic",
  "weight_decay": 0.0026
})");

    const int rc = cli({"train", "--experiment", dir.str("exp.json"), "--config",
                        dir.str("pos1.json"), "--out", dir.str("out")});
    CHECK(rc == 0);
    const json report = json::parse(read_text(dir.str("out/report.json")));
    CHECK(report.at("config").at("optimizer") == "sgd");  // mapped
    CHECK(report.at("config").at("batch_size") == 97);
    CHECK(report.at("epochs_run").get<int>() == 67);
}

TEST_CASE("cmd_train: unknown config key fails with the key name") {
    TempDir dir("shiftopt_cli_badkey");
    write_text(dir.str("exp.json"), tiny_experiment_json());
    json cfg = json::parse(R"({
  "batch_size": 64, "optimizer": "sgd", "learning_rate": 0.01,
  "momentum": 0.5, "epochs": 5, "weight_bits": 4,
  "activation_integer_bits": 4, "activation_fraction_bits": 4,
  "shift_depth": 2, "shift_type": "Q", "rounding": "deterministic",
  "weight_decay": 0.0001
})");
    cfg["learning_rte"] = 0.5;
    write_text(dir.str("bad.json"), cfg.dump());
    const int rc = cli({"train", "--experiment", dir.str("exp.json"), "--config",
                        dir.str("bad.json"), "--out", dir.str("out")});
    CHECK(rc == 1);
}

TEST_CASE("cmd_train: malformed experiment fails nonzero") {
    TempDir dir("shiftopt_cli_badexp");
    write_text(dir.str("exp.json"), "{ not json");
    CHECK(cli({"train", "--experiment", dir.str("exp.json")}) == 1);

    write_text(dir.str("exp2.json"), R"({"dataset": {"kind": "synthetic", "train": 10,
      "val": 10, "test": 10}, "arch": {"preset": "mlp"}, "unknown_top": 1})");
    CHECK(cli({"train", "--experiment", dir.str("exp2.json")}) == 1);
}

TEST_CASE("cmd_optimize: mf writes incumbent, mfmo writes pareto, both reproducible") {
    TempDir dir("shiftopt_cli_opt");
    write_text(dir.str("exp.json"), tiny_experiment_json());

    CHECK(cli({"optimize", "--experiment", dir.str("exp.json"), "--mode", "mf", "--out",
               dir.str("mf")}) == 0);
    CHECK(fs::exists(dir.str("mf/incumbent.json")));
    const RunHistory mf_hist = load_history(dir.str("mf/runhistory.jsonl"));
    CHECK(mf_hist.size() == 6);

    CHECK(cli({"optimize", "--experiment", dir.str("exp.json"), "--mode", "mfmo", "--budget", "7",
               "--out", dir.str("mfmo")}) == 0);
    const json pareto = json::parse(read_text(dir.str("mfmo/pareto.json")));
    CHECK(pareto.at("entries").size() >= 1);
    const RunHistory mfmo_hist = load_history(dir.str("mfmo/runhistory.jsonl"));
    CHECK(mfmo_hist.size() == 7);

    // Same seed re-run: byte-identical history and outputs.
    const std::string hist_bytes = read_text(dir.str("mfmo/runhistory.jsonl"));
    const std::string pareto_bytes = read_text(dir.str("mfmo/pareto.json"));
    CHECK(cli({"optimize", "--experiment", dir.str("exp.json"), "--mode", "mfmo", "--budget", "7",
               "--out", dir.str("mfmo")}) == 0);
    CHECK(read_text(dir.str("mfmo/runhistory.jsonl")) == hist_bytes);
    CHECK(read_text(dir.str("mfmo/pareto.json")) == pareto_bytes);
}

TEST_CASE("cmd_optimize: interrupted run resumes to the identical history") {
    TempDir dir("shiftopt_cli_resume");
    write_text(dir.str("exp.json"), tiny_experiment_json());

    // Uninterrupted reference at budget 9.
    CHECK(cli({"optimize", "--experiment", dir.str("exp.json"), "--mode", "mfmo", "--budget", "9",
               "--out", dir.str("full")}) == 0);
    const std::string full_bytes = read_text(dir.str("full/runhistory.jsonl"));

    // Interrupted after 4 evaluations, then resumed.
    CHECK(cli({"optimize", "--experiment", dir.str("exp.json"), "--mode", "mfmo", "--budget", "4",
               "--out", dir.str("part")}) == 0);
    CHECK(cli({"optimize", "--experiment", dir.str("exp.json"), "--mode", "mfmo", "--budget", "9",
               "--out", dir.str("part"), "--resume"}) == 0);
    CHECK(read_text(dir.str("part/runhistory.jsonl")) == full_bytes);
}

TEST_CASE("cmd_optimize: corrupted history refuses to resume") {
    TempDir dir("shiftopt_cli_corrupt");
    write_text(dir.str("exp.json"), tiny_experiment_json());
    CHECK(cli({"optimize", "--experiment", dir.str("exp.json"), "--mode", "mf", "--budget", "3",
               "--out", dir.str("run")}) == 0);

    std::string bytes = read_text(dir.str("run/runhistory.jsonl"));
    const auto pos = bytes.find("\"fidelity\":");
    REQUIRE(pos != std::string::npos);
    bytes[pos + 12] = bytes[pos + 12] == '1' ? '2' : '1';
    write_text(dir.str("run/runhistory.jsonl"), bytes);

    CHECK(cli({"optimize", "--experiment", dir.str("exp.json"), "--mode", "mf", "--budget", "3",
               "--out", dir.str("run"), "--resume"}) == 1);
}

TEST_CASE("cmd_report: hand-checked front, purity, empty history") {
    TempDir dir("shiftopt_cli_report");

    RunHistory h;
    auto rec = [](std::size_t idx, double loss, double em) {
        RunRecord r;
        r.index = idx;
        r.config = HyperparameterConfig{};
        r.config.batch_size = 32 + static_cast<int>(idx);  // distinct configs
        r.fidelity = 5;
        r.seed = idx;
        r.objectives = {loss, em};
        r.val_accuracy = 0.5;
        r.test_accuracy = 0.5;
        return r;
    };
    h.append(rec(0, 2.0, 5.0));
    h.append(rec(1, 1.0, 6.0));
    h.append(rec(2, 2.5, 5.5));  // dominated by record 0
    save_history(dir.str("runhistory.jsonl"), h);

    CHECK(cli({"report", "--history", dir.str("runhistory.jsonl"), "--out", dir.str("rep")}) == 0);
    const std::string front = read_text(dir.str("rep/pareto_front.csv"));
    CHECK(front == "config_id,loss,emissions\r\n1,1,6\r\n0,2,5\r\n");
    const std::string fid = read_text(dir.str("rep/fidelity_best.csv"));
    CHECK(fid == "fidelity,best_loss,best_emissions\r\n5,1,5\r\n");
    const std::string table = read_text(dir.str("rep/pareto_table.txt"));
    CHECK(table.find("Batch Size") != std::string::npos);
    CHECK(table.find("POS 2") != std::string::npos);

    // Purity: byte-identical on a second run.
    CHECK(cli({"report", "--history", dir.str("runhistory.jsonl"), "--out", dir.str("rep")}) == 0);
    CHECK(read_text(dir.str("rep/pareto_front.csv")) == front);

    // Empty history: headers only, exit 0.
    write_text(dir.str("empty.jsonl"), "");
    CHECK(cli({"report", "--history", dir.str("empty.jsonl"), "--out", dir.str("rep2")}) == 0);
    CHECK(read_text(dir.str("rep2/pareto_front.csv")) == "config_id,loss,emissions\r\n");
    CHECK(read_text(dir.str("rep2/fidelity_best.csv")) == "fidelity,best_loss,best_emissions\r\n");
}

TEST_CASE("cmd_report: exported configs re-parse through cmd_train") {
    TempDir dir("shiftopt_cli_roundtrip");
    write_text(dir.str("exp.json"), tiny_experiment_json());

    CHECK(cli({"optimize", "--experiment", dir.str("exp.json"), "--mode", "mfmo", "--budget", "5",
               "--out", dir.str("run")}) == 0);
    CHECK(cli({"report", "--history", dir.str("run/runhistory.jsonl"), "--out",
               dir.str("rep")}) == 0);

    const json exported = json::parse(read_text(dir.str("rep/pareto_configs.json")));
    REQUIRE(exported.at("configs").size() >= 1);
    const json cfg_json = exported.at("configs")[0].at("config");
    write_text(dir.str("roundtrip.json"), cfg_json.dump());

    CHECK(cli({"train", "--experiment", dir.str("exp.json"), "--config", dir.str("roundtrip.json"),
               "--out", dir.str("trained")}) == 0);
    const json report = json::parse(read_text(dir.str("trained/report.json")));
    CHECK(report.at("config") == cfg_json);  // lossless round trip
}

TEST_CASE("cli usage errors exit nonzero") {
    CHECK(cli({"optimize", "--experiment", "nope.json", "--mode", "bogus"}) != 0);
    CHECK(cli({"report", "--history", "does_not_exist.jsonl"}) == 1);
    CHECK(cli({}) != 0);
}
