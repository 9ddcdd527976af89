#include "shiftopt/hpo/run_history.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace shiftopt {

using json = nlohmann::json;

void RunHistory::append(RunRecord record) {
    if (record.index != records.size()) {
        std::ostringstream oss;
        oss << "run history: record index " << record.index << " does not extend history of size "
            << records.size();
        throw std::invalid_argument(oss.str());
    }
    records.push_back(std::move(record));
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

std::string hex64(std::uint64_t v) {
    std::ostringstream oss;
    oss << std::hex << v;
    return oss.str();
}

// JSON has no infinity literal; the divergence sentinel serializes as the
// string "inf".
json loss_to_json(double loss) {
    if (std::isinf(loss)) return json("inf");
    return json(loss);
}

double loss_from_json(const json& j) {
    if (j.is_string()) {
        if (j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
        throw std::runtime_error("run history: bad loss encoding");
    }
    return j.get<double>();
}

json record_payload(const RunRecord& r) {
    return json{{"schema", kRunHistorySchema},
                {"index", r.index},
                {"config", r.config.to_json()},
                {"fidelity", r.fidelity},
                {"seed", r.seed},
                {"objectives", json{{"loss", loss_to_json(r.objectives.loss)},
                                    {"emissions", r.objectives.emissions}}},
                {"val_accuracy", r.val_accuracy},
                {"test_accuracy", r.test_accuracy}};
}

}  // namespace

std::string history_line(const RunRecord& record) {
    json payload = record_payload(record);
    payload["check"] = hex64(fnv1a(payload.dump()));
    return payload.dump();
}

RunRecord record_from_line(const std::string& line) {
    json payload;
    try {
        payload = json::parse(line);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("run history: unparseable line (") + e.what() + ")");
    }
    if (!payload.contains("check"))
        throw std::runtime_error("run history: line missing checksum field");
    const std::string stored = payload.at("check").get<std::string>();
    payload.erase("check");
    if (hex64(fnv1a(payload.dump())) != stored)
        throw std::runtime_error("run history: checksum mismatch, file is corrupted");
    if (payload.at("schema").get<std::string>() != kRunHistorySchema)
        throw std::runtime_error("run history: unsupported schema tag");

    RunRecord r;
    r.index = payload.at("index").get<std::size_t>();
    r.config = HyperparameterConfig::from_json(payload.at("config"));
    r.fidelity = payload.at("fidelity").get<int>();
    r.seed = payload.at("seed").get<std::uint64_t>();
    r.objectives.loss = loss_from_json(payload.at("objectives").at("loss"));
    r.objectives.emissions = payload.at("objectives").at("emissions").get<double>();
    r.val_accuracy = payload.at("val_accuracy").get<double>();
    r.test_accuracy = payload.at("test_accuracy").get<double>();
    return r;
}

void save_history(const std::string& path, const RunHistory& history) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("run history: cannot open '" + path + "' for writing");
    for (const RunRecord& r : history.records) out << history_line(r) << '\n';
    if (!out) throw std::runtime_error("run history: write failed for '" + path + "'");
}

RunHistory load_history(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("run history: cannot open '" + path + "'");
    RunHistory history;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        RunRecord r;
        try {
            r = record_from_line(line);
        } catch (const std::exception& e) {
            std::ostringstream oss;
            oss << e.what() << " (line " << line_no << " of '" << path << "')";
            throw std::runtime_error(oss.str());
        }
        history.append(std::move(r));
    }
    return history;
}

std::string meta_line(const RunRecord& record, const std::string& timestamp) {
    return json{{"index", record.index},
                {"timestamp", timestamp},
                {"wall_seconds", record.wall_seconds}}
        .dump();
}

}  // namespace shiftopt
