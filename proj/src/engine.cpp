#include "shiftopt/hpo/engine.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <set>
#include <sstream>
#include <stdexcept>

#include "shiftopt/hpo/hyperband.hpp"
#include "shiftopt/hpo/parego.hpp"
#include "shiftopt/hpo/surrogate.hpp"
#include "shiftopt/trainer.hpp"

namespace shiftopt {

namespace {

enum class EngineMode { Mfmo, MfSingle };

class Engine {
  public:
    Engine(const ConfigSpace& space, const DatasetSplits& splits, const EngineOptions& options,
           EngineMode mode)
        : space_(space), splits_(splits), options_(options), mode_(mode),
          suggest_rng_(mix_seed(options.seed, 0x73756767ULL)) {
        space_.validate();
        splits_.validate();
        options_.energy_model.validate();
        if (options_.arch.empty())
            throw std::invalid_argument("engine: no network architecture configured");
    }

    void run(int budget) {
        if (budget < 1) throw std::invalid_argument("engine: budget must be >= 1");
        const HyperBandSchedule schedule =
            build_schedule(options_.min_fidelity, options_.max_fidelity, options_.eta);

        int iteration = 0;
        while (history_.size() < static_cast<std::size_t>(budget)) {
            const ScalarizationWeights weights = draw_weights(options_.seed, iteration);
            for (const HyperBandBracket& bracket : schedule.brackets) {
                if (history_.size() >= static_cast<std::size_t>(budget)) break;
                run_bracket(bracket, weights, static_cast<std::size_t>(budget));
            }
            ++iteration;
        }
    }

    RunHistory& history() { return history_; }
    ParetoArchive& archive() { return archive_; }

  private:
    void run_bracket(const HyperBandBracket& bracket, const ScalarizationWeights& weights,
                     std::size_t budget) {
        std::vector<HyperparameterConfig> cohort =
            fill_cohort(bracket.rounds[0], weights);

        std::vector<double> scalars;
        for (std::size_t ri = 0; ri < bracket.rounds.size(); ++ri) {
            if (ri > 0) {
                const auto survivors = promote(scalars, options_.eta);
                std::vector<HyperparameterConfig> next;
                next.reserve(survivors.size());
                for (const auto s : survivors) next.push_back(cohort[s]);
                cohort = std::move(next);
            }
            if (cohort.empty()) break;
            const std::size_t remaining = budget - history_.size();
            const std::size_t n_eval = std::min(cohort.size(), remaining);

            const std::vector<RunRecord> results =
                evaluate_batch(cohort, n_eval, bracket.rounds[ri].fidelity);
            if (n_eval < cohort.size()) return;  // budget exhausted mid-round

            // Promotion scalars for the completed round, normalized over the
            // full history as it stands now.
            const ObjectiveNormalizer norm = ObjectiveNormalizer::fit(history_);
            scalars.clear();
            for (const RunRecord& r : results)
                scalars.push_back(mode_ == EngineMode::Mfmo
                                      ? parego_scalarize(norm.apply(r.objectives), weights)
                                      : r.objectives.loss);
            if (history_.size() >= budget) return;
        }
    }

    std::vector<HyperparameterConfig> fill_cohort(const HyperBandRound& first_round,
                                                  const ScalarizationWeights& weights) {
        const SurrogateModel surrogate =
            mode_ == EngineMode::Mfmo ? fit_surrogate(history_, weights, suggest_rng_)
                                      : fit_surrogate_loss(history_, suggest_rng_);
        std::vector<HyperparameterConfig> cohort;
        std::set<std::string> cohort_keys;
        cohort.reserve(static_cast<std::size_t>(first_round.num_configs));
        for (int i = 0; i < first_round.num_configs; ++i) {
            HyperparameterConfig cfg;
            for (int attempt = 0; attempt < 10; ++attempt) {
                cfg = suggest(space_, surrogate, history_, suggest_rng_, first_round.fidelity,
                              suggestion_count_++, options_.n_candidates);
                if (!cohort_keys.count(cfg.canonical_string())) break;
            }
            cohort_keys.insert(cfg.canonical_string());
            cohort.push_back(std::move(cfg));
        }
        return cohort;
    }

    std::vector<RunRecord> evaluate_batch(const std::vector<HyperparameterConfig>& cohort,
                                          std::size_t n_eval, int fidelity) {
        std::vector<RunRecord> results;
        results.reserve(n_eval);
        const int workers = std::max(1, options_.workers);
        if (workers == 1) {
            for (std::size_t i = 0; i < n_eval; ++i) {
                results.push_back(evaluate_one(cohort[i], fidelity, history_.size()));
                record(results.back());
            }
            return results;
        }
        // Waves of `workers` parallel evaluations; records land in submission
        // order regardless of completion order.
        std::size_t done = 0;
        while (done < n_eval) {
            const std::size_t wave = std::min(static_cast<std::size_t>(workers), n_eval - done);
            std::vector<std::future<RunRecord>> futures;
            futures.reserve(wave);
            for (std::size_t i = 0; i < wave; ++i) {
                const std::size_t index = history_.size() + i;
                futures.push_back(std::async(std::launch::async, [this, &cohort, done, i, fidelity,
                                                                  index]() {
                    return evaluate_one(cohort[done + i], fidelity, index);
                }));
            }
            for (auto& f : futures) {
                results.push_back(f.get());
                record(results.back());
            }
            done += wave;
        }
        return results;
    }

    RunRecord evaluate_one(const HyperparameterConfig& cfg, int fidelity, std::size_t index) {
        const std::uint64_t run_seed = mix_seed(options_.seed, 0x6576616cULL, index);
        if (index < options_.preloaded.size()) {
            const RunRecord& pre = options_.preloaded[index];
            if (pre.index != index || pre.fidelity != fidelity || pre.seed != run_seed ||
                !(pre.config == cfg)) {
                std::ostringstream oss;
                oss << "resume: persisted record " << index
                    << " does not match this experiment/seed (replay diverged)";
                throw std::runtime_error(oss.str());
            }
            return pre;
        }

        NetworkModel model = build_network(options_.arch, options_.input_shape, run_seed);
        TrainOptions topt;
        topt.energy_model = options_.energy_model;
        topt.include_test_energy = options_.include_test_energy;
        TrainResult res = train(std::move(model), splits_, cfg, fidelity, run_seed, topt);

        RunRecord r;
        r.index = index;
        r.config = cfg;
        r.fidelity = fidelity;
        r.seed = run_seed;
        r.objectives = ObjectiveVector{res.outcome.val_loss, res.outcome.energy.emissions_g};
        r.val_accuracy = res.outcome.val_accuracy;
        r.test_accuracy = res.outcome.test_accuracy;
        r.wall_seconds = res.outcome.wall_seconds;
        return r;
    }

    void record(const RunRecord& r) {
        history_.append(r);
        if (mode_ == EngineMode::Mfmo && r.objectives.finite()) {
            ParetoEntry entry{r.config, r.objectives, r.fidelity, r.index, r.val_accuracy,
                              r.test_accuracy};
            update_archive(archive_, entry);
        }
        if (options_.on_record) options_.on_record(r);
    }

    ConfigSpace space_;
    DatasetSplits splits_;
    EngineOptions options_;
    EngineMode mode_;
    Rng suggest_rng_;
    std::size_t suggestion_count_ = 0;
    RunHistory history_;
    ParetoArchive archive_;
};

}  // namespace

MfmoResult run_mfmo(const ConfigSpace& space, const DatasetSplits& splits,
                    const EngineOptions& options, int budget) {
    Engine engine(space, splits, options, EngineMode::Mfmo);
    engine.run(budget);
    return MfmoResult{std::move(engine.history()), std::move(engine.archive())};
}

MfResult run_mf_single(const ConfigSpace& space, const DatasetSplits& splits,
                       const EngineOptions& options, int budget) {
    Engine engine(space, splits, options, EngineMode::MfSingle);
    engine.run(budget);

    RunHistory history = std::move(engine.history());
    int top_fidelity = 0;
    for (const RunRecord& r : history.records) top_fidelity = std::max(top_fidelity, r.fidelity);
    const RunRecord* best = nullptr;
    for (const RunRecord& r : history.records) {
        if (r.fidelity != top_fidelity) continue;
        if (!best || r.objectives.loss < best->objectives.loss) best = &r;
    }
    MfResult out;
    out.incumbent = *best;  // budget >= 1 guarantees at least one record
    out.history = std::move(history);
    return out;
}

}  // namespace shiftopt
