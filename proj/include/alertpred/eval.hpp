#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "alertpred/alert.hpp"
#include "alertpred/bow.hpp"
#include "alertpred/cluster.hpp"
#include "alertpred/hmm.hpp"
#include "alertpred/sequence.hpp"

namespace alertpred {

// Fraction of scored predictions whose true symbol was in the top 1, 2 and
// 3 ranked symbols.
struct LevelAccuracy {
  double level1 = 0.0;
  double level2 = 0.0;
  double level3 = 0.0;
  std::size_t n_predictions = 0;

  bool operator==(const LevelAccuracy&) const = default;
};

struct SequenceSplit {
  std::vector<Symbol> train;
  std::vector<Symbol> test;
};

// Temporal prefix/suffix split. Requires 1 <= train_len < obs.size().
SequenceSplit split_sequence(std::span<const Symbol> obs, std::size_t train_len);

struct EvalOptions {
  std::size_t horizon = 1;
  PredictMode mode = PredictMode::viterbi;
  // Decode only the last `window` observed symbols at every anchor.
  std::optional<std::size_t> window;
  // Score every step 1..horizon of each forecast instead of step `horizon`
  // only.
  bool score_all_steps = false;
};

// Slides an anchor over `test`. At anchor t the model has seen context
// followed by test[0..t]; the horizon-step forecast is scored against
// test[t + horizon]. Anchors whose target falls past the end are not
// counted. Requires test.size() > horizon.
LevelAccuracy evaluate(const Hmm& hmm, std::span<const Symbol> test,
                       std::span<const Symbol> context, const EvalOptions& options = {});

// Relative frequency of the most common symbol among test[offset..].
double modal_baseline(std::span<const Symbol> test, std::size_t offset = 0);

struct SweepRow {
  std::int64_t value = 0;
  LevelAccuracy accuracy;
};

struct SweepReport {
  std::string parameter;
  std::vector<SweepRow> rows;
  nlohmann::json metadata = nlohmann::json::object();
};

nlohmann::json to_json(const SweepReport& report);
// Columns: param,value,level1,level2,level3,n
std::string to_csv(const SweepReport& report);

// Knobs shared by the sweeps that train models.
struct SweepSettings {
  std::size_t train_len = 2500;
  std::size_t n_states = 8;
  std::uint64_t seed = 0;
  BaumWelchOptions baum_welch;
  EvalOptions eval;
  // Parallel row workers; rows are merged in value order.
  std::size_t jobs = 1;
};

// Trains on obs[0, train_len) and evaluates on the remainder with the
// training prefix as context. A test segment too short for the horizon
// yields an all-zero row with n_predictions == 0.
LevelAccuracy train_and_evaluate(const SymbolSequence& obs, std::size_t n_states,
                                 std::size_t train_len, std::uint64_t seed,
                                 const BaumWelchOptions& bw, const EvalOptions& eval);

// One row per state count.
SweepReport sweep_states(const SymbolSequence& obs, std::span<const std::size_t> state_values,
                         const SweepSettings& settings);

// One row per training length; the remainder is the test segment.
SweepReport sweep_training_length(const SymbolSequence& obs, std::span<const std::size_t> lengths,
                                  const SweepSettings& settings);

struct ClusterSweepInput {
  const AlertLog& fit_log;       // alerts the clusters are fitted on
  const AlertLog& sequence_log;  // alerts turned into the observation sequence
  const Vocabulary& vocab;
  Featurization featurization;
  std::size_t kmeans_max_iter = 300;
};

// For each k: refit clusters, regenerate the sequence, retrain and evaluate.
// Seeds for clustering and HMM init are derived from settings.seed.
SweepReport sweep_clusters(const ClusterSweepInput& input, std::span<const std::size_t> k_values,
                           const SweepSettings& settings);

// One evaluate() row per horizon on a fixed model.
SweepReport sweep_horizon(const Hmm& hmm, std::span<const Symbol> test,
                          std::span<const Symbol> context, std::span<const std::size_t> horizons,
                          const EvalOptions& options = {});

// Bijection between category strings and symbol ids, first-appearance order.
class CategoryCodec {
 public:
  CategoryCodec() = default;
  explicit CategoryCodec(std::vector<std::string> categories);

  const std::vector<std::string>& categories() const noexcept { return categories_; }
  std::size_t size() const noexcept { return categories_.size(); }
  std::optional<Symbol> encode(std::string_view category) const;
  const std::string& decode(Symbol id) const;

 private:
  std::vector<std::string> categories_;
  std::unordered_map<std::string, Symbol> index_;
};

nlohmann::json to_json(const CategoryCodec& codec);

std::pair<CategoryCodec, SymbolSequence> categories_to_sequence(const AlertLog& log);

// Ancestral sampling from (init, trans, emit).
SymbolSequence sample_hmm(const Hmm& hmm, std::size_t length, std::uint64_t seed);

// Random HMM whose every trans and emit row puts `peak` mass on one entry.
// Emission peaks sit on distinct symbols while n_states <= n_symbols; the
// transition peaks follow a random cyclic order of the states.
Hmm make_peaked_hmm(std::size_t n_states, std::size_t n_symbols, double peak, std::uint64_t seed);

// Synthetic alert log: each symbol of a planted-HMM sample picks one of
// `templates` alert templates (distinct addresses, signature and category);
// the source port is drawn from `port_variants` values per template so that
// identical templates still produce several distinct vectors. Timestamps
// advance one second per alert from 2000-01-01T00:00:00Z.
AlertLog synthesize_alert_log(const Hmm& planted, std::size_t length, std::size_t port_variants,
                              std::uint64_t seed);

}  // namespace alertpred
