#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "alertpred/alert.hpp"
#include "alertpred/bow.hpp"
#include "alertpred/cluster.hpp"
#include "alertpred/error.hpp"
#include "alertpred/eval.hpp"
#include "alertpred/hmm.hpp"

namespace alertpred {

// Experiment knobs. Defaults are the reference operating point: k = 10,
// N = 8, 2500 training symbols, horizons 1..5.
struct PipelineConfig {
  std::filesystem::path train_log;
  // Alerts that become the observation sequence. Empty: reuse train_log.
  std::filesystem::path test_log;
  std::optional<AlertFormat> format;  // empty: guess from extension
  std::filesystem::path output_dir = "alertpred-out";

  bool bow_binary = false;
  bool normalize_l2 = false;
  // Fit clusters on the test log instead of the train log.
  bool refit_clusters = false;

  std::size_t k = 10;
  std::size_t n_states = 8;
  std::size_t train_len = 2500;
  std::vector<std::size_t> horizons{1, 2, 3, 4, 5};
  std::size_t levels = 3;
  std::uint64_t master_seed = 0;

  std::size_t kmeans_max_iter = 300;
  std::size_t max_iter = 500;
  double tol = 1e-6;
  std::optional<std::size_t> window;
  bool posterior_predict = false;
  bool score_all_steps = false;
  std::size_t jobs = 1;

  // Sweep grids. Values that do not fit the data are skipped and listed in
  // the report metadata.
  std::vector<std::size_t> sweep_states{2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<std::size_t> sweep_train_len{500, 1000, 1500, 2000, 2500, 3000, 3500};
  std::vector<std::size_t> sweep_clusters{5, 10, 15, 20, 25, 30, 35, 40, 45, 50};
  std::vector<std::size_t> sweep_category_states{2, 4, 6, 8, 10};

  // Throws Error on invalid values.
  void validate() const;
};

nlohmann::json to_json(const PipelineConfig& cfg);
// Accepts a flat config object, or a manifest whose "config" member is one.
// Unknown keys are rejected.
PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path);

// Stage failure: carries the stage name ("ingest", "bow", ...).
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& cause)
      : Error(stage + ": " + cause), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct PipelineResult {
  std::filesystem::path manifest;
  std::vector<std::filesystem::path> files;  // every file written, manifest last
};

// ingest -> bow -> cluster -> hmm -> eval. Writes vocabulary, cluster model,
// HMM, sequences and the report tables into cfg.output_dir plus a
// manifest.json that replays the run. On failure a ".partial" marker is left
// in the directory and StageError is thrown. A ".lock" file guards against
// concurrent runs into one directory.
PipelineResult run_pipeline(const PipelineConfig& cfg);

struct PredictionRow {
  std::size_t step = 0;  // 1-based horizon step
  std::size_t rank = 0;  // 1-based
  Symbol symbol = 0;
  double probability = 0.0;
  std::vector<std::pair<std::string, double>> evidence;  // top centroid tokens
};

struct PredictRequest {
  std::size_t horizon = 1;
  std::size_t top_n = 3;
  std::size_t evidence_tokens = 10;
  PredictMode mode = PredictMode::viterbi;
};

// Ranked forecasts for a context sequence. With a vocabulary and cluster
// model each row is decoded into the cluster's dominant tokens. Throws
// Error naming both sizes when the vocabulary, cluster model and HMM
// dimensions disagree.
std::vector<PredictionRow> predict_command(const Hmm& hmm, std::span<const Symbol> context,
                                           const PredictRequest& request,
                                           const Vocabulary* vocab = nullptr,
                                           const ClusterModel* clusters = nullptr);

nlohmann::json to_json(const std::vector<PredictionRow>& rows);

}  // namespace alertpred
