#include "alertpred/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "alertpred/error.hpp"
#include "alertpred/rng.hpp"
#include "json_io.hpp"

namespace alertpred {
namespace fs = std::filesystem;

namespace {

const char* format_name(AlertFormat f) {
  return f == AlertFormat::canonical_csv ? "canonical-csv" : "canonical-jsonl";
}

std::string fnv1a_hex(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[8192];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

template <typename Fn>
auto run_stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

// Exclusive lock file, removed on scope exit.
class DirectoryLock {
 public:
  explicit DirectoryLock(fs::path path) : path_(std::move(path)) {
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) throw StageError("setup", "output directory is locked (" + path_.string() + ")");
    std::fclose(f);
  }
  ~DirectoryLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  fs::path path_;
};

AlertLog load_log(const fs::path& path, const std::optional<AlertFormat>& format,
                  nlohmann::json& info) {
  const auto raw = parse_alert_file(path, format.value_or(alert_format_from_path(path)));
  auto log = deduplicate(raw);
  info = {{"path", path.string()},
          {"fnv1a64", fnv1a_hex(path)},
          {"alerts", raw.size()},
          {"after_dedup", log.size()}};
  return log;
}

std::vector<std::size_t> as_sizes(const nlohmann::json& j, const char* key) {
  if (!j.is_array()) throw Error(std::string("config key '") + key + "' must be an array");
  return j.get<std::vector<std::size_t>>();
}

struct FilteredValues {
  std::vector<std::size_t> kept;
  std::vector<std::size_t> skipped;
};

template <typename Pred>
FilteredValues filter_values(const std::vector<std::size_t>& values, Pred ok) {
  FilteredValues f;
  for (auto v : values) (ok(v) ? f.kept : f.skipped).push_back(v);
  return f;
}

}  // namespace

void PipelineConfig::validate() const {
  if (train_log.empty()) throw Error("config: train_log is required");
  if (k < 1) throw Error("config: k must be >= 1");
  if (n_states < 1) throw Error("config: n_states must be >= 1");
  if (train_len < 1) throw Error("config: train_len must be >= 1");
  if (horizons.empty()) throw Error("config: horizons must not be empty");
  for (std::size_t i = 0; i < horizons.size(); ++i) {
    if (horizons[i] < 1 || (i > 0 && horizons[i] <= horizons[i - 1])) {
      throw Error("config: horizons must be >= 1 and strictly increasing");
    }
  }
  if (levels != 3) throw Error("config: levels is fixed at 3");
  if (kmeans_max_iter < 1 || max_iter < 1) throw Error("config: iteration limits must be >= 1");
  if (!(tol > 0.0)) throw Error("config: tol must be positive");
  if (window && *window < 1) throw Error("config: window must be >= 1");
  if (jobs < 1) throw Error("config: jobs must be >= 1");
}

nlohmann::json to_json(const PipelineConfig& cfg) {
  nlohmann::json j;
  j["train_log"] = cfg.train_log.string();
  j["test_log"] = cfg.test_log.string();
  j["format"] = cfg.format ? nlohmann::json(format_name(*cfg.format)) : nlohmann::json();
  j["bow_binary"] = cfg.bow_binary;
  j["normalize_l2"] = cfg.normalize_l2;
  j["refit_clusters"] = cfg.refit_clusters;
  j["k"] = cfg.k;
  j["n_states"] = cfg.n_states;
  j["train_len"] = cfg.train_len;
  j["horizons"] = cfg.horizons;
  j["levels"] = cfg.levels;
  j["master_seed"] = cfg.master_seed;
  j["kmeans_max_iter"] = cfg.kmeans_max_iter;
  j["max_iter"] = cfg.max_iter;
  j["tol"] = cfg.tol;
  j["window"] = cfg.window ? nlohmann::json(*cfg.window) : nlohmann::json();
  j["posterior_predict"] = cfg.posterior_predict;
  j["score_all_steps"] = cfg.score_all_steps;
  j["jobs"] = cfg.jobs;
  j["sweep_states"] = cfg.sweep_states;
  j["sweep_train_len"] = cfg.sweep_train_len;
  j["sweep_clusters"] = cfg.sweep_clusters;
  j["sweep_category_states"] = cfg.sweep_category_states;
  return j;
}

PipelineConfig config_from_json(const nlohmann::json& doc) {
  const nlohmann::json& j = doc.contains("config") ? doc.at("config") : doc;
  if (!j.is_object()) throw Error("config must be a JSON object");
  PipelineConfig cfg;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "train_log") cfg.train_log = value.get<std::string>();
      else if (key == "test_log") cfg.test_log = value.get<std::string>();
      else if (key == "output_dir") cfg.output_dir = value.get<std::string>();
      else if (key == "format") {
        if (value.is_null()) continue;
        cfg.format = parse_alert_format(value.get<std::string>());
        if (!cfg.format) throw Error("config: unknown format '" + value.get<std::string>() + "'");
      }
      else if (key == "bow_binary") cfg.bow_binary = value.get<bool>();
      else if (key == "normalize_l2") cfg.normalize_l2 = value.get<bool>();
      else if (key == "refit_clusters") cfg.refit_clusters = value.get<bool>();
      else if (key == "k") cfg.k = value.get<std::size_t>();
      else if (key == "n_states") cfg.n_states = value.get<std::size_t>();
      else if (key == "train_len") cfg.train_len = value.get<std::size_t>();
      else if (key == "horizons") cfg.horizons = as_sizes(value, "horizons");
      else if (key == "levels") cfg.levels = value.get<std::size_t>();
      else if (key == "master_seed") cfg.master_seed = value.get<std::uint64_t>();
      else if (key == "kmeans_max_iter") cfg.kmeans_max_iter = value.get<std::size_t>();
      else if (key == "max_iter") cfg.max_iter = value.get<std::size_t>();
      else if (key == "tol") cfg.tol = value.get<double>();
      else if (key == "window") {
        if (!value.is_null()) cfg.window = value.get<std::size_t>();
      }
      else if (key == "posterior_predict") cfg.posterior_predict = value.get<bool>();
      else if (key == "score_all_steps") cfg.score_all_steps = value.get<bool>();
      else if (key == "jobs") cfg.jobs = value.get<std::size_t>();
      else if (key == "sweep_states") cfg.sweep_states = as_sizes(value, "sweep_states");
      else if (key == "sweep_train_len") cfg.sweep_train_len = as_sizes(value, "sweep_train_len");
      else if (key == "sweep_clusters") cfg.sweep_clusters = as_sizes(value, "sweep_clusters");
      else if (key == "sweep_category_states")
        cfg.sweep_category_states = as_sizes(value, "sweep_category_states");
      else throw Error("config: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  return cfg;
}

PipelineConfig load_config(const fs::path& path) {
  auto cfg = config_from_json(detail::read_json_file(path));
  const auto base = path.parent_path();
  const auto resolve = [&](fs::path& p) {
    if (!p.empty() && p.is_relative()) p = fs::weakly_canonical(fs::absolute(base / p));
  };
  resolve(cfg.train_log);
  resolve(cfg.test_log);
  return cfg;
}

PipelineResult run_pipeline(const PipelineConfig& cfg) {
  run_stage("config", [&] { cfg.validate(); });
  const fs::path out = cfg.output_dir;
  run_stage("setup", [&] { fs::create_directories(out / "reports"); });
  DirectoryLock lock(out / ".lock");
  const fs::path partial = out / ".partial";
  fs::remove(partial);

  PipelineResult result;
  const auto write_json = [&](const fs::path& rel, const nlohmann::json& j) {
    detail::write_json_file(out / rel, j);
    result.files.push_back(out / rel);
  };
  const auto write_text = [&](const fs::path& rel, const std::string& text) {
    detail::write_text_file(out / rel, text);
    result.files.push_back(out / rel);
  };

  try {
    nlohmann::json inputs;
    nlohmann::json train_info, test_info;
    const auto train = run_stage("ingest", [&] { return load_log(cfg.train_log, cfg.format, train_info); });
    const auto test = run_stage("ingest", [&] {
      return cfg.test_log.empty() ? train : load_log(cfg.test_log, cfg.format, test_info);
    });
    inputs["train_log"] = train_info;
    inputs["test_log"] = cfg.test_log.empty() ? nlohmann::json("train_log") : test_info;

    const auto vocab = run_stage("bow", [&] { return build_vocabulary(train); });
    write_json("vocabulary.json", to_json(vocab));

    const Featurization feat{cfg.bow_binary, cfg.normalize_l2};
    const std::uint64_t kmeans_seed = derive_seed(cfg.master_seed, "kmeans");
    const std::uint64_t hmm_seed = derive_seed(cfg.master_seed, "hmm-init");
    const AlertLog& fit_log = cfg.refit_clusters ? test : train;

    const auto clusters = run_stage("cluster", [&] {
      return fit_alert_clusters(fit_log, vocab, {cfg.k, kmeans_seed, cfg.kmeans_max_iter}, feat);
    });
    nlohmann::json cluster_doc = to_json(clusters.model);
    cluster_doc["fit"] = {{"seed", kmeans_seed},
                          {"iterations", clusters.iterations},
                          {"converged", clusters.converged},
                          {"inertia", clusters.inertia_trace.back()}};
    write_json("cluster_model.json", cluster_doc);

    const auto cluster_seq = run_stage("cluster", [&] { return alerts_to_sequence(test, vocab, clusters.model); });
    const auto [codec, category_seq] = run_stage("cluster", [&] { return categories_to_sequence(test); });
    write_json("sequences.json", {{"cluster", to_json(cluster_seq)},
                                  {"category", {{"codec", to_json(codec)}, {"sequence", to_json(category_seq)}}}});

    const std::size_t max_horizon = cfg.horizons.back();
    const std::size_t len = cluster_seq.size();
    run_stage("hmm", [&] {
      if (cfg.train_len >= len || len - cfg.train_len <= max_horizon) {
        throw Error("train_len " + std::to_string(cfg.train_len) + " leaves no room for horizon " +
                    std::to_string(max_horizon) + " in a sequence of " + std::to_string(len));
      }
    });

    BaumWelchOptions bw;
    bw.max_iter = cfg.max_iter;
    bw.tol = cfg.tol;
    EvalOptions eval;
    eval.mode = cfg.posterior_predict ? PredictMode::posterior : PredictMode::viterbi;
    eval.window = cfg.window;
    eval.score_all_steps = cfg.score_all_steps;

    const auto cluster_split = split_sequence(cluster_seq.view(), cfg.train_len);
    const auto trained = run_stage("hmm", [&] {
      return train_hmm(cluster_split.train, cfg.n_states, cluster_seq.n_symbols, hmm_seed, bw);
    });
    write_json("hmm.json", [&] {
      auto j = to_json(trained.model);
      j["metadata"] = {{"seed", hmm_seed},
                       {"train_len", cfg.train_len},
                       {"iterations", trained.iterations},
                       {"converged", trained.converged},
                       {"tol", bw.tol},
                       {"max_iter", bw.max_iter},
                       {"log_likelihood_trace", trained.trace}};
      return j;
    }());

    nlohmann::json report_files = nlohmann::json::array();
    const auto emit_report = [&](const std::string& name, SweepReport report,
                                 const std::vector<std::size_t>& skipped) {
      report.metadata["skipped_values"] = skipped;
      write_json("reports/" + name + ".json", to_json(report));
      write_text("reports/" + name + ".csv", to_csv(report));
      report_files.push_back("reports/" + name + ".json");
      report_files.push_back("reports/" + name + ".csv");
    };

    run_stage("eval", [&] {
      SweepSettings settings;
      settings.train_len = cfg.train_len;
      settings.n_states = cfg.n_states;
      settings.seed = hmm_seed;
      settings.baum_welch = bw;
      settings.eval = eval;
      settings.eval.horizon = 1;
      settings.jobs = cfg.jobs;

      const auto states = filter_values(cfg.sweep_states, [](std::size_t n) { return n >= 1; });
      if (!states.kept.empty()) {
        emit_report("cluster_states", sweep_states(cluster_seq, states.kept, settings), states.skipped);
      }

      const auto lengths = filter_values(cfg.sweep_train_len, [&](std::size_t l) {
        return l >= 1 && l < len;
      });
      if (!lengths.kept.empty()) {
        emit_report("cluster_train_len", sweep_training_length(cluster_seq, lengths.kept, settings),
                    lengths.skipped);
      }

      std::vector<std::vector<double>> fit_points;
      for (const auto& a : fit_log) fit_points.push_back(featurize(vectorize(a, vocab), feat));
      const std::size_t distinct = count_distinct(fit_points);
      const auto ks = filter_values(cfg.sweep_clusters, [&](std::size_t k) { return k >= 1 && k <= distinct; });
      if (!ks.kept.empty()) {
        SweepSettings cs = settings;
        cs.seed = cfg.master_seed;
        ClusterSweepInput input{fit_log, test, vocab, feat, cfg.kmeans_max_iter};
        emit_report("cluster_clusters", sweep_clusters(input, ks.kept, cs), ks.skipped);
      }

      emit_report("cluster_horizon",
                  sweep_horizon(trained.model, cluster_split.test, cluster_split.train, cfg.horizons, eval),
                  {});

      const auto cat_states = filter_values(cfg.sweep_category_states, [](std::size_t n) { return n >= 1; });
      SweepSettings cat_settings = settings;
      if (!cat_states.kept.empty()) {
        auto report = sweep_states(category_seq, cat_states.kept, cat_settings);
        report.metadata["codec_size"] = codec.size();
        emit_report("category_states", std::move(report), cat_states.skipped);
      }

      const auto cat_split = split_sequence(category_seq.view(), cfg.train_len);
      const auto cat_model = train_hmm(cat_split.train, cfg.n_states, category_seq.n_symbols, hmm_seed, bw);
      auto cat_horizon = sweep_horizon(cat_model.model, cat_split.test, cat_split.train, cfg.horizons, eval);
      cat_horizon.metadata["codec_size"] = codec.size();
      emit_report("category_horizon", std::move(cat_horizon), {});
    });

    nlohmann::json manifest_config = to_json(cfg);
    nlohmann::json manifest = {
        {"config", manifest_config},
        {"inputs", inputs},
        {"seeds", {{"master", cfg.master_seed}, {"kmeans", kmeans_seed}, {"hmm_init", hmm_seed}}},
        {"artifacts",
         {{"vocabulary", "vocabulary.json"},
          {"cluster_model", "cluster_model.json"},
          {"hmm", "hmm.json"},
          {"sequences", "sequences.json"},
          {"reports", report_files}}},
        {"summary",
         {{"vocabulary_size", vocab.size()},
          {"k", clusters.model.k()},
          {"sequence_length", len},
          {"category_count", codec.size()}}}};
    write_json("manifest.json", manifest);
    result.manifest = out / "manifest.json";
  } catch (const StageError&) {
    detail::write_text_file(partial, "");
    throw;
  } catch (const std::exception& e) {
    detail::write_text_file(partial, "");
    throw StageError("output", e.what());
  }
  return result;
}

std::vector<PredictionRow> predict_command(const Hmm& hmm, std::span<const Symbol> context,
                                           const PredictRequest& request, const Vocabulary* vocab,
                                           const ClusterModel* clusters) {
  if (clusters && clusters->k() != hmm.n_symbols()) {
    throw Error("cluster model has k = " + std::to_string(clusters->k()) + " but the HMM has " +
                std::to_string(hmm.n_symbols()) + " symbols");
  }
  if (vocab && clusters && vocab->size() != clusters->vocab_size()) {
    throw Error("vocabulary has " + std::to_string(vocab->size()) +
                " tokens but the cluster model dimension is " + std::to_string(clusters->vocab_size()));
  }
  const auto forecast = predict_multi(hmm, context, request.horizon, request.mode);
  std::vector<PredictionRow> rows;
  for (std::size_t step = 0; step < forecast.size(); ++step) {
    const auto& dist = forecast[step];
    const std::size_t top = std::min(request.top_n, dist.ranked.size());
    for (std::size_t r = 0; r < top; ++r) {
      PredictionRow row;
      row.step = step + 1;
      row.rank = r + 1;
      row.symbol = dist.ranked[r];
      row.probability = dist.probs[row.symbol];
      if (vocab && clusters) {
        row.evidence = describe_cluster(*clusters, *vocab, row.symbol, request.evidence_tokens);
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

nlohmann::json to_json(const std::vector<PredictionRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json evidence = nlohmann::json::array();
    for (const auto& [token, weight] : r.evidence) evidence.push_back({{"token", token}, {"weight", weight}});
    out.push_back({{"step", r.step},
                   {"rank", r.rank},
                   {"symbol", r.symbol},
                   {"probability", r.probability},
                   {"evidence", evidence}});
  }
  return out;
}

}  // namespace alertpred
