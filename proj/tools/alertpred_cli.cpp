#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "alertpred/alert.hpp"
#include "alertpred/bow.hpp"
#include "alertpred/cluster.hpp"
#include "alertpred/error.hpp"
#include "alertpred/eval.hpp"
#include "alertpred/hmm.hpp"
#include "alertpred/pipeline.hpp"
#include "alertpred/rng.hpp"
#include "alertpred/sequence.hpp"

namespace ap = alertpred;
namespace fs = std::filesystem;

namespace {

constexpr int kUsage = 1;
constexpr int kData = 2;

// Usage problems found after CLI11 parsing (bad ranges, unknown names).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string default_output_dir() {
  const char* env = std::getenv("ALERTPRED_OUT");
  return env && *env ? env : "alertpred-out";
}

ap::AlertFormat resolve_format(const std::string& name, const fs::path& path) {
  if (name.empty()) return ap::alert_format_from_path(path);
  const auto f = ap::parse_alert_format(name);
  if (!f) throw UsageError("unknown format '" + name + "'");
  return *f;
}

ap::AlertLog read_log(const fs::path& path, const std::string& format) {
  return ap::parse_alert_file(path, resolve_format(format, path));
}

// "a..b" or "a..b:step", or a comma list.
std::vector<std::size_t> parse_values(const std::string& text) {
  static const std::regex range(R"((\d+)\.\.(\d+)(?::(\d+))?)");
  std::smatch m;
  std::vector<std::size_t> out;
  if (std::regex_match(text, m, range)) {
    const auto a = std::stoull(m[1]);
    const auto b = std::stoull(m[2]);
    const auto step = m[3].matched ? std::stoull(m[3]) : 1ULL;
    if (step == 0 || a > b) throw UsageError("bad range '" + text + "'");
    for (auto v = a; v <= b; v += step) out.push_back(v);
    return out;
  }
  static const std::regex item(R"(\d+)");
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (!std::regex_match(part, item)) throw UsageError("bad value list '" + text + "'");
    out.push_back(std::stoull(part));
  }
  if (out.empty()) throw UsageError("empty value list");
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i] <= out[i - 1]) throw UsageError("values must be strictly increasing");
  }
  return out;
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ap::Error("cannot write " + path);
  out << text;
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << "\n"; }

struct EvalFlags {
  std::size_t horizon = 1;
  std::optional<std::size_t> window;
  bool score_all_steps = false;
  bool posterior = false;

  void add(CLI::App* cmd) {
    cmd->add_option("--horizon", horizon, "Forecast steps ahead")->check(CLI::PositiveNumber);
    cmd->add_option("--window", window, "Decode only the last W symbols")->check(CLI::PositiveNumber);
    cmd->add_flag("--score-all-steps", score_all_steps, "Score every step up to the horizon");
    cmd->add_flag("--posterior-predict", posterior, "Predict from the forward posterior");
  }
  ap::EvalOptions options() const {
    ap::EvalOptions o;
    o.horizon = horizon;
    o.window = window;
    o.score_all_steps = score_all_steps;
    o.mode = posterior ? ap::PredictMode::posterior : ap::PredictMode::viterbi;
    return o;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IDS alert clustering and HMM-based next-alert prediction"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "alertpred 0.1.0");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Parse, deduplicate and rewrite an alert log");
  std::string in_path, out_path, format, out_format;
  int snort_year = 0;
  ingest->add_option("--input,-i", in_path, "Alert log")->required();
  ingest->add_option("--output,-o", out_path, "Canonical output (.csv or .jsonl)")->required();
  ingest->add_option("--format", format, "Input format: csv, jsonl");
  ingest->add_option("--snort-year", snort_year, "Read Snort fast-alert text, stamping this year");
  ingest->add_flag("--keep-duplicates", "Skip deduplication");

  // bow build
  auto* bow = app.add_subcommand("bow", "Bag-of-words vocabulary");
  bow->require_subcommand(1);
  auto* bow_build = bow->add_subcommand("build", "Build a vocabulary from an alert log");
  bow_build->add_option("--input,-i", in_path, "Alert log")->required();
  bow_build->add_option("--output,-o", out_path, "Vocabulary JSON")->required();
  bow_build->add_option("--format", format, "Input format");

  // cluster
  auto* cluster = app.add_subcommand("cluster", "k-means clustering of alert vectors");
  cluster->require_subcommand(1);
  std::string vocab_path, model_path, seq_path, clusters_path;
  std::size_t k = 10, kmeans_iter = 300, cluster_id = 0, top = 10;
  std::uint64_t seed = 0;
  bool bow_binary = false, normalize_l2 = false;

  auto* cfit = cluster->add_subcommand("fit", "Fit cluster centroids");
  cfit->add_option("--input,-i", in_path, "Alert log")->required();
  cfit->add_option("--vocab", vocab_path, "Vocabulary JSON")->required();
  cfit->add_option("--output,-o", out_path, "Cluster model JSON")->required();
  cfit->add_option("--format", format, "Input format");
  cfit->add_option("--k", k, "Number of clusters")->check(CLI::PositiveNumber);
  cfit->add_option("--seed", seed, "Random seed");
  cfit->add_option("--max-iter", kmeans_iter, "Lloyd iteration limit")->check(CLI::PositiveNumber);
  cfit->add_flag("--bow-binary", bow_binary, "Use token presence instead of counts");
  cfit->add_flag("--normalize-l2", normalize_l2, "L2-normalize vectors before clustering");

  auto* cassign = cluster->add_subcommand("assign", "Turn an alert log into a cluster sequence");
  cassign->add_option("--input,-i", in_path, "Alert log")->required();
  cassign->add_option("--vocab", vocab_path, "Vocabulary JSON")->required();
  cassign->add_option("--model", model_path, "Cluster model JSON")->required();
  cassign->add_option("--output,-o", out_path, "Sequence JSON")->required();
  cassign->add_option("--format", format, "Input format");

  auto* cdescribe = cluster->add_subcommand("describe", "Dominant tokens of one centroid");
  cdescribe->add_option("--vocab", vocab_path, "Vocabulary JSON")->required();
  cdescribe->add_option("--model", model_path, "Cluster model JSON")->required();
  cdescribe->add_option("--id", cluster_id, "Cluster id")->required();
  cdescribe->add_option("--top", top, "Number of tokens");

  // hmm
  auto* hmm = app.add_subcommand("hmm", "Hidden Markov model training and prediction");
  hmm->require_subcommand(1);
  std::size_t n_states = 8, bw_iter = 500, top_n = 3;
  std::optional<std::size_t> train_len;
  double tol = 1e-6;
  EvalFlags eval_flags;

  auto* htrain = hmm->add_subcommand("train", "Baum-Welch training on a symbol sequence");
  htrain->add_option("--sequence", seq_path, "Sequence JSON")->required();
  htrain->add_option("--output,-o", out_path, "HMM JSON")->required();
  htrain->add_option("--states", n_states, "Hidden states")->check(CLI::PositiveNumber);
  htrain->add_option("--train-len", train_len, "Train on this many leading symbols")->check(CLI::PositiveNumber);
  htrain->add_option("--seed", seed, "Random seed");
  htrain->add_option("--tol", tol, "Log-likelihood improvement threshold")->check(CLI::PositiveNumber);
  htrain->add_option("--max-iter", bw_iter, "Iteration limit")->check(CLI::PositiveNumber);

  auto* hpredict = hmm->add_subcommand("predict", "Ranked next-cluster forecast");
  std::size_t context_len = 0;
  hpredict->add_option("--model", model_path, "HMM JSON")->required();
  auto* seq_opt = hpredict->add_option("--sequence", seq_path, "Context sequence JSON");
  auto* log_opt = hpredict->add_option("--context", in_path, "Context alert log (needs --vocab and --clusters)");
  seq_opt->excludes(log_opt);
  hpredict->add_option("--context-len", context_len, "Use only the last N context symbols");
  hpredict->add_option("--vocab", vocab_path, "Vocabulary JSON for decoding");
  hpredict->add_option("--clusters", clusters_path, "Cluster model JSON for decoding");
  hpredict->add_option("--format", format, "Context log format");
  hpredict->add_option("--top", top_n, "Rows per step")->check(CLI::PositiveNumber);
  hpredict->add_option("--evidence", top, "Tokens shown per cluster");
  hpredict->add_option("--horizon", eval_flags.horizon, "Forecast steps")->check(CLI::PositiveNumber);
  hpredict->add_flag("--posterior-predict", eval_flags.posterior, "Predict from the forward posterior");

  // eval
  auto* eval = app.add_subcommand("eval", "Accuracy evaluation, sweeps and synthetic data");
  eval->require_subcommand(1);
  auto* erun = eval->add_subcommand("run", "Level-1/2/3 accuracy of a model on a sequence");
  erun->add_option("--model", model_path, "HMM JSON")->required();
  erun->add_option("--sequence", seq_path, "Sequence JSON")->required();
  erun->add_option("--train-len", train_len, "Leading symbols used as context only")->required();
  eval_flags.add(erun);

  auto* esweep = eval->add_subcommand("sweep", "Parameter sweep");
  std::string param, values_text;
  esweep->add_option("--param", param, "states, train-len, clusters or horizon")
      ->required()
      ->check(CLI::IsMember({"states", "train-len", "clusters", "horizon"}));
  esweep->add_option("--values", values_text, "a..b[:step] or a comma list")->required();
  esweep->add_option("--sequence", seq_path, "Sequence JSON (states, train-len, horizon)");
  esweep->add_option("--model", model_path, "HMM JSON (horizon)");
  esweep->add_option("--input,-i", in_path, "Alert log (clusters)");
  esweep->add_option("--fit-input", clusters_path, "Alert log the clusters are fitted on (clusters)");
  esweep->add_option("--vocab", vocab_path, "Vocabulary JSON (clusters)");
  esweep->add_option("--format", format, "Alert log format");
  esweep->add_option("--states", n_states, "Hidden states")->check(CLI::PositiveNumber);
  esweep->add_option("--train-len", train_len, "Training length")->check(CLI::PositiveNumber);
  esweep->add_option("--seed", seed, "Random seed");
  esweep->add_option("--tol", tol, "Baum-Welch tolerance")->check(CLI::PositiveNumber);
  esweep->add_option("--max-iter", bw_iter, "Baum-Welch iteration limit")->check(CLI::PositiveNumber);
  esweep->add_flag("--bow-binary", bow_binary, "Use token presence instead of counts");
  esweep->add_flag("--normalize-l2", normalize_l2, "L2-normalize vectors before clustering");
  std::size_t jobs = 1;
  esweep->add_option("--jobs", jobs, "Parallel rows")->check(CLI::PositiveNumber);
  esweep->add_option("--output,-o", out_path, "Write <prefix>.json and <prefix>.csv instead of CSV on stdout");
  eval_flags.add(esweep);

  auto* esynth = eval->add_subcommand("synth", "Sample a planted HMM");
  std::size_t n_symbols = 10, length = 5000, port_variants = 4;
  double peak = 0.8;
  std::string alerts_out, planted_out;
  esynth->add_option("--states", n_states, "Planted states")->check(CLI::PositiveNumber);
  esynth->add_option("--symbols", n_symbols, "Planted symbols")->check(CLI::PositiveNumber);
  esynth->add_option("--length", length, "Sequence length")->check(CLI::PositiveNumber);
  esynth->add_option("--seed", seed, "Random seed");
  esynth->add_option("--peak", peak, "Mass on each row's dominant entry")->check(CLI::Range(0.0, 1.0));
  esynth->add_option("--output,-o", out_path, "Sequence JSON")->required();
  esynth->add_option("--model-output", planted_out, "Also write the planted HMM");
  esynth->add_option("--alerts", alerts_out, "Also write a synthetic alert log (.csv or .jsonl)");
  esynth->add_option("--port-variants", port_variants, "Source ports per alert template")
      ->check(CLI::PositiveNumber);

  // pipeline
  auto* pipeline = app.add_subcommand("pipeline", "End-to-end runs");
  pipeline->require_subcommand(1);
  auto* prun = pipeline->add_subcommand("run", "Run every stage from a config file");
  std::string config_path, output_dir;
  prun->add_option("--config", config_path, "Config or manifest JSON")->required();
  prun->add_option("--output-dir", output_dir, "Output directory (default: $ALERTPRED_OUT or alertpred-out)");
  std::optional<std::size_t> o_k, o_states, o_train_len, o_window, o_jobs;
  std::optional<std::uint64_t> o_seed;
  bool o_binary = false, o_l2 = false, o_posterior = false, o_all_steps = false;
  prun->add_option("--k", o_k, "Override k")->check(CLI::PositiveNumber);
  prun->add_option("--states", o_states, "Override n_states")->check(CLI::PositiveNumber);
  prun->add_option("--train-len", o_train_len, "Override train_len")->check(CLI::PositiveNumber);
  prun->add_option("--seed", o_seed, "Override master_seed");
  prun->add_option("--window", o_window, "Override window")->check(CLI::PositiveNumber);
  prun->add_option("--jobs", o_jobs, "Override jobs")->check(CLI::PositiveNumber);
  prun->add_flag("--bow-binary", o_binary, "Use token presence instead of counts");
  prun->add_flag("--normalize-l2", o_l2, "L2-normalize vectors before clustering");
  prun->add_flag("--posterior-predict", o_posterior, "Predict from the forward posterior");
  prun->add_flag("--score-all-steps", o_all_steps, "Score every step up to the horizon");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsage;
  }

  try {
    if (*ingest) {
      ap::AlertLog log;
      if (snort_year != 0) {
        std::ifstream in(in_path);
        if (!in) throw ap::Error("cannot open " + in_path);
        log = ap::parse_snort_fast(in, snort_year);
      } else {
        log = read_log(in_path, format);
      }
      const std::size_t raw = log.size();
      if (ingest->count("--keep-duplicates") == 0) log = ap::deduplicate(log);
      std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
      if (!out) throw ap::Error("cannot write " + out_path);
      ap::write_alerts(out, log, ap::alert_format_from_path(out_path));
      std::cerr << raw << " alerts read, " << log.size() << " written\n";
    } else if (*bow_build) {
      const auto vocab = ap::build_vocabulary(read_log(in_path, format));
      ap::save_vocabulary(out_path, vocab);
      std::cerr << vocab.size() << " tokens\n";
    } else if (*cfit) {
      const auto log = read_log(in_path, format);
      const auto vocab = ap::load_vocabulary(vocab_path);
      const auto fit = ap::fit_alert_clusters(log, vocab, {k, seed, kmeans_iter}, {bow_binary, normalize_l2});
      ap::save_cluster_model(out_path, fit.model);
      std::cerr << "k=" << k << " inertia=" << fit.inertia_trace.back() << " iterations=" << fit.iterations
                << (fit.converged ? "" : " (not converged)") << "\n";
    } else if (*cassign) {
      const auto seq = ap::alerts_to_sequence(read_log(in_path, format), ap::load_vocabulary(vocab_path),
                                              ap::load_cluster_model(model_path));
      ap::save_sequence(out_path, seq);
    } else if (*cdescribe) {
      const auto rows = ap::describe_cluster(ap::load_cluster_model(model_path), ap::load_vocabulary(vocab_path),
                                             cluster_id, top);
      for (const auto& [token, weight] : rows) std::cout << token << "\t" << weight << "\n";
    } else if (*htrain) {
      const auto seq = ap::load_sequence(seq_path);
      const std::size_t len = train_len.value_or(seq.size());
      if (len > seq.size()) throw ap::Error("--train-len exceeds the sequence length");
      ap::BaumWelchOptions bw;
      bw.max_iter = bw_iter;
      bw.tol = tol;
      const auto trained =
          ap::train_hmm(std::span(seq.symbols).first(len), n_states, seq.n_symbols, seed, bw);
      ap::save_hmm(out_path, trained.model,
                   {{"seed", seed},
                    {"train_len", len},
                    {"iterations", trained.iterations},
                    {"converged", trained.converged},
                    {"tol", tol},
                    {"max_iter", bw_iter},
                    {"log_likelihood_trace", trained.trace}});
      std::cerr << "log-likelihood " << trained.trace.back() << " after " << trained.iterations
                << " iterations\n";
    } else if (*hpredict) {
      const auto model = ap::load_hmm(model_path);
      std::optional<ap::Vocabulary> vocab;
      std::optional<ap::ClusterModel> clusters;
      if (!vocab_path.empty()) vocab = ap::load_vocabulary(vocab_path);
      if (!clusters_path.empty()) clusters = ap::load_cluster_model(clusters_path);
      std::vector<ap::Symbol> context;
      if (!seq_path.empty()) {
        context = ap::load_sequence(seq_path).symbols;
      } else if (!in_path.empty()) {
        if (!vocab || !clusters) throw UsageError("--context needs --vocab and --clusters");
        context = ap::alerts_to_sequence(read_log(in_path, format), *vocab, *clusters).symbols;
      } else {
        throw UsageError("give --sequence or --context");
      }
      if (context_len > 0 && context.size() > context_len) {
        context.erase(context.begin(), context.end() - static_cast<std::ptrdiff_t>(context_len));
      }
      ap::PredictRequest req;
      req.horizon = eval_flags.horizon;
      req.top_n = top_n;
      req.evidence_tokens = top;
      req.mode = eval_flags.posterior ? ap::PredictMode::posterior : ap::PredictMode::viterbi;
      print_json(ap::to_json(ap::predict_command(model, context, req, vocab ? &*vocab : nullptr,
                                                 clusters ? &*clusters : nullptr)));
    } else if (*erun) {
      const auto model = ap::load_hmm(model_path);
      const auto seq = ap::load_sequence(seq_path);
      const auto split = ap::split_sequence(seq.view(), *train_len);
      const auto acc = ap::evaluate(model, split.test, split.train, eval_flags.options());
      print_json({{"level1", acc.level1},
                  {"level2", acc.level2},
                  {"level3", acc.level3},
                  {"n", acc.n_predictions},
                  {"modal_baseline", ap::modal_baseline(split.test, eval_flags.horizon)}});
    } else if (*esweep) {
      const auto values = parse_values(values_text);
      ap::SweepSettings s;
      s.train_len = train_len.value_or(2500);
      s.n_states = n_states;
      s.seed = seed;
      s.baum_welch.max_iter = bw_iter;
      s.baum_welch.tol = tol;
      s.eval = eval_flags.options();
      s.jobs = jobs;
      ap::SweepReport report;
      if (param == "clusters") {
        if (in_path.empty() || vocab_path.empty()) throw UsageError("clusters sweep needs --input and --vocab");
        const auto log = read_log(in_path, format);
        const auto fit_log = clusters_path.empty() ? log : read_log(clusters_path, format);
        const auto vocab = ap::load_vocabulary(vocab_path);
        const ap::ClusterSweepInput input{fit_log, log, vocab, {bow_binary, normalize_l2}, 300};
        report = ap::sweep_clusters(input, values, s);
      } else {
        if (seq_path.empty()) throw UsageError(param + " sweep needs --sequence");
        const auto seq = ap::load_sequence(seq_path);
        if (param == "states") {
          report = ap::sweep_states(seq, values, s);
        } else if (param == "train-len") {
          report = ap::sweep_training_length(seq, values, s);
        } else {
          if (model_path.empty()) throw UsageError("horizon sweep needs --model");
          const auto split = ap::split_sequence(seq.view(), s.train_len);
          report = ap::sweep_horizon(ap::load_hmm(model_path), split.test, split.train, values, s.eval);
        }
      }
      if (out_path.empty()) {
        std::cout << ap::to_csv(report);
      } else {
        write_output(out_path + ".json", ap::to_json(report).dump(2) + "\n");
        write_output(out_path + ".csv", ap::to_csv(report));
      }
    } else if (*esynth) {
      const auto planted = ap::make_peaked_hmm(n_states, n_symbols, peak, seed);
      const auto seq = ap::sample_hmm(planted, length, ap::derive_seed(seed, "sample"));
      ap::save_sequence(out_path, seq);
      if (!planted_out.empty()) ap::save_hmm(planted_out, planted, {{"seed", seed}, {"peak", peak}});
      if (!alerts_out.empty()) {
        const auto log = ap::synthesize_alert_log(planted, length, port_variants, ap::derive_seed(seed, "alerts"));
        std::ofstream out(alerts_out, std::ios::binary | std::ios::trunc);
        if (!out) throw ap::Error("cannot write " + alerts_out);
        ap::write_alerts(out, log, ap::alert_format_from_path(alerts_out));
      }
    } else if (*prun) {
      auto cfg = ap::load_config(config_path);
      const auto doc = nlohmann::json::parse(std::ifstream(config_path));
      const auto& flat = doc.contains("config") ? doc["config"] : doc;
      if (!output_dir.empty()) {
        cfg.output_dir = output_dir;
      } else if (!flat.contains("output_dir")) {
        cfg.output_dir = default_output_dir();
      } else if (cfg.output_dir.is_relative()) {
        cfg.output_dir = fs::path(config_path).parent_path() / cfg.output_dir;
      }
      if (o_k) cfg.k = *o_k;
      if (o_states) cfg.n_states = *o_states;
      if (o_train_len) cfg.train_len = *o_train_len;
      if (o_seed) cfg.master_seed = *o_seed;
      if (o_window) cfg.window = *o_window;
      if (o_jobs) cfg.jobs = *o_jobs;
      cfg.bow_binary |= o_binary;
      cfg.normalize_l2 |= o_l2;
      cfg.posterior_predict |= o_posterior;
      cfg.score_all_steps |= o_all_steps;
      const auto result = ap::run_pipeline(cfg);
      std::cout << result.manifest.string() << "\n";
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return 0;
}
