#include "alertpred/eval.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <cstdio>
#include <functional>
#include <future>
#include <sstream>

#include "alertpred/error.hpp"
#include "alertpred/rng.hpp"

namespace alertpred {
namespace {

void require_increasing(std::span<const std::size_t> values, std::size_t minimum,
                        const std::string& what) {
  if (values.empty()) throw Error(what + ": no values given");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] < minimum) {
      throw Error(what + ": value " + std::to_string(values[i]) + " is below " + std::to_string(minimum));
    }
    if (i > 0 && values[i] <= values[i - 1]) throw Error(what + ": values must be strictly increasing");
  }
}

// Evaluates rows independently, `jobs` at a time, and returns them in input
// order.
std::vector<SweepRow> run_rows(std::span<const std::size_t> values, std::size_t jobs,
                               const std::function<LevelAccuracy(std::size_t)>& row) {
  std::vector<SweepRow> rows(values.size());
  if (jobs <= 1) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      rows[i] = {static_cast<std::int64_t>(values[i]), row(values[i])};
    }
    return rows;
  }
  for (std::size_t start = 0; start < values.size(); start += jobs) {
    const std::size_t stop = std::min(values.size(), start + jobs);
    std::vector<std::future<LevelAccuracy>> pending;
    for (std::size_t i = start; i < stop; ++i) {
      pending.push_back(std::async(std::launch::async, row, values[i]));
    }
    for (std::size_t i = start; i < stop; ++i) {
      rows[i] = {static_cast<std::int64_t>(values[i]), pending[i - start].get()};
    }
  }
  return rows;
}

nlohmann::json eval_metadata(const EvalOptions& eval) {
  nlohmann::json j = {{"predict_mode", eval.mode == PredictMode::viterbi ? "viterbi" : "posterior"},
                      {"score_all_steps", eval.score_all_steps}};
  j["window"] = eval.window ? nlohmann::json(*eval.window) : nlohmann::json();
  return j;
}

nlohmann::json settings_metadata(const SweepSettings& s) {
  auto j = eval_metadata(s.eval);
  j["horizon"] = s.eval.horizon;
  j["seed"] = s.seed;
  j["tol"] = s.baum_welch.tol;
  j["max_iter"] = s.baum_welch.max_iter;
  return j;
}

}  // namespace

SequenceSplit split_sequence(std::span<const Symbol> obs, std::size_t train_len) {
  if (train_len < 1 || train_len >= obs.size()) {
    throw Error("training length " + std::to_string(train_len) + " must be in [1, " +
                std::to_string(obs.size()) + ")");
  }
  return {std::vector<Symbol>(obs.begin(), obs.begin() + static_cast<std::ptrdiff_t>(train_len)),
          std::vector<Symbol>(obs.begin() + static_cast<std::ptrdiff_t>(train_len), obs.end())};
}

LevelAccuracy evaluate(const Hmm& hmm, std::span<const Symbol> test, std::span<const Symbol> context,
                       const EvalOptions& options) {
  const std::size_t horizon = options.horizon;
  if (horizon == 0) throw Error("horizon must be at least 1");
  if (test.size() <= horizon) {
    throw Error("test length " + std::to_string(test.size()) + " must exceed the horizon " +
                std::to_string(horizon));
  }
  if (options.window && *options.window == 0) throw Error("window must be at least 1");

  const std::size_t anchors = test.size() - horizon;
  std::size_t hits[3] = {0, 0, 0};
  std::size_t scored = 0;

  const auto score = [&](const std::vector<PredictionDistribution>& forecast, std::size_t t) {
    const std::size_t first = options.score_all_steps ? 1 : horizon;
    for (std::size_t step = first; step <= horizon; ++step) {
      const auto& dist = forecast[step - 1];
      const Symbol truth = test[t + step];
      for (std::size_t level = 1; level <= 3; ++level) {
        if (dist.in_top(truth, level)) ++hits[level - 1];
      }
      ++scored;
    }
  };

  if (!options.window) {
    Predictor predictor(hmm, options.mode);
    for (Symbol s : context) predictor.observe(s);
    for (std::size_t t = 0; t < anchors; ++t) {
      predictor.observe(test[t]);
      score(predictor.forecast(horizon), t);
    }
  } else {
    std::vector<Symbol> seen(context.begin(), context.end());
    seen.insert(seen.end(), test.begin(), test.end());
    const std::size_t window = *options.window;
    for (std::size_t t = 0; t < anchors; ++t) {
      const std::size_t end = context.size() + t + 1;
      const std::size_t begin = end > window ? end - window : 0;
      Predictor predictor(hmm, options.mode);
      for (std::size_t i = begin; i < end; ++i) predictor.observe(seen[i]);
      score(predictor.forecast(horizon), t);
    }
  }

  LevelAccuracy acc;
  acc.n_predictions = scored;
  const double denom = static_cast<double>(scored);
  acc.level1 = static_cast<double>(hits[0]) / denom;
  acc.level2 = static_cast<double>(hits[1]) / denom;
  acc.level3 = static_cast<double>(hits[2]) / denom;
  return acc;
}

double modal_baseline(std::span<const Symbol> test, std::size_t offset) {
  if (offset >= test.size()) throw Error("baseline offset past the end of the sequence");
  std::vector<std::size_t> counts;
  for (std::size_t i = offset; i < test.size(); ++i) {
    if (test[i] >= counts.size()) counts.resize(test[i] + 1, 0);
    ++counts[test[i]];
  }
  const auto best = *std::max_element(counts.begin(), counts.end());
  return static_cast<double>(best) / static_cast<double>(test.size() - offset);
}

nlohmann::json to_json(const SweepReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"value", r.value},
                    {"level1", r.accuracy.level1},
                    {"level2", r.accuracy.level2},
                    {"level3", r.accuracy.level3},
                    {"n", r.accuracy.n_predictions}});
  }
  return {{"parameter", report.parameter}, {"rows", rows}, {"metadata", report.metadata}};
}

std::string to_csv(const SweepReport& report) {
  std::ostringstream out;
  out << "param,value,level1,level2,level3,n\n";
  char buf[160];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%lld,%.6f,%.6f,%.6f,%zu", static_cast<long long>(r.value),
                  r.accuracy.level1, r.accuracy.level2, r.accuracy.level3, r.accuracy.n_predictions);
    out << report.parameter << ',' << buf << '\n';
  }
  return out.str();
}

LevelAccuracy train_and_evaluate(const SymbolSequence& obs, std::size_t n_states,
                                 std::size_t train_len, std::uint64_t seed,
                                 const BaumWelchOptions& bw, const EvalOptions& eval) {
  const auto split = split_sequence(obs.view(), train_len);
  // Nothing left to score; report an empty row rather than failing the sweep.
  if (split.test.size() <= eval.horizon) return {};
  const auto trained = train_hmm(split.train, n_states, obs.n_symbols, seed, bw);
  return evaluate(trained.model, split.test, split.train, eval);
}

SweepReport sweep_states(const SymbolSequence& obs, std::span<const std::size_t> state_values,
                         const SweepSettings& settings) {
  require_increasing(state_values, 1, "states sweep");
  SweepReport report{"states", {}, settings_metadata(settings)};
  report.metadata["train_len"] = settings.train_len;
  report.metadata["n_symbols"] = obs.n_symbols;
  report.rows = run_rows(state_values, settings.jobs, [&](std::size_t n) {
    return train_and_evaluate(obs, n, settings.train_len, settings.seed, settings.baum_welch,
                              settings.eval);
  });
  return report;
}

SweepReport sweep_training_length(const SymbolSequence& obs, std::span<const std::size_t> lengths,
                                  const SweepSettings& settings) {
  require_increasing(lengths, 1, "training-length sweep");
  SweepReport report{"train-len", {}, settings_metadata(settings)};
  report.metadata["n_states"] = settings.n_states;
  report.metadata["n_symbols"] = obs.n_symbols;
  report.rows = run_rows(lengths, settings.jobs, [&](std::size_t len) {
    return train_and_evaluate(obs, settings.n_states, len, settings.seed, settings.baum_welch,
                              settings.eval);
  });
  return report;
}

SweepReport sweep_clusters(const ClusterSweepInput& input, std::span<const std::size_t> k_values,
                           const SweepSettings& settings) {
  require_increasing(k_values, 1, "cluster sweep");
  SweepReport report{"clusters", {}, settings_metadata(settings)};
  report.metadata["n_states"] = settings.n_states;
  report.metadata["train_len"] = settings.train_len;

  const auto n_categories = categories_to_sequence(input.sequence_log).first.size();
  report.metadata["n_categories"] = n_categories;
  nlohmann::json merged = nlohmann::json::array();
  for (auto k : k_values) {
    if (k < n_categories) merged.push_back(k);
  }
  // With fewer clusters than categories some cluster must hold alerts of
  // more than one category.
  report.metadata["k_below_category_count"] = merged;

  const std::uint64_t kmeans_seed = derive_seed(settings.seed, "kmeans");
  const std::uint64_t hmm_seed = derive_seed(settings.seed, "hmm-init");
  report.rows = run_rows(k_values, settings.jobs, [&](std::size_t k) {
    const auto fit = fit_alert_clusters(input.fit_log, input.vocab,
                                        {k, kmeans_seed, input.kmeans_max_iter}, input.featurization);
    const auto seq = alerts_to_sequence(input.sequence_log, input.vocab, fit.model);
    return train_and_evaluate(seq, settings.n_states, settings.train_len, hmm_seed,
                              settings.baum_welch, settings.eval);
  });
  return report;
}

SweepReport sweep_horizon(const Hmm& hmm, std::span<const Symbol> test,
                          std::span<const Symbol> context, std::span<const std::size_t> horizons,
                          const EvalOptions& options) {
  require_increasing(horizons, 1, "horizon sweep");
  SweepReport report{"horizon", {}, eval_metadata(options)};
  report.metadata["n_states"] = hmm.n_states();
  report.metadata["n_symbols"] = hmm.n_symbols();
  report.rows = run_rows(horizons, 1, [&](std::size_t h) {
    EvalOptions opts = options;
    opts.horizon = h;
    return evaluate(hmm, test, context, opts);
  });
  return report;
}

CategoryCodec::CategoryCodec(std::vector<std::string> categories)
    : categories_(std::move(categories)) {
  for (std::size_t i = 0; i < categories_.size(); ++i) {
    if (!index_.emplace(categories_[i], static_cast<Symbol>(i)).second) {
      throw Error("duplicate category '" + categories_[i] + "'");
    }
  }
}

std::optional<Symbol> CategoryCodec::encode(std::string_view category) const {
  auto it = index_.find(std::string(category));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& CategoryCodec::decode(Symbol id) const {
  if (id >= categories_.size()) throw Error("category id " + std::to_string(id) + " out of range");
  return categories_[id];
}

nlohmann::json to_json(const CategoryCodec& codec) { return {{"categories", codec.categories()}}; }

std::pair<CategoryCodec, SymbolSequence> categories_to_sequence(const AlertLog& log) {
  if (log.empty()) throw Error("cannot build a category sequence from an empty alert log");
  std::vector<std::string> order;
  std::unordered_map<std::string, Symbol> ids;
  SymbolSequence seq;
  seq.symbols.reserve(log.size());
  for (const auto& alert : log) {
    auto [it, inserted] = ids.emplace(alert.category, static_cast<Symbol>(order.size()));
    if (inserted) order.push_back(alert.category);
    seq.symbols.push_back(it->second);
  }
  seq.n_symbols = order.size();
  return {CategoryCodec(std::move(order)), std::move(seq)};
}

SymbolSequence sample_hmm(const Hmm& hmm, std::size_t length, std::uint64_t seed) {
  if (length == 0) throw Error("sample length must be at least 1");
  hmm.validate();
  Rng rng(seed);
  SymbolSequence seq;
  seq.n_symbols = hmm.n_symbols();
  seq.symbols.reserve(length);
  std::size_t state = rng.categorical(hmm.init);
  for (std::size_t t = 0; t < length; ++t) {
    if (t > 0) state = rng.categorical(hmm.trans.row(state));
    seq.symbols.push_back(static_cast<Symbol>(rng.categorical(hmm.emit.row(state))));
  }
  return seq;
}

Hmm make_peaked_hmm(std::size_t n_states, std::size_t n_symbols, double peak, std::uint64_t seed) {
  if (n_states == 0 || n_symbols == 0) throw Error("HMM dimensions must be at least 1");
  if (!(peak > 0.0 && peak <= 1.0)) throw Error("peak must be in (0, 1]");
  Rng rng(seed);
  const auto shuffled = [&](std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
      const auto j = std::min(i - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(i)));
      std::swap(v[i - 1], v[j]);
    }
    return v;
  };
  // Peak on `hot`, remaining mass spread at random over the other entries.
  const auto fill = [&](std::span<double> row, std::size_t hot) {
    if (row.size() == 1) {
      row[0] = 1.0;
      return;
    }
    double rest = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) {
      row[i] = i == hot ? 0.0 : rng.uniform_open_low();
      rest += row[i];
    }
    for (std::size_t i = 0; i < row.size(); ++i) {
      row[i] = i == hot ? peak : (1.0 - peak) * row[i] / rest;
    }
  };

  Hmm hmm{Matrix(n_states, n_states), Matrix(n_states, n_symbols),
          std::vector<double>(n_states, 1.0 / static_cast<double>(n_states))};
  const auto order = shuffled(n_states);
  std::vector<std::size_t> successor(n_states);
  for (std::size_t i = 0; i < n_states; ++i) successor[order[i]] = order[(i + 1) % n_states];
  const auto symbols = shuffled(n_symbols);
  for (std::size_t i = 0; i < n_states; ++i) {
    fill(hmm.trans.row(i), successor[i]);
    fill(hmm.emit.row(i), symbols[i % n_symbols]);
  }
  return hmm;
}

AlertLog synthesize_alert_log(const Hmm& planted, std::size_t length, std::size_t port_variants,
                              std::uint64_t seed) {
  static const std::array<const char*, 10> kCategories = {
      "attempted-recon",   "attempted-admin",  "attempted-user",   "trojan-activity",
      "web-application-attack", "misc-activity", "bad-unknown", "policy-violation",
      "denial-of-service", "unknown"};
  const auto seq = sample_hmm(planted, length, derive_seed(seed, "symbols"));
  Rng rng(derive_seed(seed, "ports"));
  const Timestamp start = std::chrono::sys_days{std::chrono::year{2000} / 1 / 1};

  std::vector<Alert> alerts;
  alerts.reserve(length);
  for (std::size_t i = 0; i < length; ++i) {
    const auto t = seq.symbols[i];
    const auto lo = static_cast<std::uint8_t>(t % 250);
    Alert a;
    a.timestamp = start + std::chrono::seconds{static_cast<long long>(i)};
    a.src_ip.octets = {172, 16, static_cast<std::uint8_t>(100 + t % 150), static_cast<std::uint8_t>(lo + 1)};
    a.dst_ip.octets = {192, 168, static_cast<std::uint8_t>(t / 250), static_cast<std::uint8_t>(lo + 2)};
    if (port_variants > 0) {
      const auto variant = static_cast<std::size_t>(rng.uniform() * static_cast<double>(port_variants));
      a.src_port = static_cast<std::uint16_t>(20000 + std::min(variant, port_variants - 1));
    }
    a.dst_port = static_cast<std::uint16_t>(1000 + t);
    a.signature = std::to_string(5000 + t);
    a.category = kCategories[t % kCategories.size()];
    alerts.push_back(std::move(a));
  }
  return AlertLog(std::move(alerts));
}

}  // namespace alertpred
