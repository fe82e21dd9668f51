#include "alertpred/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "alertpred/error.hpp"
#include "alertpred/rng.hpp"
#include "json_io.hpp"

namespace alertpred {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

void check_symbols(const Hmm& hmm, std::span<const Symbol> obs) {
  for (std::size_t t = 0; t < obs.size(); ++t) {
    if (obs[t] >= hmm.n_symbols()) {
      throw Error("observation " + std::to_string(obs[t]) + " at position " + std::to_string(t) +
                  " is outside the model's " + std::to_string(hmm.n_symbols()) + " symbols");
    }
  }
}

void normalize(std::span<double> v) {
  const double sum = std::accumulate(v.begin(), v.end(), 0.0);
  for (double& x : v) x /= sum;
}

void floor_and_normalize(std::span<double> v, double floor) {
  for (double& x : v) x = std::max(x, floor);
  normalize(v);
}

void check_distribution(std::span<const double> v, double tolerance, const std::string& what) {
  double sum = 0.0;
  for (double x : v) {
    if (!std::isfinite(x) || x < 0.0 || x > 1.0) throw Error(what + " has an entry outside [0, 1]");
    sum += x;
  }
  if (std::abs(sum - 1.0) > tolerance) {
    throw Error(what + " sums to " + std::to_string(sum) + ", not 1");
  }
}

std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

// Scaled forward-backward buffers (Rabiner's normalization: every alpha row
// sums to one, scale[t] is the normalizer removed at step t).
struct ForwardBackward {
  Matrix alpha;
  Matrix beta;
  std::vector<double> scale;
  double log_likelihood = 0.0;
};

void forward_pass(const Hmm& hmm, std::span<const Symbol> obs, ForwardBackward& fb) {
  const std::size_t n = hmm.n_states();
  const std::size_t len = obs.size();
  fb.alpha = Matrix(len, n);
  fb.scale.assign(len, 0.0);
  fb.log_likelihood = 0.0;
  for (std::size_t t = 0; t < len; ++t) {
    auto row = fb.alpha.row(t);
    for (std::size_t j = 0; j < n; ++j) {
      double prior = 0.0;
      if (t == 0) {
        prior = hmm.init[j];
      } else {
        const auto prev = fb.alpha.row(t - 1);
        for (std::size_t i = 0; i < n; ++i) prior += prev[i] * hmm.trans(i, j);
      }
      row[j] = prior * hmm.emit(j, obs[t]);
    }
    const double c = std::accumulate(row.begin(), row.end(), 0.0);
    fb.scale[t] = c;
    if (c <= 0.0) {
      fb.log_likelihood = kNegInf;
      return;
    }
    for (double& x : row) x /= c;
    fb.log_likelihood += std::log(c);
  }
}

void backward_pass(const Hmm& hmm, std::span<const Symbol> obs, ForwardBackward& fb) {
  const std::size_t n = hmm.n_states();
  const std::size_t len = obs.size();
  fb.beta = Matrix(len, n, 1.0);
  for (std::size_t t = len - 1; t-- > 0;) {
    const auto next = fb.beta.row(t + 1);
    auto row = fb.beta.row(t);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += hmm.trans(i, j) * hmm.emit(j, obs[t + 1]) * next[j];
      row[i] = s / fb.scale[t + 1];
    }
  }
}

}  // namespace

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  const std::size_t cols = rows.empty() ? 0 : rows.front().size();
  Matrix m(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) throw Error("matrix rows have inconsistent lengths");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

std::vector<std::vector<double>> Matrix::to_rows() const {
  std::vector<std::vector<double>> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r].assign(row(r).begin(), row(r).end());
  return out;
}

void Hmm::validate(double tolerance) const {
  const std::size_t n = n_states();
  if (n == 0) throw Error("HMM needs at least one state");
  if (trans.rows() != n || trans.cols() != n) throw Error("transition matrix must be N x N");
  if (emit.rows() != n) throw Error("emission matrix must have N rows");
  if (emit.cols() == 0) throw Error("HMM needs at least one symbol");
  check_distribution(init, tolerance, "initial distribution");
  for (std::size_t i = 0; i < n; ++i) {
    check_distribution(trans.row(i), tolerance, "transition row " + std::to_string(i));
    check_distribution(emit.row(i), tolerance, "emission row " + std::to_string(i));
  }
}

Hmm init_random(std::size_t n_states, std::size_t n_symbols, std::uint64_t seed) {
  if (n_states == 0 || n_symbols == 0) throw Error("HMM dimensions must be at least 1");
  Rng rng(seed);
  Hmm hmm{Matrix(n_states, n_states), Matrix(n_states, n_symbols),
          std::vector<double>(n_states)};
  const auto fill = [&](std::span<double> v) {
    for (double& x : v) x = rng.uniform_open_low();
    normalize(v);
  };
  fill(hmm.init);
  for (std::size_t i = 0; i < n_states; ++i) fill(hmm.trans.row(i));
  for (std::size_t i = 0; i < n_states; ++i) fill(hmm.emit.row(i));
  return hmm;
}

double log_likelihood(const Hmm& hmm, std::span<const Symbol> obs) {
  if (obs.empty()) throw Error("log-likelihood of an empty sequence is undefined");
  check_symbols(hmm, obs);
  ForwardBackward fb;
  forward_pass(hmm, obs, fb);
  return fb.log_likelihood;
}

BaumWelchResult baum_welch(const Hmm& initial, std::span<const Symbol> obs,
                           const BaumWelchOptions& options) {
  initial.validate();
  if (obs.size() < 2) throw Error("Baum-Welch needs a sequence of length >= 2");
  if (!(options.tol > 0.0)) throw Error("tolerance must be positive");
  check_symbols(initial, obs);

  const std::size_t n = initial.n_states();
  const std::size_t m = initial.n_symbols();
  const std::size_t len = obs.size();

  BaumWelchResult result{initial, {}, 0, false};
  ForwardBackward fb;
  Matrix xi_sum(n, n);
  Matrix emit_sum(n, m);
  std::vector<double> gamma_sum(n);       // over t < len - 1
  std::vector<double> gamma_total(n);     // over all t

  for (;;) {
    const Hmm& model = result.model;
    forward_pass(model, obs, fb);
    const double ll = fb.log_likelihood;
    result.trace.push_back(ll);
    if (result.trace.size() >= 2 && ll - result.trace[result.trace.size() - 2] < options.tol) {
      result.converged = true;
      break;
    }
    if (result.iterations >= options.max_iter || !std::isfinite(ll)) break;

    backward_pass(model, obs, fb);
    std::fill(gamma_sum.begin(), gamma_sum.end(), 0.0);
    std::fill(gamma_total.begin(), gamma_total.end(), 0.0);
    xi_sum = Matrix(n, n);
    emit_sum = Matrix(n, m);

    for (std::size_t t = 0; t < len; ++t) {
      const auto a = fb.alpha.row(t);
      const auto b = fb.beta.row(t);
      for (std::size_t i = 0; i < n; ++i) {
        const double g = a[i] * b[i];
        gamma_total[i] += g;
        emit_sum(i, obs[t]) += g;
        if (t + 1 < len) gamma_sum[i] += g;
      }
      if (t + 1 == len) continue;
      const auto next_beta = fb.beta.row(t + 1);
      const double inv_scale = 1.0 / fb.scale[t + 1];
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          xi_sum(i, j) += a[i] * model.trans(i, j) * model.emit(j, obs[t + 1]) * next_beta[j] * inv_scale;
        }
      }
    }

    Hmm next = model;
    const auto a0 = fb.alpha.row(0);
    const auto b0 = fb.beta.row(0);
    for (std::size_t i = 0; i < n; ++i) next.init[i] = a0[i] * b0[i];
    floor_and_normalize(next.init, options.floor);
    for (std::size_t i = 0; i < n; ++i) {
      if (gamma_sum[i] > 0.0) {
        for (std::size_t j = 0; j < n; ++j) next.trans(i, j) = xi_sum(i, j) / gamma_sum[i];
      }
      floor_and_normalize(next.trans.row(i), options.floor);
      if (gamma_total[i] > 0.0) {
        for (std::size_t k = 0; k < m; ++k) next.emit(i, k) = emit_sum(i, k) / gamma_total[i];
      }
      floor_and_normalize(next.emit.row(i), options.floor);
    }
    result.model = std::move(next);
    ++result.iterations;
  }
  return result;
}

BaumWelchResult train_hmm(std::span<const Symbol> obs, std::size_t n_states, std::size_t n_symbols,
                          std::uint64_t seed, const BaumWelchOptions& options) {
  return baum_welch(init_random(n_states, n_symbols, seed), obs, options);
}

PredictionDistribution PredictionDistribution::from_probs(std::vector<double> probs) {
  PredictionDistribution d;
  d.ranked.resize(probs.size());
  std::iota(d.ranked.begin(), d.ranked.end(), Symbol{0});
  std::stable_sort(d.ranked.begin(), d.ranked.end(),
                   [&](Symbol a, Symbol b) { return probs[a] > probs[b]; });
  d.probs = std::move(probs);
  return d;
}

bool PredictionDistribution::in_top(Symbol symbol, std::size_t level) const {
  const auto end = ranked.begin() + static_cast<std::ptrdiff_t>(std::min(level, ranked.size()));
  return std::find(ranked.begin(), end, symbol) != end;
}

PredictionDistribution next_symbol_from_state(const Hmm& hmm, std::size_t state) {
  const std::size_t m = hmm.n_symbols();
  std::vector<double> probs(m, 0.0);
  for (std::size_t r = 0; r < hmm.n_states(); ++r) {
    const double a = hmm.trans(state, r);
    for (std::size_t i = 0; i < m; ++i) probs[i] += a * hmm.emit(r, i);
  }
  return PredictionDistribution::from_probs(std::move(probs));
}

PredictionDistribution next_symbol_from_posterior(const Hmm& hmm, std::span<const double> posterior) {
  const std::size_t m = hmm.n_symbols();
  std::vector<double> probs(m, 0.0);
  for (std::size_t j = 0; j < hmm.n_states(); ++j) {
    if (posterior[j] == 0.0) continue;
    const auto row = next_symbol_from_state(hmm, j);
    for (std::size_t i = 0; i < m; ++i) probs[i] += posterior[j] * row.probs[i];
  }
  return PredictionDistribution::from_probs(std::move(probs));
}

struct Predictor::Tables {
  Hmm hmm;
  Matrix log_trans;
  Matrix log_emit;
  std::vector<double> log_init;
  std::vector<PredictionDistribution> next_by_state;
};

Predictor::Predictor(const Hmm& hmm, PredictMode mode) : mode_(mode) {
  hmm.validate();
  auto t = std::make_shared<Tables>();
  t->hmm = hmm;
  const std::size_t n = hmm.n_states();
  const std::size_t m = hmm.n_symbols();
  t->log_trans = Matrix(n, n);
  t->log_emit = Matrix(n, m);
  t->log_init.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    t->log_init[i] = safe_log(hmm.init[i]);
    for (std::size_t j = 0; j < n; ++j) t->log_trans(i, j) = safe_log(hmm.trans(i, j));
    for (std::size_t k = 0; k < m; ++k) t->log_emit(i, k) = safe_log(hmm.emit(i, k));
    t->next_by_state.push_back(next_symbol_from_state(hmm, i));
  }
  tables_ = std::move(t);
}

void Predictor::advance(std::vector<double>& state, Symbol symbol, bool first,
                        std::vector<std::uint32_t>* backptr) const {
  const auto& t = *tables_;
  const std::size_t n = t.hmm.n_states();
  if (symbol >= t.hmm.n_symbols()) {
    throw Error("observation " + std::to_string(symbol) + " is outside the model's " +
                std::to_string(t.hmm.n_symbols()) + " symbols");
  }

  if (mode_ == PredictMode::viterbi) {
    if (first) {
      state.resize(n);
      for (std::size_t j = 0; j < n; ++j) state[j] = t.log_init[j] + t.log_emit(j, symbol);
      if (backptr) backptr->assign(n, 0);
      return;
    }
    std::vector<double> next(n);
    if (backptr) backptr->resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      std::size_t best = 0;
      double best_score = state[0] + t.log_trans(0, j);
      for (std::size_t i = 1; i < n; ++i) {
        const double s = state[i] + t.log_trans(i, j);
        if (s > best_score) {
          best_score = s;
          best = i;
        }
      }
      next[j] = best_score + t.log_emit(j, symbol);
      if (backptr) (*backptr)[j] = static_cast<std::uint32_t>(best);
    }
    state = std::move(next);
    return;
  }

  // Filtered posterior P(q_t | o_1..o_t).
  std::vector<double> prior(n, 0.0);
  if (first) {
    prior = t.hmm.init;
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) prior[j] += state[i] * t.hmm.trans(i, j);
    }
  }
  std::vector<double> next(n);
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    next[j] = prior[j] * t.hmm.emit(j, symbol);
    sum += next[j];
  }
  if (sum > 0.0) {
    for (double& x : next) x /= sum;
    state = std::move(next);
  } else {
    // Impossible symbol under the model: keep the predicted prior.
    const double psum = std::accumulate(prior.begin(), prior.end(), 0.0);
    for (double& x : prior) x = psum > 0.0 ? x / psum : 1.0 / static_cast<double>(n);
    state = std::move(prior);
  }
}

void Predictor::observe(Symbol symbol) {
  advance(state_, symbol, observed_ == 0, nullptr);
  ++observed_;
}

std::size_t Predictor::best_state() const {
  if (observed_ == 0) throw Error("no observations yet");
  return argmax_lowest(state_);
}

PredictionDistribution Predictor::predict_from(const std::vector<double>& state) const {
  if (mode_ == PredictMode::viterbi) return tables_->next_by_state[argmax_lowest(state)];
  return next_symbol_from_posterior(tables_->hmm, state);
}

PredictionDistribution Predictor::next() const {
  if (observed_ == 0) throw Error("prediction needs a non-empty observation sequence");
  return predict_from(state_);
}

std::vector<PredictionDistribution> Predictor::forecast(std::size_t horizon) const {
  if (horizon == 0) throw Error("prediction horizon must be at least 1");
  if (observed_ == 0) throw Error("prediction needs a non-empty observation sequence");
  std::vector<PredictionDistribution> out;
  out.reserve(horizon);
  std::vector<double> working = state_;
  for (std::size_t step = 0; step < horizon; ++step) {
    out.push_back(predict_from(working));
    if (step + 1 < horizon) advance(working, out.back().ranked.front(), false, nullptr);
  }
  return out;
}

std::vector<std::size_t> viterbi(const Hmm& hmm, std::span<const Symbol> obs) {
  if (obs.empty()) throw Error("Viterbi decoding needs a non-empty sequence");
  check_symbols(hmm, obs);
  Predictor p(hmm, PredictMode::viterbi);
  const std::size_t n = hmm.n_states();
  std::vector<std::uint32_t> backptr;
  std::vector<std::uint32_t> all(obs.size() * n);
  std::vector<double> delta;
  for (std::size_t t = 0; t < obs.size(); ++t) {
    p.advance(delta, obs[t], t == 0, &backptr);
    std::copy(backptr.begin(), backptr.end(), all.begin() + static_cast<std::ptrdiff_t>(t * n));
  }
  std::vector<std::size_t> path(obs.size());
  path.back() = argmax_lowest(delta);
  for (std::size_t t = obs.size() - 1; t > 0; --t) path[t - 1] = all[t * n + path[t]];
  return path;
}

PredictionDistribution predict_next(const Hmm& hmm, std::span<const Symbol> obs, PredictMode mode) {
  return predict_multi(hmm, obs, 1, mode).front();
}

std::vector<PredictionDistribution> predict_multi(const Hmm& hmm, std::span<const Symbol> obs,
                                                  std::size_t horizon, PredictMode mode) {
  if (obs.empty()) throw Error("prediction needs a non-empty observation sequence");
  if (horizon == 0) throw Error("prediction horizon must be at least 1");
  Predictor p(hmm, mode);
  for (Symbol s : obs) p.observe(s);
  return p.forecast(horizon);
}

nlohmann::json to_json(const Hmm& hmm) {
  return {{"n_states", hmm.n_states()},
          {"n_symbols", hmm.n_symbols()},
          {"init", hmm.init},
          {"trans", hmm.trans.to_rows()},
          {"emit", hmm.emit.to_rows()}};
}

Hmm hmm_from_json(const nlohmann::json& j) {
  Hmm hmm;
  try {
    hmm.init = j.at("init").get<std::vector<double>>();
    hmm.trans = Matrix::from_rows(j.at("trans").get<std::vector<std::vector<double>>>());
    hmm.emit = Matrix::from_rows(j.at("emit").get<std::vector<std::vector<double>>>());
    if (j.at("n_states").get<std::size_t>() != hmm.n_states() ||
        j.at("n_symbols").get<std::size_t>() != hmm.n_symbols()) {
      throw Error("HMM header disagrees with its matrices");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad HMM document: ") + e.what());
  }
  hmm.validate();
  return hmm;
}

void save_hmm(const std::filesystem::path& path, const Hmm& hmm, const nlohmann::json& metadata) {
  auto j = to_json(hmm);
  j["metadata"] = metadata;
  detail::write_json_file(path, j);
}

Hmm load_hmm(const std::filesystem::path& path) { return hmm_from_json(detail::read_json_file(path)); }

}  // namespace alertpred
