#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "alertpred/sequence.hpp"

namespace alertpred {

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  // Throws Error when rows are ragged.
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::vector<std::vector<double>> to_rows() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Discrete-observation HMM: trans (N x N), emit (N x M), init (N).
struct Hmm {
  Matrix trans;
  Matrix emit;
  std::vector<double> init;

  std::size_t n_states() const noexcept { return init.size(); }
  std::size_t n_symbols() const noexcept { return emit.cols(); }

  // Throws Error unless shapes agree, entries are in [0,1] and every
  // distribution sums to 1 within tolerance.
  void validate(double tolerance = 1e-9) const;

  bool operator==(const Hmm&) const = default;
};

// Uniform draws, row-normalized. Every entry is strictly positive.
Hmm init_random(std::size_t n_states, std::size_t n_symbols, std::uint64_t seed);

// Natural-log likelihood via the scaled forward recursion.
double log_likelihood(const Hmm& hmm, std::span<const Symbol> obs);

struct BaumWelchOptions {
  std::size_t max_iter = 500;
  double tol = 1e-6;
  // Applied to every parameter after each re-estimation, then renormalized.
  double floor = 1e-12;
};

struct BaumWelchResult {
  Hmm model;
  // Log-likelihood of every model visited, starting with the initial one.
  // The last entry is the likelihood of the returned model.
  std::vector<double> trace;
  std::size_t iterations = 0;
  bool converged = false;
};

BaumWelchResult baum_welch(const Hmm& initial, std::span<const Symbol> obs,
                           const BaumWelchOptions& options = {});

// Most probable state path, computed in log space. Ties go to the lower
// state id.
std::vector<std::size_t> viterbi(const Hmm& hmm, std::span<const Symbol> obs);

struct PredictionDistribution {
  std::vector<double> probs;
  // Symbols by descending probability, ties to the lower id.
  std::vector<Symbol> ranked;

  static PredictionDistribution from_probs(std::vector<double> probs);
  // True when the symbol is among the first `level` ranked entries.
  bool in_top(Symbol symbol, std::size_t level) const;

  bool operator==(const PredictionDistribution&) const = default;
};

enum class PredictMode {
  viterbi,    // condition on the last state of the Viterbi path
  posterior,  // condition on the filtered state posterior
};

// probs[i] = sum_r trans[state][r] * emit[r][i]
PredictionDistribution next_symbol_from_state(const Hmm& hmm, std::size_t state);
// probs[i] = sum_j posterior[j] * sum_r trans[j][r] * emit[r][i]
PredictionDistribution next_symbol_from_posterior(const Hmm& hmm, std::span<const double> posterior);

// Streaming next-symbol predictor. Feeding symbols one at a time keeps the
// Viterbi delta (or forward posterior) current, so predictions after every
// prefix cost O(N^2) instead of a full decode.
class Predictor {
 public:
  explicit Predictor(const Hmm& hmm, PredictMode mode = PredictMode::viterbi);

  void observe(Symbol symbol);
  std::size_t observed() const noexcept { return observed_; }

  // Requires at least one observed symbol.
  PredictionDistribution next() const;
  // Step s > 1 extends a private copy of the state with the rank-1 symbol
  // of step s - 1.
  std::vector<PredictionDistribution> forecast(std::size_t horizon) const;

  // Argmax of the current Viterbi delta; the final Viterbi state.
  std::size_t best_state() const;

 private:
  struct Tables;
  void advance(std::vector<double>& state, Symbol symbol, bool first,
               std::vector<std::uint32_t>* backptr) const;
  PredictionDistribution predict_from(const std::vector<double>& state) const;

  std::shared_ptr<const Tables> tables_;
  PredictMode mode_;
  std::vector<double> state_;
  std::size_t observed_ = 0;

  friend std::vector<std::size_t> viterbi(const Hmm&, std::span<const Symbol>);
};

PredictionDistribution predict_next(const Hmm& hmm, std::span<const Symbol> obs,
                                    PredictMode mode = PredictMode::viterbi);
std::vector<PredictionDistribution> predict_multi(const Hmm& hmm, std::span<const Symbol> obs,
                                                  std::size_t horizon,
                                                  PredictMode mode = PredictMode::viterbi);

// init_random followed by baum_welch.
BaumWelchResult train_hmm(std::span<const Symbol> obs, std::size_t n_states, std::size_t n_symbols,
                          std::uint64_t seed, const BaumWelchOptions& options = {});

nlohmann::json to_json(const Hmm& hmm);
Hmm hmm_from_json(const nlohmann::json& j);
// `metadata` is stored next to the parameters (seed, training trace, ...).
void save_hmm(const std::filesystem::path& path, const Hmm& hmm,
              const nlohmann::json& metadata = nlohmann::json::object());
Hmm load_hmm(const std::filesystem::path& path);

}  // namespace alertpred
