#include <doctest.h>

#include <limits>

#include <cmath>
#include <numeric>

#include "alertpred/error.hpp"
#include "alertpred/eval.hpp"
#include "alertpred/hmm.hpp"
#include "alertpred/rng.hpp"
#include "oracles.hpp"

using namespace alertpred;

namespace {

// pi = (0.6, 0.4), A = [[0.7, 0.3], [0.4, 0.6]], B = [[0.9, 0.1], [0.2, 0.8]]
Hmm two_state() {
  return {Matrix::from_rows({{0.7, 0.3}, {0.4, 0.6}}), Matrix::from_rows({{0.9, 0.1}, {0.2, 0.8}}),
          {0.6, 0.4}};
}

Hmm single_state(std::vector<double> emit_row) {
  return {Matrix::from_rows({{1.0}}), Matrix::from_rows({emit_row}), {1.0}};
}

double row_sum(std::span<const double> r) { return std::accumulate(r.begin(), r.end(), 0.0); }

}  // namespace

TEST_CASE("init_random") {
  const auto single = init_random(1, 1, 42);
  CHECK(single.trans(0, 0) == 1.0);
  CHECK(single.emit(0, 0) == 1.0);
  CHECK(single.init[0] == 1.0);

  CHECK(init_random(4, 6, 3) == init_random(4, 6, 3));
  CHECK_FALSE(init_random(4, 6, 3) == init_random(4, 6, 4));

  const auto h = init_random(3, 5, 7);
  CHECK(std::abs(row_sum(h.init) - 1.0) <= 1e-12);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::abs(row_sum(h.trans.row(i)) - 1.0) <= 1e-12);
    CHECK(std::abs(row_sum(h.emit.row(i)) - 1.0) <= 1e-12);
    for (double x : h.emit.row(i)) CHECK(x > 0.0);
  }
  CHECK_THROWS_AS(init_random(0, 2, 1), Error);
  CHECK_THROWS_AS(init_random(2, 0, 1), Error);
}

TEST_CASE("log_likelihood closed forms") {
  CHECK(log_likelihood(single_state({1.0}), std::vector<Symbol>{0, 0, 0, 0}) == 0.0);
  CHECK(log_likelihood(single_state({0.5, 0.5}), std::vector<Symbol>{0, 1, 1}) ==
        doctest::Approx(3 * std::log(0.5)).epsilon(1e-14));

  const std::vector<Symbol> obs = {0, 1, 0};
  // Sum over the 8 state paths, enumerated by hand: 0.10893.
  CHECK(std::exp(log_likelihood(two_state(), obs)) == doctest::Approx(0.10893).epsilon(1e-12));
  CHECK(oracle::likelihood(two_state(), obs) == doctest::Approx(0.10893).epsilon(1e-12));

  CHECK_THROWS_AS(log_likelihood(two_state(), std::vector<Symbol>{0, 2}), Error);
  CHECK_THROWS_AS(log_likelihood(two_state(), std::vector<Symbol>{}), Error);
}

TEST_CASE("log_likelihood does not underflow on long sequences") {
  std::vector<Symbol> obs(20000);
  for (std::size_t t = 0; t < obs.size(); ++t) obs[t] = static_cast<Symbol>(t % 2);
  const double ll = log_likelihood(single_state({0.25, 0.75}), obs);
  CHECK(ll == doctest::Approx(10000 * std::log(0.25) + 10000 * std::log(0.75)).epsilon(1e-10));
  CHECK(std::isfinite(log_likelihood(two_state(), obs)));
}

TEST_CASE("likelihood and Viterbi agree with exhaustive enumeration") {
  Rng rng(1234);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform() * 3);
    const std::size_t m = 1 + static_cast<std::size_t>(rng.uniform() * 3);
    const std::size_t len = 1 + static_cast<std::size_t>(rng.uniform() * 6);
    const auto h = oracle::random_model(n, m, rng);
    const auto obs = oracle::random_symbols(len, m, rng);

    const double brute = oracle::likelihood(h, obs);
    CHECK(std::abs(std::exp(log_likelihood(h, obs)) - brute) <= 1e-10 * brute);

    const auto best = oracle::best_path(h, obs);
    const auto path = viterbi(h, obs);
    CHECK(std::abs(oracle::path_probability(h, obs, path) - best.probability) <= 1e-12 * best.probability);
  }
}

TEST_CASE("viterbi special cases") {
  CHECK(viterbi(single_state({0.3, 0.7}), std::vector<Symbol>{1, 0, 1}) == std::vector<std::size_t>{0, 0, 0});

  // Emission matrix is a permutation: each symbol forces its state.
  Hmm forced{Matrix::from_rows({{0.1, 0.8, 0.1}, {0.3, 0.3, 0.4}, {0.5, 0.25, 0.25}}),
             Matrix::from_rows({{0, 0, 1}, {1, 0, 0}, {0, 1, 0}}), {0.2, 0.3, 0.5}};
  CHECK(viterbi(forced, std::vector<Symbol>{2, 0, 1, 1, 0}) == std::vector<std::size_t>{0, 1, 2, 2, 1});

  CHECK(viterbi(two_state(), std::vector<Symbol>{0, 1, 0}) == std::vector<std::size_t>{0, 1, 0});
  CHECK(oracle::best_path(two_state(), {0, 1, 0}).path == std::vector<std::size_t>{0, 1, 0});

  // A fully symmetric model: every path ties, the lowest ids win.
  Hmm flat{Matrix::from_rows({{0.5, 0.5}, {0.5, 0.5}}), Matrix::from_rows({{0.5, 0.5}, {0.5, 0.5}}),
           {0.5, 0.5}};
  CHECK(viterbi(flat, std::vector<Symbol>{0, 1, 1}) == std::vector<std::size_t>{0, 0, 0});
  CHECK_THROWS_AS(viterbi(flat, std::vector<Symbol>{}), Error);
  CHECK_THROWS_AS(viterbi(flat, std::vector<Symbol>{3}), Error);
}

TEST_CASE("predict_next") {
  const auto n1 = single_state({0.5, 0.3, 0.2});
  const auto d1 = predict_next(n1, std::vector<Symbol>{2, 1});
  CHECK(d1.probs == std::vector<double>{0.5, 0.3, 0.2});
  CHECK(d1.ranked == std::vector<Symbol>{0, 1, 2});

  Hmm ident{Matrix::from_rows({{1, 0}, {0, 1}}), Matrix::from_rows({{0.25, 0.75}, {0.6, 0.4}}),
            {0.5, 0.5}};
  const std::vector<Symbol> obs = {0, 0, 0};
  const auto j = viterbi(ident, obs).back();
  CHECK(j == 1);
  CHECK(predict_next(ident, obs).probs == std::vector<double>{0.6, 0.4});

  // Final Viterbi state 0; row 0 of A times B = (0.69, 0.31).
  const auto d = predict_next(two_state(), std::vector<Symbol>{0, 1, 0});
  CHECK(d.probs[0] == doctest::Approx(0.69).epsilon(1e-14));
  CHECK(d.probs[1] == doctest::Approx(0.31).epsilon(1e-14));
  CHECK(d.ranked == std::vector<Symbol>{0, 1});
  CHECK_THROWS_AS(predict_next(two_state(), std::vector<Symbol>{}), Error);
}

TEST_CASE("predict_multi") {
  const auto h = two_state();
  const std::vector<Symbol> obs = {0, 1, 0};
  CHECK(predict_multi(h, obs, 1).front() == predict_next(h, obs));

  // Step 2 decodes (0, 1, 0, 0): final state 0 again, so (0.69, 0.31).
  const auto two = predict_multi(h, obs, 2);
  REQUIRE(two.size() == 2);
  CHECK(viterbi(h, std::vector<Symbol>{0, 1, 0, 0}).back() == 0);
  CHECK(two[1].probs[0] == doctest::Approx(0.69).epsilon(1e-14));
  CHECK(two[1].probs[1] == doctest::Approx(0.31).epsilon(1e-14));

  const auto n1 = single_state({0.1, 0.6, 0.3});
  const auto five = predict_multi(n1, std::vector<Symbol>{1}, 5);
  REQUIRE(five.size() == 5);
  for (const auto& d : five) CHECK(d.probs == std::vector<double>{0.1, 0.6, 0.3});
  CHECK_THROWS_AS(predict_multi(h, obs, 0), Error);
}

TEST_CASE("prediction properties on random models") {
  Rng rng(555);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform() * 5);
    const std::size_t m = 1 + static_cast<std::size_t>(rng.uniform() * 6);
    const auto h = oracle::random_model(n, m, rng);
    const auto obs = oracle::random_symbols(1 + static_cast<std::size_t>(rng.uniform() * 30), m, rng);

    const auto d = predict_next(h, obs);
    CHECK(std::abs(row_sum(d.probs) - 1.0) <= 1e-9);
    for (double p : d.probs) CHECK((p >= 0.0 && p <= 1.0));

    // The rank order only depends on relative sizes.
    auto scaled = d.probs;
    for (auto& p : scaled) p *= 3.5;
    CHECK(PredictionDistribution::from_probs(scaled).ranked == d.ranked);

    // The streaming predictor agrees with a fresh decode of every prefix.
    Predictor stream(h);
    for (std::size_t t = 0; t < obs.size(); ++t) {
      stream.observe(obs[t]);
      const std::span<const Symbol> prefix(obs.data(), t + 1);
      CHECK(stream.best_state() == viterbi(h, prefix).back());
    }

    const auto post = predict_next(h, obs, PredictMode::posterior);
    CHECK(std::abs(row_sum(post.probs) - 1.0) <= 1e-9);
  }
}

TEST_CASE("baum_welch on a single repeated symbol") {
  const std::vector<Symbol> obs(300, 2);
  const auto result = baum_welch(init_random(3, 4, 9), obs);
  CHECK(result.trace.back() > -1e-6);
  for (std::size_t i = 0; i < 3; ++i) CHECK(result.model.emit(i, 2) > 1.0 - 1e-9);
  CHECK_NOTHROW(result.model.validate());
}

TEST_CASE("baum_welch trace is non-decreasing") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const auto obs = oracle::random_symbols(200, 4, rng);
    const auto result = baum_welch(init_random(3, 4, seed + 100), obs, {200, 1e-8, 1e-12});
    for (std::size_t i = 1; i < result.trace.size(); ++i) {
      CHECK(result.trace[i] >= result.trace[i - 1] - 1e-9);
    }
    CHECK(result.trace.back() == doctest::Approx(log_likelihood(result.model, obs)).epsilon(1e-12));
    CHECK_NOTHROW(result.model.validate());
  }
}

TEST_CASE("baum_welch recovers a planted model") {
  const auto planted = make_peaked_hmm(2, 3, 0.9, 17);
  const auto train = sample_hmm(planted, 2500, 1);
  const auto held_out = sample_hmm(planted, 2500, 2);
  const double reference = log_likelihood(planted, held_out.view());
  // Single-start EM can settle in a local optimum, so look at every init
  // seed 0..19 rather than one.
  int recovered = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto trained = train_hmm(train.view(), 2, 3, seed);
    const double ours = log_likelihood(trained.model, held_out.view());
    recovered += ours >= reference - 0.02 * std::abs(reference);
    best = std::max(best, ours);
  }
  CHECK(best >= reference - 0.02 * std::abs(reference));
  CHECK(recovered > 10);
}

TEST_CASE("baum_welch preconditions") {
  const auto h = init_random(2, 2, 1);
  CHECK_THROWS_AS(baum_welch(h, std::vector<Symbol>{0}), Error);
  CHECK_THROWS_AS(baum_welch(h, std::vector<Symbol>{0, 5}), Error);
  CHECK_THROWS_AS(baum_welch(h, std::vector<Symbol>{0, 1}, {10, 0.0, 1e-12}), Error);
}

TEST_CASE("smoothing keeps unseen transitions decodable") {
  // Training never shows symbol 1 after symbol 1.
  std::vector<Symbol> obs;
  for (int i = 0; i < 200; ++i) obs.insert(obs.end(), {0, 1, 0});
  const auto trained = train_hmm(obs, 2, 2, 3);
  CHECK(std::isfinite(log_likelihood(trained.model, std::vector<Symbol>{1, 1, 1, 1})));
}

TEST_CASE("HMM JSON round trip and validation") {
  const auto h = init_random(3, 4, 21);
  CHECK(hmm_from_json(nlohmann::json::parse(to_json(h).dump())) == h);

  Hmm bad = h;
  bad.trans(0, 0) += 0.1;
  CHECK_THROWS_AS(bad.validate(), Error);
  Hmm ragged = h;
  ragged.init.push_back(0.0);
  CHECK_THROWS_AS(ragged.validate(), Error);
}
