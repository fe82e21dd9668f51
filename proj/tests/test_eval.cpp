#include <doctest.h>

#include <cmath>

#include "alertpred/error.hpp"
#include "alertpred/eval.hpp"
#include "alertpred/rng.hpp"
#include "oracles.hpp"

using namespace alertpred;

namespace {

Hmm single_state(std::vector<double> emit_row) {
  return {Matrix::from_rows({{1.0}}), Matrix::from_rows({emit_row}), {1.0}};
}

// 0 -> 1 -> 2 -> 0 with identity emissions.
Hmm cycle3() {
  return {Matrix::from_rows({{0, 1, 0}, {0, 0, 1}, {1, 0, 0}}),
          Matrix::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}), {1, 0, 0}};
}

}  // namespace

TEST_CASE("split_sequence") {
  std::vector<Symbol> obs(5645, 0);
  const auto split = split_sequence(obs, 2500);
  CHECK(split.train.size() == 2500);
  CHECK(split.test.size() == 3145);

  const std::vector<Symbol> small = {4, 3, 2, 1};
  const auto edge = split_sequence(small, 3);
  CHECK(edge.train == std::vector<Symbol>{4, 3, 2});
  CHECK(edge.test == std::vector<Symbol>{1});
  CHECK_THROWS_AS(split_sequence(small, 0), Error);
  CHECK_THROWS_AS(split_sequence(small, 4), Error);
}

TEST_CASE("evaluate with a memoryless model scores the symbol-0 frequency") {
  const auto h = single_state({0.5, 0.3, 0.2});
  Rng rng(3);
  const auto test = oracle::random_symbols(400, 3, rng);
  for (std::size_t horizon : {1u, 3u}) {
    EvalOptions opts;
    opts.horizon = horizon;
    const auto acc = evaluate(h, test, std::vector<Symbol>{1, 2}, opts);
    std::size_t zeros = 0, ones = 0;
    for (std::size_t i = horizon; i < test.size(); ++i) {
      zeros += test[i] == 0;
      ones += test[i] == 1;
    }
    CHECK(acc.n_predictions == test.size() - horizon);
    CHECK(acc.level1 == doctest::Approx(static_cast<double>(zeros) / static_cast<double>(acc.n_predictions)));
    CHECK(acc.level2 == doctest::Approx(static_cast<double>(zeros + ones) / static_cast<double>(acc.n_predictions)));
    CHECK(acc.level3 == 1.0);
  }
}

TEST_CASE("a perfect cycle predictor is right at every horizon") {
  const auto seq = sample_hmm(cycle3(), 300, 1);
  const std::vector<std::size_t> horizons = {1, 2, 3, 4, 5};
  const auto report = sweep_horizon(cycle3(), seq.view(), {}, horizons);
  REQUIRE(report.rows.size() == 5);
  for (const auto& row : report.rows) CHECK(row.accuracy.level1 == 1.0);
}

TEST_CASE("evaluate option variants") {
  const auto planted = make_peaked_hmm(3, 4, 0.8, 5);
  const auto seq = sample_hmm(planted, 600, 8);
  const auto split = split_sequence(seq.view(), 400);

  EvalOptions full;
  full.horizon = 2;
  EvalOptions windowed = full;
  windowed.window = 100000;
  CHECK(evaluate(planted, split.test, split.train, full) == evaluate(planted, split.test, split.train, windowed));

  windowed.window = 25;
  const auto w = evaluate(planted, split.test, split.train, windowed);
  CHECK(w.n_predictions == split.test.size() - 2);

  EvalOptions one;
  EvalOptions all_steps = one;
  all_steps.score_all_steps = true;
  CHECK(evaluate(planted, split.test, split.train, one) == evaluate(planted, split.test, split.train, all_steps));
  all_steps.horizon = 3;
  CHECK(evaluate(planted, split.test, split.train, all_steps).n_predictions == 3 * (split.test.size() - 3));

  EvalOptions posterior;
  posterior.mode = PredictMode::posterior;
  const auto p = evaluate(planted, split.test, split.train, posterior);
  CHECK((p.level1 <= p.level2 && p.level2 <= p.level3));

  EvalOptions too_far;
  too_far.horizon = split.test.size();
  CHECK_THROWS_AS(evaluate(planted, split.test, split.train, too_far), Error);
  too_far.horizon = 0;
  CHECK_THROWS_AS(evaluate(planted, split.test, split.train, too_far), Error);
}

TEST_CASE("a trained model beats the modal baseline on planted data") {
  const auto planted = make_peaked_hmm(3, 5, 0.9, 77);
  const auto seq = sample_hmm(planted, 3500, 78);
  const auto split = split_sequence(seq.view(), 2500);
  const auto trained = train_hmm(split.train, 3, 5, 79);
  const auto acc = evaluate(trained.model, split.test, split.train);
  CHECK(acc.level1 > oracle::modal_frequency(split.test, 1));
  CHECK(modal_baseline(split.test, 1) == oracle::modal_frequency(split.test, 1));
  CHECK((acc.level1 <= acc.level2 && acc.level2 <= acc.level3 && acc.level3 <= 1.0));
}

TEST_CASE("sweep_states") {
  const auto planted = make_peaked_hmm(3, 4, 0.85, 1);
  const auto seq = sample_hmm(planted, 800, 2);
  SweepSettings s;
  s.train_len = 600;
  s.seed = 4;

  const std::vector<std::size_t> one = {1};
  const auto baseline = sweep_states(seq, one, s);
  REQUIRE(baseline.rows.size() == 1);
  CHECK(baseline.rows[0].value == 1);

  const std::vector<std::size_t> range = {2, 3, 4};
  const auto a = sweep_states(seq, range, s);
  const auto b = sweep_states(seq, range, s);
  CHECK(to_json(a) == to_json(b));
  s.jobs = 3;
  CHECK(to_json(sweep_states(seq, range, s)) == to_json(a));
  for (const auto& row : a.rows) {
    CHECK((row.accuracy.level1 <= row.accuracy.level2 && row.accuracy.level2 <= row.accuracy.level3));
  }

  const std::vector<std::size_t> unordered = {3, 2};
  CHECK_THROWS_AS(sweep_states(seq, unordered, s), Error);
  const std::vector<std::size_t> zero = {0};
  CHECK_THROWS_AS(sweep_states(seq, zero, s), Error);
}

TEST_CASE("sweep_training_length") {
  SUBCASE("boundary split leaves a single test symbol") {
    const auto seq = sample_hmm(make_peaked_hmm(2, 3, 0.9, 3), 50, 3);
    SweepSettings s;
    s.n_states = 2;
    const std::vector<std::size_t> lengths = {49};
    const auto report = sweep_training_length(seq, lengths, s);
    REQUIRE(report.rows.size() == 1);
    CHECK(report.rows[0].value == 49);
    CHECK(report.rows[0].accuracy.n_predictions == 0);
  }
  SUBCASE("more training data does not hurt on planted data") {
    // Averaged over seeds: a single EM start can land in a poor optimum.
    double at500 = 0.0, at3500 = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto planted = make_peaked_hmm(8, 10, 0.9, derive_seed(seed, "planted"));
      const auto seq = sample_hmm(planted, 5645, derive_seed(seed, "sample"));
      SweepSettings s;
      s.n_states = 8;
      s.seed = derive_seed(seed, "init");
      const std::vector<std::size_t> lengths = {500, 3500};
      const auto report = sweep_training_length(seq, lengths, s);
      at500 += report.rows[0].accuracy.level1;
      at3500 += report.rows[1].accuracy.level1;
    }
    CHECK(at3500 >= at500);
  }
}

TEST_CASE("sweep_horizon on a noisy planted model") {
  const auto planted = make_peaked_hmm(4, 6, 0.8, 12);
  const auto seq = sample_hmm(planted, 3500, 13);
  const auto split = split_sequence(seq.view(), 2500);
  const auto trained = train_hmm(split.train, 4, 6, 14);
  const std::vector<std::size_t> horizons = {1, 5};
  const auto report = sweep_horizon(trained.model, split.test, split.train, horizons);
  CHECK(report.rows[1].accuracy.level1 <= report.rows[0].accuracy.level1 + 0.02);
}

TEST_CASE("sweep_clusters on a synthetic alert corpus") {
  const auto planted = make_peaked_hmm(6, 10, 0.85, 90);
  const auto log = synthesize_alert_log(planted, 3000, 8, 91);
  const auto vocab = build_vocabulary(log);
  SweepSettings s;
  s.train_len = 2000;
  s.n_states = 6;
  s.seed = 92;
  ClusterSweepInput input{log, log, vocab, {}, 300};

  const std::vector<std::size_t> ks = {10, 50};
  const auto report = sweep_clusters(input, ks, s);
  REQUIRE(report.rows.size() == 2);
  CHECK(report.rows[1].accuracy.level1 < report.rows[0].accuracy.level1);
  CHECK(report.metadata["n_categories"] == 10);

  // Nine categories: k = 5 cannot keep them apart.
  const auto nine = synthesize_alert_log(make_peaked_hmm(5, 9, 0.85, 93), 600, 2, 94);
  const auto v9 = build_vocabulary(nine);
  ClusterSweepInput in9{nine, nine, v9, {}, 300};
  SweepSettings s9;
  s9.train_len = 400;
  s9.n_states = 3;
  const std::vector<std::size_t> k9 = {5, 10, 15};
  const auto r9 = sweep_clusters(in9, k9, s9);
  CHECK(r9.metadata["n_categories"] == 9);
  CHECK(r9.metadata["k_below_category_count"] == nlohmann::json::array({5}));
}

TEST_CASE("categories_to_sequence") {
  const auto sample5 = parse_alert_file(ALERTPRED_TEST_DATA "/sample5.csv", AlertFormat::canonical_csv);
  const auto [codec, seq] = categories_to_sequence(sample5);
  CHECK(codec.categories() == std::vector<std::string>{"attempted-recon", "sdf", "trojan-activity",
                                                       "unknown", "web-application-attack"});
  CHECK(seq.symbols == std::vector<Symbol>{0, 1, 2, 3, 4});
  CHECK(seq.n_symbols == 5);
  CHECK(codec.encode("sdf") == std::optional<Symbol>(1));
  CHECK(codec.decode(4) == "web-application-attack");

  std::vector<Alert> same(4, sample5[1]);
  const auto [c1, s1] = categories_to_sequence(AlertLog(same));
  CHECK(c1.size() == 1);
  CHECK(s1.symbols == std::vector<Symbol>{0, 0, 0, 0});
  CHECK_THROWS_AS(categories_to_sequence(AlertLog{}), Error);
}

TEST_CASE("sample_hmm") {
  const auto constant = sample_hmm(single_state({0, 0, 1}), 50, 3);
  CHECK(constant.symbols == std::vector<Symbol>(50, 2));
  CHECK(constant.n_symbols == 3);

  const auto planted = make_peaked_hmm(3, 4, 0.7, 8);
  CHECK(sample_hmm(planted, 100, 5) == sample_hmm(planted, 100, 5));
  CHECK_THROWS_AS(sample_hmm(planted, 0, 5), Error);

  const auto long_run = sample_hmm(planted, 100000, 6);
  const auto expected = oracle::stationary_symbols(planted);
  std::vector<double> freq(4, 0.0);
  for (auto s : long_run.symbols) freq[s] += 1.0 / 100000.0;
  for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(freq[k] - expected[k]) <= 0.01);
}

TEST_CASE("make_peaked_hmm") {
  const auto h = make_peaked_hmm(3, 5, 0.9, 2);
  CHECK_NOTHROW(h.validate());
  std::vector<bool> used(5, false);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto e = h.emit.row(i);
    const auto t = h.trans.row(i);
    const auto peak_e = static_cast<std::size_t>(std::max_element(e.begin(), e.end()) - e.begin());
    CHECK(e[peak_e] == 0.9);
    CHECK(*std::max_element(t.begin(), t.end()) == 0.9);
    CHECK_FALSE(used[peak_e]);
    used[peak_e] = true;
  }
}

TEST_CASE("report CSV layout") {
  SweepReport r{"states", {{2, {0.5, 0.75, 1.0, 8}}}, {}};
  CHECK(to_csv(r) == "param,value,level1,level2,level3,n\nstates,2,0.500000,0.750000,1.000000,8\n");
  const auto j = to_json(r);
  CHECK(j["rows"][0]["n"] == 8);
}
