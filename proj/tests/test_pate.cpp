#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "fedcollab/errors.hpp"
#include "fedcollab/nn.hpp"
#include "fedcollab/pate.hpp"
#include "fedcollab/rng.hpp"
#include "fedcollab/tensor.hpp"

using namespace fedcollab;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// A model that predicts `cls` for every input: zero weights, one-hot bias.
ModelParams constant_teacher(std::size_t input_width, int cls) {
  ModelParams m = ModelParams::zeros({input_width, kNumClasses});
  m.layers()[0].bias[static_cast<std::size_t>(cls)] = 1.0;
  return m;
}

}  // namespace

TEST_CASE("argmax takes the lowest index on ties") {
  CHECK(argmax_index({0.5, 2.0, 1.0}) == 1);
  CHECK(argmax_index({1.0, 3.0, 3.0}) == 1);
  CHECK(argmax_index({2.0, 2.0, 2.0}) == 0);
  CHECK_THROWS_AS(argmax_index({}), InputError);
}

TEST_CASE("votes count each teacher exactly once") {
  std::vector<ModelParams> teachers = {constant_teacher(3, 0), constant_teacher(3, 0),
                                       constant_teacher(3, 1)};
  const VoteHistogram hist = collect_votes(teachers, {0.1, 0.2, 0.3});
  REQUIRE(hist.counts.size() == kNumClasses);
  CHECK(hist.counts[0] == 2);
  CHECK(hist.counts[1] == 1);
  CHECK(hist.total() == 3);
}

TEST_CASE("unanimous teachers give all votes to one class") {
  std::vector<ModelParams> teachers(5, constant_teacher(2, 7));
  const VoteHistogram hist = collect_votes(teachers, {1.0, -1.0});
  CHECK(hist.counts[7] == 5);
  CHECK(hist.total() == 5);
}

TEST_CASE("votes match per-teacher predictions on random panels") {
  Rng rng(555);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<ModelParams> teachers;
    for (int t = 0; t < 7; ++t) {
      teachers.push_back(init_params({4, 6, kNumClasses}, 100 * trial + t));
    }
    std::vector<double> input(4);
    for (double& v : input) v = rng.uniform(-1.0, 1.0);

    const VoteHistogram hist = collect_votes(teachers, input);
    std::vector<std::size_t> expected(kNumClasses, 0);
    Tensor2D row(1, 4);
    for (std::size_t c = 0; c < 4; ++c) row(0, c) = input[c];
    for (const ModelParams& t : teachers) ++expected[static_cast<std::size_t>(predict(t, row)[0])];
    CHECK(hist.counts == expected);
    CHECK(hist.total() == teachers.size());
  }
}

TEST_CASE("vote collection validates its inputs") {
  CHECK_THROWS_AS(collect_votes({}, {1.0}), InputError);
  std::vector<ModelParams> teachers = {constant_teacher(3, 0)};
  CHECK_THROWS_AS(collect_votes(teachers, {1.0, 2.0}), ShapeError);
}

TEST_CASE("laplace inverse CDF hits known points") {
  CHECK(laplace_from_uniform(2.0, 0.0) == 0.0);
  // 1 - 2*0.25 = 0.5, so the magnitude is b * ln 2.
  CHECK(laplace_from_uniform(1.0, 0.25) == doctest::Approx(0.6931471805599453).epsilon(1e-15));
  CHECK(laplace_from_uniform(1.0, -0.25) == doctest::Approx(-0.6931471805599453).epsilon(1e-15));
  CHECK(laplace_from_uniform(3.0, 0.25) == doctest::Approx(3.0 * 0.6931471805599453).epsilon(1e-15));
}

TEST_CASE("laplace tails clamp at fifty scales, both signs") {
  CHECK(laplace_from_uniform(2.0, 0.5) == 100.0);
  CHECK(laplace_from_uniform(2.0, -0.5) == -100.0);
  // One double inside the edge stays finite and under the clamp: 1 - 2|u|
  // is about 2.2e-16 there, whose negative log is only around 36.
  const double near_edge = laplace_from_uniform(1.0, 0.4999999999999999);
  CHECK(near_edge > 30.0);
  CHECK(near_edge < 50.0);
}

TEST_CASE("laplace draw is odd in u") {
  for (double u : {0.1, 0.2, 0.35, 0.49}) {
    CHECK(laplace_from_uniform(1.5, -u) == -laplace_from_uniform(1.5, u));
  }
}

TEST_CASE("laplace rejects bad scales and out-of-range draws") {
  CHECK_THROWS_AS(laplace_from_uniform(0.0, 0.1), InputError);
  CHECK_THROWS_AS(laplace_from_uniform(-1.0, 0.1), InputError);
  CHECK_THROWS_AS(laplace_from_uniform(1.0, 0.51), InputError);
  CHECK_THROWS_AS(laplace_from_uniform(1.0, -0.51), InputError);
}

TEST_CASE("laplace sample moments match the distribution") {
  Rng rng(2024);
  const double b = 2.0;
  const int n = 1000000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = laplace_sample(b, rng);
    sum += x;
    sum_sq += x * x;
  }
  const double mean = sum / n;
  const double variance = sum_sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01 * b);
  CHECK(variance == doctest::Approx(2.0 * b * b).epsilon(0.05));
}

TEST_CASE("noiseless selection equals plain argmax and draws nothing") {
  Rng histogram_rng(17);
  Rng used(99), untouched(99);
  for (int trial = 0; trial < 200; ++trial) {
    VoteHistogram hist;
    hist.counts.resize(kNumClasses);
    for (auto& c : hist.counts) c = histogram_rng.bounded(30);
    std::vector<double> as_scores(hist.counts.begin(), hist.counts.end());
    CHECK(noisy_argmax(hist, kInf, used) == argmax_index(as_scores));
  }
  CHECK(used.next_u64() == untouched.next_u64());
}

TEST_CASE("noisy selection rejects non-positive finite gamma") {
  VoteHistogram hist;
  hist.counts = {1, 2};
  Rng rng(1);
  CHECK_THROWS_AS(noisy_argmax(hist, 0.0, rng), InputError);
  CHECK_THROWS_AS(noisy_argmax(hist, -0.5, rng), InputError);
}

TEST_CASE("a landslide vote survives moderate noise") {
  VoteHistogram hist;
  hist.counts.assign(kNumClasses, 0);
  hist.counts[0] = 10;
  Rng rng(7);
  int kept = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    if (noisy_argmax(hist, 1.0, rng) == 0) ++kept;
  }
  CHECK(kept > 9500);
}

TEST_CASE("flip rate shrinks as the vote margin grows") {
  // Two front-runners at distance m; heavier noise (gamma 0.5 means scale 2)
  // keeps the flip probabilities well separated across margins.
  double previous_rate = 1.1;
  for (int margin = 0; margin <= 5; ++margin) {
    VoteHistogram hist;
    hist.counts.assign(kNumClasses, 0);
    hist.counts[0] = 10;
    hist.counts[1] = static_cast<std::size_t>(10 - margin);
    Rng rng(static_cast<std::uint64_t>(3000 + margin));
    int flips = 0;
    for (int trial = 0; trial < 10000; ++trial) {
      if (noisy_argmax(hist, 0.5, rng) != 0) ++flips;
    }
    const double rate = flips / 10000.0;
    CHECK(rate < previous_rate);
    previous_rate = rate;
  }
}

TEST_CASE("ensemble prediction is the plurality vote") {
  std::vector<ModelParams> teachers = {constant_teacher(2, 0), constant_teacher(2, 0),
                                       constant_teacher(2, 1)};
  CHECK(ensemble_predict(teachers, {0.0, 0.0}) == 0);
  std::vector<ModelParams> unanimous(4, constant_teacher(2, 7));
  CHECK(ensemble_predict(unanimous, {0.0, 0.0}) == 7);
  // 2 vs 5 split evenly; the lower class wins.
  std::vector<ModelParams> split = {constant_teacher(2, 5), constant_teacher(2, 2)};
  CHECK(ensemble_predict(split, {0.0, 0.0}) == 2);
}

TEST_CASE("plurality labels combine per-teacher prediction rows") {
  const std::vector<std::vector<int>> preds = {{0, 1}, {0, 2}, {1, 2}};
  CHECK(plurality_labels(preds) == std::vector<int>{0, 2});
  CHECK(plurality_accuracy(preds, {0, 2}) == 1.0);
  CHECK(plurality_accuracy(preds, {1, 2}) == 0.5);
}

TEST_CASE("plurality labels validate shape") {
  CHECK_THROWS_AS(plurality_labels({}), InputError);
  CHECK_THROWS_AS(plurality_labels({{0, 1}, {0}}), InputError);
}

TEST_CASE("ensemble accuracy agrees with a manual vote count") {
  std::vector<ModelParams> teachers = {constant_teacher(2, 3), constant_teacher(2, 3),
                                       constant_teacher(2, 8)};
  Tensor2D inputs(4, 2, {0.0, 0.0, 1.0, 1.0, -1.0, 0.5, 0.2, 0.2});
  // Plurality is always 3, so accuracy is the share of label-3 rows.
  CHECK(ensemble_accuracy(teachers, inputs, {3, 3, 8, 0}) == 0.5);
}

TEST_CASE("private labeling accounts epsilon exactly") {
  std::vector<ModelParams> teachers;
  for (int t = 0; t < 5; ++t) teachers.push_back(init_params({6, 8, kNumClasses}, 40 + t));
  Tensor2D inputs(100, 6);
  Rng rng(88);
  for (std::size_t r = 0; r < 100; ++r) {
    for (std::size_t c = 0; c < 6; ++c) inputs(r, c) = rng.uniform(0.0, 1.0);
  }
  const double gamma = 0.05;
  const auto [labeled, ledger] = generate_private_labels(teachers, inputs, gamma, 9001);
  REQUIRE(labeled.size() == 100);
  CHECK(ledger.queries == 100);
  CHECK(ledger.accounted);
  CHECK(ledger.epsilon_total() == 2.0 * gamma * 100.0);
  CHECK(ledger.delta() == 0.0);
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    CHECK(labeled[i].query_index == i);
    REQUIRE(labeled[i].input.size() == 6);
    CHECK(labeled[i].input[0] == inputs(i, 0));
    CHECK(labeled[i].label >= 0);
    CHECK(labeled[i].label < static_cast<int>(kNumClasses));
  }
}

TEST_CASE("noiseless labeling reproduces the plain ensemble, unaccounted") {
  std::vector<ModelParams> teachers;
  for (int t = 0; t < 3; ++t) teachers.push_back(init_params({4, kNumClasses}, 70 + t));
  Tensor2D inputs(20, 4);
  Rng rng(5);
  for (std::size_t r = 0; r < 20; ++r) {
    for (std::size_t c = 0; c < 4; ++c) inputs(r, c) = rng.uniform(-2.0, 2.0);
  }
  const auto [labeled, ledger] = generate_private_labels(teachers, inputs, kInf, 1);
  CHECK_FALSE(ledger.accounted);
  CHECK(ledger.epsilon_total() == 0.0);
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    std::vector<double> row(4);
    for (std::size_t c = 0; c < 4; ++c) row[c] = inputs(i, c);
    CHECK(labeled[i].label == ensemble_predict(teachers, row));
  }
}

TEST_CASE("private labeling is deterministic and per-query independent") {
  std::vector<ModelParams> teachers;
  for (int t = 0; t < 4; ++t) teachers.push_back(init_params({3, kNumClasses}, 20 + t));
  Tensor2D inputs(10, 3);
  Rng rng(66);
  for (std::size_t r = 0; r < 10; ++r) {
    for (std::size_t c = 0; c < 3; ++c) inputs(r, c) = rng.uniform(0.0, 1.0);
  }
  const auto [full, full_ledger] = generate_private_labels(teachers, inputs, 0.1, 4242);
  const auto [again, again_ledger] = generate_private_labels(teachers, inputs, 0.1, 4242);
  REQUIRE(full.size() == again.size());
  for (std::size_t i = 0; i < full.size(); ++i) CHECK(full[i].label == again[i].label);
  CHECK(full_ledger.epsilon_total() == again_ledger.epsilon_total());

  // Each query draws from its own stream, so a shorter run is a prefix.
  Tensor2D head(4, 3);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 3; ++c) head(r, c) = inputs(r, c);
  }
  const auto [prefix, prefix_ledger] = generate_private_labels(teachers, head, 0.1, 4242);
  REQUIRE(prefix.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(prefix[i].label == full[i].label);
  CHECK(prefix_ledger.queries == 4);
}

TEST_CASE("labeling nothing costs nothing") {
  std::vector<ModelParams> teachers = {constant_teacher(2, 1)};
  const auto [labeled, ledger] = generate_private_labels(teachers, Tensor2D(0, 2), 0.5, 3);
  CHECK(labeled.empty());
  CHECK(ledger.queries == 0);
  CHECK(ledger.epsilon_total() == 0.0);
}

TEST_CASE("ledger cost is linear in the query count") {
  PrivacyLedger a{0.2, 3, true};
  CHECK(a.epsilon_total() == 2.0 * 0.2 * 3.0);
  PrivacyLedger b{0.2, 6, true};
  CHECK(b.epsilon_total() == 2.0 * a.epsilon_total());
  CHECK(b.delta() == 0.0);
}
