#include <doctest.h>

#include <cmath>

#include "vulstyle/error.hpp"
#include "vulstyle/mlm.hpp"
#include "vulstyle/random.hpp"

using namespace vulstyle;

namespace {

std::vector<TokenId> random_sequence(std::size_t n, std::size_t vocab, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TokenId> ids{kClsId};
  for (std::size_t i = 0; i + 2 < n; ++i) ids.push_back(static_cast<TokenId>(kSpecialCount + rng.below(vocab - kSpecialCount)));
  ids.push_back(kSepId);
  return ids;
}

std::vector<double> one_hot(std::size_t vocab, TokenId id) {
  std::vector<double> p(vocab, 0.0);
  p[id] = 1.0;
  return p;
}

}  // namespace

TEST_CASE("specials are never selected") {
  const std::vector<TokenId> only{kClsId, kSepId};
  CHECK(mask(only, {}, 300, 1).selected_count() == 0);
  const std::vector<TokenId> padded{kClsId, kPadId, kPadId, kSepId, kMaskId, kUnkId};
  MaskRates all{0.999999, 1.0, 0.0, 0.0};
  CHECK(mask(padded, all, 300, 1).selected_count() == 0);
}

TEST_CASE("rates validation and parsing") {
  CHECK_NOTHROW(MaskRates{}.validate());
  CHECK_THROWS_AS((MaskRates{0.0, 0.8, 0.1, 0.1}.validate()), Error);
  CHECK_THROWS_AS((MaskRates{1.0, 0.8, 0.1, 0.1}.validate()), Error);
  CHECK_THROWS_AS((MaskRates{0.15, 0.8, 0.1, 0.2}.validate()), Error);
  CHECK_THROWS_AS((MaskRates{0.15, 1.1, -0.1, 0.0}.validate()), Error);
  const auto r = MaskRates::parse("0.2,0.7,0.2,0.1");
  CHECK(r.select == 0.2);
  CHECK(r.mask == 0.7);
  CHECK(r.random == 0.2);
  CHECK(r.keep == 0.1);
  CHECK_THROWS_AS(MaskRates::parse("0.2,0.7"), Error);
  CHECK_THROWS_AS(MaskRates::parse("a,b,c,d"), Error);
  const std::vector<TokenId> seq{kClsId, 10, kSepId};
  CHECK_THROWS_AS(mask(seq, {0.15, 0.5, 0.1, 0.1}, 300, 1), Error);
}

TEST_CASE("corruption statistics at n = 100000") {
  const std::size_t vocab = 1000;
  const auto seq = random_sequence(100002, vocab, 5);
  const auto batch = mask(seq, {}, vocab, 1);
  std::size_t selected = 0, masked = 0, replaced = 0, kept = 0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    switch (batch.actions[i]) {
      case MaskAction::none: continue;
      case MaskAction::mask: ++masked; break;
      case MaskAction::random: ++replaced; break;
      case MaskAction::keep: ++kept; break;
    }
    ++selected;
  }
  const double n = 100000.0;
  CHECK(std::abs(selected / n - 0.15) <= 0.005);
  CHECK(std::abs(masked / double(selected) - 0.8) <= 0.01);
  CHECK(std::abs(replaced / double(selected) - 0.1) <= 0.01);
  CHECK(std::abs(kept / double(selected) - 0.1) <= 0.01);
}

TEST_CASE("batch structure invariants") {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t vocab = 10 + rng.below(500);
    const auto seq = random_sequence(2 + rng.below(300), vocab, rng.next());
    const std::uint64_t seed = rng.next();
    const auto batch = mask(seq, {}, vocab, seed);
    REQUIRE(batch.inputs.size() == seq.size());
    REQUIRE(batch.targets.size() == seq.size());
    CHECK(batch.actions.front() == MaskAction::none);
    CHECK(batch.actions.back() == MaskAction::none);
    for (std::size_t i = 0; i < seq.size(); ++i) {
      switch (batch.actions[i]) {
        case MaskAction::none:
          CHECK(batch.inputs[i] == seq[i]);
          CHECK_FALSE(batch.targets[i].has_value());
          break;
        case MaskAction::mask:
          CHECK(batch.inputs[i] == kMaskId);
          break;
        case MaskAction::random:
          CHECK(batch.inputs[i] >= kSpecialCount);
          CHECK(batch.inputs[i] < vocab);
          break;
        case MaskAction::keep:
          CHECK(batch.inputs[i] == seq[i]);
          break;
      }
      if (batch.selected(i)) CHECK(batch.targets[i] == seq[i]);
    }
    const auto again = mask(seq, {}, vocab, seed);
    CHECK(again.inputs == batch.inputs);
    CHECK(again.actions == batch.actions);
    CHECK(batch.selected_positions().size() == batch.selected_count());
  }
}

TEST_CASE("loss: analytic cases") {
  const std::size_t vocab = 50;
  const auto seq = random_sequence(400, vocab, 3);
  const auto batch = mask(seq, {}, vocab, 2);
  REQUIRE(batch.selected_count() > 0);

  std::map<std::size_t, std::vector<double>> uniform, exact;
  for (const auto pos : batch.selected_positions()) {
    uniform[pos] = std::vector<double>(vocab, 1.0 / vocab);
    exact[pos] = one_hot(vocab, *batch.targets[pos]);
  }
  const auto u = mlm_loss(batch, uniform);
  CHECK(u.count == batch.selected_count());
  CHECK(u.loss == doctest::Approx(std::log(50.0)).epsilon(1e-12));
  CHECK(mlm_loss(batch, exact).loss == 0.0);
}

TEST_CASE("loss: hand-computed three positions") {
  MaskedBatch batch;
  batch.inputs = {kClsId, kMaskId, 7, kMaskId, kSepId};
  batch.targets = {std::nullopt, 5, 6, 7, std::nullopt};
  batch.actions = {MaskAction::none, MaskAction::mask, MaskAction::random, MaskAction::mask, MaskAction::none};
  std::map<std::size_t, std::vector<double>> p;
  p[1] = {0, 0, 0, 0, 0, 0.5, 0.25, 0.25};
  p[2] = {0, 0, 0, 0, 0, 0.5, 0.25, 0.25};
  p[3] = {0, 0, 0, 0, 0, 0.0, 0.0, 1.0};
  // -(ln 0.5 + ln 0.25 + ln 1) / 3 = ln 8 / 3
  const auto r = mlm_loss(batch, p);
  CHECK(r.count == 3);
  CHECK(r.loss == doctest::Approx(std::log(8.0) / 3.0).epsilon(1e-12));

  auto missing = p;
  missing.erase(2);
  CHECK_THROWS_AS(mlm_loss(batch, missing), Error);
  auto unnormalized = p;
  unnormalized[3][7] = 0.9;
  CHECK_THROWS_AS(mlm_loss(batch, unnormalized), Error);

  MaskedBatch empty{{kClsId, kSepId}, {std::nullopt, std::nullopt}, {MaskAction::none, MaskAction::none}};
  const auto e = mlm_loss(empty, {});
  CHECK(e.count == 0);
  CHECK(e.loss == 0.0);
}

TEST_CASE("loss is permutation invariant over selected positions") {
  Rng rng(44);
  const std::size_t vocab = 30;
  for (int trial = 0; trial < 50; ++trial) {
    const auto seq = random_sequence(60, vocab, rng.next());
    auto batch = mask(seq, {0.5, 0.8, 0.1, 0.1}, vocab, rng.next());
    std::map<std::size_t, std::vector<double>> p;
    for (const auto pos : batch.selected_positions()) {
      std::vector<double> d(vocab);
      double sum = 0;
      for (auto& x : d) sum += x = 0.01 + rng.uniform();
      for (auto& x : d) x /= sum;
      p[pos] = d;
    }
    const double before = mlm_loss(batch, p).loss;

    // Permute the selected positions together with their predictions.
    auto positions = batch.selected_positions();
    auto shuffled = positions;
    rng.shuffle(std::span<std::size_t>(shuffled));
    MaskedBatch permuted = batch;
    std::map<std::size_t, std::vector<double>> q;
    for (std::size_t k = 0; k < positions.size(); ++k) {
      permuted.inputs[shuffled[k]] = batch.inputs[positions[k]];
      permuted.targets[shuffled[k]] = batch.targets[positions[k]];
      permuted.actions[shuffled[k]] = batch.actions[positions[k]];
      q[shuffled[k]] = p[positions[k]];
    }
    CHECK(mlm_loss(permuted, q).loss == doctest::Approx(before).epsilon(1e-12));
  }
}

TEST_CASE("masked export") {
  const std::vector<TokenId> seq{kClsId, 10, 11, 12, kSepId};
  const auto batch = mask(seq, {0.999, 1.0, 0.0, 0.0}, 100, 3);
  const auto j = masked_to_json(batch, "s1");
  CHECK(j["id"] == "s1");
  CHECK(j["inputs"].size() == 5);
  CHECK(j["targets"].size() == batch.selected_count());
}
