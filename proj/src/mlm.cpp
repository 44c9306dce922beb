#include "vulstyle/mlm.hpp"

#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "vulstyle/error.hpp"
#include "vulstyle/random.hpp"

namespace vulstyle {

void MaskRates::validate() const {
  if (!(select > 0.0 && select < 1.0)) {
    throw Error(ErrorCode::invalid_argument, fmt::format("selection rate must be in (0,1), got {}", select));
  }
  if (!(mask >= 0.0 && random >= 0.0 && keep >= 0.0) || std::abs(mask + random + keep - 1.0) > 1e-9) {
    throw Error(ErrorCode::invalid_argument,
                fmt::format("replacement shares must be non-negative and sum to 1, got {}/{}/{}", mask, random, keep));
  }
}

MaskRates MaskRates::parse(std::string_view text) {
  std::vector<double> values;
  std::stringstream in{std::string(text)};
  std::string part;
  while (std::getline(in, part, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(part, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != part.size()) {
      throw Error(ErrorCode::invalid_argument, fmt::format("bad rate '{}'", part));
    }
    values.push_back(v);
  }
  if (values.size() != 4) {
    throw Error(ErrorCode::invalid_argument, "rates must be four comma-separated numbers: select,mask,random,keep");
  }
  MaskRates r{values[0], values[1], values[2], values[3]};
  r.validate();
  return r;
}

std::size_t MaskedBatch::selected_count() const {
  std::size_t n = 0;
  for (const auto a : actions) n += a != MaskAction::none;
  return n;
}

std::vector<std::size_t> MaskedBatch::selected_positions() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (selected(i)) out.push_back(i);
  }
  return out;
}

MaskedBatch mask(std::span<const TokenId> sequence, const MaskRates& rates, std::size_t vocab_size,
                 std::uint64_t seed) {
  rates.validate();
  if (vocab_size <= kSpecialCount) {
    throw Error(ErrorCode::invalid_argument, fmt::format("vocabulary of {} has no non-special tokens", vocab_size));
  }
  MaskedBatch batch;
  batch.inputs.assign(sequence.begin(), sequence.end());
  batch.targets.resize(sequence.size());
  batch.actions.assign(sequence.size(), MaskAction::none);
  Rng rng(seed);
  for (std::size_t i = 0; i < sequence.size(); ++i) {
    if (is_special(sequence[i])) continue;
    if (!rng.bernoulli(rates.select)) continue;
    batch.targets[i] = sequence[i];
    const double u = rng.uniform();
    if (u < rates.mask) {
      batch.actions[i] = MaskAction::mask;
      batch.inputs[i] = kMaskId;
    } else if (u < rates.mask + rates.random) {
      batch.actions[i] = MaskAction::random;
      batch.inputs[i] = kSpecialCount + static_cast<TokenId>(rng.below(vocab_size - kSpecialCount));
    } else {
      batch.actions[i] = MaskAction::keep;
    }
  }
  return batch;
}

MlmLossReport mlm_loss(const MaskedBatch& batch, const std::map<std::size_t, std::vector<double>>& predictions) {
  MlmLossReport report;
  double total = 0.0;
  for (std::size_t i = 0; i < batch.actions.size(); ++i) {
    if (!batch.selected(i)) continue;
    const auto it = predictions.find(i);
    if (it == predictions.end()) {
      throw Error(ErrorCode::invalid_argument, fmt::format("no prediction for selected position {}", i));
    }
    const auto& p = it->second;
    const TokenId target = *batch.targets[i];
    if (target >= p.size()) {
      throw Error(ErrorCode::invalid_argument,
                  fmt::format("prediction at position {} covers {} ids, target is {}", i, p.size(), target));
    }
    double sum = 0.0;
    for (const double v : p) {
      if (!(v >= 0.0)) throw Error(ErrorCode::invalid_argument, fmt::format("negative probability at position {}", i));
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw Error(ErrorCode::invalid_argument, fmt::format("prediction at position {} sums to {}", i, sum));
    }
    total -= std::log(p[target]);
    ++report.count;
  }
  if (report.count > 0) report.loss = total / static_cast<double>(report.count);
  return report;
}

nlohmann::json masked_to_json(const MaskedBatch& batch, const std::string& id) {
  nlohmann::json targets = nlohmann::json::object();
  for (std::size_t i = 0; i < batch.targets.size(); ++i) {
    if (batch.targets[i]) targets[std::to_string(i)] = *batch.targets[i];
  }
  return {{"id", id}, {"inputs", batch.inputs}, {"targets", targets}};
}

}  // namespace vulstyle
