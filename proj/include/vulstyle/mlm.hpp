#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vulstyle/tokenizer.hpp"

namespace vulstyle {

struct MaskRates {
  double select = 0.15;
  double mask = 0.8;
  double random = 0.1;
  double keep = 0.1;

  /// Throws Error(invalid_argument) unless select is in (0,1), the shares
  /// are non-negative and sum to 1.
  void validate() const;
  /// Parses "select,mask,random,keep".
  static MaskRates parse(std::string_view text);
};

enum class MaskAction : std::uint8_t { none, mask, random, keep };

struct MaskedBatch {
  std::vector<TokenId> inputs;
  /// Original id at selected positions, empty elsewhere.
  std::vector<std::optional<TokenId>> targets;
  std::vector<MaskAction> actions;

  bool selected(std::size_t i) const { return actions[i] != MaskAction::none; }
  std::size_t selected_count() const;
  std::vector<std::size_t> selected_positions() const;
};

/// Selects each non-special position independently with probability
/// rates.select, then replaces it with [MASK], a uniformly drawn non-special
/// id below vocab_size, or leaves it unchanged. Deterministic given seed.
MaskedBatch mask(std::span<const TokenId> sequence, const MaskRates& rates, std::size_t vocab_size,
                 std::uint64_t seed);

struct MlmLossReport {
  double loss = 0.0;
  std::size_t count = 0;
};

/// Mean negative log-likelihood (nats) of the targets. `predictions` maps a
/// selected position to a distribution over the vocabulary. Throws
/// Error(invalid_argument) for missing or unnormalized distributions. An
/// empty selection reports loss 0 with count 0.
MlmLossReport mlm_loss(const MaskedBatch& batch, const std::map<std::size_t, std::vector<double>>& predictions);

/// `{id, inputs: [...], targets: {"pos": id, ...}}`.
nlohmann::json masked_to_json(const MaskedBatch& batch, const std::string& id);

}  // namespace vulstyle
