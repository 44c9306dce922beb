#pragma once

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vulstyle/corpus.hpp"
#include "vulstyle/tokenizer.hpp"

namespace vulstyle {

inline constexpr std::string_view kSeparatorText = "[SEP]";
inline constexpr std::size_t kMinTruncationLength = 8;

/// A model input: the function text, and for C-like records a modality
/// payload (reduced-AST kinds when pre-training, stylometry annotation when
/// fine-tuning) after a separator.
struct ModalSequence {
  std::string source;
  std::string payload;
  /// False for records that carry the function text alone.
  bool separated = false;
  CorpusMode mode = CorpusMode::pretrain;
  std::string origin;
  std::optional<int> label;

  /// `source [SEP] payload`, `source [SEP]` for an empty payload, or the
  /// source verbatim when not separated.
  std::string text() const;

  bool operator==(const ModalSequence&) const = default;
};

/// Falls back to the source alone (with a warning) when a C-like record
/// cannot be parsed.
ModalSequence build_pretrain_sequence(const FunctionRecord& record);
/// Throws Error(validation) when the record has no label.
ModalSequence build_finetune_sequence(const FunctionRecord& record);
ModalSequence build_sequence(const FunctionRecord& record, CorpusMode mode);

/// Order-stable batch construction on up to `threads` workers.
std::vector<ModalSequence> build_sequences(const std::vector<FunctionRecord>& records, CorpusMode mode,
                                           unsigned threads = 1);

/// [CLS] source [SEP], followed by payload [SEP] when the payload is non-empty.
std::vector<TokenId> model_ids(const ModalSequence& sequence, const Tokenizer& tokenizer);

/// Shortens the sequence until model_ids fits in max_tokens. Whole payload
/// words are dropped from the end first; only then is the source cut from
/// its end. Throws Error(invalid_argument) when max_tokens < 8.
ModalSequence truncate(const ModalSequence& sequence, std::size_t max_tokens, const Tokenizer& tokenizer);

/// `{id, text, label?, mode, separated}` records, one per line.
nlohmann::json sequence_to_json(const ModalSequence& sequence);
ModalSequence sequence_from_json(const nlohmann::json& record);
void write_sequences(std::ostream& out, const std::vector<ModalSequence>& sequences);
/// Throws Error(parse|schema) naming the offending line.
std::vector<ModalSequence> read_sequences(std::istream& in);

}  // namespace vulstyle
