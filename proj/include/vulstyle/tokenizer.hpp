#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace vulstyle {

using TokenId = std::uint32_t;

/// Reserved ids. Byte b is token kByteOffset + b.
inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr TokenId kClsId = 2;
inline constexpr TokenId kSepId = 3;
inline constexpr TokenId kMaskId = 4;
inline constexpr TokenId kSpecialCount = 5;
inline constexpr TokenId kByteOffset = kSpecialCount;
inline constexpr std::size_t kMinVocabSize = 256 + kSpecialCount;
inline constexpr std::size_t kDefaultVocabSize = 8192;
inline constexpr std::size_t kFullVocabSize = 50000;

inline bool is_special(TokenId id) { return id < kSpecialCount; }

struct BpeOptions {
  std::size_t vocab_size = kDefaultVocabSize;
  /// Words kept as single, never-merged tokens (e.g. syntax kind names).
  std::vector<std::string> atomic_words;
};

/// Byte-level BPE vocabulary: specials, the 256 byte tokens, optional atomic
/// words, then one token per merge rule in rank order.
class Tokenizer {
 public:
  /// Greedy most-frequent-pair merging; ties go to the lexicographically
  /// smaller (left bytes, right bytes) pair. Stops at vocab_size or when no
  /// pair occurs at least twice. Throws Error(invalid_argument) when
  /// vocab_size is below the floor or the corpus is empty.
  static Tokenizer train(std::span<const std::string> corpus, const BpeOptions& options);

  /// Reads tokens.txt and merges.txt from `dir`. Throws Error(io|schema).
  static Tokenizer load(const std::filesystem::path& dir);
  void save(const std::filesystem::path& dir) const;

  std::vector<TokenId> encode(std::string_view text) const;
  /// CLS + encode(text) + SEP.
  std::vector<TokenId> encode_for_model(std::string_view text) const;
  /// Concatenated bytes of non-special ids. Throws Error(invalid_argument)
  /// for ids outside the vocabulary.
  std::string decode(std::span<const TokenId> ids) const;

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  const std::vector<std::pair<TokenId, TokenId>>& merges() const { return merges_; }
  std::size_t atomic_count() const { return atomic_count_; }
  TokenId first_merge_id() const { return static_cast<TokenId>(kMinVocabSize + atomic_count_); }

  bool operator==(const Tokenizer& other) const {
    return tokens_ == other.tokens_ && merges_ == other.merges_;
  }

 private:
  Tokenizer() = default;
  void index();
  void encode_chunk(std::string_view chunk, std::vector<TokenId>& out) const;

  std::vector<std::string> tokens_;
  std::vector<std::pair<TokenId, TokenId>> merges_;
  std::size_t atomic_count_ = 0;
  std::unordered_map<std::uint64_t, std::uint32_t> merge_rank_;
  std::unordered_map<std::string, TokenId> atomic_ids_;
};

/// Whitespace pre-tokenization: every chunk is a run of non-space bytes with
/// at most one leading space, or a run of whitespace. Chunks concatenate back
/// to the input.
std::vector<std::string_view> pretokenize(std::string_view text);

}  // namespace vulstyle
