#include "vulstyle/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <unordered_set>

#include <fmt/format.h>

#include "vulstyle/error.hpp"

namespace vulstyle {
namespace {

constexpr std::uint64_t pair_key(TokenId a, TokenId b) { return (static_cast<std::uint64_t>(a) << 32) | b; }

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

const std::array<std::string_view, kSpecialCount> kSpecialNames{"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};

std::string escape_token(std::string_view bytes) {
  std::string out;
  for (const char ch : bytes) {
    const auto c = static_cast<unsigned char>(ch);
    if (c > 0x20 && c < 0x7f && c != '\\') {
      out += ch;
    } else {
      out += fmt::format("\\x{:02x}", c);
    }
  }
  return out;
}

std::string unescape_token(std::string_view text, std::size_t line) {
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '\\') {
      out += text[i];
      continue;
    }
    if (i + 3 >= text.size() || text[i + 1] != 'x') {
      throw Error(ErrorCode::schema, fmt::format("tokens.txt line {}: bad escape", line));
    }
    const std::string hex(text.substr(i + 2, 2));
    std::size_t used = 0;
    int value = 0;
    try {
      value = std::stoi(hex, &used, 16);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != 2) throw Error(ErrorCode::schema, fmt::format("tokens.txt line {}: bad escape", line));
    out += static_cast<char>(value);
    i += 3;
  }
  return out;
}

}  // namespace

std::vector<std::string_view> pretokenize(std::string_view text) {
  std::vector<std::string_view> chunks;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    std::size_t j = i;
    if (is_space(static_cast<unsigned char>(text[i]))) {
      while (j < n && is_space(static_cast<unsigned char>(text[j]))) ++j;
      // A single trailing space before a word travels with the word.
      if (j < n && text[j - 1] == ' ') {
        if (j - 1 > i) chunks.push_back(text.substr(i, j - 1 - i));
        i = j - 1;
        j = i + 1;
      } else {
        chunks.push_back(text.substr(i, j - i));
        i = j;
        continue;
      }
    }
    while (j < n && !is_space(static_cast<unsigned char>(text[j]))) ++j;
    chunks.push_back(text.substr(i, j - i));
    i = j;
  }
  return chunks;
}

void Tokenizer::index() {
  merge_rank_.clear();
  atomic_ids_.clear();
  for (std::size_t r = 0; r < merges_.size(); ++r) {
    merge_rank_.emplace(pair_key(merges_[r].first, merges_[r].second), static_cast<std::uint32_t>(r));
  }
  for (std::size_t k = 0; k < atomic_count_; ++k) {
    atomic_ids_.emplace(tokens_[kMinVocabSize + k], static_cast<TokenId>(kMinVocabSize + k));
  }
}

Tokenizer Tokenizer::train(std::span<const std::string> corpus, const BpeOptions& options) {
  if (options.vocab_size < kMinVocabSize + options.atomic_words.size()) {
    throw Error(ErrorCode::invalid_argument,
                fmt::format("vocab_size {} is below the minimum {}", options.vocab_size,
                            kMinVocabSize + options.atomic_words.size()));
  }
  if (corpus.empty()) throw Error(ErrorCode::invalid_argument, "cannot train a tokenizer on an empty corpus");

  Tokenizer tk;
  for (std::string_view s : kSpecialNames) tk.tokens_.emplace_back(s);
  for (int b = 0; b < 256; ++b) tk.tokens_.emplace_back(1, static_cast<char>(b));
  {
    std::set<std::string> unique(options.atomic_words.begin(), options.atomic_words.end());
    for (const std::string& w : unique) tk.tokens_.push_back(w);
    tk.atomic_count_ = unique.size();
  }
  tk.index();

  // Distinct chunks with their frequencies, ordered for determinism.
  std::map<std::string, std::int64_t> chunk_counts;
  for (const std::string& text : corpus) {
    for (std::string_view chunk : pretokenize(text)) ++chunk_counts[std::string(chunk)];
  }

  struct Word {
    std::vector<TokenId> symbols;
    std::int64_t freq;
  };
  std::vector<Word> words;
  words.reserve(chunk_counts.size());
  for (const auto& [chunk, freq] : chunk_counts) {
    Word w{{}, freq};
    tk.encode_chunk(chunk, w.symbols);  // bytes, or an atomic id
    words.push_back(std::move(w));
  }

  const auto mergeable = [&](TokenId a, TokenId b) {
    const auto atomic = [&](TokenId id) { return id >= kMinVocabSize && id < tk.first_merge_id(); };
    return !atomic(a) && !atomic(b);
  };

  std::unordered_map<std::uint64_t, std::int64_t> pair_counts;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> where;
  for (std::uint32_t w = 0; w < words.size(); ++w) {
    const auto& s = words[w].symbols;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      if (!mergeable(s[i], s[i + 1])) continue;
      const auto key = pair_key(s[i], s[i + 1]);
      pair_counts[key] += words[w].freq;
      where[key].push_back(w);
    }
  }

  struct Candidate {
    std::int64_t count;
    TokenId a;
    TokenId b;
  };
  const auto& tokens = tk.tokens_;
  const auto better = [&tokens](const Candidate& x, const Candidate& y) {
    if (x.count != y.count) return x.count > y.count;
    if (tokens[x.a] != tokens[y.a]) return tokens[x.a] < tokens[y.a];
    if (tokens[x.b] != tokens[y.b]) return tokens[x.b] < tokens[y.b];
    return pair_key(x.a, x.b) < pair_key(y.a, y.b);
  };
  std::set<Candidate, decltype(better)> queue(better);
  for (const auto& [key, count] : pair_counts) {
    queue.insert({count, static_cast<TokenId>(key >> 32), static_cast<TokenId>(key & 0xffffffffu)});
  }

  while (tk.tokens_.size() < options.vocab_size && !queue.empty()) {
    const Candidate best = *queue.begin();
    if (best.count < 2) break;
    queue.erase(queue.begin());
    const auto best_key = pair_key(best.a, best.b);
    const TokenId merged = static_cast<TokenId>(tk.tokens_.size());
    tk.tokens_.push_back(tk.tokens_[best.a] + tk.tokens_[best.b]);
    tk.merges_.emplace_back(best.a, best.b);

    std::unordered_map<std::uint64_t, std::int64_t> delta;
    std::vector<std::uint32_t> affected = std::move(where[best_key]);
    where.erase(best_key);
    std::sort(affected.begin(), affected.end());
    affected.erase(std::unique(affected.begin(), affected.end()), affected.end());

    for (const std::uint32_t w : affected) {
      auto& s = words[w].symbols;
      const std::int64_t f = words[w].freq;
      bool present = false;
      for (std::size_t i = 0; i + 1 < s.size(); ++i) present = present || (s[i] == best.a && s[i + 1] == best.b);
      if (!present) continue;
      for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        if (mergeable(s[i], s[i + 1])) delta[pair_key(s[i], s[i + 1])] -= f;
      }
      std::vector<TokenId> next;
      next.reserve(s.size());
      for (std::size_t i = 0; i < s.size();) {
        if (i + 1 < s.size() && s[i] == best.a && s[i + 1] == best.b) {
          next.push_back(merged);
          i += 2;
        } else {
          next.push_back(s[i]);
          ++i;
        }
      }
      s = std::move(next);
      for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        if (!mergeable(s[i], s[i + 1])) continue;
        const auto key = pair_key(s[i], s[i + 1]);
        delta[key] += f;
        where[key].push_back(w);
      }
    }

    for (const auto& [key, d] : delta) {
      if (d == 0 || key == best_key) {
        if (key == best_key) pair_counts.erase(key);
        continue;
      }
      const TokenId a = static_cast<TokenId>(key >> 32);
      const TokenId b = static_cast<TokenId>(key & 0xffffffffu);
      auto& count = pair_counts[key];
      if (count > 0) queue.erase({count, a, b});
      count += d;
      if (count > 0) {
        queue.insert({count, a, b});
      } else {
        pair_counts.erase(key);
      }
    }
    pair_counts.erase(best_key);
  }

  tk.index();
  return tk;
}

void Tokenizer::encode_chunk(std::string_view chunk, std::vector<TokenId>& out) const {
  if (atomic_count_ > 0) {
    const bool spaced = chunk.size() > 1 && chunk.front() == ' ';
    const auto it = atomic_ids_.find(std::string(spaced ? chunk.substr(1) : chunk));
    if (it != atomic_ids_.end()) {
      if (spaced) out.push_back(kByteOffset + static_cast<TokenId>(' '));
      out.push_back(it->second);
      return;
    }
  }
  std::vector<TokenId> symbols;
  symbols.reserve(chunk.size());
  for (const char c : chunk) symbols.push_back(kByteOffset + static_cast<unsigned char>(c));
  while (symbols.size() > 1) {
    std::uint32_t best_rank = UINT32_MAX;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      const auto it = merge_rank_.find(pair_key(symbols[i], symbols[i + 1]));
      if (it != merge_rank_.end()) best_rank = std::min(best_rank, it->second);
    }
    if (best_rank == UINT32_MAX) break;
    const auto [a, b] = merges_[best_rank];
    const TokenId merged = first_merge_id() + best_rank;
    std::size_t w = 0;
    for (std::size_t i = 0; i < symbols.size();) {
      if (i + 1 < symbols.size() && symbols[i] == a && symbols[i + 1] == b) {
        symbols[w++] = merged;
        i += 2;
      } else {
        symbols[w++] = symbols[i++];
      }
    }
    symbols.resize(w);
  }
  out.insert(out.end(), symbols.begin(), symbols.end());
}

std::vector<TokenId> Tokenizer::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  ids.reserve(text.size() / 2);
  for (std::string_view chunk : pretokenize(text)) encode_chunk(chunk, ids);
  return ids;
}

std::vector<TokenId> Tokenizer::encode_for_model(std::string_view text) const {
  std::vector<TokenId> ids{kClsId};
  for (std::string_view chunk : pretokenize(text)) encode_chunk(chunk, ids);
  ids.push_back(kSepId);
  return ids;
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (const TokenId id : ids) {
    if (id >= tokens_.size()) {
      throw Error(ErrorCode::invalid_argument, fmt::format("token id {} outside vocabulary of {}", id, tokens_.size()));
    }
    if (!is_special(id)) out += tokens_[id];
  }
  return out;
}

void Tokenizer::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream tokens(dir / "tokens.txt", std::ios::binary);
  std::ofstream merges(dir / "merges.txt", std::ios::binary);
  if (!tokens || !merges) throw Error(ErrorCode::io, fmt::format("cannot write vocabulary to '{}'", dir.string()));
  for (std::size_t id = 0; id < tokens_.size(); ++id) {
    tokens << (id < kSpecialCount ? std::string(tokens_[id]) : escape_token(tokens_[id])) << '\n';
  }
  for (const auto& [a, b] : merges_) merges << a << ' ' << b << '\n';
}

Tokenizer Tokenizer::load(const std::filesystem::path& dir) {
  std::ifstream tokens_in(dir / "tokens.txt", std::ios::binary);
  std::ifstream merges_in(dir / "merges.txt", std::ios::binary);
  if (!tokens_in || !merges_in) {
    throw Error(ErrorCode::io, fmt::format("cannot read vocabulary from '{}'", dir.string()));
  }
  Tokenizer tk;
  std::string line;
  for (std::size_t n = 1; std::getline(tokens_in, line); ++n) {
    tk.tokens_.push_back(n <= kSpecialCount ? line : unescape_token(line, n));
  }
  if (tk.tokens_.size() < kMinVocabSize) throw Error(ErrorCode::schema, "tokens.txt is missing base tokens");
  for (TokenId b = 0; b < 256; ++b) {
    if (tk.tokens_[kByteOffset + b] != std::string(1, static_cast<char>(b))) {
      throw Error(ErrorCode::schema, fmt::format("tokens.txt line {}: expected byte token {}", kByteOffset + b + 1, b));
    }
  }
  for (std::size_t n = 1; std::getline(merges_in, line); ++n) {
    unsigned long a = 0;
    unsigned long b = 0;
    if (std::sscanf(line.c_str(), "%lu %lu", &a, &b) != 2) {
      throw Error(ErrorCode::schema, fmt::format("merges.txt line {}: expected two ids", n));
    }
    tk.merges_.emplace_back(static_cast<TokenId>(a), static_cast<TokenId>(b));
  }
  if (tk.merges_.size() > tk.tokens_.size() - kMinVocabSize) {
    throw Error(ErrorCode::schema, "more merges than merged tokens");
  }
  tk.atomic_count_ = tk.tokens_.size() - kMinVocabSize - tk.merges_.size();
  for (std::size_t r = 0; r < tk.merges_.size(); ++r) {
    const auto [a, b] = tk.merges_[r];
    const TokenId id = tk.first_merge_id() + static_cast<TokenId>(r);
    if (a >= id || b >= id || is_special(a) || is_special(b) || tk.tokens_[id] != tk.tokens_[a] + tk.tokens_[b]) {
      throw Error(ErrorCode::schema, fmt::format("merges.txt line {}: rule inconsistent with tokens.txt", r + 1));
    }
  }
  tk.index();
  return tk;
}

}  // namespace vulstyle
