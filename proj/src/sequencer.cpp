#include "vulstyle/sequencer.hpp"

#include <fmt/format.h>

#include "vulstyle/ast_reduce.hpp"
#include "vulstyle/cstyle.hpp"
#include "vulstyle/error.hpp"
#include "vulstyle/log.hpp"
#include "vulstyle/parallel.hpp"
#include "vulstyle/parser.hpp"

namespace vulstyle {

using nlohmann::json;

namespace {

ModalSequence base_sequence(const FunctionRecord& record, CorpusMode mode) {
  ModalSequence s;
  s.source = record.source;
  s.mode = mode;
  s.origin = record.id;
  s.label = record.label;
  return s;
}

bool utf8_boundary(std::string_view text, std::size_t pos) {
  return pos >= text.size() || (static_cast<unsigned char>(text[pos]) & 0xc0) != 0x80;
}

// Longest prefix of `chunk` encoding to at most `budget` tokens, cut on a
// UTF-8 boundary.
std::string_view fit_chunk(std::string_view chunk, std::size_t budget, const Tokenizer& tokenizer) {
  std::size_t best = 0;
  for (std::size_t len = 1; len <= chunk.size(); ++len) {
    if (!utf8_boundary(chunk, len)) continue;
    const std::size_t count = tokenizer.encode(chunk.substr(0, len)).size();
    if (count <= budget) {
      best = len;
    } else if (count > budget + 2) {
      break;
    }
  }
  return chunk.substr(0, best);
}

}  // namespace

std::string ModalSequence::text() const {
  if (!separated) return source;
  std::string out = source;
  out += ' ';
  out += kSeparatorText;
  if (!payload.empty()) {
    out += ' ';
    out += payload;
  }
  return out;
}

ModalSequence build_pretrain_sequence(const FunctionRecord& record) {
  ModalSequence s = base_sequence(record, CorpusMode::pretrain);
  if (record.language != Language::c_like) return s;
  try {
    s.payload = extract_nonterminals(parse(record.source)).to_string();
    s.separated = true;
  } catch (const ParseError& e) {
    warn(fmt::format("record '{}': {}; using source only", record.id, e.what()));
  }
  return s;
}

ModalSequence build_finetune_sequence(const FunctionRecord& record) {
  if (!record.label) {
    throw Error(ErrorCode::validation, fmt::format("record '{}' has no label", record.id));
  }
  ModalSequence s = base_sequence(record, CorpusMode::finetune);
  if (record.language != Language::c_like) return s;
  try {
    s.payload = to_annotation(extract_features(parse(record.source))).to_string();
    s.separated = true;
  } catch (const ParseError& e) {
    warn(fmt::format("record '{}': {}; using source only", record.id, e.what()));
  }
  return s;
}

ModalSequence build_sequence(const FunctionRecord& record, CorpusMode mode) {
  return mode == CorpusMode::pretrain ? build_pretrain_sequence(record) : build_finetune_sequence(record);
}

std::vector<ModalSequence> build_sequences(const std::vector<FunctionRecord>& records, CorpusMode mode,
                                           unsigned threads) {
  std::vector<ModalSequence> out(records.size());
  parallel_for(records.size(), threads, [&](std::size_t i) { out[i] = build_sequence(records[i], mode); });
  return out;
}

std::vector<TokenId> model_ids(const ModalSequence& sequence, const Tokenizer& tokenizer) {
  std::vector<TokenId> ids = tokenizer.encode_for_model(sequence.source);
  if (sequence.separated && !sequence.payload.empty()) {
    const auto payload = tokenizer.encode(sequence.payload);
    ids.insert(ids.end(), payload.begin(), payload.end());
    ids.push_back(kSepId);
  }
  return ids;
}

ModalSequence truncate(const ModalSequence& sequence, std::size_t max_tokens, const Tokenizer& tokenizer) {
  if (max_tokens < kMinTruncationLength) {
    throw Error(ErrorCode::invalid_argument,
                fmt::format("max_tokens must be at least {}, got {}", kMinTruncationLength, max_tokens));
  }
  const std::size_t source_tokens = tokenizer.encode(sequence.source).size();
  const std::size_t base = source_tokens + 2;
  const bool has_payload = sequence.separated && !sequence.payload.empty();
  const std::size_t payload_tokens = has_payload ? tokenizer.encode(sequence.payload).size() : 0;
  if (base + payload_tokens + (has_payload ? 1 : 0) <= max_tokens) return sequence;

  ModalSequence out = sequence;
  out.payload.clear();
  if (base <= max_tokens) {
    // Keep whole payload words while they fit before the closing separator.
    if (base + 1 < max_tokens) {
      std::size_t budget = max_tokens - base - 1;
      std::size_t kept = 0;
      for (std::string_view chunk : pretokenize(sequence.payload)) {
        const std::size_t n = tokenizer.encode(chunk).size();
        if (n > budget) break;
        budget -= n;
        kept += chunk.size();
      }
      out.payload = sequence.payload.substr(0, kept);
      while (!out.payload.empty() && out.payload.back() == ' ') out.payload.pop_back();
    }
    return out;
  }

  std::size_t budget = max_tokens - 2;
  std::size_t kept = 0;
  for (std::string_view chunk : pretokenize(sequence.source)) {
    const std::size_t n = tokenizer.encode(chunk).size();
    if (n <= budget) {
      budget -= n;
      kept += chunk.size();
      continue;
    }
    if (budget > 0) kept += fit_chunk(chunk, budget, tokenizer).size();
    break;
  }
  out.source = sequence.source.substr(0, kept);
  return out;
}

json sequence_to_json(const ModalSequence& sequence) {
  json j;
  j["id"] = sequence.origin;
  j["text"] = sequence.text();
  j["mode"] = to_string(sequence.mode);
  j["separated"] = sequence.separated;
  if (sequence.label) j["label"] = *sequence.label;
  return j;
}

ModalSequence sequence_from_json(const json& record) {
  if (!record.is_object()) throw Error(ErrorCode::schema, "sequence record must be an object");
  const auto text_it = record.find("text");
  if (text_it == record.end() || !text_it->is_string()) {
    throw Error(ErrorCode::schema, "sequence record needs a string 'text'");
  }
  ModalSequence s;
  const std::string text = text_it->get<std::string>();
  if (const auto it = record.find("id"); it != record.end()) {
    s.origin = it->is_string() ? it->get<std::string>() : it->dump();
  }
  if (const auto it = record.find("mode"); it != record.end() && it->is_string()) {
    const auto mode = mode_from_string(it->get<std::string>());
    if (!mode) throw Error(ErrorCode::schema, fmt::format("unknown mode '{}'", it->get<std::string>()));
    s.mode = *mode;
  }
  if (const auto it = record.find("label"); it != record.end() && !it->is_null()) {
    if (!it->is_number_integer() || (it->get<int>() != 0 && it->get<int>() != 1)) {
      throw Error(ErrorCode::schema, "label must be 0 or 1");
    }
    s.label = it->get<int>();
  }
  bool separated = text.find(kSeparatorText) != std::string::npos;
  if (const auto it = record.find("separated"); it != record.end() && it->is_boolean()) separated = it->get<bool>();
  s.separated = separated;
  if (!separated) {
    s.source = text;
    return s;
  }
  const std::string marker = fmt::format(" {}", kSeparatorText);
  const auto pos = text.rfind(marker);
  if (pos == std::string::npos) throw Error(ErrorCode::schema, "separated sequence lacks a separator");
  s.source = text.substr(0, pos);
  const std::size_t rest = pos + marker.size();
  if (rest < text.size()) {
    if (text[rest] != ' ') throw Error(ErrorCode::schema, "malformed separator");
    s.payload = text.substr(rest + 1);
  }
  return s;
}

void write_sequences(std::ostream& out, const std::vector<ModalSequence>& sequences) {
  for (const auto& s : sequences) {
    out << sequence_to_json(s).dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
  }
}

std::vector<ModalSequence> read_sequences(std::istream& in) {
  std::vector<ModalSequence> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::parse, fmt::format("line {}: {}", n, e.what()));
    }
    try {
      out.push_back(sequence_from_json(j));
    } catch (const Error& e) {
      throw Error(e.code(), fmt::format("line {}: {}", n, e.what()));
    }
  }
  return out;
}

}  // namespace vulstyle
