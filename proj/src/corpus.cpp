#include "vulstyle/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include <fmt/format.h>

#include "vulstyle/error.hpp"
#include "vulstyle/random.hpp"

namespace vulstyle {

using nlohmann::json;

std::string_view to_string(Language language) { return language == Language::c_like ? "c_like" : "other"; }

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "train";
}

std::string_view to_string(CorpusMode mode) { return mode == CorpusMode::pretrain ? "pretrain" : "finetune"; }

std::optional<Split> split_from_string(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "validation" || s == "valid" || s == "val") return Split::validation;
  if (s == "test") return Split::test;
  return std::nullopt;
}

std::optional<CorpusMode> mode_from_string(std::string_view s) {
  if (s == "pretrain") return CorpusMode::pretrain;
  if (s == "finetune") return CorpusMode::finetune;
  return std::nullopt;
}

namespace {

Language language_from(std::string_view s) {
  static const std::unordered_set<std::string_view> c_family{"c_like", "c", "C", "cpp", "c++", "C++", "C/C++"};
  return c_family.contains(s) ? Language::c_like : Language::other;
}

[[noreturn]] void line_error(ErrorCode code, std::size_t line, const std::string& what) {
  throw Error(code, fmt::format("line {}: {}", line, what));
}

FunctionRecord parse_line(const std::string& text, std::size_t index, CorpusMode mode) {
  const std::size_t line = index + 1;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    line_error(ErrorCode::parse, line, fmt::format("malformed record ({})", e.what()));
  }
  if (!j.is_object()) line_error(ErrorCode::parse, line, "record is not an object");

  FunctionRecord r;
  const auto func = j.find("func");
  if (func == j.end() || !func->is_string()) line_error(ErrorCode::parse, line, "missing string field \"func\"");
  r.source = func->get<std::string>();

  if (const auto id = j.find("id"); id != j.end() && !id->is_null()) {
    if (id->is_string()) {
      r.id = id->get<std::string>();
    } else if (id->is_number_integer()) {
      r.id = std::to_string(id->get<std::int64_t>());
    } else {
      line_error(ErrorCode::parse, line, "field \"id\" must be a string or integer");
    }
  } else {
    r.id = std::to_string(index);
  }

  if (const auto target = j.find("target"); target != j.end() && !target->is_null()) {
    int label = -1;
    if (target->is_boolean()) {
      label = target->get<bool>() ? 1 : 0;
    } else if (target->is_number_integer()) {
      label = static_cast<int>(target->get<std::int64_t>());
    }
    if (label != 0 && label != 1) line_error(ErrorCode::parse, line, "field \"target\" must be 0 or 1");
    r.label = label;
  } else if (mode == CorpusMode::finetune) {
    line_error(ErrorCode::validation, line, "fine-tuning record without \"target\" label");
  }

  for (const char* key : {"language", "lang"}) {
    if (const auto lang = j.find(key); lang != j.end() && lang->is_string()) {
      r.language = language_from(lang->get<std::string>());
    }
  }

  if (const auto split = j.find("split"); split != j.end() && !split->is_null()) {
    const auto s = split->is_string() ? split_from_string(split->get<std::string>()) : std::nullopt;
    if (!s) line_error(ErrorCode::parse, line, "field \"split\" must be train, validation or test");
    r.split = s;
  }
  return r;
}

}  // namespace

std::vector<FunctionRecord> read_corpus(std::istream& in, CorpusMode mode) {
  std::vector<FunctionRecord> records;
  std::unordered_set<std::string> seen;
  std::string text;
  for (std::size_t index = 0; std::getline(in, text); ++index) {
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find_first_not_of(" \t") == std::string::npos) continue;
    FunctionRecord r = parse_line(text, index, mode);
    if (!seen.insert(r.id).second) line_error(ErrorCode::validation, index + 1, fmt::format("duplicate id '{}'", r.id));
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<FunctionRecord> load_corpus(const std::filesystem::path& path, CorpusMode mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, fmt::format("cannot open corpus '{}'", path.string()));
  return read_corpus(in, mode);
}

json record_to_json(const FunctionRecord& record) {
  json j;
  j["id"] = record.id;
  j["func"] = record.source;
  if (record.label) j["target"] = *record.label;
  if (record.language != Language::c_like) j["language"] = to_string(record.language);
  if (record.split) j["split"] = to_string(*record.split);
  return j;
}

void write_corpus(std::ostream& out, const std::vector<FunctionRecord>& records) {
  for (const FunctionRecord& r : records) {
    out << record_to_json(r).dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
  }
}

std::vector<FunctionRecord> split_corpus(std::vector<FunctionRecord> records, SplitRatios ratios,
                                         std::uint64_t seed) {
  const double sum = ratios.train + ratios.validation + ratios.test;
  if (std::abs(sum - 1.0) > 1e-9 || ratios.train < 0 || ratios.validation < 0 || ratios.test < 0) {
    throw Error(ErrorCode::invalid_argument,
                fmt::format("split ratios must be non-negative and sum to 1 (got {})", sum));
  }

  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].split) pending.push_back(i);
  }
  std::sort(pending.begin(), pending.end(),
            [&](std::size_t a, std::size_t b) { return records[a].id < records[b].id; });
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(pending));

  // The epsilon keeps exact products such as 10 * 0.1 from flooring down.
  const auto take = [&](double ratio) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(pending.size()) * ratio + 1e-9));
  };
  const std::size_t n_validation = take(ratios.validation);
  const std::size_t n_test = std::min(take(ratios.test), pending.size() - n_validation);
  const std::size_t n_train = pending.size() - n_validation - n_test;

  for (std::size_t k = 0; k < pending.size(); ++k) {
    Split s = Split::test;
    if (k < n_train) {
      s = Split::train;
    } else if (k < n_train + n_validation) {
      s = Split::validation;
    }
    records[pending[k]].split = s;
  }
  return records;
}

ClassWeights class_weights(const std::vector<FunctionRecord>& records) {
  std::size_t vulnerable = 0;
  std::size_t safe = 0;
  for (const FunctionRecord& r : records) {
    if (!r.label) continue;
    (*r.label == 1 ? vulnerable : safe) += 1;
  }
  if (vulnerable == 0 || safe == 0) {
    throw Error(ErrorCode::validation,
                fmt::format("class weights need both classes (vulnerable={}, safe={})", vulnerable, safe));
  }
  const double total = static_cast<double>(vulnerable + safe);
  return ClassWeights{total / (2.0 * static_cast<double>(safe)), total / (2.0 * static_cast<double>(vulnerable))};
}

json CorpusStats::to_json() const {
  return json{{"total", total},
              {"vulnerable", vulnerable},
              {"non_vulnerable", non_vulnerable},
              {"unlabeled", unlabeled},
              {"per_split",
               {{"train", per_split[0]}, {"validation", per_split[1]}, {"test", per_split[2]}, {"unassigned", unassigned}}}};
}

CorpusStats corpus_stats(const std::vector<FunctionRecord>& records) {
  CorpusStats s;
  s.total = records.size();
  for (const FunctionRecord& r : records) {
    if (!r.label) {
      ++s.unlabeled;
    } else if (*r.label == 1) {
      ++s.vulnerable;
    } else {
      ++s.non_vulnerable;
    }
    if (r.split) {
      ++s.per_split[static_cast<std::size_t>(*r.split)];
    } else {
      ++s.unassigned;
    }
  }
  return s;
}

}  // namespace vulstyle
