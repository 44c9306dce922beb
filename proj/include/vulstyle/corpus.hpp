#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace vulstyle {

enum class Language { c_like, other };
enum class Split { train, validation, test };
enum class CorpusMode { pretrain, finetune };

std::string_view to_string(Language language);
std::string_view to_string(Split split);
std::string_view to_string(CorpusMode mode);
std::optional<Split> split_from_string(std::string_view s);
std::optional<CorpusMode> mode_from_string(std::string_view s);

/// One source function. Labels follow the benchmark convention: 1 marks a
/// vulnerable function, 0 a safe one.
struct FunctionRecord {
  std::string id;
  std::string source;
  Language language = Language::c_like;
  std::optional<int> label;
  std::optional<Split> split;

  bool operator==(const FunctionRecord&) const = default;
};

/// Reads line-delimited records `{"func": ..., "target": 0|1, "id": ...}`.
/// Blank lines are skipped; a missing id becomes the zero-based line index.
/// Throws Error(parse) for malformed lines and Error(validation) for missing
/// labels (finetune mode) or duplicate ids, both naming the line.
std::vector<FunctionRecord> read_corpus(std::istream& in, CorpusMode mode);
std::vector<FunctionRecord> load_corpus(const std::filesystem::path& path, CorpusMode mode);

nlohmann::json record_to_json(const FunctionRecord& record);
void write_corpus(std::ostream& out, const std::vector<FunctionRecord>& records);

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

/// Assigns a split to every record that lacks one; records that already carry
/// a split pass through untouched. Validation and test sizes are
/// floor(n * ratio) over the unassigned records, the remainder goes to train.
/// Assignment depends only on the set of ids and the seed, not input order.
std::vector<FunctionRecord> split_corpus(std::vector<FunctionRecord> records, SplitRatios ratios,
                                         std::uint64_t seed);

struct ClassWeights {
  double safe = 1.0;
  double vulnerable = 1.0;

  double for_label(int label) const { return label == 1 ? vulnerable : safe; }
};

/// Inverse-frequency weights total / (2 * count_c) over labeled records.
/// Throws Error(validation) when a class has no members.
ClassWeights class_weights(const std::vector<FunctionRecord>& records);

struct CorpusStats {
  std::size_t total = 0;
  std::size_t vulnerable = 0;
  std::size_t non_vulnerable = 0;
  std::size_t unlabeled = 0;
  /// Indexed by Split; records without a split are counted in `unassigned`.
  std::array<std::size_t, 3> per_split{};
  std::size_t unassigned = 0;

  nlohmann::json to_json() const;
};

CorpusStats corpus_stats(const std::vector<FunctionRecord>& records);

}  // namespace vulstyle
