#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "vulstyle/corpus.hpp"
#include "vulstyle/synthetic.hpp"
#include "vulstyle/syntax_tree.hpp"

namespace vulstyle::testing {

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<std::filesystem::path> grammar_files() {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(std::filesystem::path(VULSTYLE_TEST_DATA) / "grammar")) {
    files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

// Grammar programs, generated functions and the C-like sample records.
inline std::vector<std::string> property_sources(std::size_t generated = 200) {
  std::vector<std::string> out;
  for (const auto& f : grammar_files()) out.push_back(read_text(f));
  for (const auto& r : generate({generated, 0.5, 0.9, 11})) out.push_back(r.source);
  for (const auto& r : load_corpus(VULSTYLE_SAMPLE_CORPUS, CorpusMode::pretrain)) {
    if (r.language == Language::c_like) out.push_back(r.source);
  }
  return out;
}

// Fresh per-process scratch directory.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("vulstyle_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  return dir;
}

// Plain recursive walk, kept separate from the library's traversals.
inline void visit(const Node& node, const std::function<void(const Node&)>& fn) {
  fn(node);
  for (const auto& c : node.children) visit(c, fn);
}

inline const Node* find_kind(const Node& node, NodeKind kind) {
  if (node.kind == kind) return &node;
  for (const auto& c : node.children) {
    if (const Node* hit = find_kind(c, kind)) return hit;
  }
  return nullptr;
}

}  // namespace vulstyle::testing
