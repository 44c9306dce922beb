#include "vulstyle/synthetic.hpp"

#include <array>
#include <cmath>

#include <fmt/format.h>

#include "vulstyle/error.hpp"
#include "vulstyle/random.hpp"

namespace vulstyle {
namespace {

constexpr std::array kVerbs{"process", "handle", "parse", "copy", "read", "update", "decode", "fill", "load", "store"};
constexpr std::array kNouns{"buf", "packet", "header", "frame", "entry", "record", "msg", "block"};
constexpr std::array kDst{"buf", "dst", "out", "data", "tmp", "dest"};
constexpr std::array kSrc{"src", "in", "input", "payload", "p"};
constexpr std::array kLen{"len", "n", "size", "count"};
constexpr std::array kReturnTypes{"int", "static int", "long"};
constexpr std::array kCharTypes{"char", "unsigned char"};
constexpr std::array kLogs{"log_debug", "trace", "report"};

template <typename T, std::size_t N>
const T& pick(const std::array<T, N>& items, Rng& rng) {
  return items[rng.below(N)];
}

struct Names {
  std::string dst, src, len;
  std::string indent;
};

std::string pad(const Names& v, int depth) {
  std::string out;
  for (int i = 0; i < depth; ++i) out += v.indent;
  return out;
}

// Lines are written with '|' standing for one indentation unit.
std::string indent_lines(std::string text, const Names& v) {
  std::string out;
  for (const char c : text) {
    if (c == '|') {
      out += v.indent;
    } else {
      out += c;
    }
  }
  return out;
}

std::string condition(Rng& rng, const Names& v) {
  const auto k = rng.between(0, 255);
  switch (rng.below(6)) {
    case 0: return fmt::format("{} < {}", v.len, k);
    case 1: return fmt::format("{} > {}", v.len, k);
    case 2: return fmt::format("{} == NULL", v.src);
    case 3: return fmt::format("{} != NULL", v.src);
    case 4: return fmt::format("{}[0] != {}", v.dst, k);
    default: return fmt::format("{} != {}", v.len, k);
  }
}

std::string guarded_statement(Rng& rng, const Names& v) {
  switch (rng.below(4)) {
    case 0: return fmt::format("memcpy({}, {}, {});", v.dst, v.src, v.len);
    case 1: return "return -1;";
    case 2: return fmt::format("{} = {};", v.len, rng.between(1, 255));
    default: return fmt::format("{}[0] = {};", v.dst, rng.between(0, 255));
  }
}

std::string filler_block(Rng& rng, const Names& v) {
  const auto k = rng.between(2, 64);
  std::string text;
  switch (rng.below(8)) {
    case 0:
      text = fmt::format("|int i;\n|for (i = 0; i < {2}; i++) {{\n||{0}[i] = {1}[i] ^ {3};\n|}}\n", v.dst, v.src,
                         v.len, k);
      break;
    case 1:
      text = fmt::format("|int total = 0;\n|while ({0} > {1}) {{\n||total += {0};\n||{0}--;\n|}}\n", v.len, k);
      break;
    case 2:
      text = fmt::format("|{}(\"{}\", {});\n", pick(kLogs, rng), pick(kNouns, rng), v.len);
      break;
    case 3:
      text = fmt::format("|{}[0] = {};\n", v.dst, k);
      break;
    case 4:
      text = fmt::format("|switch ({}) {{\n|case 0:\n||return -1;\n|default:\n||break;\n|}}\n", v.len);
      break;
    case 5:
      text = fmt::format("|memset({}, 0, {});\n", v.dst, k);
      break;
    case 6:
      text = fmt::format(
          "|int r, c;\n|for (r = 0; r < {2}; r++) {{\n||for (c = 0; c < {3}; c++) {{\n|||while ({0}[c] == 0) "
          "{{\n||||{0}[c] = {1}[r];\n|||}}\n||}}\n|}}\n",
          v.dst, v.src, v.len, k);
      break;
    default:
      text = fmt::format("|int h = compute_hash({}, {});\n|{} = h % {};\n", v.src, v.len, v.len, k);
      break;
  }
  return indent_lines(std::move(text), v);
}

std::string guard_block(Rng& rng, const Names& v) {
  return fmt::format("{0}if ({1}) {{\n{0}{0}{2}\n{0}}}\n", pad(v, 1), condition(rng, v), guarded_statement(rng, v));
}

// Disabled code left in a comment. It reads like a guard but adds no nodes.
std::string commented_guard(Rng& rng, const Names& v) {
  if (rng.bernoulli(0.5)) {
    return fmt::format("{}// if ({}) {}\n", pad(v, 1), condition(rng, v), guarded_statement(rng, v));
  }
  return fmt::format("{0}/* if ({1}) {{\n{0}{0}{2}\n{0}}} */\n", pad(v, 1), condition(rng, v),
                     guarded_statement(rng, v));
}

std::string make_function(Rng& rng, bool planted) {
  static constexpr std::array kIndents{"  ", "    ", "\t"};
  const Names v{pick(kDst, rng), pick(kSrc, rng), pick(kLen, rng), pick(kIndents, rng)};
  std::vector<std::string> blocks;
  const auto fillers = rng.between(1, 4);
  for (std::int64_t i = 0; i < fillers; ++i) blocks.push_back(filler_block(rng, v));
  const auto comments = rng.between(0, 2);
  for (std::int64_t i = 0; i < comments; ++i) blocks.push_back(commented_guard(rng, v));
  // Safe functions carry at most two guards; the planted pattern adds three
  // more, one of them an unchecked copy, scattered among the other blocks.
  const auto guards = rng.between(0, 2);
  for (std::int64_t i = 0; i < guards; ++i) blocks.push_back(guard_block(rng, v));
  if (planted) {
    blocks.push_back(fmt::format("{0}if ({1}) {{\n{0}{0}memcpy({2}, {3}, {4});\n{0}}}\n", pad(v, 1),
                                 condition(rng, v), v.dst, v.src, v.len));
    for (int i = 0; i < 2; ++i) blocks.push_back(guard_block(rng, v));
  }
  rng.shuffle(std::span(blocks));
  std::string body;
  for (const auto& b : blocks) body += b;
  const std::string ret = rng.bernoulli(0.5) ? "0" : v.len;
  return fmt::format("{} {}_{}({} *{}, const char *{}, int {}) {{\n{}{}return {};\n}}\n", pick(kReturnTypes, rng),
                     pick(kVerbs, rng), pick(kNouns, rng), pick(kCharTypes, rng), v.dst, v.src, v.len, body,
                     v.indent, ret);
}

}  // namespace

void GeneratorSpec::validate() const {
  if (n < 10) throw Error(ErrorCode::invalid_argument, fmt::format("corpus size must be at least 10, got {}", n));
  if (!(vulnerable_fraction > 0.0 && vulnerable_fraction < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "vulnerable_fraction must be in (0,1)");
  }
  if (!(signal_strength >= 0.0 && signal_strength <= 1.0)) {
    throw Error(ErrorCode::invalid_argument, "signal_strength must be in [0,1]");
  }
}

nlohmann::json GeneratorSpec::to_json() const {
  return {{"n", n}, {"vulnerable_fraction", vulnerable_fraction}, {"signal_strength", signal_strength}, {"seed", seed}};
}

std::vector<FunctionRecord> generate(const GeneratorSpec& spec) {
  spec.validate();
  const auto vulnerable = static_cast<std::size_t>(std::llround(static_cast<double>(spec.n) * spec.vulnerable_fraction));
  std::vector<int> labels(spec.n, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(vulnerable), 1);
  Rng rng(spec.seed);
  rng.shuffle(std::span(labels));

  std::vector<FunctionRecord> out;
  out.reserve(spec.n);
  const int width = static_cast<int>(std::to_string(spec.n).size());
  for (std::size_t i = 0; i < spec.n; ++i) {
    Rng item(mix_seed(spec.seed, i));
    const bool planted = labels[i] == 1 && item.bernoulli(spec.signal_strength);
    FunctionRecord r;
    r.id = fmt::format("syn-{:0{}}", i, width);
    r.source = make_function(item, planted);
    r.label = labels[i];
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace vulstyle
