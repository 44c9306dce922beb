#include <doctest.h>

#include <filesystem>

#include "test_support.hpp"
#include "vulstyle/error.hpp"
#include "vulstyle/random.hpp"
#include "vulstyle/tokenizer.hpp"

using namespace vulstyle;

namespace {

constexpr TokenId byte_id(char c) { return kByteOffset + static_cast<unsigned char>(c); }

Tokenizer toy() {
  const std::vector<std::string> corpus{"aaab aab"};
  return Tokenizer::train(corpus, {263, {}});
}

std::string random_bytes(Rng& rng, std::size_t max_len) {
  std::string s(rng.below(max_len + 1), '\0');
  for (auto& c : s) {
    // Bias toward text-like bytes so merges actually fire.
    c = rng.bernoulli(0.7) ? "abc d\n{}();=x"[rng.below(13)] : static_cast<char>(rng.below(256));
  }
  return s;
}

Tokenizer trained_on_sources() {
  std::vector<std::string> corpus;
  for (const auto& r : generate({300, 0.5, 0.9, 4})) corpus.push_back(r.source);
  return Tokenizer::train(corpus, {1200, {}});
}

}  // namespace

TEST_CASE("toy corpus: hand-run merge table") {
  const auto tok = toy();
  // Chunks "aaab" and " aab": (a,a) occurs 3 times, every other pair at most twice.
  REQUIRE(tok.merges().size() == 1);
  CHECK(tok.merges()[0] == std::pair<TokenId, TokenId>{byte_id('a'), byte_id('a')});
  CHECK(tok.size() == 262);
  CHECK(tok.token(261) == "aa");
  CHECK(tok.encode("aaab") == std::vector<TokenId>{261, byte_id('a'), byte_id('b')});
  CHECK(tok.encode("aaaa") == std::vector<TokenId>{261, 261});
}

TEST_CASE("vocabulary layout") {
  const auto tok = toy();
  CHECK(tok.token(kPadId) == "[PAD]");
  CHECK(tok.token(kMaskId) == "[MASK]");
  for (int b = 0; b < 256; ++b) CHECK(tok.token(kByteOffset + b) == std::string(1, static_cast<char>(b)));
  for (std::size_t r = 0; r < tok.merges().size(); ++r) {
    const auto [l, rr] = tok.merges()[r];
    CHECK(l < tok.first_merge_id() + r);
    CHECK(rr < tok.first_merge_id() + r);
  }
}

TEST_CASE("training preconditions") {
  const std::vector<std::string> corpus{"x"};
  CHECK_THROWS_AS(Tokenizer::train(corpus, {260, {}}), Error);
  CHECK_THROWS_AS(Tokenizer::train(std::span<const std::string>{}, {300, {}}), Error);
}

TEST_CASE("single repeated byte yields no merges only when no pair repeats") {
  const std::vector<std::string> one{"q"};
  const auto tok = Tokenizer::train(one, {kMinVocabSize + 10, {}});
  CHECK(tok.merges().empty());
  CHECK(tok.size() == kMinVocabSize);
}

TEST_CASE("training is deterministic") {
  const auto a = trained_on_sources();
  const auto b = trained_on_sources();
  CHECK(a == b);
  CHECK(a.merges().size() > 100);
  CHECK(a.size() <= 1200);
}

TEST_CASE("empty text") {
  const auto tok = toy();
  CHECK(tok.encode("").empty());
  CHECK(tok.encode_for_model("") == std::vector<TokenId>{kClsId, kSepId});
  CHECK(tok.decode(std::vector<TokenId>{}).empty());
}

TEST_CASE("decode rejects out-of-range ids") {
  const auto tok = toy();
  const std::vector<TokenId> bad{static_cast<TokenId>(tok.size())};
  CHECK_THROWS_AS(tok.decode(bad), Error);
}

TEST_CASE("round-trip, compression and specials on random bytes") {
  const auto tok = trained_on_sources();
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto text = random_bytes(rng, 200);
    const auto ids = tok.encode(text);
    CHECK(tok.decode(ids) == text);
    CHECK(ids.size() <= text.size());
    for (const auto id : ids) {
      CHECK(id < tok.size());
      CHECK(id != kUnkId);
    }
    const auto model = tok.encode_for_model(text);
    CHECK(model.front() == kClsId);
    CHECK(model.back() == kSepId);
    CHECK(tok.decode(model) == text);
  }
}

TEST_CASE("pretokenize chunks concatenate to the input") {
  CHECK(pretokenize("IfStatement=2 ReturnStatement=1") ==
        std::vector<std::string_view>{"IfStatement=2", " ReturnStatement=1"});
  CHECK(pretokenize("a  b\n") == std::vector<std::string_view>{"a", " ", " b", "\n"});
  Rng rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const auto text = random_bytes(rng, 80);
    std::string joined;
    for (const auto c : pretokenize(text)) {
      CHECK_FALSE(c.empty());
      joined += c;
    }
    CHECK(joined == text);
  }
}

TEST_CASE("atomic words stay whole") {
  const std::vector<std::string> corpus{"IfStatement IfStatement IfStatement Iffy Iffy", "x IfStatement"};
  const auto tok = Tokenizer::train(corpus, {400, {"IfStatement"}});
  CHECK(tok.atomic_count() == 1);
  const TokenId atom = static_cast<TokenId>(kMinVocabSize);
  CHECK(tok.token(atom) == "IfStatement");
  const auto ids = tok.encode("IfStatement Iffy IfStatements");
  CHECK(ids.front() == atom);
  CHECK(std::count(ids.begin(), ids.end(), atom) == 1);
  CHECK(tok.decode(ids) == "IfStatement Iffy IfStatements");
  for (const auto& [l, r] : tok.merges()) {
    CHECK(l != atom);
    CHECK(r != atom);
  }
}

TEST_CASE("save and load round-trip") {
  const auto dir = testing::temp_dir("tok");
  const auto corpus = std::vector<std::string>{"int main() { return 0; }\n\tint x = \"\\\\\";", "x \xff\x01 y y"};
  const auto tok = Tokenizer::train(corpus, {300, {"Atomic Word"}});
  tok.save(dir);
  CHECK(std::filesystem::exists(dir / "tokens.txt"));
  CHECK(std::filesystem::exists(dir / "merges.txt"));
  const auto back = Tokenizer::load(dir);
  CHECK(back == tok);
  CHECK(back.atomic_count() == tok.atomic_count());
  CHECK(back.encode("int x = y y;") == tok.encode("int x = y y;"));
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(Tokenizer::load(dir), Error);
}
