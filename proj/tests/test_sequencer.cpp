#include <doctest.h>

#include <sstream>

#include "test_support.hpp"
#include "vulstyle/ast_reduce.hpp"
#include "vulstyle/cstyle.hpp"
#include "vulstyle/error.hpp"
#include "vulstyle/log.hpp"
#include "vulstyle/parser.hpp"
#include "vulstyle/random.hpp"
#include "vulstyle/sequencer.hpp"

using namespace vulstyle;
using namespace vulstyle::testing;

namespace {

FunctionRecord record(std::string source, std::optional<int> label = 1, Language lang = Language::c_like) {
  return {"r", std::move(source), lang, label, std::nullopt};
}

const Tokenizer& shared_tokenizer() {
  static const Tokenizer tok = [] {
    std::vector<std::string> corpus;
    for (const auto& r : generate({200, 0.5, 0.9, 8})) {
      const auto s = build_finetune_sequence(r);
      corpus.push_back(s.source);
      corpus.push_back(s.payload);
      corpus.push_back(build_pretrain_sequence(r).payload);
    }
    return Tokenizer::train(corpus, {1500, {}});
  }();
  return tok;
}

bool has_feature_token(const std::string& payload) { return payload.find('=') != std::string::npos; }

}  // namespace

TEST_CASE("pretrain sequence composes parse and reduction") {
  const auto s = build_pretrain_sequence(record("int f(){return 0;}", std::nullopt));
  const auto expected = extract_nonterminals(parse("int f(){return 0;}")).to_string();
  CHECK(s.text() == "int f(){return 0;} [SEP] " + expected);
  CHECK(s.text().rfind("int f(){return 0;} [SEP] FunctionDefinition ", 0) == 0);
  CHECK(s.text().find("CompoundStatement ReturnStatement") != std::string::npos);
  CHECK(s == build_pretrain_sequence(record("int f(){return 0;}", std::nullopt)));
}

TEST_CASE("finetune sequence composes the annotation") {
  const std::string src = "int f(int a){ if (a) return 1; if (a > 2) return 2; return 0; }";
  const auto s = build_finetune_sequence(record(src, 1));
  CHECK(s.text() == src + " [SEP] " + to_annotation(extract_features(parse(src))).to_string());
  CHECK(s.payload.rfind("IfStatement=2 ", 0) == 0);
  CHECK(s.label == 1);
  CHECK(build_finetune_sequence(record(src, 0)).label == 0);
  CHECK_THROWS_AS(build_finetune_sequence(record(src, std::nullopt)), Error);
}

TEST_CASE("empty annotation keeps the separator") {
  ModalSequence s{"void f(){}", "", true, CorpusMode::finetune, "x", 0};
  CHECK(s.text() == "void f(){} [SEP]");
}

TEST_CASE("non C-like records pass through verbatim") {
  const std::string py = "def f(x):\n    return x\n";
  for (const auto mode : {CorpusMode::pretrain, CorpusMode::finetune}) {
    const auto s = build_sequence(record(py, 0, Language::other), mode);
    CHECK(s.text() == py);
    CHECK_FALSE(s.separated);
  }
}

TEST_CASE("parse failures fall back to source only with a warning") {
  std::vector<std::string> warnings;
  set_warning_sink([&](std::string_view m) { warnings.emplace_back(m); });
  const auto s = build_pretrain_sequence(record("x = 1;", std::nullopt));
  set_warning_sink(nullptr);
  CHECK(s.text() == "x = 1;");
  CHECK(warnings.size() == 1);
}

TEST_CASE("mode discipline over generated corpora") {
  const auto records = generate({150, 0.5, 0.9, 12});
  const auto pre = build_sequences(records, CorpusMode::pretrain, 3);
  const auto fine = build_sequences(records, CorpusMode::finetune, 1);
  REQUIRE(pre.size() == records.size());
  CHECK(pre == build_sequences(records, CorpusMode::pretrain, 1));
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(pre[i].origin == records[i].id);
    CHECK_FALSE(has_feature_token(pre[i].payload));
    for (const auto& k : {"FunctionDefinition", "CompoundStatement"}) {
      CHECK(fine[i].payload.find(k) == std::string::npos);
    }
    CHECK(has_feature_token(fine[i].payload));
  }
}

TEST_CASE("model ids layout") {
  const auto& tok = shared_tokenizer();
  ModalSequence s{"int x;", "A B", true, CorpusMode::pretrain, "x", {}};
  auto ids = model_ids(s, tok);
  std::vector<TokenId> expected{kClsId};
  for (const auto id : tok.encode("int x;")) expected.push_back(id);
  expected.push_back(kSepId);
  for (const auto id : tok.encode("A B")) expected.push_back(id);
  expected.push_back(kSepId);
  CHECK(ids == expected);
  s.payload.clear();
  CHECK(model_ids(s, tok) == tok.encode_for_model("int x;"));
}

TEST_CASE("truncation basics") {
  const auto& tok = shared_tokenizer();
  const auto s = build_finetune_sequence(generate({10, 0.5, 0.9, 1})[0]);
  const auto full = model_ids(s, tok).size();
  CHECK(truncate(s, full, tok) == s);
  CHECK(truncate(s, full + 100, tok) == s);
  CHECK_THROWS_AS(truncate(s, 7, tok), Error);

  const auto t8 = truncate(s, 8, tok);
  const auto ids = model_ids(t8, tok);
  CHECK(ids.size() == 8);
  CHECK(ids.front() == kClsId);
  CHECK(t8.payload.empty());
  CHECK(s.source.rfind(t8.source, 0) == 0);
}

TEST_CASE("payload is trimmed before the source") {
  const auto& tok = shared_tokenizer();
  ModalSequence s{"int f(void) { return 0; }", "", true, CorpusMode::finetune, "adv", 1};
  for (int i = 0; i < 40; ++i) s.payload += "IfStatement=" + std::to_string(i) + " ";
  s.payload.pop_back();
  const std::size_t source_only = tok.encode_for_model(s.source).size();
  const auto t = truncate(s, source_only + 6, tok);
  CHECK(t.source == s.source);
  CHECK_FALSE(t.payload.empty());
  CHECK(s.payload.rfind(t.payload, 0) == 0);
  CHECK(model_ids(t, tok).size() <= source_only + 6);
}

TEST_CASE("truncation is bounded and monotone") {
  const auto& tok = shared_tokenizer();
  Rng rng(17);
  const auto records = generate({40, 0.5, 0.9, 21});
  for (const auto& r : records) {
    const auto s = rng.bernoulli(0.5) ? build_finetune_sequence(r) : build_pretrain_sequence(r);
    const std::size_t full = model_ids(s, tok).size();
    ModalSequence prev = truncate(s, kMinTruncationLength, tok);
    for (std::size_t m = kMinTruncationLength + 1; m <= full + 1; m += 1 + rng.below(4)) {
      const auto t = truncate(s, m, tok);
      CHECK(model_ids(t, tok).size() <= m);
      CHECK(model_ids(t, tok).front() == kClsId);
      // Everything kept at a smaller limit is still kept.
      CHECK(t.source.rfind(prev.source, 0) == 0);
      if (!prev.payload.empty()) CHECK(t.payload.rfind(prev.payload, 0) == 0);
      prev = t;
    }
  }
}

TEST_CASE("json lines round-trip") {
  const auto records = generate({20, 0.5, 0.9, 2});
  auto seqs = build_sequences(records, CorpusMode::finetune);
  seqs.push_back(build_finetune_sequence(record("def g(): pass", 0, Language::other)));
  seqs.push_back(ModalSequence{"void f(){}", "", true, CorpusMode::finetune, "empty", 1});
  std::ostringstream out;
  write_sequences(out, seqs);
  std::istringstream in(out.str());
  CHECK(read_sequences(in) == seqs);

  std::istringstream bad("{\"text\":\"a\"}\n{\"id\":\"x\"}\n");
  try {
    read_sequences(bad);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}
