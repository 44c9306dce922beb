#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <map>

#include <fmt/format.h>

#include "test_support.hpp"
#include "vulstyle/cstyle.hpp"
#include "vulstyle/parser.hpp"
#include "vulstyle/sequencer.hpp"

using namespace vulstyle;
using namespace vulstyle::testing;
namespace fs = std::filesystem;

namespace {

const fs::path& scratch() {
  static const fs::path dir = [] {
    auto d = temp_dir("cli");
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

struct Run {
  int status = -1;
  std::string out;
};

Run run(const std::string& args) {
  const auto out = scratch() / "stdout.txt";
  const std::string cmd = fmt::format("'{}' {} > '{}' 2> '{}'", VULSTYLE_CLI, args, out.string(),
                                      (scratch() / "stderr.txt").string());
  const int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, read_text(out)};
}

std::string path(const std::string& name) { return (scratch() / name).string(); }

}  // namespace

TEST_CASE("evaluate from published counts") {
  const auto r = run("evaluate --tp 780 --tn 1006 --fp 471 --fn 475");
  CHECK(r.status == 0);
  for (const auto* v : {"65.37", "62.25", "62.35", "62.15"}) CHECK(r.out.find(v) != std::string::npos);
  CHECK(r.out.find("62.25") < r.out.find("62.35"));
  CHECK(run("evaluate --tp 1 --tn 2").status == 2);
}

TEST_CASE("exit codes") {
  CHECK(run("").status == 2);
  CHECK(run("stats --bogus").status == 2);
  CHECK(run("stats --in /nonexistent/x.jsonl").status == 3);
  {
    std::ofstream(path("bad.jsonl")) << "{\"func\":\"int f(){}\"}\nnot json\n";
  }
  CHECK(run("stats --in " + path("bad.jsonl")).status == 4);
  CHECK(run("stats --mode finetune --in " + path("bad.jsonl")).status == 4);
  {
    std::ofstream(path("bad_config.json")) << R"({"no_such_key": 1})";
  }
  CHECK(run(fmt::format("stats --in {} --config {}", VULSTYLE_SAMPLE_CORPUS, path("bad_config.json"))).status == 4);
  CHECK(run("build-corpus --mode sideways --in " + std::string(VULSTYLE_SAMPLE_CORPUS)).status == 2);
}

TEST_CASE("featurize column sums match a brute-force count") {
  REQUIRE(run(fmt::format("featurize --in {} --out {}", VULSTYLE_SAMPLE_CORPUS, path("features.csv"))).status == 0);
  std::istringstream csv(read_text(path("features.csv")));
  std::string line;
  std::getline(csv, line);
  std::vector<std::string> header;
  {
    std::istringstream h(line);
    for (std::string cell; std::getline(h, cell, ',');) header.push_back(cell);
  }
  REQUIRE(header.size() == kFeatureCount + 1);
  std::map<std::string, std::uint64_t> sums;
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    std::istringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    for (std::size_t c = 1; std::getline(row, cell, ','); ++c) sums[header[c]] += std::stoull(cell);
    ++rows;
  }

  std::map<std::string, std::uint64_t> expected;
  std::size_t c_like = 0;
  for (const auto& r : load_corpus(VULSTYLE_SAMPLE_CORPUS, CorpusMode::pretrain)) {
    if (r.language != Language::c_like) continue;
    ++c_like;
    visit(parse(r.source).root(), [&](const Node& n) {
      std::string name(n.kind_name());
      if (name == "FunctionDefinition") name = "MethodDeclaration";
      if (name == "CompoundStatement") name = "BlockStatement";
      if (const auto k = kind_from_name(name); k && static_cast<std::size_t>(*k) < kFeatureCount) ++expected[name];
    });
  }
  CHECK(rows == c_like);
  for (const auto& name : std::vector<std::string>(header.begin() + 1, header.end())) {
    CAPTURE(name);
    CHECK(sums[name] == expected[name]);
  }
  CHECK(fs::exists(path("features.csv.config.json")));
}

TEST_CASE("single-file commands") {
  {
    std::ofstream(path("f.c")) << "int f(){return 0;}";
  }
  auto r = run("reduce --in " + path("f.c"));
  CHECK(r.status == 0);
  CHECK(r.out.rfind("FunctionDefinition ", 0) == 0);
  r = run("parse --in " + path("f.c"));
  CHECK(r.status == 0);
  CHECK(import_tree(nlohmann::json::parse(r.out)).tree.root() == parse("int f(){return 0;}").root());
  r = run("featurize --in " + path("f.c"));
  CHECK(r.out == "ReturnStatement=1 BlockStatement=1 BuiltinType=1 MethodDeclaration=1\n");
}

TEST_CASE("sequence pipeline and mask determinism") {
  const std::string corpus = VULSTYLE_SAMPLE_CORPUS;
  REQUIRE(run(fmt::format("build-corpus --mode pretrain --in {} --out {}", corpus, path("pre.jsonl"))).status == 0);
  std::ifstream seqs(path("pre.jsonl"));
  const auto sequences = read_sequences(seqs);
  CHECK(sequences.size() == 12);
  CHECK(sequences[0] == build_pretrain_sequence(load_corpus(corpus, CorpusMode::pretrain)[0]));

  REQUIRE(run(fmt::format("train-tokenizer --in {} --out {} --vocab-size 600", path("pre.jsonl"), path("vocab")))
              .status == 0);
  CHECK(fs::exists(path("vocab") + "/tokens.txt"));
  CHECK(fs::exists(path("vocab") + "/config.json"));

  const auto mask_args = [&](const std::string& out) {
    return fmt::format("mask --in {} --vocab {} --seed 1 --out {}", path("pre.jsonl"), path("vocab"), path(out));
  };
  REQUIRE(run(mask_args("m1.jsonl")).status == 0);
  REQUIRE(run(mask_args("m2.jsonl") + " --threads 3").status == 0);
  CHECK(read_text(path("m1.jsonl")) == read_text(path("m2.jsonl")));
  CHECK_FALSE(read_text(path("m1.jsonl")).empty());
}

TEST_CASE("config file overrides flags") {
  {
    std::ofstream(path("gen.json")) << R"({"n": 12, "seed": 5})";
  }
  REQUIRE(run(fmt::format("generate --n 40 --seed 1 --config {} --out {}", path("gen.json"), path("gen.jsonl")))
              .status == 0);
  const auto records = load_corpus(path("gen.jsonl"), CorpusMode::finetune);
  CHECK(records.size() == 12);
  CHECK(records == generate({12, 0.5, 0.9, 5}));
  const auto resolved = nlohmann::json::parse(read_text(path("gen.jsonl.config.json")));
  CHECK(resolved["n"] == 12);
  CHECK(resolved["command"] == "generate");
}

TEST_CASE("train then evaluate a saved model") {
  REQUIRE(run(fmt::format("generate --n 60 --seed 3 --out {}", path("small.jsonl"))).status == 0);
  const std::string train = fmt::format(
      "train --in {} --out {} --vocab-size 400 --max-len 96 --layers 1 --hidden 16 --heads 2 --ffn 32 --epochs 1",
      path("small.jsonl"), path("model"));
  const auto r = run(train);
  REQUIRE(r.status == 0);
  for (const auto* f : {"params.bin", "history.csv", "metrics.json", "config.json", "vocab/tokens.txt"}) {
    CHECK(fs::exists(fs::path(path("model")) / f));
  }
  const auto metrics = nlohmann::json::parse(read_text(path("model/metrics.json")));
  CHECK(metrics["split_sizes"]["train"] == 48);
  CHECK(metrics["split_sizes"]["test"] == 6);

  const auto e = run(fmt::format("evaluate --model {} --in {} --out {}", path("model"), path("small.jsonl"),
                                 path("eval.json")));
  REQUIRE(e.status == 0);
  const auto evaluated = nlohmann::json::parse(read_text(path("eval.json")));
  CHECK(evaluated["confusion"] == metrics["confusion"]);
}
