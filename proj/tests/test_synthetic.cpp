#include <doctest.h>

#include <set>

#include "test_support.hpp"
#include "vulstyle/cstyle.hpp"
#include "vulstyle/error.hpp"
#include "vulstyle/parser.hpp"
#include "vulstyle/synthetic.hpp"

using namespace vulstyle;
using namespace vulstyle::testing;

namespace {

// Oracle: safe functions hold at most two if statements, the planted
// pattern adds three.
std::size_t if_count(const Node& node) {
  std::size_t n = node.kind == NodeKind::IfStatement ? 1 : 0;
  for (const auto& c : node.children) n += if_count(c);
  return n;
}

bool planted(const FunctionRecord& r) { return if_count(parse(r.source).root()) >= 3; }

}  // namespace

TEST_CASE("spec validation") {
  CHECK_THROWS_AS(generate({9, 0.5, 0.9, 1}), Error);
  CHECK_THROWS_AS(generate({100, 0.0, 0.9, 1}), Error);
  CHECK_THROWS_AS(generate({100, 1.0, 0.9, 1}), Error);
  CHECK_THROWS_AS(generate({100, 0.5, 1.1, 1}), Error);
  CHECK(GeneratorSpec{}.to_json()["n"] == 2000);
}

TEST_CASE("deterministic with unique ids and exact label counts") {
  const auto a = generate({500, 0.3, 0.9, 77});
  CHECK(a == generate({500, 0.3, 0.9, 77}));
  CHECK(a != generate({500, 0.3, 0.9, 78}));
  std::set<std::string> ids;
  std::size_t vulnerable = 0;
  for (const auto& r : a) {
    ids.insert(r.id);
    vulnerable += *r.label;
    CHECK(r.language == Language::c_like);
  }
  CHECK(ids.size() == 500);
  CHECK(vulnerable == 150);
  CHECK(a.front().id == "syn-000");
}

TEST_CASE("every function parses cleanly") {
  for (const auto& r : generate({1000, 0.5, 0.9, 5})) {
    const auto tree = parse(r.source);
    CAPTURE(r.source);
    CHECK(tree.error_count() == 0);
    CHECK(tree.root().kind == NodeKind::FunctionDefinition);
  }
}

TEST_CASE("full signal plants the pattern in exactly the vulnerable functions") {
  for (const auto& r : generate({400, 0.5, 1.0, 6})) CHECK(planted(r) == (*r.label == 1));
  for (const auto& r : generate({200, 0.5, 0.0, 6})) CHECK_FALSE(planted(r));
}

TEST_CASE("half signal tallies within two points") {
  std::size_t vulnerable = 0, hits = 0, safe_hits = 0;
  for (const auto& r : generate({10000, 0.5, 0.5, 9})) {
    const bool p = planted(r);
    if (*r.label == 1) {
      ++vulnerable;
      hits += p;
    } else {
      safe_hits += p;
    }
  }
  const double rate = static_cast<double>(hits) / vulnerable;
  MESSAGE("planted rate " << rate);
  CHECK(std::abs(rate - 0.5) <= 0.02);
  CHECK(safe_hits == 0);
}

TEST_CASE("vulnerable functions carry more ifs and calls") {
  double sums[2][2] = {};
  std::size_t counts[2] = {};
  for (const auto& r : generate({2000, 0.5, 1.0, 10})) {
    const auto v = extract_features(parse(r.source));
    const int y = *r.label;
    sums[y][0] += v.count(NodeKind::IfStatement);
    sums[y][1] += v.count(NodeKind::MethodInvocation);
    ++counts[y];
  }
  CHECK(sums[1][0] / counts[1] > sums[0][0] / counts[0]);
  CHECK(sums[1][1] / counts[1] > sums[0][1] / counts[0]);
}
