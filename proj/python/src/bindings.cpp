#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <map>
#include <string>
#include <vector>

#include <vulstyle/ast_reduce.hpp>
#include <vulstyle/corpus.hpp>
#include <vulstyle/cstyle.hpp>
#include <vulstyle/error.hpp>
#include <vulstyle/metrics.hpp>
#include <vulstyle/mlm.hpp>
#include <vulstyle/node_kind.hpp>
#include <vulstyle/parser.hpp>
#include <vulstyle/sequencer.hpp>
#include <vulstyle/synthetic.hpp>
#include <vulstyle/syntax_tree.hpp>
#include <vulstyle/tokenizer.hpp>

namespace py = pybind11;
using namespace vulstyle;

namespace {

// JSON crosses the boundary as text; the python package decodes it.
std::string dump(const nlohmann::json& j) { return j.dump(); }

FunctionRecord make_record(const std::string& id, const std::string& source, std::optional<int> label) {
  FunctionRecord r;
  r.id = id;
  r.source = source;
  r.label = label;
  return r;
}

std::map<std::string, std::uint64_t> feature_dict(const CStyleVector& v) {
  std::map<std::string, std::uint64_t> out;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (v.counts[i] != 0) out.emplace(std::string(kind_name(feature_universe()[i])), v.counts[i]);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_vulstyle, m) {
  m.doc() = "Stylometry-augmented vulnerability detection core";

  static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::invalid_argument) {
        PyErr_SetString(PyExc_ValueError, e.what());
      } else {
        error(e.what());
      }
    }
  });

  m.attr("FEATURE_COUNT") = kFeatureCount;
  m.def("feature_names", [] {
    std::vector<std::string> names;
    for (const auto k : feature_universe()) names.emplace_back(kind_name(k));
    return names;
  });

  m.def("parse_json", [](const std::string& source) { return dump(export_tree(parse(source))); },
        py::arg("source"));
  m.def("parse_errors", [](const std::string& source) { return parse(source).error_count(); },
        py::arg("source"));
  m.def("reduce", [](const std::string& source) { return extract_nonterminals(parse(source)).kinds; },
        py::arg("source"));
  m.def("reduction_ratio", [](const std::string& source) { return reduction_ratio(parse(source)); },
        py::arg("source"));
  m.def("features", [](const std::string& source) { return feature_dict(extract_features(parse(source))); },
        py::arg("source"));
  m.def("annotation", [](const std::string& source) {
    return to_annotation(extract_features(parse(source))).to_string();
  }, py::arg("source"));

  m.def("finetune_text", [](const std::string& source, std::optional<int> label) {
    return build_finetune_sequence(make_record("py", source, label)).text();
  }, py::arg("source"), py::arg("label") = py::none());
  m.def("pretrain_text", [](const std::string& source) {
    return build_pretrain_sequence(make_record("py", source, std::nullopt)).text();
  }, py::arg("source"));

  py::class_<Tokenizer>(m, "Tokenizer")
      .def_static("train", [](const std::vector<std::string>& corpus, std::size_t vocab_size,
                              const std::vector<std::string>& atomic_words) {
        return Tokenizer::train(corpus, BpeOptions{vocab_size, atomic_words});
      }, py::arg("corpus"), py::arg("vocab_size") = kDefaultVocabSize,
         py::arg("atomic_words") = std::vector<std::string>{})
      .def_static("load", &Tokenizer::load, py::arg("path"))
      .def("save", &Tokenizer::save, py::arg("path"))
      .def("encode", &Tokenizer::encode, py::arg("text"))
      .def("decode", [](const Tokenizer& t, const std::vector<TokenId>& ids) { return t.decode(ids); },
           py::arg("ids"))
      .def("token", &Tokenizer::token, py::arg("id"))
      .def("__len__", &Tokenizer::size);

  m.def("mask", [](const std::vector<TokenId>& ids, std::size_t vocab_size, std::uint64_t seed,
                   const std::string& rates) {
    const auto batch = mask(ids, rates.empty() ? MaskRates{} : MaskRates::parse(rates), vocab_size, seed);
    return dump(masked_to_json(batch, "py"));
  }, py::arg("ids"), py::arg("vocab_size"), py::arg("seed") = 1, py::arg("rates") = "");

  m.def("metrics", [](const std::vector<int>& labels, const std::vector<int>& predictions) {
    return dump(derive(confusion(labels, predictions)).to_json());
  }, py::arg("labels"), py::arg("predictions"));
  m.def("metrics_from_counts", [](std::uint64_t tp, std::uint64_t tn, std::uint64_t fp, std::uint64_t fn) {
    return dump(derive(ConfusionMatrix{tp, tn, fp, fn}).to_json());
  }, py::arg("tp"), py::arg("tn"), py::arg("fp"), py::arg("fn"));

  m.def("generate", [](std::size_t n, double vulnerable_fraction, double signal_strength, std::uint64_t seed) {
    std::vector<std::string> lines;
    for (const auto& r : generate({n, vulnerable_fraction, signal_strength, seed})) {
      lines.push_back(dump(record_to_json(r)));
    }
    return lines;
  }, py::arg("n") = 2000, py::arg("vulnerable_fraction") = 0.5, py::arg("signal_strength") = 0.9,
     py::arg("seed") = 1);
}
