#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "vulstyle/ast_reduce.hpp"
#include "vulstyle/corpus.hpp"
#include "vulstyle/cstyle.hpp"
#include "vulstyle/encoder.hpp"
#include "vulstyle/error.hpp"
#include "vulstyle/log.hpp"
#include "vulstyle/metrics.hpp"
#include "vulstyle/mlm.hpp"
#include "vulstyle/node_kind.hpp"
#include "vulstyle/parallel.hpp"
#include "vulstyle/parser.hpp"
#include "vulstyle/pipeline.hpp"
#include "vulstyle/random.hpp"
#include "vulstyle/sequencer.hpp"
#include "vulstyle/synthetic.hpp"
#include "vulstyle/tokenizer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vulstyle;

namespace {

enum ExitCode { ok = 0, failure = 1, usage = 2, io_failure = 3, bad_data = 4 };

struct Params {
  std::string in;
  std::string out;
  std::string mode = "pretrain";
  std::string vocab;
  std::string model;
  std::string rates = "0.15,0.8,0.1,0.1";
  std::string scale = "toy";
  std::string optimizer = "adam";
  std::string split = "test";
  std::size_t vocab_size = kDefaultVocabSize;
  std::size_t max_len = 0;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  bool atomic_kinds = false;
  bool cstyle = true;
  int layers = 2;
  int hidden = 64;
  int heads = 4;
  int ffn = 256;
  double dropout = 0.1;
  double lr = 1e-3;
  int epochs = 20;
  int batch_size = 16;
  double weight_decay = 0.0;
  std::size_t n = 2000;
  double signal = 0.9;
  double fraction = 0.5;
  std::int64_t tp = -1;
  std::int64_t tn = -1;
  std::int64_t fp = -1;
  std::int64_t fn = -1;
  std::string config;

  NLOHMANN_DEFINE_TYPE_INTRUSIVE(Params, in, out, mode, vocab, model, rates, scale, optimizer, split, vocab_size,
                                 max_len, seed, threads, atomic_kinds, cstyle, layers, hidden, heads, ffn, dropout, lr,
                                 epochs, batch_size, weight_decay, n, signal, fraction, tp, tn, fp, fn, config)

  CorpusMode corpus_mode() const {
    const auto m = mode_from_string(mode);
    if (!m) throw Error(ErrorCode::invalid_argument, fmt::format("unknown mode '{}'", mode));
    return *m;
  }

  std::size_t resolved_max_len() const {
    if (max_len > 0) return max_len;
    return corpus_mode() == CorpusMode::pretrain ? 512 : 1024;
  }
};

// Values from the --config file take precedence over command-line flags.
void apply_config_file(Params& params) {
  if (params.config.empty()) return;
  std::ifstream in(params.config);
  if (!in) throw Error(ErrorCode::io, fmt::format("cannot read config '{}'", params.config));
  json overrides;
  try {
    overrides = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::parse, fmt::format("config '{}': {}", params.config, e.what()));
  }
  if (!overrides.is_object()) throw Error(ErrorCode::schema, "config file must hold a JSON object");
  json resolved = params;
  for (auto& [key, value] : overrides.items()) {
    std::string name = key;
    std::replace(name.begin(), name.end(), '-', '_');
    if (!resolved.contains(name) || name == "config") {
      throw Error(ErrorCode::schema, fmt::format("config '{}': unknown key '{}'", params.config, key));
    }
    resolved[name] = value;
  }
  try {
    params = resolved.get<Params>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::schema, fmt::format("config '{}': {}", params.config, e.what()));
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, fmt::format("cannot read '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out || !out.write(content.data(), static_cast<std::streamsize>(content.size()))) {
    throw Error(ErrorCode::io, fmt::format("cannot write '{}'", path.string()));
  }
}

void emit(const Params& p, const std::string& content) {
  if (p.out.empty()) {
    std::cout << content;
  } else {
    write_file(p.out, content);
  }
}

void write_resolved_config(const Params& p, const std::string& command, bool out_is_dir) {
  if (p.out.empty()) return;
  json j = p;
  j["command"] = command;
  const fs::path target = out_is_dir ? fs::path(p.out) / "config.json" : fs::path(p.out + ".config.json");
  write_file(target, j.dump(2) + "\n");
}

std::string dump_line(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace) + "\n"; }

bool is_corpus_path(const std::string& path) { return fs::path(path).extension() == ".jsonl"; }

std::vector<FunctionRecord> load_records(const Params& p, CorpusMode mode) {
  if (p.in.empty()) throw Error(ErrorCode::invalid_argument, "--in is required");
  return load_corpus(p.in, mode);
}

std::vector<ModalSequence> load_sequences(const Params& p) {
  if (p.in.empty()) throw Error(ErrorCode::invalid_argument, "--in is required");
  std::ifstream in(p.in, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, fmt::format("cannot read '{}'", p.in));
  return read_sequences(in);
}

// Runs fn on every parseable C-like record, reporting the others.
template <typename Fn>
void for_each_tree(const std::vector<FunctionRecord>& records, Fn&& fn) {
  for (const auto& r : records) {
    if (r.language != Language::c_like) continue;
    try {
      fn(r, parse(r.source));
    } catch (const ParseError& e) {
      warn(fmt::format("record '{}': {}", r.id, e.what()));
    }
  }
}

int cmd_parse(const Params& p) {
  if (!is_corpus_path(p.in)) {
    emit(p, export_tree(parse(read_file(p.in))).dump(2, ' ', false, json::error_handler_t::replace) + "\n");
  } else {
    std::string out;
    for (const auto& r : load_records(p, CorpusMode::pretrain)) {
      json line{{"id", r.id}};
      if (r.language != Language::c_like) {
        line["skipped"] = "language";
      } else {
        try {
          line["tree"] = export_tree(parse(r.source));
        } catch (const ParseError& e) {
          line["error"] = e.what();
        }
      }
      out += dump_line(line);
    }
    emit(p, out);
  }
  write_resolved_config(p, "parse", false);
  return ok;
}

int cmd_reduce(const Params& p) {
  if (!is_corpus_path(p.in)) {
    emit(p, extract_nonterminals(parse(read_file(p.in))).to_string() + "\n");
  } else {
    std::string out;
    for_each_tree(load_records(p, CorpusMode::pretrain), [&](const FunctionRecord& r, const SyntaxTree& tree) {
      out += dump_line({{"id", r.id},
                        {"kinds", extract_nonterminals(tree, r.id).to_string()},
                        {"reduction_ratio", reduction_ratio(tree)}});
    });
    emit(p, out);
  }
  write_resolved_config(p, "reduce", false);
  return ok;
}

int cmd_featurize(const Params& p) {
  if (!is_corpus_path(p.in)) {
    emit(p, to_annotation(extract_features(parse(read_file(p.in)))).to_string() + "\n");
  } else {
    std::vector<CStyleVector> vectors;
    for_each_tree(load_records(p, CorpusMode::pretrain), [&](const FunctionRecord& r, const SyntaxTree& tree) {
      vectors.push_back(extract_features(tree, r.id));
    });
    emit(p, feature_matrix(vectors).to_csv());
  }
  write_resolved_config(p, "featurize", false);
  return ok;
}

int cmd_build_corpus(const Params& p) {
  const CorpusMode mode = p.corpus_mode();
  const auto sequences = build_sequences(load_records(p, mode), mode, p.threads);
  std::ostringstream out;
  write_sequences(out, sequences);
  emit(p, out.str());
  write_resolved_config(p, "build-corpus", false);
  return ok;
}

int cmd_train_tokenizer(const Params& p) {
  if (p.out.empty()) throw Error(ErrorCode::invalid_argument, "--out directory is required");
  BpeOptions options{p.vocab_size, {}};
  if (p.atomic_kinds) {
    for (const NodeKind k : all_kinds()) {
      if (k != NodeKind::Unknown) options.atomic_words.emplace_back(kind_name(k));
    }
  }
  const auto tokenizer = Tokenizer::train(tokenizer_corpus(load_sequences(p)), options);
  tokenizer.save(p.out);
  write_resolved_config(p, "train-tokenizer", true);
  std::cerr << fmt::format("vocabulary: {} tokens, {} merges\n", tokenizer.size(), tokenizer.merges().size());
  return ok;
}

int cmd_mask(const Params& p) {
  if (p.vocab.empty()) throw Error(ErrorCode::invalid_argument, "--vocab is required");
  const auto rates = MaskRates::parse(p.rates);
  const auto tokenizer = Tokenizer::load(p.vocab);
  const auto sequences = load_sequences(p);
  const std::size_t max_len = p.resolved_max_len();
  std::vector<std::string> lines(sequences.size());
  parallel_for(sequences.size(), p.threads, [&](std::size_t i) {
    const auto ids = model_ids(truncate(sequences[i], max_len, tokenizer), tokenizer);
    lines[i] = dump_line(masked_to_json(mask(ids, rates, tokenizer.size(), mix_seed(p.seed, i)), sequences[i].origin));
  });
  std::string out;
  for (const auto& l : lines) out += l;
  emit(p, out);
  write_resolved_config(p, "mask", false);
  return ok;
}

Optimizer optimizer_from(const std::string& name) {
  if (name == "adam") return Optimizer::adam;
  if (name == "sgd") return Optimizer::sgd;
  throw Error(ErrorCode::invalid_argument, fmt::format("unknown optimizer '{}'", name));
}

int cmd_train(const Params& p) {
  if (p.out.empty()) throw Error(ErrorCode::invalid_argument, "--out directory is required");
  FinetuneSetup setup;
  setup.encoder.layers = p.layers;
  setup.encoder.hidden = p.hidden;
  setup.encoder.heads = p.heads;
  setup.encoder.ffn = p.ffn;
  setup.encoder.dropout = p.dropout;
  setup.train.learning_rate = p.lr;
  setup.train.epochs = p.epochs;
  setup.train.batch_size = p.batch_size;
  setup.train.seed = p.seed;
  setup.train.weight_decay = p.weight_decay;
  setup.train.optimizer = optimizer_from(p.optimizer);
  setup.vocab_size = p.vocab_size;
  setup.max_len = p.max_len > 0 ? p.max_len : 1024;
  setup.cstyle = p.cstyle;
  setup.split_seed = p.seed;
  setup.threads = p.threads;
  if (!p.vocab.empty()) setup.tokenizer = Tokenizer::load(p.vocab);

  const auto outcome = run_finetune(load_records(p, CorpusMode::finetune), setup);
  const fs::path dir(p.out);
  fs::create_directories(dir);
  outcome.tokenizer.save(dir / "vocab");
  outcome.params.save(dir / "params.bin");
  write_file(dir / "history.csv", outcome.history.to_csv());
  json metrics = outcome.test_metrics.to_json();
  metrics["confusion"] = {{"tp", outcome.test_confusion.tp},
                          {"tn", outcome.test_confusion.tn},
                          {"fp", outcome.test_confusion.fp},
                          {"fn", outcome.test_confusion.fn}};
  metrics["class_weights"] = {{"safe", outcome.weights.safe}, {"vulnerable", outcome.weights.vulnerable}};
  metrics["split_sizes"] = {
      {"train", outcome.train_size}, {"validation", outcome.validation_size}, {"test", outcome.test_size}};
  write_file(dir / "metrics.json", metrics.dump(2) + "\n");
  write_resolved_config(p, "train", true);
  std::cout << outcome.test_metrics.to_table("test");
  return ok;
}

int cmd_evaluate(const Params& p) {
  ConfusionMatrix cm;
  if (p.tp >= 0 || p.tn >= 0 || p.fp >= 0 || p.fn >= 0) {
    if (p.tp < 0 || p.tn < 0 || p.fp < 0 || p.fn < 0) {
      throw Error(ErrorCode::invalid_argument, "--tp, --tn, --fp and --fn must be given together");
    }
    cm = {static_cast<std::uint64_t>(p.tp), static_cast<std::uint64_t>(p.tn), static_cast<std::uint64_t>(p.fp),
          static_cast<std::uint64_t>(p.fn)};
  } else {
    if (p.model.empty()) throw Error(ErrorCode::invalid_argument, "give either --model with --in, or --tp/--tn/--fp/--fn");
    const fs::path dir(p.model);
    json trained;
    try {
      trained = json::parse(read_file(dir / "config.json"));
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::parse, fmt::format("model config: {}", e.what()));
    }
    const Params model_params = trained.get<Params>();
    const auto tokenizer = Tokenizer::load(dir / "vocab");
    const auto params = EncoderParams::load(dir / "params.bin");

    auto records = split_corpus(load_records(p, CorpusMode::finetune), {}, model_params.seed);
    if (p.split != "all") {
      const auto wanted = split_from_string(p.split);
      if (!wanted) throw Error(ErrorCode::invalid_argument, fmt::format("unknown split '{}'", p.split));
      std::erase_if(records, [&](const FunctionRecord& r) { return r.split != *wanted; });
    }
    if (records.empty()) throw Error(ErrorCode::validation, "no records to evaluate");
    auto sequences = build_sequences(records, CorpusMode::finetune, p.threads);
    if (!model_params.cstyle) {
      for (auto& s : sequences) s = strip_payload(std::move(s));
    }
    const auto examples = prepare_examples(sequences, tokenizer, static_cast<std::size_t>(params.config.max_positions),
                                           ClassWeights{}, p.threads);
    std::vector<int> labels;
    for (const auto& e : examples) labels.push_back(e.label);
    cm = confusion(labels, predict(params, examples, p.threads));
  }
  const auto report = derive(cm);
  std::cout << report.to_table(p.model.empty() ? "counts" : p.split);
  if (!p.out.empty()) {
    json j = report.to_json();
    j["confusion"] = {{"tp", cm.tp}, {"tn", cm.tn}, {"fp", cm.fp}, {"fn", cm.fn}};
    write_file(p.out, j.dump(2) + "\n");
    write_resolved_config(p, "evaluate", false);
  }
  return ok;
}

int cmd_stats(const Params& p) {
  const auto records = load_records(p, p.corpus_mode());
  emit(p, corpus_stats(records).to_json().dump(2) + "\n");
  write_resolved_config(p, "stats", false);
  return ok;
}

int cmd_generate(const Params& p) {
  GeneratorSpec spec{p.n, p.fraction, p.signal, p.seed};
  std::ostringstream out;
  write_corpus(out, generate(spec));
  emit(p, out.str());
  write_resolved_config(p, "generate", false);
  return ok;
}

void apply_full_scale(Params& p, const CLI::App& sub) {
  if (p.scale == "toy") return;
  if (p.scale != "full") throw Error(ErrorCode::invalid_argument, fmt::format("unknown scale '{}'", p.scale));
  const auto unset = [&](const char* flag) { return sub.get_option_no_throw(flag) == nullptr || sub.count(flag) == 0; };
  if (unset("--layers")) p.layers = 12;
  if (unset("--hidden")) p.hidden = 768;
  if (unset("--heads")) p.heads = 12;
  if (unset("--ffn")) p.ffn = 3072;
  if (unset("--lr")) p.lr = 2e-6;
  if (unset("--epochs")) p.epochs = 10;
  if (unset("--vocab-size")) p.vocab_size = kFullVocabSize;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-modal code representation pipeline: parsing, AST reduction, stylometry, BPE, MLM, encoder"};
  app.require_subcommand(1);
  Params p;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", p.config, "JSON file whose values override command-line flags");
    sub->add_option("--threads", p.threads, "Worker threads")->check(CLI::PositiveNumber);
  };
  const auto io = [&](CLI::App* sub, bool out_required) {
    sub->add_option("--in", p.in, "Input file");
    auto* out = sub->add_option("--out", p.out, out_required ? "Output path" : "Output path (stdout when omitted)");
    (void)out;
  };

  auto* parse_cmd = app.add_subcommand("parse", "Parse a source file or a .jsonl corpus into syntax trees");
  io(parse_cmd, false);
  common(parse_cmd);

  auto* reduce_cmd = app.add_subcommand("reduce", "Reduced AST (non-terminal kinds in pre-order)");
  io(reduce_cmd, false);
  common(reduce_cmd);

  auto* featurize_cmd = app.add_subcommand("featurize", "Stylometry feature annotation or feature matrix (CSV)");
  io(featurize_cmd, false);
  common(featurize_cmd);

  auto* build_cmd = app.add_subcommand("build-corpus", "Build pre-training or fine-tuning sequences");
  io(build_cmd, false);
  build_cmd->add_option("--mode", p.mode, "pretrain or finetune");
  common(build_cmd);

  auto* tok_cmd = app.add_subcommand("train-tokenizer", "Train a byte-level BPE vocabulary on sequences");
  io(tok_cmd, true);
  tok_cmd->add_option("--vocab-size", p.vocab_size, "Target vocabulary size");
  tok_cmd->add_flag("--atomic-kinds", p.atomic_kinds, "Keep syntax kind names as single tokens");
  tok_cmd->add_option("--scale", p.scale, "toy or full defaults");
  common(tok_cmd);

  auto* mask_cmd = app.add_subcommand("mask", "Apply MLM corruption to tokenized sequences");
  io(mask_cmd, false);
  mask_cmd->add_option("--vocab", p.vocab, "Vocabulary directory");
  mask_cmd->add_option("--mode", p.mode, "pretrain or finetune (sets the default --max-len)");
  mask_cmd->add_option("--max-len", p.max_len, "Maximum tokens per sequence");
  mask_cmd->add_option("--rates", p.rates, "select,mask,random,keep");
  mask_cmd->add_option("--seed", p.seed, "Random seed");
  common(mask_cmd);

  auto* train_cmd = app.add_subcommand("train", "Fine-tune the encoder classifier on a labeled corpus");
  io(train_cmd, true);
  train_cmd->add_option("--vocab", p.vocab, "Existing vocabulary directory (trained on the train split otherwise)");
  train_cmd->add_option("--vocab-size", p.vocab_size, "Target vocabulary size");
  train_cmd->add_option("--max-len", p.max_len, "Maximum tokens per sequence (default 1024)");
  train_cmd->add_option("--seed", p.seed, "Random seed for splits, initialization and batches");
  train_cmd->add_option("--scale", p.scale, "toy or full defaults");
  train_cmd->add_option("--layers", p.layers);
  train_cmd->add_option("--hidden", p.hidden);
  train_cmd->add_option("--heads", p.heads);
  train_cmd->add_option("--ffn", p.ffn);
  train_cmd->add_option("--dropout", p.dropout);
  train_cmd->add_option("--lr", p.lr);
  train_cmd->add_option("--epochs", p.epochs);
  train_cmd->add_option("--batch-size", p.batch_size);
  train_cmd->add_option("--weight-decay", p.weight_decay);
  train_cmd->add_option("--optimizer", p.optimizer, "adam or sgd");
  train_cmd->add_flag("!--no-cstyle", p.cstyle, "Drop the stylometry payload (source-only ablation)");
  common(train_cmd);

  auto* eval_cmd = app.add_subcommand("evaluate", "Metrics from counts or from a trained model on a corpus");
  io(eval_cmd, false);
  eval_cmd->add_option("--model", p.model, "Directory written by train");
  eval_cmd->add_option("--split", p.split, "train, validation, test or all");
  eval_cmd->add_option("--tp", p.tp);
  eval_cmd->add_option("--tn", p.tn);
  eval_cmd->add_option("--fp", p.fp);
  eval_cmd->add_option("--fn", p.fn);
  common(eval_cmd);

  auto* stats_cmd = app.add_subcommand("stats", "Corpus label and split counts");
  io(stats_cmd, false);
  stats_cmd->add_option("--mode", p.mode, "finetune requires labels");
  common(stats_cmd);

  auto* gen_cmd = app.add_subcommand("generate", "Synthetic labeled corpus with a planted pattern");
  io(gen_cmd, false);
  gen_cmd->add_option("--n", p.n, "Number of functions");
  gen_cmd->add_option("--signal", p.signal, "Probability a vulnerable function carries the pattern");
  gen_cmd->add_option("--fraction", p.fraction, "Fraction of vulnerable functions");
  gen_cmd->add_option("--seed", p.seed, "Random seed");
  common(gen_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : usage;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    apply_full_scale(p, *sub);
    apply_config_file(p);
    const std::string name = sub->get_name();
    if (name == "parse") return cmd_parse(p);
    if (name == "reduce") return cmd_reduce(p);
    if (name == "featurize") return cmd_featurize(p);
    if (name == "build-corpus") return cmd_build_corpus(p);
    if (name == "train-tokenizer") return cmd_train_tokenizer(p);
    if (name == "mask") return cmd_mask(p);
    if (name == "train") return cmd_train(p);
    if (name == "evaluate") return cmd_evaluate(p);
    if (name == "stats") return cmd_stats(p);
    if (name == "generate") return cmd_generate(p);
    return usage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    switch (e.code()) {
      case ErrorCode::invalid_argument: return usage;
      case ErrorCode::io: return io_failure;
      case ErrorCode::parse:
      case ErrorCode::schema:
      case ErrorCode::validation: return bad_data;
    }
    return failure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return failure;
  }
}
