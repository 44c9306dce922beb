#include "vulstyle/pipeline.hpp"

#include <fmt/format.h>

#include "vulstyle/error.hpp"
#include "vulstyle/parallel.hpp"

namespace vulstyle {

std::vector<Example> prepare_examples(const std::vector<ModalSequence>& sequences, const Tokenizer& tokenizer,
                                      std::size_t max_len, const ClassWeights& weights, unsigned threads) {
  std::vector<Example> out(sequences.size());
  parallel_for(sequences.size(), threads, [&](std::size_t i) {
    const auto& s = sequences[i];
    if (!s.label) throw Error(ErrorCode::validation, fmt::format("sequence '{}' has no label", s.origin));
    out[i] = Example{model_ids(truncate(s, max_len, tokenizer), tokenizer), *s.label, weights.for_label(*s.label)};
  });
  return out;
}

std::vector<std::string> tokenizer_corpus(const std::vector<ModalSequence>& sequences) {
  std::vector<std::string> texts;
  texts.reserve(sequences.size() * 2);
  for (const auto& s : sequences) {
    texts.push_back(s.source);
    if (s.separated && !s.payload.empty()) texts.push_back(s.payload);
  }
  return texts;
}

ModalSequence strip_payload(ModalSequence sequence) {
  sequence.payload.clear();
  sequence.separated = false;
  return sequence;
}

FinetuneOutcome run_finetune(const std::vector<FunctionRecord>& records, const FinetuneSetup& setup) {
  const auto split = split_corpus(records, setup.ratios, setup.split_seed);
  std::vector<FunctionRecord> train_records;
  std::vector<FunctionRecord> validation_records;
  std::vector<FunctionRecord> test_records;
  for (const auto& r : split) {
    switch (*r.split) {
      case Split::train: train_records.push_back(r); break;
      case Split::validation: validation_records.push_back(r); break;
      case Split::test: test_records.push_back(r); break;
    }
  }
  if (train_records.empty() || test_records.empty()) {
    throw Error(ErrorCode::validation, "fine-tuning needs non-empty train and test splits");
  }

  const auto sequences = [&](const std::vector<FunctionRecord>& rs) {
    auto seqs = build_sequences(rs, CorpusMode::finetune, setup.threads);
    if (!setup.cstyle) {
      for (auto& s : seqs) s = strip_payload(std::move(s));
    }
    return seqs;
  };
  const auto train_seqs = sequences(train_records);
  const auto validation_seqs = sequences(validation_records);
  const auto test_seqs = sequences(test_records);

  Tokenizer tokenizer =
      setup.tokenizer ? *setup.tokenizer : Tokenizer::train(tokenizer_corpus(train_seqs), {setup.vocab_size, {}});
  const ClassWeights weights = class_weights(train_records);
  const auto train = prepare_examples(train_seqs, tokenizer, setup.max_len, weights, setup.threads);
  const auto validation = prepare_examples(validation_seqs, tokenizer, setup.max_len, weights, setup.threads);
  const auto test = prepare_examples(test_seqs, tokenizer, setup.max_len, weights, setup.threads);

  EncoderConfig config = setup.encoder;
  config.vocab = static_cast<int>(tokenizer.size());
  config.max_positions = static_cast<int>(setup.max_len);
  TrainOptions options = setup.train;
  options.threads = setup.threads;
  auto trained = train_classifier(EncoderParams::init(config, options.seed), train, options, validation);

  std::vector<int> labels;
  for (const auto& e : test) labels.push_back(e.label);
  const auto predictions = predict(trained.params, test, setup.threads);
  const auto cm = confusion(labels, predictions);
  return {std::move(tokenizer), std::move(trained.params), std::move(trained.history), cm, derive(cm), weights,
          train.size(), validation.size(), test.size()};
}

}  // namespace vulstyle
