#pragma once

#include <optional>
#include <vector>

#include "vulstyle/corpus.hpp"
#include "vulstyle/encoder.hpp"
#include "vulstyle/metrics.hpp"
#include "vulstyle/sequencer.hpp"
#include "vulstyle/tokenizer.hpp"

namespace vulstyle {

/// Truncates and tokenizes labeled sequences, attaching class weights.
/// Throws Error(validation) for an unlabeled sequence.
std::vector<Example> prepare_examples(const std::vector<ModalSequence>& sequences, const Tokenizer& tokenizer,
                                      std::size_t max_len, const ClassWeights& weights, unsigned threads = 1);

/// Source and payload as separate strings so merges never cross the separator.
std::vector<std::string> tokenizer_corpus(const std::vector<ModalSequence>& sequences);

struct FinetuneSetup {
  EncoderConfig encoder;
  TrainOptions train;
  std::size_t vocab_size = kDefaultVocabSize;
  std::size_t max_len = 1024;
  /// False drops the stylometry payload (source-only ablation).
  bool cstyle = true;
  SplitRatios ratios;
  std::uint64_t split_seed = 1;
  unsigned threads = 1;
  /// Used as is when present; otherwise trained on the training split.
  std::optional<Tokenizer> tokenizer;
};

struct FinetuneOutcome {
  Tokenizer tokenizer;
  EncoderParams params;
  TrainHistory history;
  ConfusionMatrix test_confusion;
  MetricsReport test_metrics;
  ClassWeights weights;
  std::size_t train_size = 0;
  std::size_t validation_size = 0;
  std::size_t test_size = 0;
};

/// Split, build fine-tuning sequences, train the tokenizer on the training
/// split, train the encoder with class weights, and score the test split.
FinetuneOutcome run_finetune(const std::vector<FunctionRecord>& records, const FinetuneSetup& setup);

/// Drops the modality payload, leaving the function text alone.
ModalSequence strip_payload(ModalSequence sequence);

}  // namespace vulstyle
