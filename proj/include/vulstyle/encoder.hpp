#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "vulstyle/random.hpp"
#include "vulstyle/tokenizer.hpp"

namespace vulstyle {

using Matrix = Eigen::MatrixXd;

struct EncoderConfig {
  int layers = 2;
  int hidden = 64;
  int heads = 4;
  int ffn = 256;
  int vocab = 0;
  int max_positions = 512;
  int classes = 2;
  double dropout = 0.1;

  int d_k() const { return hidden / heads; }
  /// Throws Error(invalid_argument) for inconsistent dimensions.
  void validate() const;
  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
  /// 12 layers, 768 hidden, 12 heads, 3072 inner.
  static EncoderConfig full_scale(int vocab, int max_positions);

  bool operator==(const EncoderConfig&) const = default;
};

struct LayerParams {
  std::vector<Matrix> wq, wk, wv;  // one d x d_k matrix per head
  Matrix wo;                       // d x d
  Matrix ln1_g, ln1_b, ln2_g, ln2_b;
  Matrix w1, b1, w2, b2;
};

struct TensorRef {
  std::string name;
  Matrix* value;
};

struct EncoderParams {
  EncoderConfig config;
  Matrix token_embedding;     // vocab x d
  Matrix position_embedding;  // max_positions x d
  std::vector<LayerParams> layers;
  Matrix final_g, final_b;
  Matrix dense_w, dense_b;  // classification head
  Matrix out_w, out_b;

  /// Small normal weights, unit norm gains, zero biases.
  static EncoderParams init(const EncoderConfig& config, std::uint64_t seed);
  /// Same shapes, all zeros.
  static EncoderParams zeros(const EncoderConfig& config);

  /// Every tensor in a fixed order; the order defines the file layout.
  std::vector<TensorRef> tensors();
  std::vector<std::pair<std::string, const Matrix*>> tensors() const;
  std::size_t parameter_count() const;
  bool all_finite() const;
  void set_zero();
  /// this += scale * other (same config).
  void add_scaled(const EncoderParams& other, double scale);

  /// Binary layout: magic "VSENC001", u32 header length, JSON header with
  /// the config and shape table, then every tensor as row-major
  /// little-endian doubles in table order.
  void save(const std::filesystem::path& path) const;
  static EncoderParams load(const std::filesystem::path& path);
};

/// softmax(Q K^T / sqrt(d_k)) with max subtraction. Keys whose key_valid
/// entry is 0 get zero weight; an empty span means every key is valid.
Matrix attention_weights(const Matrix& q, const Matrix& k, std::span<const std::uint8_t> key_valid = {});
/// Throws Error(invalid_argument) on shape mismatch or d_k == 0.
Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v, std::span<const std::uint8_t> key_valid = {});
/// Concat(head_1..head_n) W^O with head_i = attention(H W^Q_i, H W^K_i, H W^V_i).
Matrix multi_head(const Matrix& h, const LayerParams& layer, std::span<const std::uint8_t> key_valid = {},
                  std::vector<Matrix>* weights_out = nullptr);

struct ForwardTrace {
  /// Embeddings followed by the output of every layer (before the final norm).
  std::vector<Matrix> hidden;
  /// attention[layer][head], each n x n.
  std::vector<std::vector<Matrix>> attention;
  /// Final normalized states, n x d.
  Matrix output;
  Eigen::VectorXd logits;
  Eigen::VectorXd probabilities;
};

/// Inference pass (no dropout). PAD ids are masked as keys.
/// Throws Error(invalid_argument) when ids exceed max_positions or the vocabulary.
ForwardTrace forward(std::span<const TokenId> ids, const EncoderParams& params);

/// Softmax over the vocabulary at each position, scoring with the tied
/// token embedding. Used to feed mlm_loss.
std::vector<std::vector<double>> token_distributions(const ForwardTrace& trace, const EncoderParams& params,
                                                     std::span<const std::size_t> positions);

struct Example {
  std::vector<TokenId> ids;
  int label = 0;
  double weight = 1.0;
};

/// Adds d(weight * CE)/dparams into `grads` and returns the unweighted
/// cross-entropy. With a null rng dropout is off.
double accumulate_gradient(const EncoderParams& params, const Example& example, EncoderParams& grads,
                           Rng* dropout_rng);

/// Weighted mean cross-entropy, sum(w_i CE_i) / sum(w_i), without dropout.
double weighted_loss(const EncoderParams& params, std::span<const Example> examples, unsigned threads = 1);

enum class Optimizer { sgd, adam };

struct TrainOptions {
  double learning_rate = 1e-3;
  int epochs = 20;
  int batch_size = 16;
  std::uint64_t seed = 1;
  double weight_decay = 0.0;
  Optimizer optimizer = Optimizer::adam;
  unsigned threads = 1;

  nlohmann::json to_json() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> validation_loss;
};

struct TrainHistory {
  /// Entry 0 is the loss before any update.
  std::vector<EpochRecord> epochs;
  std::string to_csv() const;
};

struct TrainResult {
  EncoderParams params;
  TrainHistory history;
};

/// Mini-batch training of weighted cross-entropy. Batch gradients are
/// normalized by the batch's total weight. Deterministic given the seed and
/// independent of the thread count. Throws Error(invalid_argument) for an
/// empty training set.
TrainResult train_classifier(EncoderParams params, std::span<const Example> train, const TrainOptions& options,
                             std::span<const Example> validation = {});

std::vector<int> predict(const EncoderParams& params, std::span<const Example> examples, unsigned threads = 1);

struct GradCheckEntry {
  std::string tensor;
  Eigen::Index row = 0;
  Eigen::Index col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::vector<GradCheckEntry> entries;
};

/// Central differences on `samples` coordinates drawn from every tensor
/// (embedding rows restricted to the ids in the example). Relative error is
/// |a - n| / max(|a|, |n|, 1e-6). Throws Error(invalid_argument) unless
/// epsilon is in (0, 1e-2].
GradCheckResult grad_check(const EncoderParams& params, const Example& example, double epsilon,
                           std::size_t samples = 20, std::uint64_t seed = 1);

}  // namespace vulstyle
