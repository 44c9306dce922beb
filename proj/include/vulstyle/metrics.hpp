#pragma once

#include <cstdint>
#include <span>
#include <string>

#include <json.hpp>

namespace vulstyle {

/// Positive class is vulnerable (label 1).
struct ConfusionMatrix {
  std::uint64_t tp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + tn + fp + fn; }
  bool operator==(const ConfusionMatrix&) const = default;
};

/// Fractions in [0,1]. Undefined metrics are reported as 0 with a flag set.
struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;

  nlohmann::json to_json() const;
  /// Percentages to two decimals, columns in the order Accuracy, F1,
  /// Precision, Recall.
  std::string to_table(const std::string& row_name = "model") const;
};

/// Throws Error(invalid_argument) on length mismatch or non-binary values.
ConfusionMatrix confusion(std::span<const int> labels, std::span<const int> predictions);

/// Throws Error(invalid_argument) when the matrix is empty.
MetricsReport derive(const ConfusionMatrix& cm);

}  // namespace vulstyle
