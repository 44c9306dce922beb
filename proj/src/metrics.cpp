#include "vulstyle/metrics.hpp"

#include <cmath>

#include <fmt/format.h>

#include "vulstyle/error.hpp"

namespace vulstyle {
namespace {

double round4(double x) { return std::round(x * 1e4) / 1e4; }

}  // namespace

ConfusionMatrix confusion(std::span<const int> labels, std::span<const int> predictions) {
  if (labels.size() != predictions.size()) {
    throw Error(ErrorCode::invalid_argument,
                fmt::format("{} labels but {} predictions", labels.size(), predictions.size()));
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    const int p = predictions[i];
    if ((y != 0 && y != 1) || (p != 0 && p != 1)) {
      throw Error(ErrorCode::invalid_argument, fmt::format("non-binary value at index {}", i));
    }
    if (y == 1) {
      ++(p == 1 ? cm.tp : cm.fn);
    } else {
      ++(p == 1 ? cm.fp : cm.tn);
    }
  }
  return cm;
}

MetricsReport derive(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw Error(ErrorCode::invalid_argument, "confusion matrix is empty");
  const auto tp = static_cast<double>(cm.tp);
  MetricsReport r;
  r.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  if (cm.tp + cm.fp == 0) {
    r.precision_undefined = true;
  } else {
    r.precision = tp / static_cast<double>(cm.tp + cm.fp);
  }
  if (cm.tp + cm.fn == 0) {
    r.recall_undefined = true;
  } else {
    r.recall = tp / static_cast<double>(cm.tp + cm.fn);
  }
  if (r.precision + r.recall == 0.0) {
    r.f1_undefined = true;
  } else {
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  }
  return r;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json undefined = nlohmann::json::array();
  if (precision_undefined) undefined.push_back("precision");
  if (recall_undefined) undefined.push_back("recall");
  if (f1_undefined) undefined.push_back("f1");
  return {{"accuracy", round4(accuracy)},
          {"f1", round4(f1)},
          {"precision", round4(precision)},
          {"recall", round4(recall)},
          {"undefined", undefined}};
}

std::string MetricsReport::to_table(const std::string& row_name) const {
  const auto cell = [](double v, bool undefined) {
    return undefined ? fmt::format("{:>10}", "n/a") : fmt::format("{:>10.2f}", v * 100.0);
  };
  return fmt::format("{:<12}{:>10}{:>10}{:>10}{:>10}\n{:<12}{}{}{}{}\n", "", "Accuracy", "F1", "Precision",
                     "Recall", row_name, cell(accuracy, false), cell(f1, f1_undefined),
                     cell(precision, precision_undefined), cell(recall, recall_undefined));
}

}  // namespace vulstyle
