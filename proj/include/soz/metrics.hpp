#pragma once

#include <span>
#include <string>
#include <vector>

namespace soz {

// Binary classification scores with SOZ (label 1) as the positive class.
// Undefined ratios are reported as 0 and flagged.
struct Metrics {
  double acc = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  int tp = 0, fp = 0, tn = 0, fn = 0;
  bool zero_denominator = false;
};

Metrics compute_metrics(std::span<const int> predictions, std::span<const int> labels,
                        std::span<const int> rows);

}  // namespace soz
