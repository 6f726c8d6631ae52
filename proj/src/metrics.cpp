#include "soz/metrics.hpp"

#include "soz/error.hpp"

namespace soz {

Metrics compute_metrics(std::span<const int> predictions, std::span<const int> labels,
                        std::span<const int> rows) {
  if (predictions.size() != labels.size()) {
    throw DomainError("compute_metrics: prediction and label counts differ");
  }
  Metrics m;
  for (int r : rows) {
    const auto i = static_cast<std::size_t>(r);
    if (i >= labels.size()) throw DomainError("compute_metrics: row index out of range");
    const bool p = predictions[i] == 1;
    const bool y = labels[i] == 1;
    if (p && y) ++m.tp;
    else if (p) ++m.fp;
    else if (y) ++m.fn;
    else ++m.tn;
  }
  const auto ratio = [&m](int num, int den) {
    if (den == 0) {
      m.zero_denominator = true;
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  m.acc = ratio(m.tp + m.tn, m.tp + m.tn + m.fp + m.fn);
  m.recall = ratio(m.tp, m.tp + m.fn);
  m.precision = ratio(m.tp, m.tp + m.fp);
  m.f1 = ratio(2 * m.tp, 2 * m.tp + m.fp + m.fn);
  return m;
}

}  // namespace soz
