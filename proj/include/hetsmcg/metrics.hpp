#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace hetsmcg::harness {

/// Binary-classification metrics; precision/recall/F1 are macro-averaged.
struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  std::array<double, 2> per_class_f1{};
  std::array<std::array<std::size_t, 2>, 2> confusion{};  // [actual][predicted]
  bool zero_division = false;  // a per-class denominator was zero (score set to 0)
};

inline Metrics compute_metrics(const std::vector<int>& predictions,
                               const std::vector<int>& labels) {
  if (predictions.size() != labels.size() || predictions.empty())
    throw std::invalid_argument("compute_metrics: prediction/label size mismatch");
  Metrics m;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] > 1 || predictions[i] < 0 || predictions[i] > 1)
      throw std::out_of_range("compute_metrics: labels must be binary");
    m.confusion[labels[i]][predictions[i]]++;
    if (labels[i] == predictions[i]) ++correct;
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());

  double prec_sum = 0, rec_sum = 0, f1_sum = 0;
  for (int c = 0; c < 2; ++c) {
    const double tp = static_cast<double>(m.confusion[c][c]);
    const double fp = static_cast<double>(m.confusion[1 - c][c]);
    const double fn = static_cast<double>(m.confusion[c][1 - c]);
    double precision = 0, recall = 0, f1 = 0;
    if (tp + fp > 0)
      precision = tp / (tp + fp);
    else
      m.zero_division = true;
    if (tp + fn > 0)
      recall = tp / (tp + fn);
    else
      m.zero_division = true;
    if (precision + recall > 0)
      f1 = 2.0 * precision * recall / (precision + recall);
    else
      m.zero_division = true;
    m.per_class_f1[c] = f1;
    prec_sum += precision;
    rec_sum += recall;
    f1_sum += f1;
  }
  m.precision = prec_sum / 2.0;
  m.recall = rec_sum / 2.0;
  m.macro_f1 = f1_sum / 2.0;
  return m;
}

}  // namespace hetsmcg::harness
