#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "core/dataset.hpp"
#include "core/dsp.hpp"

namespace testutil {

// Independent learnability oracle: multinomial logistic regression over
// time-pooled log-mel features, trained full-batch. If this simple model
// separates a dataset, a failing conv net points at the net, not the data.
inline double logreg_train_accuracy(const sblab::LabeledDataset& dataset,
                                    int n_mels = 20, int iterations = 300,
                                    double lr = 0.5) {
  size_t n = dataset.samples.size();
  int classes = dataset.num_classes;
  int dim = n_mels + 1;  // pooled mels plus bias

  std::vector<std::vector<double>> x(n, std::vector<double>(dim, 1.0));
  std::vector<int> y(n);
  for (size_t i = 0; i < n; ++i) {
    const auto& s = dataset.samples[i];
    sblab::Matrix2D mel = sblab::log_mel_features(s.waveform, s.sample_rate, n_mels);
    for (int m = 0; m < n_mels; ++m) {
      double acc = 0.0;
      for (size_t t = 0; t < mel.cols(); ++t) acc += mel(m, t);
      x[i][m] = 0.1 * acc / static_cast<double>(mel.cols());
    }
    y[i] = s.label;
  }

  std::vector<double> w(static_cast<size_t>(classes) * dim, 0.0);
  std::vector<double> logits(classes), probs(classes);
  std::vector<double> grad(w.size());
  for (int it = 0; it < iterations; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (size_t i = 0; i < n; ++i) {
      double max_logit = -1e300;
      for (int c = 0; c < classes; ++c) {
        double z = 0.0;
        for (int d = 0; d < dim; ++d) z += w[static_cast<size_t>(c) * dim + d] * x[i][d];
        logits[c] = z;
        max_logit = std::max(max_logit, z);
      }
      double sum = 0.0;
      for (int c = 0; c < classes; ++c) sum += std::exp(logits[c] - max_logit);
      for (int c = 0; c < classes; ++c) {
        probs[c] = std::exp(logits[c] - max_logit) / sum;
        double d_logit = probs[c] - (c == y[i] ? 1.0 : 0.0);
        for (int d = 0; d < dim; ++d) {
          grad[static_cast<size_t>(c) * dim + d] += d_logit * x[i][d];
        }
      }
    }
    for (size_t k = 0; k < w.size(); ++k) w[k] -= lr * grad[k] / static_cast<double>(n);
  }

  size_t correct = 0;
  for (size_t i = 0; i < n; ++i) {
    int best = 0;
    double best_z = -1e300;
    for (int c = 0; c < classes; ++c) {
      double z = 0.0;
      for (int d = 0; d < dim; ++d) z += w[static_cast<size_t>(c) * dim + d] * x[i][d];
      if (z > best_z) {
        best_z = z;
        best = c;
      }
    }
    if (best == y[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace testutil
