// Copyright 2026 The fedlsr Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedlsr/evaluate.hpp"

#include <algorithm>

#include "fedlsr/error.hpp"
#include "fedlsr/numerics.hpp"

namespace fedlsr {

double evaluate(const ModelParams& params, const LabeledDataset& test) {
  if (test.size() == 0) throw InvalidInput("evaluate: empty test set");
  constexpr std::size_t kChunk = 512;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < test.size(); start += kChunk) {
    const std::size_t stop = std::min(test.size(), start + kChunk);
    Matrix batch(stop - start, test.dim());
    for (std::size_t i = start; i < stop; ++i) {
      std::copy_n(test.features.row(i).begin(), test.dim(), batch.row(i - start).begin());
    }
    const Matrix logits = forward(params, batch);
    for (std::size_t i = start; i < stop; ++i) {
      if (argmax(logits.row(i - start)) == static_cast<std::size_t>(test.true_labels[i])) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

}  // namespace fedlsr
