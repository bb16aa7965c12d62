// Copyright 2026 The fedlsr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fedlsr/data.hpp"
#include "fedlsr/model.hpp"

namespace fedlsr {

/// Fraction of samples whose arg-max logit equals the TRUE label; ties go to
/// the lowest class index. Throws InvalidInput on an empty set.
double evaluate(const ModelParams& params, const LabeledDataset& test);

}  // namespace fedlsr
