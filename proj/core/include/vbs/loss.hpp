#pragma once

#include <vector>

#include "vbs/tensor.hpp"

namespace vbs {

enum class UncertaintyMode {
    kPrinted,       // lambda * (1 - p * log2 p)
    kEntropyBonus,  // lambda * (1 - H(p)), H the binary entropy
};

struct LossConfig {
    std::vector<double> class_weights;  // each in (0,1); empty means 0.5 everywhere
    double lambda = 0.0;
    double eps = 1e-7;
    UncertaintyMode mode = UncertaintyMode::kPrinted;
};

// Weighted binary cross-entropy over the class/cell lattice plus the
// uncertainty term. probs [c x Z x X] gets gradients; gt is a binary mask of
// the same shape; visibility (optional, [Z x X], 1 = ambiguous) restricts the
// uncertainty term. Result is the mean over all classes and cells.
TensorPtr bev_loss(const TensorPtr& probs, const TensorPtr& gt, const LossConfig& cfg,
                   const TensorPtr& visibility = nullptr);

// Frequency-based class weights 1 - freq, clamped to [0.5, 0.99].
std::vector<double> frequency_class_weights(const std::vector<TensorPtr>& labels, int classes);

}  // namespace vbs
