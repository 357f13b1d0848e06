#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vbs/tensor.hpp"

namespace vbs {

// Running per-class intersection/union cell counts. Merge across workers by
// elementwise addition; updates themselves are not thread-safe.
struct ConfusionAccumulator {
    std::vector<std::int64_t> intersection;
    std::vector<std::int64_t> set_union;

    explicit ConfusionAccumulator(int classes)
        : intersection(static_cast<std::size_t>(classes), 0),
          set_union(static_cast<std::size_t>(classes), 0) {}

    int classes() const { return static_cast<int>(intersection.size()); }
    void merge(const ConfusionAccumulator& other);
};

// Binarizes probs at threshold (p >= threshold counts as occupied) and adds
// per-class intersection/union counts. probs and gt are [c x Z x X].
void confusion_update(ConfusionAccumulator& acc, const TensorPtr& probs, const TensorPtr& gt,
                      double threshold = 0.5);

struct IouReport {
    std::vector<std::optional<double>> per_class;  // nullopt when union is 0
    std::optional<double> mean;
    std::optional<double> subset_mean;
};

// IoU_i = intersection / union, undefined classes excluded from both means.
// subset_indices selects the classes entering subset_mean.
IouReport iou_scores(const ConfusionAccumulator& acc, const std::vector<int>& subset_indices);

// Text table mirroring the nuScenes report layout: 14 class columns plus
// Mean and CS Mean; classes with no synthetic counterpart print "-".
// column_of[k] gives the report column for local class k (0-based, -1 drops).
std::string format_iou_table(const IouReport& report, const std::vector<int>& column_of);

// Flat machine-readable dump, one key=value per line.
std::string format_iou_kv(const IouReport& report, const std::vector<std::string>& class_names);

}  // namespace vbs
