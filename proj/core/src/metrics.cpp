#include "vbs/metrics.hpp"

#include <iomanip>
#include <sstream>

namespace vbs {

void ConfusionAccumulator::merge(const ConfusionAccumulator& other) {
    if (other.intersection.size() != intersection.size())
        throw ConfigError("ConfusionAccumulator::merge: class count mismatch");
    for (std::size_t i = 0; i < intersection.size(); ++i) {
        intersection[i] += other.intersection[i];
        set_union[i] += other.set_union[i];
    }
}

void confusion_update(ConfusionAccumulator& acc, const TensorPtr& probs, const TensorPtr& gt,
                      double threshold) {
    if (probs->shape != gt->shape)
        throw DataError("confusion_update: shape mismatch, " + shape_str(probs->shape) + " vs " +
                        shape_str(gt->shape));
    if (probs->shape.size() != 3 || probs->shape[0] != acc.classes())
        throw DataError("confusion_update: expected [c x Z x X] with c = " +
                        std::to_string(acc.classes()));
    if (threshold <= 0.0 || threshold >= 1.0)
        throw ConfigError("confusion_update: threshold must be in (0,1)");
    const std::int64_t c = probs->shape[0];
    const std::int64_t plane = probs->shape[1] * probs->shape[2];
    for (std::int64_t ci = 0; ci < c; ++ci)
        for (std::int64_t i = 0; i < plane; ++i) {
            const bool pred = probs->values[ci * plane + i] >= threshold;
            const bool truth = gt->values[ci * plane + i] != 0.0;
            if (pred && truth) ++acc.intersection[ci];
            if (pred || truth) ++acc.set_union[ci];
        }
}

IouReport iou_scores(const ConfusionAccumulator& acc, const std::vector<int>& subset_indices) {
    IouReport report;
    double total = 0.0;
    int defined = 0;
    for (int ci = 0; ci < acc.classes(); ++ci) {
        if (acc.set_union[ci] == 0) {
            report.per_class.push_back(std::nullopt);
            continue;
        }
        const double iou = static_cast<double>(acc.intersection[ci]) /
                           static_cast<double>(acc.set_union[ci]);
        report.per_class.push_back(iou);
        total += iou;
        ++defined;
    }
    if (defined > 0) report.mean = total / defined;
    double sub_total = 0.0;
    int sub_defined = 0;
    for (int ci : subset_indices) {
        if (ci < 0 || ci >= acc.classes()) throw ConfigError("iou_scores: subset index out of range");
        if (report.per_class[ci]) {
            sub_total += *report.per_class[ci];
            ++sub_defined;
        }
    }
    if (sub_defined > 0) report.subset_mean = sub_total / sub_defined;
    return report;
}

namespace {
const char* kColumns[] = {"Drivable", "PC",  "WW",    "CP", "Car", "Truck", "Bus",
                          "Trailer",  "CV",  "Ped",   "2W", "Cycle", "TC",  "TB"};
constexpr int kNumColumns = 14;

std::string cell(const std::optional<double>& iou) {
    if (!iou) return "-";
    std::ostringstream os;
    os << std::fixed << std::setprecision(1) << (*iou * 100.0);
    return os.str();
}
}  // namespace

std::string format_iou_table(const IouReport& report, const std::vector<int>& column_of) {
    std::vector<std::optional<double>> cols(kNumColumns);
    for (std::size_t k = 0; k < column_of.size() && k < report.per_class.size(); ++k) {
        const int col = column_of[k];
        if (col >= 0 && col < kNumColumns) cols[static_cast<std::size_t>(col)] = report.per_class[k];
    }
    std::ostringstream os;
    auto pad = [&os](const std::string& s) { os << std::setw(9) << s; };
    for (int i = 0; i < kNumColumns; ++i) pad(kColumns[i]);
    pad("Mean");
    pad("CS-Mean");
    os << "\n";
    for (int i = 0; i < kNumColumns; ++i) pad(cell(cols[static_cast<std::size_t>(i)]));
    pad(cell(report.mean));
    pad(cell(report.subset_mean));
    os << "\n";
    return os.str();
}

std::string format_iou_kv(const IouReport& report, const std::vector<std::string>& class_names) {
    std::ostringstream os;
    os << std::setprecision(17);
    for (std::size_t k = 0; k < report.per_class.size(); ++k) {
        const std::string name =
            k < class_names.size() ? class_names[k] : "class" + std::to_string(k);
        os << "iou." << name << "=";
        if (report.per_class[k])
            os << *report.per_class[k];
        else
            os << "nan";
        os << "\n";
    }
    os << "iou.mean=" << (report.mean ? std::to_string(*report.mean) : "nan") << "\n";
    os << "iou.subset_mean="
       << (report.subset_mean ? std::to_string(*report.subset_mean) : "nan") << "\n";
    return os.str();
}

}  // namespace vbs
