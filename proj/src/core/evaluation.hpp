#pragma once

#include <optional>
#include <string>
#include <vector>

#include "core/common.hpp"
#include "core/data.hpp"
#include "core/inference.hpp"
#include "core/labeling.hpp"

namespace procl {

// Intersection over union of two temporal segments; 0 when disjoint.
double temporal_iou(double a_start, double a_end, double b_start, double b_end);

// THUMOS-style protocol: proposals walk in descending score order (stable on
// ties), each matches the highest-IoU not-yet-matched ground truth of its
// video at or above the threshold; AP is the sum of precisions at the
// true-positive ranks divided by the number of ground truths.
//
// No ground truths: nullopt with no proposals (class skipped), 0 otherwise.
std::optional<double> average_precision(const std::vector<ScoredProposal>& proposals,
                                        const std::vector<std::pair<std::string, GtSegment>>& gts,
                                        double iou_threshold);

struct EvalReport {
    std::vector<double> thresholds;
    std::vector<double> map;              // mAP per threshold
    std::vector<int> classes;             // 0-based classes with >= 1 ground truth
    std::vector<std::vector<double>> ap;  // [class][threshold]
    std::optional<double> avg_01_05;      // mean mAP over {0.1..0.5} when present
    std::optional<double> avg_01_07;      // mean mAP over {0.1..0.7} when present
    double avg_all = 0.0;

    std::string table_text() const;  // aligned, human-readable
    std::string csv() const;
};

EvalReport map_table(const std::vector<ScoredProposal>& proposals, const Dataset& ground_truth,
                     const std::vector<double>& thresholds);

// Label-audit counting. Accumulate per video, then read the ratios.
struct AuditCounts {
    long long correct = 0;   // correctly excluded pairs / correctly labeled snippets
    long long counted = 0;   // excluded pairs / labeled snippets
    long long capacity = 0;  // unambiguous snippets x |G| / total snippets

    std::optional<double> precision() const {
        if (counted == 0) return std::nullopt;
        return static_cast<double>(correct) / static_cast<double>(counted);
    }
    double coverage() const {
        if (capacity == 0) return 0.0;
        return static_cast<double>(counted) / static_cast<double>(capacity);
    }
    void operator+=(const AuditCounts& o) {
        correct += o.correct;
        counted += o.counted;
        capacity += o.capacity;
    }
};

// Complementary-mask audit: an excluded pair (t, c) is correct when c is not
// the ground-truth label of snippet t.
AuditCounts audit_mask(const ComplementaryMask& mask, const CategorySet& G,
                       const std::vector<int>& gt_snippet_labels);

// One-hot pseudo-label audit: a labeled snippet is correct when its label
// matches the ground truth (background included).
AuditCounts audit_pseudo_labels(const Mat& onehot, const std::vector<int>& gt_snippet_labels);

}  // namespace procl
