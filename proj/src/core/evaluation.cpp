#include "core/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

namespace procl {

double temporal_iou(double a_start, double a_end, double b_start, double b_end) {
    if (!(a_start < a_end) || !(b_start < b_end))
        throw ShapeError(cat("temporal_iou: degenerate segment [", a_start, ",", a_end,
                             "] vs [", b_start, ",", b_end, "]"));
    const double inter = std::min(a_end, b_end) - std::max(a_start, b_start);
    if (inter <= 0.0) return 0.0;
    const double uni = std::max(a_end, b_end) - std::min(a_start, b_start);
    return inter / uni;
}

std::optional<double> average_precision(
    const std::vector<ScoredProposal>& proposals,
    const std::vector<std::pair<std::string, GtSegment>>& gts, double iou_threshold) {
    const size_t n_gt = gts.size();
    if (n_gt == 0) {
        if (proposals.empty()) return std::nullopt;
        return 0.0;
    }
    std::vector<size_t> order(proposals.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&proposals](size_t a, size_t b) {
        return proposals[a].p.score > proposals[b].p.score;
    });

    std::vector<char> matched(n_gt, 0);
    double ap_sum = 0.0;
    int tp = 0;
    for (size_t rank = 0; rank < order.size(); ++rank) {
        const auto& sp = proposals[order[rank]];
        // Candidate ground truths of this video, best IoU first; ties go to
        // the earlier segment in input order.
        std::vector<std::pair<double, size_t>> cand;
        for (size_t g = 0; g < n_gt; ++g) {
            if (gts[g].first != sp.video_id) continue;
            const auto& seg = gts[g].second;
            cand.emplace_back(temporal_iou(sp.p.t_start, sp.p.t_end, seg.t_start, seg.t_end), g);
        }
        std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (const auto& [iou, g] : cand) {
            if (iou < iou_threshold) break;
            if (matched[g]) continue;
            matched[g] = 1;
            ++tp;
            ap_sum += static_cast<double>(tp) / static_cast<double>(rank + 1);
            break;
        }
    }
    return ap_sum / static_cast<double>(n_gt);
}

EvalReport map_table(const std::vector<ScoredProposal>& proposals, const Dataset& ground_truth,
                     const std::vector<double>& thresholds) {
    if (thresholds.empty()) throw ConfigError("map_table: no IoU thresholds");
    bool any_gt = false;
    std::map<int, std::vector<std::pair<std::string, GtSegment>>> gt_by_class;
    for (const auto& v : ground_truth.videos)
        for (const auto& s : v.segments) {
            gt_by_class[s.cls].emplace_back(v.id, s);
            any_gt = true;
        }
    if (!any_gt) throw DataError("map_table: ground truth holds no segments");

    std::map<int, std::vector<ScoredProposal>> props_by_class;
    for (const auto& sp : proposals) props_by_class[sp.p.cls].push_back(sp);

    EvalReport rep;
    rep.thresholds = thresholds;
    for (const auto& [cls, _] : gt_by_class) rep.classes.push_back(cls);
    rep.ap.assign(rep.classes.size(), std::vector<double>(thresholds.size(), 0.0));
    rep.map.assign(thresholds.size(), 0.0);

    for (size_t ti = 0; ti < thresholds.size(); ++ti) {
        double sum = 0.0;
        for (size_t ci = 0; ci < rep.classes.size(); ++ci) {
            const int cls = rep.classes[ci];
            static const std::vector<ScoredProposal> kEmpty;
            const auto it = props_by_class.find(cls);
            const auto& props = it == props_by_class.end() ? kEmpty : it->second;
            const auto ap = average_precision(props, gt_by_class[cls], thresholds[ti]);
            rep.ap[ci][ti] = ap.value_or(0.0);
            sum += rep.ap[ci][ti];
        }
        rep.map[ti] = sum / static_cast<double>(rep.classes.size());
    }

    auto avg_over = [&rep](double lo, double hi) -> std::optional<double> {
        double sum = 0.0;
        int n = 0;
        // Members are the canonical 0.1 step grid within [lo, hi].
        for (double want = lo; want < hi + 1e-9; want += 0.1) {
            bool found = false;
            for (size_t i = 0; i < rep.thresholds.size(); ++i)
                if (std::abs(rep.thresholds[i] - want) < 1e-9) {
                    sum += rep.map[i];
                    ++n;
                    found = true;
                    break;
                }
            if (!found) return std::nullopt;
        }
        return sum / n;
    };
    rep.avg_01_05 = avg_over(0.1, 0.5);
    rep.avg_01_07 = avg_over(0.1, 0.7);
    double s = 0.0;
    for (double m : rep.map) s += m;
    rep.avg_all = s / static_cast<double>(rep.map.size());
    return rep;
}

std::string EvalReport::table_text() const {
    std::string out;
    char buf[64];
    out += "IoU      ";
    for (double t : thresholds) {
        std::snprintf(buf, sizeof(buf), "%8.2f", t);
        out += buf;
    }
    if (avg_01_05) out += "   AVG[0.1:0.5]";
    if (avg_01_07) out += "   AVG[0.1:0.7]";
    out += "\nmAP      ";
    for (double m : map) {
        std::snprintf(buf, sizeof(buf), "%8.4f", m);
        out += buf;
    }
    if (avg_01_05) {
        std::snprintf(buf, sizeof(buf), "%15.4f", *avg_01_05);
        out += buf;
    }
    if (avg_01_07) {
        std::snprintf(buf, sizeof(buf), "%15.4f", *avg_01_07);
        out += buf;
    }
    out += "\n";
    return out;
}

std::string EvalReport::csv() const {
    std::string out = "metric";
    char buf[64];
    for (double t : thresholds) {
        std::snprintf(buf, sizeof(buf), ",map_%.2f", t);
        out += buf;
    }
    out += ",avg_0.1_0.5,avg_0.1_0.7\nmAP";
    for (double m : map) {
        std::snprintf(buf, sizeof(buf), ",%.17g", m);
        out += buf;
    }
    if (avg_01_05)
        std::snprintf(buf, sizeof(buf), ",%.17g", *avg_01_05);
    else
        std::snprintf(buf, sizeof(buf), ",null");
    out += buf;
    if (avg_01_07)
        std::snprintf(buf, sizeof(buf), ",%.17g", *avg_01_07);
    else
        std::snprintf(buf, sizeof(buf), ",null");
    out += buf;
    out += "\n";
    return out;
}

AuditCounts audit_mask(const ComplementaryMask& mask, const CategorySet& G,
                       const std::vector<int>& gt_snippet_labels) {
    if (static_cast<int>(gt_snippet_labels.size()) != mask.R.rows)
        throw ShapeError(cat("audit_mask: ", gt_snippet_labels.size(), " labels vs T=",
                             mask.R.rows));
    AuditCounts out;
    out.capacity = static_cast<long long>(mask.num_unambiguous) * G.size();
    for (int t = 0; t < mask.R.rows; ++t) {
        if (mask.F[t]) continue;
        for (int c : G.members) {
            if (mask.R.at(t, c) != 0.0) continue;
            ++out.counted;
            if (c != gt_snippet_labels[t]) ++out.correct;
        }
    }
    return out;
}

AuditCounts audit_pseudo_labels(const Mat& onehot, const std::vector<int>& gt_snippet_labels) {
    if (static_cast<int>(gt_snippet_labels.size()) != onehot.rows)
        throw ShapeError(cat("audit_pseudo_labels: ", gt_snippet_labels.size(), " labels vs T=",
                             onehot.rows));
    AuditCounts out;
    out.capacity = onehot.rows;
    for (int t = 0; t < onehot.rows; ++t) {
        int label = -1;
        for (int c = 0; c < onehot.cols; ++c)
            if (onehot.at(t, c) == 1.0) {
                label = c;
                break;
            }
        if (label < 0) continue;
        ++out.counted;
        if (label == gt_snippet_labels[t]) ++out.correct;
    }
    return out;
}

}  // namespace procl
