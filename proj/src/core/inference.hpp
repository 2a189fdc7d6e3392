#pragma once

#include <string>
#include <vector>

#include "core/common.hpp"
#include "core/data.hpp"
#include "core/model.hpp"

namespace procl {

struct Proposal {
    double t_start = 0.0;  // seconds
    double t_end = 0.0;
    double score = 0.0;  // psi
    int cls = 0;         // 0-based foreground class
};

struct InferenceConfig {
    double rho = 0.2;      // video-level class threshold on softmax scores
    double nms_iou = 0.5;  // suppression threshold
    double gamma = 7.0;    // top-k pooling ratio
    std::vector<double> act_thresholds;  // attention thresholds for segment mining
    bool fuse_video_score = false;       // multiply psi by the video-level class score

    static std::vector<double> default_act_thresholds();  // 0.10, 0.15, ..., 0.90
};

// Inclusive snippet-index run.
struct SnippetSegment {
    int first = 0;
    int last = 0;
};

// Foreground classes whose softmaxed top-k pooled score exceeds rho; when
// none pass, the single best foreground class. video_probs (optional out)
// receives the full softmax vector.
std::vector<int> video_level_classify(const Mat& S_hat, double gamma, double rho,
                                      std::vector<double>* video_probs = nullptr);

// Maximal runs with A[t] >= tau, unioned over all thresholds (duplicates
// kept).
std::vector<SnippetSegment> extract_segments(const std::vector<double>& A,
                                             const std::vector<double>& thresholds);

// Outer-inner contrast: mean activation inside the segment minus mean over
// the two flanking margins (25% of the segment length each side, clipped to
// the video; an empty outer region contributes zero).
double score_proposal(const SnippetSegment& seg, const Mat& S_hat, int cls);

// Greedy class-wise NMS; ties on score break by earlier start, then shorter
// duration. Output ordered by class, then by the same comparison.
std::vector<Proposal> nms(std::vector<Proposal> proposals, double iou_threshold);

std::vector<Proposal> localize(const VideoRecord& video, const ModelParams& params,
                               const InferenceConfig& cfg, double snippet_duration_sec);

struct ScoredProposal {
    std::string video_id;
    Proposal p;
};

void save_proposals(const std::vector<ScoredProposal>& props, const std::filesystem::path& path);
std::vector<ScoredProposal> load_proposals(const std::filesystem::path& path);

}  // namespace procl
