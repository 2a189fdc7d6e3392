#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "core/common.hpp"
#include "core/rng.hpp"

namespace procl {

// Synthetic untrimmed-video benchmark. Each snippet feature is its class (or
// background) prototype plus Gaussian noise; confusable class pairs get
// prototypes placed at a small controlled distance so that snippet-level
// identity is genuinely ambiguous while video-level labels stay clean.
struct SyntheticSpec {
    int num_classes = 6;
    int feature_dim = 32;
    int train_videos = 60;
    int test_videos = 30;
    int min_len = 40;  // snippets
    int max_len = 80;
    int min_instances = 1;
    int max_instances = 4;
    int min_duration = 4;  // snippets
    int max_duration = 12;
    int max_classes_per_video = 2;
    double noise_sigma = 0.5;
    double prototype_norm = 2.0;
    double background_norm = 1.0;
    double confusable_distance = 0.7;
    std::vector<std::pair<int, int>> confusable_pairs{{0, 1}, {2, 3}};  // 0-based
    // Context: background-labeled snippets flanking each instance whose
    // features sit between the background prototype and the instance's class
    // prototype. They make the action/background boundary genuinely hard the
    // way context frames around real actions do.
    int context_snippets_max = 0;    // per side, drawn 0..max, clipped to the gap
    double context_strength = 0.55;  // 0 = pure background, 1 = pure class
    // Hard background: runs of background snippets that lean toward a random
    // class prototype, appearing in every video regardless of its labels.
    // Video-level supervision alone cannot tell them from weak actions of
    // that class; category exclusion can, on every video lacking the class.
    double hard_bg_fraction = 0.4;   // share of background snippets in hard runs
    double hard_bg_strength = 0.6;   // 0 = pure background, 1 = pure class
    int hard_bg_run_min = 2;
    int hard_bg_run_max = 5;
    double snippet_duration_sec = 1.0;

    void validate() const;
};

struct GtSegment {
    double t_start = 0.0;  // seconds
    double t_end = 0.0;
    int cls = 0;  // 0-based foreground class
};

struct VideoRecord {
    std::string id;
    Mat features;             // L x D
    std::vector<int> labels;  // distinct 0-based classes present, sorted
    std::vector<GtSegment> segments;
    std::vector<int> snippet_labels;  // per snippet: class, or num_classes for background

    int length() const { return features.rows; }
};

struct Dataset {
    std::vector<VideoRecord> videos;
    int num_classes = 0;
    int feature_dim = 0;
    double snippet_duration_sec = 1.0;
};

struct SyntheticData {
    Dataset train;
    Dataset test;
    Mat prototypes;  // (num_classes + 1) x D, background last
};

SyntheticData generate(const SyntheticSpec& spec, std::uint64_t seed);

// Uniform index sampling: index i of target_len maps to
// round(i * (L-1) / (target_len-1)); target_len 1 takes the middle snippet.
std::vector<int> sample_indices(int source_len, int target_len);
Mat sample_snippets(const Mat& features, int target_len);

// On-disk layout of one split directory:
//   meta.json              format version, C, D, snippet duration
//   annotations.jsonl      one record per video (classes 1-based, 0 = background)
//   features/<id>.feat     magic "PCLF", u32 version, u32 T, u32 D, f64 row-major
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

// Ground truth grouped per video for evaluation.
std::vector<GtSegment> const* find_video_segments(const Dataset& ds, const std::string& id);

}  // namespace procl
