#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "core/common.hpp"

namespace procl {

// Category set G: the video's label classes plus the background index.
// Category indices are 0-based; background is num_classes.
struct CategorySet {
    std::vector<int> members;  // sorted, always contains background
    int background = -1;

    bool contains(int c) const;
    int num_foreground() const { return static_cast<int>(members.size()) - 1; }
    int size() const { return static_cast<int>(members.size()); }
};

CategorySet make_category_set(const std::vector<int>& video_labels, int num_classes);

// How a raw activation row is turned into a distribution over G before the
// foreground/background split. SoftmaxOverG exponentiates raw activations;
// ConditionOnG renormalizes rows that are already probabilities (the
// multi-scale fused sequence), where a second softmax would squash the
// foreground/background contrast and pin the entropy near its maximum.
enum class RestrictMode { SoftmaxOverG, ConditionOnG };

// Aggregate foreground mass vs background mass of one activation row,
// restricted to G. Returns (s_fg, s_bg) with s_fg + s_bg = 1.
std::pair<double, double> restricted_fg_bg_probs(const double* row, int width,
                                                 const CategorySet& G,
                                                 RestrictMode mode = RestrictMode::SoftmaxOverG);

// Binary entropy in nats; 0*log 0 treated as 0.
double fg_bg_entropy(double s_fg, double s_bg);

// f_t = 1 marks an ambiguous snippet. With high_entropy_is_ambiguous (the
// default) the rule is h >= theta; the flipped direction matches the
// comparison as printed in some descriptions of this scheme and is kept
// behind the switch.
std::vector<int> identify_ambiguous(const std::vector<double>& h, double theta,
                                    bool high_entropy_is_ambiguous = true);

struct AmbiguityState {
    std::vector<double> h;  // per-snippet fg/bg entropy, nats
    double theta = 0.0;
    std::vector<int> F;  // 1 = ambiguous
    CategorySet G;
    int num_unambiguous() const;
};

AmbiguityState identify_state(const Mat& S, const CategorySet& G, double theta,
                              RestrictMode mode = RestrictMode::SoftmaxOverG,
                              bool high_entropy_is_ambiguous = true);

// Pseudo complementary labels. r[t,c] = 0 excludes category c for snippet t.
struct ComplementaryMask {
    Mat R;                  // T x (C+1), entries 0/1
    std::vector<double> mu;  // per-snippet mean activation over G (unambiguous only)
    std::vector<int> F;      // ambiguity flags the mask was built under
    int num_unambiguous = 0;
};

// For unambiguous snippets, exclude categories of G scoring below the
// snippet's mean over G, then resolve foreground/background co-retention by
// dropping whichever side has the lower activation (ties keep foreground).
// Ambiguous rows stay all-ones; categories outside G are never touched.
ComplementaryMask assign_pseudo_complementary(const Mat& S, const std::vector<int>& F,
                                              const CategorySet& G);

struct MultiScaleBundle {
    Mat S_mu;     // elementwise mean of per-scale probability sequences
    Mat S_sigma;  // elementwise population variance
    AmbiguityState amb;      // F_ddot
    ComplementaryMask mask;  // R_ddot
};

// Fuses >= 2 per-scale probability sequences (already resampled to a common
// length and row-normalized), then runs the single-scale labeling pipeline on
// the fused sequence in ConditionOnG mode.
MultiScaleBundle multiscale_fuse(const std::vector<Mat>& P_scales, const CategorySet& G,
                                 double theta, bool high_entropy_is_ambiguous = true);

// Threshold pseudo-label baseline: snippets with A[t] >= tau get the argmax
// foreground class of S_hat[t] (ties to the lower index), others background.
// Returns T x (C+1) one-hot rows.
Mat assign_threshold_pseudo_labels(const std::vector<double>& A, const Mat& S_hat, double tau);

}  // namespace procl
