#pragma once

#include <vector>

#include "core/labeling.hpp"
#include "core/tensor.hpp"

namespace procl {

struct AblationFlags {
    bool cl = false;
    bool pcl = false;
    bool fbd = false;
    bool mpcl = false;

    std::string to_string() const;
};

struct LossReport {
    double mil = 0.0;
    double cl = 0.0;
    double pcl = 0.0;
    double fbd = 0.0;
    double mpcl = 0.0;
    double total = 0.0;
    AblationFlags flags;
};

// Video-level multiple-instance loss: cross-entropy between the L1-normalized
// label vector and the softmax of top-k pooled activations, for the raw
// branch (background bit 1) and the suppressed branch (background bit 0).
ad::Var mil_loss(const ad::Var& S, const ad::Var& S_hat, const std::vector<double>& y_tilde,
                 const std::vector<double>& y_hat, double gamma);

// Deterministic complementary learning: push probability off the categories
// the video-level label rules out, averaged over snippets.
ad::Var cl_loss(const ad::Var& P, const std::vector<double>& y_tilde);

// Pseudo complementary learning over unambiguous snippets; zero (with a
// caller-side warning) when no snippet is unambiguous.
ad::Var pcl_loss(const ad::Var& P, const ComplementaryMask& mask, const CategorySet& G);

// KL-based confidence weight exp(-l * log(l/j)); inputs clamped away from
// {0,1}. May exceed 1 when j > l; no clamp on the output.
double fbd_weight(double l, double j);

// Foreground/background mutual consistency on ambiguous snippets. Each
// direction treats the other branch as a fixed target, and the confidence
// weight is fixed too: gradient reaches predictions only.
ad::Var fbd_loss(const ad::Var& B, const ad::Var& P_bg, const std::vector<int>& F);

// Multi-scale pseudo complementary learning on the fused probability
// sequence; per-cell weights exp(-variance) are treated as fixed.
ad::Var mpcl_loss(const ad::Var& S_mu_probs, const ad::Var& S_sigma,
                  const ComplementaryMask& mask, const CategorySet& G);

// Sum of enabled components (MIL always on). Populates report.total.
double total_loss(LossReport& report);

}  // namespace procl
