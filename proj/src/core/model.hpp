#pragma once

#include <string>
#include <vector>

#include "core/common.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace procl {

struct ModelConfig {
    int feature_dim = 32;
    int num_classes = 6;  // foreground classes; background is index num_classes
    int kernel = 3;
    double dropout = 0.5;
};

// Two temporal conv embedding layers (kernel 3, D -> D) with ReLU, dropout
// after the first, then two parallel kernel-1 heads: classification
// (D -> C+1) and attention (D -> 1, sigmoid).
struct ModelParams {
    ModelConfig cfg;
    ad::Var emb1_w, emb1_b;
    ad::Var emb2_w, emb2_b;
    ad::Var cls_w, cls_b;
    ad::Var attn_w, attn_b;

    std::vector<ad::Var> all() const;

    // Weights uniform(-a, a) with a = sqrt(1/fan_in); biases zero.
    static ModelParams init(const ModelConfig& cfg, Rng& rng);
};

struct ActivationBundle {
    ad::Var S;      // T x (C+1) class activation sequence
    ad::Var A;      // T, attention in (0,1)
    ad::Var B;      // T, background attention 1 - A
    ad::Var S_hat;  // T x (C+1), S * A
    ad::Var P;      // T x (C+1), row softmax of S
    int T = 0;
};

// dropout_rng is consumed only in train mode with dropout > 0.
ActivationBundle forward(const Mat& x, const ModelParams& params, bool train_mode,
                         Rng* dropout_rng);

// k = max(1, floor(T / gamma)).
int topk_count(int T, double gamma);

// Plain-matrix top-k pooling for inference paths (no graph).
std::vector<double> topk_pool(const Mat& S, double gamma);

}  // namespace procl
