#include "core/model.hpp"

#include <algorithm>
#include <cmath>

namespace procl {

namespace {

ad::Var init_conv_weight(int K, int din, int dout, Rng& rng, const std::string& name) {
    const double a = std::sqrt(1.0 / (static_cast<double>(K) * din));
    std::vector<double> w(static_cast<size_t>(K) * din * dout);
    for (auto& x : w) x = rng.uniform(-a, a);
    return ad::leaf({K, din, dout}, std::move(w), true, name);
}

ad::Var init_bias(int dout, const std::string& name) {
    return ad::leaf({dout}, std::vector<double>(dout, 0.0), true, name);
}

}  // namespace

std::vector<ad::Var> ModelParams::all() const {
    return {emb1_w, emb1_b, emb2_w, emb2_b, cls_w, cls_b, attn_w, attn_b};
}

ModelParams ModelParams::init(const ModelConfig& cfg, Rng& rng) {
    if (cfg.feature_dim < 1 || cfg.num_classes < 1)
        throw ConfigError(cat("model: feature_dim=", cfg.feature_dim, " num_classes=",
                              cfg.num_classes));
    const int D = cfg.feature_dim;
    const int C1 = cfg.num_classes + 1;
    ModelParams p;
    p.cfg = cfg;
    p.emb1_w = init_conv_weight(cfg.kernel, D, D, rng, "emb1.w");
    p.emb1_b = init_bias(D, "emb1.b");
    p.emb2_w = init_conv_weight(cfg.kernel, D, D, rng, "emb2.w");
    p.emb2_b = init_bias(D, "emb2.b");
    p.cls_w = init_conv_weight(1, D, C1, rng, "cls.w");
    p.cls_b = init_bias(C1, "cls.b");
    p.attn_w = init_conv_weight(1, D, 1, rng, "attn.w");
    p.attn_b = init_bias(1, "attn.b");
    return p;
}

ActivationBundle forward(const Mat& x, const ModelParams& params, bool train_mode,
                         Rng* dropout_rng) {
    if (x.rows < 2) throw ShapeError(cat("forward: need T >= 2 snippets, got ", x.rows));
    if (x.cols != params.cfg.feature_dim)
        throw ShapeError(
            cat("forward: feature dim ", x.cols, " vs model ", params.cfg.feature_dim));
    if (!x.all_finite()) throw NumericError("forward: non-finite input features");

    const int T = x.rows;
    auto X = ad::constant(x);
    auto h1 = ad::relu(ad::conv1d_same(X, params.emb1_w, params.emb1_b));
    if (train_mode && params.cfg.dropout > 0.0) {
        if (!dropout_rng) throw Error("forward: train mode needs a dropout rng");
        const double rate = params.cfg.dropout;
        const double keep_scale = 1.0 / (1.0 - rate);
        std::vector<double> mask(h1->value.size());
        for (auto& m : mask) m = dropout_rng->uniform() < rate ? 0.0 : keep_scale;
        h1 = ad::mul(h1, ad::constant(h1->shape, std::move(mask)));
    }
    auto emb = ad::relu(ad::conv1d_same(h1, params.emb2_w, params.emb2_b));

    ActivationBundle b;
    b.T = T;
    b.S = ad::conv1d_same(emb, params.cls_w, params.cls_b);
    b.A = ad::reshape(ad::sigmoid(ad::conv1d_same(emb, params.attn_w, params.attn_b)), {T});
    b.B = ad::rsub_const(1.0, b.A);
    b.S_hat = ad::scale_rows(b.S, b.A);
    b.P = ad::softmax_rows(b.S);
    return b;
}

int topk_count(int T, double gamma) {
    if (T < 1) throw ShapeError(cat("topk_count: T=", T));
    if (!(gamma > 0.0)) throw ConfigError(cat("topk_count: gamma=", gamma));
    const int k = static_cast<int>(std::floor(static_cast<double>(T) / gamma));
    return std::max(1, std::min(k, T));
}

std::vector<double> topk_pool(const Mat& S, double gamma) {
    const int k = topk_count(S.rows, gamma);
    std::vector<double> out(S.cols, 0.0);
    std::vector<double> col(S.rows);
    for (int c = 0; c < S.cols; ++c) {
        for (int t = 0; t < S.rows; ++t) col[t] = S.at(t, c);
        // Summed in descending order so the arithmetic matches a full sort.
        std::partial_sort(col.begin(), col.begin() + k, col.end(), std::greater<>());
        double s = 0.0;
        for (int r = 0; r < k; ++r) s += col[r];
        out[c] = s / k;
    }
    return out;
}

}  // namespace procl
