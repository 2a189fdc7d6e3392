#include "core/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace procl {

bool CategorySet::contains(int c) const {
    return std::binary_search(members.begin(), members.end(), c);
}

CategorySet make_category_set(const std::vector<int>& video_labels, int num_classes) {
    if (video_labels.empty())
        throw DataError("category set: video must carry at least one label");
    CategorySet g;
    g.background = num_classes;
    g.members = video_labels;
    for (int c : g.members)
        if (c < 0 || c >= num_classes)
            throw DataError(cat("category set: label ", c, " outside [0,", num_classes, ")"));
    g.members.push_back(g.background);
    std::sort(g.members.begin(), g.members.end());
    g.members.erase(std::unique(g.members.begin(), g.members.end()), g.members.end());
    return g;
}

std::pair<double, double> restricted_fg_bg_probs(const double* row, int width,
                                                 const CategorySet& G, RestrictMode mode) {
    if (G.background >= width)
        throw ShapeError(cat("restricted_fg_bg_probs: background index ", G.background,
                             " outside row of width ", width));
    double fg = 0.0, bg = 0.0;
    if (mode == RestrictMode::SoftmaxOverG) {
        double mx = row[G.members.front()];
        for (int c : G.members) mx = std::max(mx, row[c]);
        for (int c : G.members) {
            const double e = std::exp(row[c] - mx);
            (c == G.background ? bg : fg) += e;
        }
    } else {
        for (int c : G.members) {
            const double p = std::max(row[c], 0.0);
            (c == G.background ? bg : fg) += p;
        }
        if (fg + bg < clamp_epsilon()) {
            // Vanishing mass inside G: fall back to uniform over G.
            fg = static_cast<double>(G.num_foreground());
            bg = 1.0;
        }
    }
    const double z = fg + bg;
    return {fg / z, bg / z};
}

double fg_bg_entropy(double s_fg, double s_bg) {
    const double eps = clamp_epsilon();
    auto term = [eps](double p) { return p <= eps ? 0.0 : -p * std::log(p); };
    return term(s_fg) + term(s_bg);
}

std::vector<int> identify_ambiguous(const std::vector<double>& h, double theta,
                                    bool high_entropy_is_ambiguous) {
    if (!(theta > 0.0) || theta > std::log(2.0) + 1e-12)
        throw ConfigError(cat("identify_ambiguous: theta=", theta, " outside (0, ln 2]"));
    std::vector<int> f(h.size(), 0);
    for (size_t t = 0; t < h.size(); ++t) {
        const bool above = h[t] >= theta;
        f[t] = (high_entropy_is_ambiguous ? above : !above) ? 1 : 0;
    }
    return f;
}

int AmbiguityState::num_unambiguous() const {
    int n = 0;
    for (int f : F) n += 1 - f;
    return n;
}

AmbiguityState identify_state(const Mat& S, const CategorySet& G, double theta, RestrictMode mode,
                              bool high_entropy_is_ambiguous) {
    AmbiguityState st;
    st.theta = theta;
    st.G = G;
    st.h.resize(S.rows);
    for (int t = 0; t < S.rows; ++t) {
        auto [fg, bg] = restricted_fg_bg_probs(&S.v[static_cast<size_t>(t) * S.cols], S.cols, G,
                                               mode);
        st.h[t] = fg_bg_entropy(fg, bg);
    }
    st.F = identify_ambiguous(st.h, theta, high_entropy_is_ambiguous);
    return st;
}

ComplementaryMask assign_pseudo_complementary(const Mat& S, const std::vector<int>& F,
                                              const CategorySet& G) {
    if (static_cast<int>(F.size()) != S.rows)
        throw ShapeError(cat("assign_pseudo_complementary: |F|=", F.size(), " vs T=", S.rows));
    if (G.num_foreground() < 1)
        throw DataError("assign_pseudo_complementary: G holds no foreground category");
    ComplementaryMask m;
    m.R = Mat(S.rows, S.cols, 1.0);
    m.mu.assign(S.rows, 0.0);
    m.F = F;
    for (int t = 0; t < S.rows; ++t) {
        if (F[t]) continue;
        ++m.num_unambiguous;
        double mu = 0.0;
        for (int c : G.members) mu += S.at(t, c);
        mu /= G.size();
        m.mu[t] = mu;
        for (int c : G.members)
            if (S.at(t, c) < mu) m.R.at(t, c) = 0.0;

        // Foreground and background cannot co-exist: if both survive, drop
        // the side with the lower activation. Ties keep the foreground.
        const bool bg_kept = m.R.at(t, G.background) > 0.0;
        double best_fg = -std::numeric_limits<double>::infinity();
        bool any_fg = false;
        for (int c : G.members) {
            if (c == G.background || m.R.at(t, c) == 0.0) continue;
            any_fg = true;
            best_fg = std::max(best_fg, S.at(t, c));
        }
        if (bg_kept && any_fg) {
            if (S.at(t, G.background) > best_fg) {
                for (int c : G.members)
                    if (c != G.background) m.R.at(t, c) = 0.0;
            } else {
                m.R.at(t, G.background) = 0.0;
            }
        }
    }
    return m;
}

MultiScaleBundle multiscale_fuse(const std::vector<Mat>& P_scales, const CategorySet& G,
                                 double theta, bool high_entropy_is_ambiguous) {
    if (P_scales.size() < 2)
        throw ShapeError(cat("multiscale_fuse: need >= 2 scales, got ", P_scales.size()));
    const int T = P_scales[0].rows, C1 = P_scales[0].cols;
    for (const auto& p : P_scales)
        if (p.rows != T || p.cols != C1)
            throw ShapeError(cat("multiscale_fuse: scale shape [", p.rows, ",", p.cols,
                                 "] vs [", T, ",", C1, "]"));
    MultiScaleBundle out;
    out.S_mu = Mat(T, C1);
    out.S_sigma = Mat(T, C1);
    const double n = static_cast<double>(P_scales.size());
    for (size_t i = 0; i < out.S_mu.v.size(); ++i) {
        double mean = 0.0;
        for (const auto& p : P_scales) mean += p.v[i];
        mean /= n;
        double var = 0.0;
        for (const auto& p : P_scales) {
            const double d = p.v[i] - mean;
            var += d * d;
        }
        out.S_mu.v[i] = mean;
        out.S_sigma.v[i] = var / n;
    }
    out.amb = identify_state(out.S_mu, G, theta, RestrictMode::ConditionOnG,
                             high_entropy_is_ambiguous);
    out.mask = assign_pseudo_complementary(out.S_mu, out.amb.F, G);
    return out;
}

Mat assign_threshold_pseudo_labels(const std::vector<double>& A, const Mat& S_hat, double tau) {
    if (static_cast<int>(A.size()) != S_hat.rows)
        throw ShapeError(cat("threshold pseudo labels: |A|=", A.size(), " vs T=", S_hat.rows));
    if (!(tau > 0.0 && tau < 1.0))
        throw ConfigError(cat("threshold pseudo labels: tau=", tau, " outside (0,1)"));
    const int bg = S_hat.cols - 1;
    Mat onehot(S_hat.rows, S_hat.cols, 0.0);
    for (int t = 0; t < S_hat.rows; ++t) {
        if (A[t] >= tau) {
            int best = 0;
            for (int c = 1; c < bg; ++c)
                if (S_hat.at(t, c) > S_hat.at(t, best)) best = c;
            onehot.at(t, best) = 1.0;
        } else {
            onehot.at(t, bg) = 1.0;
        }
    }
    return onehot;
}

}  // namespace procl
