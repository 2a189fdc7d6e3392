#include "core/losses.hpp"

#include <cmath>

#include "core/model.hpp"

namespace procl {

namespace {

std::vector<double> l1_normalize(const std::vector<double>& y, const char* which) {
    double s = 0.0;
    for (double v : y) s += v;
    if (s <= 0.0) throw DataError(cat("mil_loss: all-zero label vector (", which, ")"));
    std::vector<double> out(y.size());
    for (size_t i = 0; i < y.size(); ++i) out[i] = y[i] / s;
    return out;
}

ad::Var ce_branch(const ad::Var& S, const std::vector<double>& labels, double gamma,
                  const char* which) {
    if (static_cast<int>(labels.size()) != S->cols())
        throw ShapeError(cat("mil_loss: ", labels.size(), " labels vs ", S->cols(), " classes"));
    auto y = l1_normalize(labels, which);
    const int k = topk_count(S->rows(), gamma);
    auto q = ad::softmax_rows(ad::topk_mean_cols(S, k));
    auto ce = ad::scale(ad::sum_all(ad::mul(ad::constant({S->cols()}, std::move(y)),
                                            ad::log_eps(q))),
                        -1.0);
    return ce;
}

}  // namespace

std::string AblationFlags::to_string() const {
    std::string s;
    auto app = [&s](bool on, const char* name) {
        if (!on) return;
        if (!s.empty()) s += "+";
        s += name;
    };
    app(cl, "cl");
    app(pcl, "pcl");
    app(fbd, "fbd");
    app(mpcl, "mpcl");
    return s.empty() ? "mil-only" : s;
}

ad::Var mil_loss(const ad::Var& S, const ad::Var& S_hat, const std::vector<double>& y_tilde,
                 const std::vector<double>& y_hat, double gamma) {
    if (S->shape != S_hat->shape)
        throw ShapeError(cat("mil_loss: S ", shape_str(S->shape), " vs S_hat ",
                             shape_str(S_hat->shape)));
    return ad::add(ce_branch(S, y_tilde, gamma, "y_tilde"),
                   ce_branch(S_hat, y_hat, gamma, "y_hat"));
}

ad::Var cl_loss(const ad::Var& P, const std::vector<double>& y_tilde) {
    const int T = P->rows(), C1 = P->cols();
    if (static_cast<int>(y_tilde.size()) != C1)
        throw ShapeError(cat("cl_loss: ", y_tilde.size(), " labels vs ", C1, " classes"));
    std::vector<double> w(static_cast<size_t>(T) * C1);
    for (int t = 0; t < T; ++t)
        for (int c = 0; c < C1; ++c)
            w[static_cast<size_t>(t) * C1 + c] = (1.0 - y_tilde[c]) / T;
    auto neg_log = ad::log_eps(ad::rsub_const(1.0, P));
    return ad::scale(ad::sum_all(ad::mul(ad::constant(P->shape, std::move(w)), neg_log)), -1.0);
}

ad::Var pcl_loss(const ad::Var& P, const ComplementaryMask& mask, const CategorySet& G) {
    const int T = P->rows(), C1 = P->cols();
    if (mask.R.rows != T || mask.R.cols != C1)
        throw ShapeError(cat("pcl_loss: mask [", mask.R.rows, ",", mask.R.cols, "] vs P [", T,
                             ",", C1, "]"));
    if (mask.num_unambiguous == 0) return ad::scalar_const(0.0);
    std::vector<double> w(static_cast<size_t>(T) * C1, 0.0);
    const double inv_n = 1.0 / mask.num_unambiguous;
    for (int t = 0; t < T; ++t) {
        if (mask.F[t]) continue;
        for (int c : G.members)
            w[static_cast<size_t>(t) * C1 + c] = (1.0 - mask.R.at(t, c)) * inv_n;
    }
    auto neg_log = ad::log_eps(ad::rsub_const(1.0, P));
    return ad::scale(ad::sum_all(ad::mul(ad::constant(P->shape, std::move(w)), neg_log)), -1.0);
}

double fbd_weight(double l, double j) {
    l = clamp_unit(l);
    j = clamp_unit(j);
    return std::exp(-l * std::log(l / j));
}

namespace {

// -(t*log(x) + (1-t)*log(1-x)) with t detached.
ad::Var bce(const ad::Var& pred, const ad::Var& target_sg) {
    auto a = ad::mul(target_sg, ad::log_eps(pred));
    auto b = ad::mul(ad::rsub_const(1.0, target_sg), ad::log_eps(ad::rsub_const(1.0, pred)));
    return ad::scale(ad::add(a, b), -1.0);
}

}  // namespace

ad::Var fbd_loss(const ad::Var& B, const ad::Var& P_bg, const std::vector<int>& F) {
    if (B->shape != P_bg->shape || B->shape.size() != 1)
        throw ShapeError(cat("fbd_loss: B ", shape_str(B->shape), " vs P_bg ",
                             shape_str(P_bg->shape)));
    const int T = B->shape[0];
    if (static_cast<int>(F.size()) != T)
        throw ShapeError(cat("fbd_loss: |F|=", F.size(), " vs T=", T));
    int n = 0;
    for (int f : F) n += f;
    if (n == 0) return ad::scalar_const(0.0);

    // Confidence weights are fixed at the current values of both branches.
    std::vector<double> w1(T, 0.0), w2(T, 0.0);
    for (int t = 0; t < T; ++t) {
        if (!F[t]) continue;
        w1[t] = fbd_weight(B->value[t], P_bg->value[t]) / n;
        w2[t] = fbd_weight(P_bg->value[t], B->value[t]) / n;
    }
    auto term1 = ad::sum_all(ad::mul(ad::constant({T}, std::move(w1)),
                                     bce(B, ad::stop_grad(P_bg))));
    auto term2 = ad::sum_all(ad::mul(ad::constant({T}, std::move(w2)),
                                     bce(P_bg, ad::stop_grad(B))));
    return ad::add(term1, term2);
}

ad::Var mpcl_loss(const ad::Var& S_mu_probs, const ad::Var& S_sigma,
                  const ComplementaryMask& mask, const CategorySet& G) {
    const int T = S_mu_probs->rows(), C1 = S_mu_probs->cols();
    if (S_sigma->shape != S_mu_probs->shape)
        throw ShapeError(cat("mpcl_loss: S_sigma ", shape_str(S_sigma->shape), " vs S_mu ",
                             shape_str(S_mu_probs->shape)));
    if (mask.R.rows != T || mask.R.cols != C1)
        throw ShapeError(cat("mpcl_loss: mask [", mask.R.rows, ",", mask.R.cols, "] vs [", T, ",",
                             C1, "]"));
    if (mask.num_unambiguous == 0) return ad::scalar_const(0.0);
    const double inv = 1.0 / (static_cast<double>(mask.num_unambiguous) * G.size());
    std::vector<double> w(static_cast<size_t>(T) * C1, 0.0);
    for (int t = 0; t < T; ++t) {
        if (mask.F[t]) continue;
        for (int c : G.members) {
            const size_t i = static_cast<size_t>(t) * C1 + c;
            // Inconsistency across scales downweights the cell; the weight is
            // fixed, not differentiated through.
            w[i] = (1.0 - mask.R.at(t, c)) * std::exp(-S_sigma->value[i]) * inv;
        }
    }
    auto neg_log = ad::log_eps(ad::rsub_const(1.0, S_mu_probs));
    return ad::scale(
        ad::sum_all(ad::mul(ad::constant(S_mu_probs->shape, std::move(w)), neg_log)), -1.0);
}

double total_loss(LossReport& report) {
    double t = report.mil;
    if (report.flags.cl) t += report.cl;
    if (report.flags.pcl) t += report.pcl;
    if (report.flags.fbd) t += report.fbd;
    if (report.flags.mpcl) t += report.mpcl;
    report.total = t;
    return t;
}

}  // namespace procl
