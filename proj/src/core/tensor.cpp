#include "core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace procl::ad {

namespace {

std::int64_t product(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

Var make_node(const char* op, std::vector<int> shape, std::vector<Var> parents) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->shape = std::move(shape);
    n->value.assign(static_cast<size_t>(product(n->shape)), 0.0);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    return n;
}

void check_same_shape(const char* op, const Var& a, const Var& b) {
    if (a->shape != b->shape)
        throw ShapeError(
            cat(op, ": shape mismatch ", shape_str(a->shape), " vs ", shape_str(b->shape)));
}

void run_forward(Var& n) { n->forward_fn(*n); }

}  // namespace

Var leaf(std::vector<int> shape, std::vector<double> value, bool trainable, std::string name) {
    if (static_cast<std::int64_t>(value.size()) != product(shape))
        throw ShapeError(cat("leaf: ", value.size(), " values for shape ", shape_str(shape)));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->requires_grad = true;
    n->trainable = trainable;
    n->name = std::move(name);
    return n;
}

Var constant(std::vector<int> shape, std::vector<double> value) {
    if (static_cast<std::int64_t>(value.size()) != product(shape))
        throw ShapeError(cat("constant: ", value.size(), " values for shape ", shape_str(shape)));
    auto n = std::make_shared<Node>();
    n->op = "const";
    n->shape = std::move(shape);
    n->value = std::move(value);
    return n;
}

Var constant(const Mat& m) { return constant({m.rows, m.cols}, m.v); }

Var scalar_const(double v) { return constant({}, {v}); }

Var add(const Var& a, const Var& b) {
    check_same_shape("add", a, b);
    auto n = make_node("add", a->shape, {a, b});
    Node* pa = a.get();
    Node* pb = b.get();
    n->forward_fn = [pa, pb](Node& self) {
        for (size_t i = 0; i < self.value.size(); ++i) self.value[i] = pa->value[i] + pb->value[i];
    };
    run_forward(n);
    if (n->requires_grad)
        n->backward_fn = [pa, pb](Node& self) {
            if (pa->requires_grad)
                for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
            if (pb->requires_grad)
                for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i];
        };
    return n;
}

Var sub(const Var& a, const Var& b) { return add(a, scale(b, -1.0)); }

Var mul(const Var& a, const Var& b) {
    check_same_shape("mul", a, b);
    auto n = make_node("mul", a->shape, {a, b});
    Node* pa = a.get();
    Node* pb = b.get();
    n->forward_fn = [pa, pb](Node& self) {
        for (size_t i = 0; i < self.value.size(); ++i) self.value[i] = pa->value[i] * pb->value[i];
    };
    run_forward(n);
    if (n->requires_grad)
        n->backward_fn = [pa, pb](Node& self) {
            if (pa->requires_grad)
                for (size_t i = 0; i < self.grad.size(); ++i)
                    pa->grad[i] += self.grad[i] * pb->value[i];
            if (pb->requires_grad)
                for (size_t i = 0; i < self.grad.size(); ++i)
                    pb->grad[i] += self.grad[i] * pa->value[i];
        };
    return n;
}

Var scale(const Var& a, double s) {
    auto n = make_node("scale", a->shape, {a});
    Node* pa = a.get();
    n->forward_fn = [pa, s](Node& self) {
        for (size_t i = 0; i < self.value.size(); ++i) self.value[i] = s * pa->value[i];
    };
    run_forward(n);
    if (n->requires_grad)
        n->backward_fn = [pa, s](Node& self) {
            for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += s * self.grad[i];
        };
    return n;
}

Var rsub_const(double c, const Var& a) {
    auto n = make_node("rsub_const", a->shape, {a});
    Node* pa = a.get();
    n->forward_fn = [pa, c](Node& self) {
        for (size_t i = 0; i < self.value.size(); ++i) self.value[i] = c - pa->value[i];
    };
    run_forward(n);
    if (n->requires_grad)
        n->backward_fn = [pa](Node& self) {
            for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] -= self.grad[i];
        };
    return n;
}

Var relu(const Var& a) {
    auto n = make_node("relu", a->shape, {a});
    Node* pa = a.get();
    n->forward_fn = [pa](Node& self) {
        for (size_t i = 0; i < self.value.size(); ++i)
            self.value[i] = pa->value[i] > 0.0 ? pa->value[i] : 0.0;
    };
    run_forward(n);
    if (n->requires_grad)
        n->backward_fn = [pa](Node& self) {
            for (size_t i = 0; i < self.grad.size(); ++i)
                if (pa->value[i] > 0.0) pa->grad[i] += self.grad[i];
        };
    return n;
}

Var sigmoid(const Var& a) {
    auto n = make_node("sigmoid", a->shape, {a});
    Node* pa = a.get();
    n->forward_fn = [pa](Node& self) {
        for (size_t i = 0; i < self.value.size(); ++i) {
            const double x = pa->value[i];
            if (x >= 0.0) {
                self.value[i] = 1.0 / (1.0 + std::exp(-x));
            } else {
                const double e = std::exp(x);
                self.value[i] = e / (1.0 + e);
            }
        }
    };
    run_forward(n);
    if (n->requires_grad)
        n->backward_fn = [pa](Node& self) {
            for (size_t i = 0; i < self.grad.size(); ++i) {
                const double y = self.value[i];
                pa->grad[i] += self.grad[i] * y * (1.0 - y);
            }
        };
    return n;
}

Var log_eps(const Var& a) {
    auto n = make_node("log_eps", a->shape, {a});
    Node* pa = a.get();
    n->forward_fn = [pa](Node& self) {
        const double eps = clamp_epsilon();
        for (size_t i = 0; i < self.value.size(); ++i)
            self.value[i] = std::log(pa->value[i] > eps ? pa->value[i] : eps);
    };
    run_forward(n);
    if (n->requires_grad)
        n->backward_fn = [pa](Node& self) {
            const double eps = clamp_epsilon();
            for (size_t i = 0; i < self.grad.size(); ++i)
                if (pa->value[i] > eps) pa->grad[i] += self.grad[i] / pa->value[i];
        };
    return n;
}

Var exp_v(const Var& a) {
    auto n = make_node("exp", a->shape, {a});
    Node* pa = a.get();
    n->forward_fn = [pa](Node& self) {
        for (size_t i = 0; i < self.value.size(); ++i) self.value[i] = std::exp(pa->value[i]);
    };
    run_forward(n);
    if (n->requires_grad)
        n->backward_fn = [pa](Node& self) {
            for (size_t i = 0; i < self.grad.size(); ++i)
                pa->grad[i] += self.grad[i] * self.value[i];
        };
    return n;
}

Var matmul(const Var& a, const Var& b) {
    if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0])
        throw ShapeError(
            cat("matmul: ", shape_str(a->shape), " x ", shape_str(b->shape), " do not conform"));
    const int m = a->shape[0], k = a->shape[1], nn = b->shape[1];
    auto n = make_node("matmul", {m, nn}, {a, b});
    Node* pa = a.get();
    Node* pb = b.get();
    n->forward_fn = [pa, pb, m, k, nn](Node& self) {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < nn; ++j) {
                double s = 0.0;
                for (int l = 0; l < k; ++l) s += pa->value[i * k + l] * pb->value[l * nn + j];
                self.value[i * nn + j] = s;
            }
    };
    run_forward(n);
    if (n->requires_grad)
        n->backward_fn = [pa, pb, m, k, nn](Node& self) {
            if (pa->requires_grad)
                for (int i = 0; i < m; ++i)
                    for (int l = 0; l < k; ++l) {
                        double s = 0.0;
                        for (int j = 0; j < nn; ++j)
                            s += self.grad[i * nn + j] * pb->value[l * nn + j];
                        pa->grad[i * k + l] += s;
                    }
            if (pb->requires_grad)
                for (int l = 0; l < k; ++l)
                    for (int j = 0; j < nn; ++j) {
                        double s = 0.0;
                        for (int i = 0; i < m; ++i)
                            s += pa->value[i * k + l] * self.grad[i * nn + j];
                        pb->grad[l * nn + j] += s;
                    }
        };
    return n;
}

Var conv1d_same(const Var& x, const Var& w, const Var& bias) {
    if (x->shape.size() != 2 || w->shape.size() != 3 || x->shape[1] != w->shape[1])
        throw ShapeError(
            cat("conv1d_same: x ", shape_str(x->shape), " vs w ", shape_str(w->shape)));
    const int T = x->shape[0], din = x->shape[1], K = w->shape[0], dout = w->shape[2];
    if (K % 2 == 0) throw ShapeError(cat("conv1d_same: even kernel size ", K));
    if (bias && (bias->shape.size() != 1 || bias->shape[0] != dout))
        throw ShapeError(cat("conv1d_same: bias ", shape_str(bias->shape), " vs dout ", dout));
    std::vector<Var> parents = {x, w};
    if (bias) parents.push_back(bias);
    auto n = make_node("conv1d_same", {T, dout}, std::move(parents));
    Node* px = x.get();
    Node* pw = w.get();
    Node* pb = bias ? bias.get() : nullptr;
    const int h = K / 2;
    n->forward_fn = [px, pw, pb, T, din, K, dout, h](Node& self) {
        for (int t = 0; t < T; ++t)
            for (int o = 0; o < dout; ++o) {
                double s = pb ? pb->value[o] : 0.0;
                for (int k = 0; k < K; ++k) {
                    const int src = t + k - h;
                    if (src < 0 || src >= T) continue;
                    const double* xr = &px->value[static_cast<size_t>(src) * din];
                    const double* wr = &pw->value[(static_cast<size_t>(k) * din) * dout + o];
                    for (int i = 0; i < din; ++i) s += xr[i] * wr[static_cast<size_t>(i) * dout];
                }
                self.value[static_cast<size_t>(t) * dout + o] = s;
            }
    };
    run_forward(n);
    if (n->requires_grad)
        n->backward_fn = [px, pw, pb, T, din, K, dout, h](Node& self) {
            for (int t = 0; t < T; ++t) {
                const double* gr = &self.grad[static_cast<size_t>(t) * dout];
                for (int k = 0; k < K; ++k) {
                    const int src = t + k - h;
                    if (src < 0 || src >= T) continue;
                    const double* xr = &px->value[static_cast<size_t>(src) * din];
                    double* gx = px->requires_grad
                                     ? &px->grad[static_cast<size_t>(src) * din]
                                     : nullptr;
                    for (int i = 0; i < din; ++i) {
                        const size_t wbase = (static_cast<size_t>(k) * din + i) * dout;
                        double gxi = 0.0;
                        for (int o = 0; o < dout; ++o) {
                            const double g = gr[o];
                            if (pw->requires_grad) pw->grad[wbase + o] += g * xr[i];
                            gxi += g * pw->value[wbase + o];
                        }
                        if (gx) gx[i] += gxi;
                    }
                }
                if (pb && pb->requires_grad)
                    for (int o = 0; o < dout; ++o) pb->grad[o] += gr[o];
            }
        };
    return n;
}

Var softmax_rows(const Var& a) {
    if (a->shape.size() > 2)
        throw ShapeError(cat("softmax_rows: rank > 2, shape ", shape_str(a->shape)));
    const int rows = a->shape.size() == 2 ? a->shape[0] : 1;
    const int cols = a->shape.size() == 2 ? a->shape[1] : (a->shape.empty() ? 1 : a->shape[0]);
    auto n = make_node("softmax_rows", a->shape, {a});
    Node* pa = a.get();
    n->forward_fn = [pa, rows, cols](Node& self) {
        for (int r = 0; r < rows; ++r) {
            const double* in = &pa->value[static_cast<size_t>(r) * cols];
            double* out = &self.value[static_cast<size_t>(r) * cols];
            double mx = in[0];
            for (int c = 1; c < cols; ++c) mx = std::max(mx, in[c]);
            double sum = 0.0;
            for (int c = 0; c < cols; ++c) {
                out[c] = std::exp(in[c] - mx);
                sum += out[c];
            }
            for (int c = 0; c < cols; ++c) out[c] /= sum;
        }
    };
    run_forward(n);
    if (n->requires_grad)
        n->backward_fn = [pa, rows, cols](Node& self) {
            for (int r = 0; r < rows; ++r) {
                const double* y = &self.value[static_cast<size_t>(r) * cols];
                const double* gy = &self.grad[static_cast<size_t>(r) * cols];
                double dot = 0.0;
                for (int c = 0; c < cols; ++c) dot += gy[c] * y[c];
                double* gx = &pa->grad[static_cast<size_t>(r) * cols];
                for (int c = 0; c < cols; ++c) gx[c] += (gy[c] - dot) * y[c];
            }
        };
    return n;
}

Var sum_all(const Var& a) {
    auto n = make_node("sum_all", {}, {a});
    Node* pa = a.get();
    n->forward_fn = [pa](Node& self) {
        self.value[0] = std::accumulate(pa->value.begin(), pa->value.end(), 0.0);
    };
    run_forward(n);
    if (n->requires_grad)
        n->backward_fn = [pa](Node& self) {
            for (size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += self.grad[0];
        };
    return n;
}

Var mean_all(const Var& a) {
    const double inv = 1.0 / static_cast<double>(a->size());
    return scale(sum_all(a), inv);
}

Var topk_mean_cols(const Var& x, int k) {
    if (x->shape.size() != 2)
        throw ShapeError(cat("topk_mean_cols: need rank 2, got ", shape_str(x->shape)));
    const int T = x->shape[0], C = x->shape[1];
    if (k < 1 || k > T) throw ShapeError(cat("topk_mean_cols: k=", k, " outside [1,", T, "]"));
    auto n = make_node("topk_mean_cols", {C}, {x});
    Node* px = x.get();
    // Shared selection state: forward picks the indices, backward replays them.
    auto selected = std::make_shared<std::vector<int>>(static_cast<size_t>(C) * k);
    n->forward_fn = [px, T, C, k, selected](Node& self) {
        std::vector<int> order(T);
        for (int c = 0; c < C; ++c) {
            for (int t = 0; t < T; ++t) order[t] = t;
            // Value descending, lower index first on ties.
            std::partial_sort(order.begin(), order.begin() + k, order.end(),
                              [px, C, c](int i, int j) {
                                  const double vi = px->value[static_cast<size_t>(i) * C + c];
                                  const double vj = px->value[static_cast<size_t>(j) * C + c];
                                  if (vi != vj) return vi > vj;
                                  return i < j;
                              });
            double s = 0.0;
            for (int r = 0; r < k; ++r) {
                (*selected)[static_cast<size_t>(c) * k + r] = order[r];
                s += px->value[static_cast<size_t>(order[r]) * C + c];
            }
            self.value[c] = s / k;
        }
    };
    run_forward(n);
    if (n->requires_grad)
        n->backward_fn = [px, C, k, selected](Node& self) {
            for (int c = 0; c < C; ++c) {
                const double g = self.grad[c] / k;
                for (int r = 0; r < k; ++r)
                    px->grad[static_cast<size_t>((*selected)[static_cast<size_t>(c) * k + r]) * C +
                             c] += g;
            }
        };
    return n;
}

Var slice_cols(const Var& x, int c0, int c1) {
    if (x->shape.size() != 2 || c0 < 0 || c1 > x->shape[1] || c0 >= c1)
        throw ShapeError(
            cat("slice_cols: [", c0, ",", c1, ") of ", shape_str(x->shape)));
    const int T = x->shape[0], C = x->shape[1], W = c1 - c0;
    auto n = make_node("slice_cols", {T, W}, {x});
    Node* px = x.get();
    n->forward_fn = [px, T, C, c0, W](Node& self) {
        for (int t = 0; t < T; ++t)
            for (int c = 0; c < W; ++c)
                self.value[static_cast<size_t>(t) * W + c] =
                    px->value[static_cast<size_t>(t) * C + c0 + c];
    };
    run_forward(n);
    if (n->requires_grad)
        n->backward_fn = [px, T, C, c0, W](Node& self) {
            for (int t = 0; t < T; ++t)
                for (int c = 0; c < W; ++c)
                    px->grad[static_cast<size_t>(t) * C + c0 + c] +=
                        self.grad[static_cast<size_t>(t) * W + c];
        };
    return n;
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const int cols = parts[0]->cols();
    int rows = 0;
    for (const auto& p : parts) {
        if (p->shape.size() != 2 || p->cols() != cols)
            throw ShapeError(cat("concat_rows: incompatible part ", shape_str(p->shape)));
        rows += p->rows();
    }
    auto n = make_node("concat_rows", {rows, cols}, parts);
    std::vector<Node*> raw;
    for (const auto& p : parts) raw.push_back(p.get());
    n->forward_fn = [raw](Node& self) {
        size_t off = 0;
        for (Node* p : raw) {
            std::copy(p->value.begin(), p->value.end(), self.value.begin() + off);
            off += p->value.size();
        }
    };
    run_forward(n);
    if (n->requires_grad)
        n->backward_fn = [raw](Node& self) {
            size_t off = 0;
            for (Node* p : raw) {
                if (p->requires_grad)
                    for (size_t i = 0; i < p->value.size(); ++i) p->grad[i] += self.grad[off + i];
                off += p->value.size();
            }
        };
    return n;
}

Var resample_rows(const Var& x, int new_rows) {
    if (x->shape.size() != 2)
        throw ShapeError(cat("resample_rows: need rank 2, got ", shape_str(x->shape)));
    if (new_rows < 1) throw ShapeError(cat("resample_rows: new_rows=", new_rows));
    const int T = x->shape[0], C = x->shape[1];
    auto n = make_node("resample_rows", {new_rows, C}, {x});
    Node* px = x.get();
    if (new_rows == 1) {
        n->forward_fn = [px, T, C](Node& self) {
            for (int c = 0; c < C; ++c) {
                double s = 0.0;
                for (int t = 0; t < T; ++t) s += px->value[static_cast<size_t>(t) * C + c];
                self.value[c] = s / T;
            }
        };
        run_forward(n);
        if (n->requires_grad)
            n->backward_fn = [px, T, C](Node& self) {
                for (int t = 0; t < T; ++t)
                    for (int c = 0; c < C; ++c)
                        px->grad[static_cast<size_t>(t) * C + c] += self.grad[c] / T;
            };
        return n;
    }
    // Precompute interpolation taps; they depend on shapes only.
    auto lo = std::make_shared<std::vector<int>>(new_rows);
    auto wt = std::make_shared<std::vector<double>>(new_rows);
    for (int i = 0; i < new_rows; ++i) {
        const double src = static_cast<double>(i) * (T - 1) / (new_rows - 1);
        int l = static_cast<int>(std::floor(src));
        if (l > T - 2) l = T - 2;
        if (l < 0) l = 0;
        (*lo)[i] = l;
        (*wt)[i] = src - l;
    }
    n->forward_fn = [px, C, new_rows, lo, wt](Node& self) {
        for (int i = 0; i < new_rows; ++i) {
            const int l = (*lo)[i];
            const double w = (*wt)[i];
            const double* a = &px->value[static_cast<size_t>(l) * C];
            const double* b = &px->value[static_cast<size_t>(l + 1) * C];
            double* out = &self.value[static_cast<size_t>(i) * C];
            for (int c = 0; c < C; ++c) out[c] = (1.0 - w) * a[c] + w * b[c];
        }
    };
    run_forward(n);
    if (n->requires_grad)
        n->backward_fn = [px, C, new_rows, lo, wt](Node& self) {
            for (int i = 0; i < new_rows; ++i) {
                const int l = (*lo)[i];
                const double w = (*wt)[i];
                const double* g = &self.grad[static_cast<size_t>(i) * C];
                for (int c = 0; c < C; ++c) {
                    px->grad[static_cast<size_t>(l) * C + c] += (1.0 - w) * g[c];
                    px->grad[static_cast<size_t>(l + 1) * C + c] += w * g[c];
                }
            }
        };
    return n;
}

Var scale_rows(const Var& m, const Var& v) {
    if (m->shape.size() != 2 || v->shape.size() != 1 || v->shape[0] != m->shape[0])
        throw ShapeError(
            cat("scale_rows: m ", shape_str(m->shape), " vs v ", shape_str(v->shape)));
    const int T = m->shape[0], C = m->shape[1];
    auto n = make_node("scale_rows", m->shape, {m, v});
    Node* pm = m.get();
    Node* pv = v.get();
    n->forward_fn = [pm, pv, T, C](Node& self) {
        for (int t = 0; t < T; ++t) {
            const double a = pv->value[t];
            for (int c = 0; c < C; ++c)
                self.value[static_cast<size_t>(t) * C + c] =
                    pm->value[static_cast<size_t>(t) * C + c] * a;
        }
    };
    run_forward(n);
    if (n->requires_grad)
        n->backward_fn = [pm, pv, T, C](Node& self) {
            for (int t = 0; t < T; ++t) {
                const double a = pv->value[t];
                double acc = 0.0;
                for (int c = 0; c < C; ++c) {
                    const double g = self.grad[static_cast<size_t>(t) * C + c];
                    if (pm->requires_grad) pm->grad[static_cast<size_t>(t) * C + c] += g * a;
                    acc += g * pm->value[static_cast<size_t>(t) * C + c];
                }
                if (pv->requires_grad) pv->grad[t] += acc;
            }
        };
    return n;
}

Var reshape(const Var& a, std::vector<int> shape) {
    if (product(shape) != a->size())
        throw ShapeError(
            cat("reshape: ", shape_str(a->shape), " -> ", shape_str(shape), " size mismatch"));
    auto n = make_node("reshape", std::move(shape), {a});
    Node* pa = a.get();
    n->forward_fn = [pa](Node& self) {
        std::copy(pa->value.begin(), pa->value.end(), self.value.begin());
    };
    run_forward(n);
    if (n->requires_grad)
        n->backward_fn = [pa](Node& self) {
            for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
        };
    return n;
}

Var stop_grad(const Var& a) {
    auto n = std::make_shared<Node>();
    n->op = "stop_grad";
    n->shape = a->shape;
    n->value = a->value;
    n->parents = {a};
    // requires_grad stays false and forward_fn stays empty: the recorded value
    // is frozen both for backward and for recompute().
    return n;
}

std::vector<Node*> topo_order(const Var& root) {
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    // Iterative post-order DFS.
    std::vector<std::pair<Node*, size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

void backward(const Var& loss) {
    if (!loss->is_scalar())
        throw ShapeError(cat("backward: loss must be scalar, got ", shape_str(loss->shape)));
    auto order = topo_order(loss);
    for (Node* n : order)
        if (n->requires_grad) n->grad.assign(n->value.size(), 0.0);
    if (!loss->requires_grad) return;  // all-constant graph
    loss->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->requires_grad && n->backward_fn) n->backward_fn(*n);
    }
    for (Node* n : order) {
        if (!n->trainable || !n->requires_grad) continue;
        for (double g : n->grad)
            if (!std::isfinite(g))
                throw NumericError(cat("backward: non-finite gradient on leaf '",
                                       n->name.empty() ? "<unnamed>" : n->name, "'"));
    }
}

void recompute(const Var& root) {
    for (Node* n : topo_order(root))
        if (n->forward_fn) n->forward_fn(*n);
}

}  // namespace procl::ad
