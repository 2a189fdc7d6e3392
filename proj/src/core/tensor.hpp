#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "core/common.hpp"

namespace procl::ad {

// Reverse-mode autodiff over dense double tensors.
//
// Graphs are built eagerly: each primitive allocates a Node holding the
// forward value, its parents, a backward rule, and a forward re-execution
// rule. backward() walks the DAG in reverse topological order exactly once.
//
// recompute() re-runs the stored forward rules after leaf values were edited
// in place. stop_grad and constant nodes keep their recorded values, so a
// central finite difference taken through recompute() differentiates exactly
// the function backward() differentiates, including losses with detached
// targets and weights. Gradients are stale after recompute(); it exists for
// derivative checking, not for training.

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;  // sized lazily by backward()
    bool requires_grad = false;
    bool trainable = false;  // leaf parameter
    const char* op = "leaf";
    std::string name;
    std::vector<Var> parents;
    std::function<void(Node&)> forward_fn;   // empty for leaves, constants, stop_grad
    std::function<void(Node&)> backward_fn;  // empty when !requires_grad

    std::int64_t size() const {
        std::int64_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }
    bool is_scalar() const { return size() == 1; }
    double scalar() const {
        if (!is_scalar()) throw ShapeError(cat("scalar() on tensor of shape ", shape_str(shape)));
        return value[0];
    }
    int rows() const { return shape.empty() ? 1 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
};

// Leaves and constants.
Var leaf(std::vector<int> shape, std::vector<double> value, bool trainable = false,
         std::string name = {});
Var constant(std::vector<int> shape, std::vector<double> value);
Var constant(const Mat& m);
Var scalar_const(double v);

// Elementwise.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var rsub_const(double c, const Var& a);  // c - a
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var log_eps(const Var& a);  // log(max(a, eps))
Var exp_v(const Var& a);

// Linear algebra / temporal.
Var matmul(const Var& a, const Var& b);
// x: T x Din, w: K x Din x Dout (K odd), bias: Dout (may be null). Zero "same" padding.
Var conv1d_same(const Var& x, const Var& w, const Var& bias);
Var softmax_rows(const Var& a);  // rank-1: whole vector; rank-2: per row
Var sum_all(const Var& a);
Var mean_all(const Var& a);
// Per column, mean of the k largest entries over rows; ties broken by lower
// row index. x: T x C -> C.
Var topk_mean_cols(const Var& x, int k);
Var slice_cols(const Var& x, int c0, int c1);  // columns [c0, c1)
Var concat_rows(const std::vector<Var>& parts);
// Linear time resampling over rows: out row i samples source coordinate
// i*(T-1)/(T'-1); T'=1 takes the row mean.
Var resample_rows(const Var& x, int new_rows);
Var scale_rows(const Var& m, const Var& v);  // m[t,c] * v[t]
Var reshape(const Var& a, std::vector<int> shape);
Var stop_grad(const Var& a);

// Graph walks.
std::vector<Node*> topo_order(const Var& root);
void backward(const Var& loss);
void recompute(const Var& root);

}  // namespace procl::ad
