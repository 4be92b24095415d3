#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "rematch/error.hpp"

namespace rematch::ad {

// Dense row-major matrix of doubles. Row vectors are 1 x n.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}
  double& at(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }
  size_t size() const { return a.size(); }
};

using Var = int;

// Single-use computation tape. Build a forward graph, call backward() once,
// read gradients off the leaves.
class Tape {
 public:
  Var leaf(Mat value);
  Var leaf(const std::vector<double>& row);  // 1 x n

  const Mat& val(Var v) const { return nodes_[v].val; }
  const Mat& grad(Var v) const { return nodes_[v].grad; }

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);                 // same shape
  Var add_rowvec(Var a, Var row);        // broadcast 1 x n over rows
  Var hadamard(Var a, Var b);
  Var scale(Var a, double s);
  Var transpose(Var a);
  Var relu(Var a);
  Var softmax_rows(Var a);
  Var layernorm_rows(Var x, Var gain, Var bias);  // gain/bias 1 x d
  Var slice_cols(Var a, int start, int n);
  Var slice_rows(Var a, int start, int n);
  Var concat_cols(const std::vector<Var>& parts);
  Var concat_rows(const std::vector<Var>& parts);
  Var mean_rows(Var a);        // T x d -> 1 x d
  Var reshape_row(Var a);      // T x d -> 1 x (T*d)
  Var sigmoid(Var a);

  // Weighted BCE evaluated from the logit (1 x 1), numerically stable:
  //   pos_w * y * softplus(-z) + neg_w * (1-y) * softplus(z)
  Var weighted_bce_with_logit(Var logit, double y, double pos_w, double neg_w);

  void backward(Var loss);  // loss must be 1 x 1

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Mat val;
    Mat grad;
    std::function<void(Tape&)> back;  // empty for leaves
  };
  std::vector<Node> nodes_;

  Var push(Mat value, std::function<void(Tape&)> back);
};

}  // namespace rematch::ad
