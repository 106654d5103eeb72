#pragma once

#include <Eigen/Dense>
#include <vector>

namespace advseq::nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Handle into a Tape.
struct Var {
  int i = -1;
  bool valid() const { return i >= 0; }
};

// Reverse-mode autodiff over dense Eigen matrices. One Tape records one
// forward evaluation; backward() accumulates gradients into every node that
// (transitively) depends on a differentiable leaf. Column vectors are d x 1
// matrices; scalars are 1 x 1. Tie-breaking in max ops is first-index, so
// subgradients are deterministic.
class Tape {
 public:
  Var leaf(const Mat& value, bool needs_grad);

  Var matmul(Var a, Var b);     // A * B
  Var matmul_ta(Var a, Var b);  // A^T * B
  Var add(Var a, Var b);        // same shape
  Var hadamard(Var a, Var b);   // elementwise product, same shape
  Var affine(Var a, double scale, double shift);  // scale*A + shift
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var relu(Var a);
  Var vcat(Var a, Var b);                       // stack column vectors
  Var row_col(Var m, int r);                    // row r as a column vector
  Var rows_stack(const std::vector<Var>& rows); // T column vectors -> T x d
  Var embed_rows(Var table, const std::vector<int>& ids);  // T x d lookup
  Var mean_rows(Var m);                         // n x d -> d x 1
  Var max_rows(Var m);                          // n x d -> d x 1
  Var sum_elems(const std::vector<Var>& vs);    // elementwise sum
  Var max_elems(const std::vector<Var>& vs);    // elementwise max
  Var softmax_col(Var a);                       // k x 1 -> simplex
  Var ce_logits(Var logits, int target);        // scalar cross-entropy
  Var pick(Var a, int i);                       // a(i, 0) as scalar
  Var dot(Var a, Var b);                        // column vectors -> scalar
  Var sqrt_s(Var a);                            // scalar sqrt
  Var mul_ss(Var a, Var b);                     // scalar product
  Var div_ss(Var a, Var b);                     // scalar quotient
  Var abs_s(Var a);                             // scalar |a|

  const Mat& val(Var v) const { return nodes_[v.i].val; }
  const Mat& grad(Var v) const;
  bool has_grad(Var v) const;

  // Seeds root (must be 1 x 1) with gradient 1 and sweeps the tape.
  void backward(Var root);

  void clear() { nodes_.clear(); }
  size_t size() const { return nodes_.size(); }

 private:
  enum class Op {
    Leaf, MatMul, MatMulTA, Add, Hadamard, Affine, Sigmoid, Tanh, Relu,
    VCat, RowCol, RowsStack, EmbedRows, MeanRows, MaxRows, SumElems,
    MaxElems, SoftmaxCol, CeLogits, Pick, Dot, SqrtS, MulSS, DivSS, AbsS
  };

  struct Node {
    Op op;
    Mat val;
    Mat grad;  // empty until touched
    int a = -1, b = -1;
    std::vector<int> parents;  // n-ary ops
    std::vector<int> aux;      // ids, winner indices, targets
    double s0 = 0.0, s1 = 0.0;
    bool needs = false;
  };

  int push(Node&& n);
  Mat& g(int i, const Mat& like);
  bool needs(int i) const { return i >= 0 && nodes_[i].needs; }

  std::vector<Node> nodes_;
};

}  // namespace advseq::nn
