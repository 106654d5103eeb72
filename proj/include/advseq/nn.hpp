#pragma once

#include <string>
#include <vector>

#include "advseq/rng.hpp"
#include "advseq/tape.hpp"

namespace advseq::nn {

// Named parameter matrix with its Adam moment estimates.
struct Param {
  std::string name;
  Mat value;
  Mat m, v;  // Adam first/second moments, sized with value

  Param() = default;
  Param(std::string n, int rows, int cols)
      : name(std::move(n)),
        value(Mat::Zero(rows, cols)),
        m(Mat::Zero(rows, cols)),
        v(Mat::Zero(rows, cols)) {}

  void glorot(Rng& rng) {
    double r = std::sqrt(6.0 / double(value.rows() + value.cols()));
    for (int i = 0; i < value.size(); ++i) value(i) = (2.0 * rng.uniform() - 1.0) * r;
  }
};

// Adam with bias correction. step() consumes one gradient per parameter, in
// the same order as the parameter list.
class Adam {
 public:
  explicit Adam(double lr) : lr_(lr) {}
  void step(const std::vector<Param*>& params, const std::vector<Mat>& grads);
  long steps() const { return t_; }

 private:
  double lr_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
};

// Rescales grads in place if their global L2 norm exceeds max_norm.
void clip_global_norm(std::vector<Mat>& grads, double max_norm);

// Gated recurrent unit. The taped path and the plain path evaluate the same
// equations; training uses the tape, inference the plain path.
struct GruParams {
  Param Wr, Wz, Wn;  // input weights, hidden x input
  Param Ur, Uz, Un;  // recurrent weights, hidden x hidden
  Param br, bz, bn;  // biases, hidden x 1

  GruParams() = default;
  GruParams(const std::string& prefix, int input, int hidden);
  void init(Rng& rng);
  void collect(std::vector<Param*>& out);
  int hidden() const { return static_cast<int>(Wr.value.rows()); }

  Vec step(const Vec& x, const Vec& h) const;

  struct Taped {
    Var Wr, Wz, Wn, Ur, Uz, Un, br, bz, bn;
  };
  Taped vars(Tape& t) const;
  static Var step(Tape& t, const Taped& p, Var x, Var h);
};

// Affine layer y = W x + b.
struct Dense {
  Param W, b;
  Dense() = default;
  Dense(const std::string& prefix, int out, int in)
      : W(prefix + ".W", out, in), b(prefix + ".b", out, 1) {}
  void init(Rng& rng) { W.glorot(rng); }
  void collect(std::vector<Param*>& out) {
    out.push_back(&W);
    out.push_back(&b);
  }
  Vec apply(const Vec& x) const { return W.value * x + b.value; }
  struct Taped {
    Var W, b;
  };
  Taped vars(Tape& t) const;
  static Var apply(Tape& t, const Taped& p, Var x);
};

// Plain-path helpers shared by the inference code.
Vec softmax(const Vec& z);
double log_sum_exp(const Vec& z);
Vec sigmoid_vec(const Vec& z);

// Deterministic argmax with ties broken toward the smallest index.
int argmax(const Vec& v);

}  // namespace advseq::nn
