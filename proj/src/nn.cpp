#include "advseq/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace advseq::nn {

void Adam::step(const std::vector<Param*>& params, const std::vector<Mat>& grads) {
  if (params.size() != grads.size())
    throw std::runtime_error("adam: parameter/gradient count mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, double(t_));
  const double bc2 = 1.0 - std::pow(beta2_, double(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    const Mat& g = grads[i];
    p.m = beta1_ * p.m + (1.0 - beta1_) * g;
    p.v = beta2_ * p.v + (1.0 - beta2_) * g.cwiseProduct(g);
    Mat mhat = p.m / bc1;
    Mat vhat = p.v / bc2;
    p.value.array() -= lr_ * mhat.array() / (vhat.array().sqrt() + eps_);
  }
}

void clip_global_norm(std::vector<Mat>& grads, double max_norm) {
  double sq = 0.0;
  for (const Mat& g : grads) sq += g.squaredNorm();
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    double s = max_norm / norm;
    for (Mat& g : grads) g *= s;
  }
}

GruParams::GruParams(const std::string& prefix, int input, int hidden)
    : Wr(prefix + ".Wr", hidden, input),
      Wz(prefix + ".Wz", hidden, input),
      Wn(prefix + ".Wn", hidden, input),
      Ur(prefix + ".Ur", hidden, hidden),
      Uz(prefix + ".Uz", hidden, hidden),
      Un(prefix + ".Un", hidden, hidden),
      br(prefix + ".br", hidden, 1),
      bz(prefix + ".bz", hidden, 1),
      bn(prefix + ".bn", hidden, 1) {}

void GruParams::init(Rng& rng) {
  Wr.glorot(rng);
  Wz.glorot(rng);
  Wn.glorot(rng);
  Ur.glorot(rng);
  Uz.glorot(rng);
  Un.glorot(rng);
}

void GruParams::collect(std::vector<Param*>& out) {
  for (Param* p : {&Wr, &Wz, &Wn, &Ur, &Uz, &Un, &br, &bz, &bn}) out.push_back(p);
}

Vec GruParams::step(const Vec& x, const Vec& h) const {
  Vec r = sigmoid_vec(Wr.value * x + Ur.value * h + br.value);
  Vec z = sigmoid_vec(Wz.value * x + Uz.value * h + bz.value);
  Vec n = (Wn.value * x + r.cwiseProduct(Un.value * h) + bn.value).array().tanh();
  return z.cwiseProduct(h) + (1.0 - z.array()).matrix().cwiseProduct(n);
}

GruParams::Taped GruParams::vars(Tape& t) const {
  Taped p;
  p.Wr = t.leaf(Wr.value, true);
  p.Wz = t.leaf(Wz.value, true);
  p.Wn = t.leaf(Wn.value, true);
  p.Ur = t.leaf(Ur.value, true);
  p.Uz = t.leaf(Uz.value, true);
  p.Un = t.leaf(Un.value, true);
  p.br = t.leaf(br.value, true);
  p.bz = t.leaf(bz.value, true);
  p.bn = t.leaf(bn.value, true);
  return p;
}

Var GruParams::step(Tape& t, const Taped& p, Var x, Var h) {
  Var r = t.sigmoid(t.add(t.add(t.matmul(p.Wr, x), t.matmul(p.Ur, h)), p.br));
  Var z = t.sigmoid(t.add(t.add(t.matmul(p.Wz, x), t.matmul(p.Uz, h)), p.bz));
  Var n = t.tanh(
      t.add(t.add(t.matmul(p.Wn, x), t.hadamard(r, t.matmul(p.Un, h))), p.bn));
  return t.add(t.hadamard(z, h), t.hadamard(t.affine(z, -1.0, 1.0), n));
}

Dense::Taped Dense::vars(Tape& t) const {
  return {t.leaf(W.value, true), t.leaf(b.value, true)};
}

Var Dense::apply(Tape& t, const Taped& p, Var x) {
  return t.add(t.matmul(p.W, x), p.b);
}

Vec softmax(const Vec& z) {
  double m = z.maxCoeff();
  Vec e = (z.array() - m).exp();
  return e / e.sum();
}

double log_sum_exp(const Vec& z) {
  double m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum());
}

Vec sigmoid_vec(const Vec& z) {
  return z.unaryExpr([](double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  });
}

int argmax(const Vec& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return best;
}

}  // namespace advseq::nn
