#include "advseq/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace advseq::nn {

namespace {
void check(bool ok, const char* msg) {
  if (!ok) throw std::runtime_error(std::string("tape: ") + msg);
}
}  // namespace

int Tape::push(Node&& n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Mat& Tape::g(int i, const Mat& like) {
  Node& n = nodes_[i];
  if (n.grad.size() == 0) n.grad = Mat::Zero(like.rows(), like.cols());
  return n.grad;
}

const Mat& Tape::grad(Var v) const {
  const Node& n = nodes_[v.i];
  check(n.grad.size() != 0, "gradient not computed for this node");
  return n.grad;
}

bool Tape::has_grad(Var v) const { return nodes_[v.i].grad.size() != 0; }

Var Tape::leaf(const Mat& value, bool needs_grad) {
  Node n;
  n.op = Op::Leaf;
  n.val = value;
  n.needs = needs_grad;
  return {push(std::move(n))};
}

Var Tape::matmul(Var a, Var b) {
  Node n;
  n.op = Op::MatMul;
  n.a = a.i;
  n.b = b.i;
  n.val = nodes_[a.i].val * nodes_[b.i].val;
  n.needs = needs(a.i) || needs(b.i);
  return {push(std::move(n))};
}

Var Tape::matmul_ta(Var a, Var b) {
  Node n;
  n.op = Op::MatMulTA;
  n.a = a.i;
  n.b = b.i;
  n.val = nodes_[a.i].val.transpose() * nodes_[b.i].val;
  n.needs = needs(a.i) || needs(b.i);
  return {push(std::move(n))};
}

Var Tape::add(Var a, Var b) {
  check(nodes_[a.i].val.rows() == nodes_[b.i].val.rows() &&
            nodes_[a.i].val.cols() == nodes_[b.i].val.cols(),
        "add shape mismatch");
  Node n;
  n.op = Op::Add;
  n.a = a.i;
  n.b = b.i;
  n.val = nodes_[a.i].val + nodes_[b.i].val;
  n.needs = needs(a.i) || needs(b.i);
  return {push(std::move(n))};
}

Var Tape::hadamard(Var a, Var b) {
  check(nodes_[a.i].val.rows() == nodes_[b.i].val.rows() &&
            nodes_[a.i].val.cols() == nodes_[b.i].val.cols(),
        "hadamard shape mismatch");
  Node n;
  n.op = Op::Hadamard;
  n.a = a.i;
  n.b = b.i;
  n.val = nodes_[a.i].val.cwiseProduct(nodes_[b.i].val);
  n.needs = needs(a.i) || needs(b.i);
  return {push(std::move(n))};
}

Var Tape::affine(Var a, double scale, double shift) {
  Node n;
  n.op = Op::Affine;
  n.a = a.i;
  n.s0 = scale;
  n.val = (scale * nodes_[a.i].val).array() + shift;
  n.needs = needs(a.i);
  return {push(std::move(n))};
}

Var Tape::sigmoid(Var a) {
  Node n;
  n.op = Op::Sigmoid;
  n.a = a.i;
  n.val = nodes_[a.i].val.unaryExpr(
      [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                                   : std::exp(x) / (1.0 + std::exp(x)); });
  n.needs = needs(a.i);
  return {push(std::move(n))};
}

Var Tape::tanh(Var a) {
  Node n;
  n.op = Op::Tanh;
  n.a = a.i;
  n.val = nodes_[a.i].val.array().tanh();
  n.needs = needs(a.i);
  return {push(std::move(n))};
}

Var Tape::relu(Var a) {
  Node n;
  n.op = Op::Relu;
  n.a = a.i;
  n.val = nodes_[a.i].val.cwiseMax(0.0);
  n.needs = needs(a.i);
  return {push(std::move(n))};
}

Var Tape::vcat(Var a, Var b) {
  check(nodes_[a.i].val.cols() == 1 && nodes_[b.i].val.cols() == 1,
        "vcat expects column vectors");
  Node n;
  n.op = Op::VCat;
  n.a = a.i;
  n.b = b.i;
  n.val.resize(nodes_[a.i].val.rows() + nodes_[b.i].val.rows(), 1);
  n.val << nodes_[a.i].val, nodes_[b.i].val;
  n.needs = needs(a.i) || needs(b.i);
  return {push(std::move(n))};
}

Var Tape::row_col(Var m, int r) {
  Node n;
  n.op = Op::RowCol;
  n.a = m.i;
  n.aux = {r};
  n.val = nodes_[m.i].val.row(r).transpose();
  n.needs = needs(m.i);
  return {push(std::move(n))};
}

Var Tape::rows_stack(const std::vector<Var>& rows) {
  check(!rows.empty(), "rows_stack of nothing");
  Node n;
  n.op = Op::RowsStack;
  n.val.resize(static_cast<int>(rows.size()), nodes_[rows[0].i].val.rows());
  for (size_t t = 0; t < rows.size(); ++t) {
    n.parents.push_back(rows[t].i);
    n.val.row(static_cast<int>(t)) = nodes_[rows[t].i].val.transpose();
    n.needs = n.needs || needs(rows[t].i);
  }
  return {push(std::move(n))};
}

Var Tape::embed_rows(Var table, const std::vector<int>& ids) {
  Node n;
  n.op = Op::EmbedRows;
  n.a = table.i;
  n.aux = ids;
  n.val.resize(static_cast<int>(ids.size()), nodes_[table.i].val.cols());
  for (size_t t = 0; t < ids.size(); ++t)
    n.val.row(static_cast<int>(t)) = nodes_[table.i].val.row(ids[t]);
  n.needs = needs(table.i);
  return {push(std::move(n))};
}

Var Tape::mean_rows(Var m) {
  Node n;
  n.op = Op::MeanRows;
  n.a = m.i;
  n.val = nodes_[m.i].val.colwise().mean().transpose();
  n.needs = needs(m.i);
  return {push(std::move(n))};
}

Var Tape::max_rows(Var m) {
  const Mat& v = nodes_[m.i].val;
  Node n;
  n.op = Op::MaxRows;
  n.a = m.i;
  n.val.resize(v.cols(), 1);
  n.aux.resize(v.cols());
  for (int j = 0; j < v.cols(); ++j) {
    int w = 0;
    for (int i = 1; i < v.rows(); ++i)
      if (v(i, j) > v(w, j)) w = i;
    n.aux[j] = w;
    n.val(j, 0) = v(w, j);
  }
  n.needs = needs(m.i);
  return {push(std::move(n))};
}

Var Tape::sum_elems(const std::vector<Var>& vs) {
  check(!vs.empty(), "sum_elems of nothing");
  Node n;
  n.op = Op::SumElems;
  n.val = nodes_[vs[0].i].val;
  n.parents.push_back(vs[0].i);
  n.needs = needs(vs[0].i);
  for (size_t k = 1; k < vs.size(); ++k) {
    n.val += nodes_[vs[k].i].val;
    n.parents.push_back(vs[k].i);
    n.needs = n.needs || needs(vs[k].i);
  }
  return {push(std::move(n))};
}

Var Tape::max_elems(const std::vector<Var>& vs) {
  check(!vs.empty(), "max_elems of nothing");
  Node n;
  n.op = Op::MaxElems;
  const Mat& first = nodes_[vs[0].i].val;
  n.val = first;
  n.aux.assign(first.size(), 0);
  n.parents.push_back(vs[0].i);
  n.needs = needs(vs[0].i);
  for (size_t k = 1; k < vs.size(); ++k) {
    const Mat& v = nodes_[vs[k].i].val;
    for (int idx = 0; idx < v.size(); ++idx) {
      if (v(idx) > n.val(idx)) {
        n.val(idx) = v(idx);
        n.aux[idx] = static_cast<int>(k);
      }
    }
    n.parents.push_back(vs[k].i);
    n.needs = n.needs || needs(vs[k].i);
  }
  return {push(std::move(n))};
}

Var Tape::softmax_col(Var a) {
  const Mat& z = nodes_[a.i].val;
  check(z.cols() == 1, "softmax_col expects a column vector");
  Node n;
  n.op = Op::SoftmaxCol;
  n.a = a.i;
  double m = z.maxCoeff();
  Mat e = (z.array() - m).exp();
  n.val = e / e.sum();
  n.needs = needs(a.i);
  return {push(std::move(n))};
}

Var Tape::ce_logits(Var logits, int target) {
  const Mat& z = nodes_[logits.i].val;
  check(z.cols() == 1, "ce_logits expects a column vector");
  check(target >= 0 && target < z.rows(), "ce_logits target out of range");
  Node n;
  n.op = Op::CeLogits;
  n.a = logits.i;
  n.aux = {target};
  double m = z.maxCoeff();
  double lse = m + std::log((z.array() - m).exp().sum());
  n.val = Mat::Constant(1, 1, lse - z(target, 0));
  n.needs = needs(logits.i);
  return {push(std::move(n))};
}

Var Tape::pick(Var a, int i) {
  check(nodes_[a.i].val.cols() == 1, "pick expects a column vector");
  Node n;
  n.op = Op::Pick;
  n.a = a.i;
  n.aux = {i};
  n.val = Mat::Constant(1, 1, nodes_[a.i].val(i, 0));
  n.needs = needs(a.i);
  return {push(std::move(n))};
}

Var Tape::dot(Var a, Var b) {
  check(nodes_[a.i].val.cols() == 1 && nodes_[b.i].val.cols() == 1 &&
            nodes_[a.i].val.rows() == nodes_[b.i].val.rows(),
        "dot shape mismatch");
  Node n;
  n.op = Op::Dot;
  n.a = a.i;
  n.b = b.i;
  n.val = Mat::Constant(
      1, 1, (nodes_[a.i].val.transpose() * nodes_[b.i].val)(0, 0));
  n.needs = needs(a.i) || needs(b.i);
  return {push(std::move(n))};
}

Var Tape::sqrt_s(Var a) {
  check(nodes_[a.i].val.size() == 1, "sqrt_s expects a scalar");
  check(nodes_[a.i].val(0, 0) > 0.0, "sqrt_s of non-positive value");
  Node n;
  n.op = Op::SqrtS;
  n.a = a.i;
  n.val = Mat::Constant(1, 1, std::sqrt(nodes_[a.i].val(0, 0)));
  n.needs = needs(a.i);
  return {push(std::move(n))};
}

Var Tape::mul_ss(Var a, Var b) {
  check(nodes_[a.i].val.size() == 1 && nodes_[b.i].val.size() == 1,
        "mul_ss expects scalars");
  Node n;
  n.op = Op::MulSS;
  n.a = a.i;
  n.b = b.i;
  n.val = Mat::Constant(1, 1, nodes_[a.i].val(0, 0) * nodes_[b.i].val(0, 0));
  n.needs = needs(a.i) || needs(b.i);
  return {push(std::move(n))};
}

Var Tape::div_ss(Var a, Var b) {
  check(nodes_[a.i].val.size() == 1 && nodes_[b.i].val.size() == 1,
        "div_ss expects scalars");
  check(nodes_[b.i].val(0, 0) != 0.0, "div_ss by zero");
  Node n;
  n.op = Op::DivSS;
  n.a = a.i;
  n.b = b.i;
  n.val = Mat::Constant(1, 1, nodes_[a.i].val(0, 0) / nodes_[b.i].val(0, 0));
  n.needs = needs(a.i) || needs(b.i);
  return {push(std::move(n))};
}

Var Tape::abs_s(Var a) {
  check(nodes_[a.i].val.size() == 1, "abs_s expects a scalar");
  Node n;
  n.op = Op::AbsS;
  n.a = a.i;
  n.val = Mat::Constant(1, 1, std::abs(nodes_[a.i].val(0, 0)));
  n.needs = needs(a.i);
  return {push(std::move(n))};
}

void Tape::backward(Var root) {
  check(root.valid() && root.i < static_cast<int>(nodes_.size()), "bad root");
  check(nodes_[root.i].val.size() == 1, "backward root must be a scalar");
  nodes_[root.i].grad = Mat::Constant(1, 1, 1.0);

  for (int i = root.i; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.needs || n.grad.size() == 0) continue;
    const Mat& gr = n.grad;
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::MatMul:
        if (needs(n.a)) g(n.a, nodes_[n.a].val) += gr * nodes_[n.b].val.transpose();
        if (needs(n.b)) g(n.b, nodes_[n.b].val) += nodes_[n.a].val.transpose() * gr;
        break;
      case Op::MatMulTA:
        if (needs(n.a)) g(n.a, nodes_[n.a].val) += nodes_[n.b].val * gr.transpose();
        if (needs(n.b)) g(n.b, nodes_[n.b].val) += nodes_[n.a].val * gr;
        break;
      case Op::Add:
        if (needs(n.a)) g(n.a, nodes_[n.a].val) += gr;
        if (needs(n.b)) g(n.b, nodes_[n.b].val) += gr;
        break;
      case Op::Hadamard:
        if (needs(n.a)) g(n.a, nodes_[n.a].val) += gr.cwiseProduct(nodes_[n.b].val);
        if (needs(n.b)) g(n.b, nodes_[n.b].val) += gr.cwiseProduct(nodes_[n.a].val);
        break;
      case Op::Affine:
        if (needs(n.a)) g(n.a, nodes_[n.a].val) += n.s0 * gr;
        break;
      case Op::Sigmoid:
        if (needs(n.a))
          g(n.a, nodes_[n.a].val) +=
              gr.cwiseProduct(n.val.cwiseProduct((1.0 - n.val.array()).matrix()));
        break;
      case Op::Tanh:
        if (needs(n.a))
          g(n.a, nodes_[n.a].val) +=
              gr.cwiseProduct((1.0 - n.val.array().square()).matrix());
        break;
      case Op::Relu:
        if (needs(n.a)) {
          const Mat& x = nodes_[n.a].val;
          g(n.a, x) += gr.cwiseProduct(
              x.unaryExpr([](double v) { return v > 0 ? 1.0 : 0.0; }));
        }
        break;
      case Op::VCat:
        if (needs(n.a))
          g(n.a, nodes_[n.a].val) += gr.topRows(nodes_[n.a].val.rows());
        if (needs(n.b))
          g(n.b, nodes_[n.b].val) += gr.bottomRows(nodes_[n.b].val.rows());
        break;
      case Op::RowCol:
        if (needs(n.a)) g(n.a, nodes_[n.a].val).row(n.aux[0]) += gr.transpose();
        break;
      case Op::RowsStack:
        for (size_t t = 0; t < n.parents.size(); ++t)
          if (needs(n.parents[t]))
            g(n.parents[t], nodes_[n.parents[t]].val) +=
                gr.row(static_cast<int>(t)).transpose();
        break;
      case Op::EmbedRows:
        if (needs(n.a)) {
          Mat& tg = g(n.a, nodes_[n.a].val);
          for (size_t t = 0; t < n.aux.size(); ++t)
            tg.row(n.aux[t]) += gr.row(static_cast<int>(t));
        }
        break;
      case Op::MeanRows:
        if (needs(n.a)) {
          const double inv = 1.0 / static_cast<double>(nodes_[n.a].val.rows());
          g(n.a, nodes_[n.a].val) +=
              inv * Mat::Ones(nodes_[n.a].val.rows(), 1) * gr.transpose();
        }
        break;
      case Op::MaxRows:
        if (needs(n.a)) {
          Mat& pg = g(n.a, nodes_[n.a].val);
          for (size_t j = 0; j < n.aux.size(); ++j)
            pg(n.aux[j], static_cast<int>(j)) += gr(static_cast<int>(j), 0);
        }
        break;
      case Op::SumElems:
        for (int p : n.parents)
          if (needs(p)) g(p, nodes_[p].val) += gr;
        break;
      case Op::MaxElems:
        for (int idx = 0; idx < gr.size(); ++idx) {
          int p = n.parents[n.aux[idx]];
          if (needs(p)) g(p, nodes_[p].val)(idx) += gr(idx);
        }
        break;
      case Op::SoftmaxCol:
        if (needs(n.a)) {
          double s = (n.val.transpose() * gr)(0, 0);
          g(n.a, nodes_[n.a].val) +=
              n.val.cwiseProduct((gr.array() - s).matrix());
        }
        break;
      case Op::CeLogits:
        if (needs(n.a)) {
          const Mat& z = nodes_[n.a].val;
          double m = z.maxCoeff();
          Mat p = (z.array() - m).exp();
          p /= p.sum();
          p(n.aux[0], 0) -= 1.0;
          g(n.a, z) += gr(0, 0) * p;
        }
        break;
      case Op::Pick:
        if (needs(n.a)) g(n.a, nodes_[n.a].val)(n.aux[0], 0) += gr(0, 0);
        break;
      case Op::Dot:
        if (needs(n.a)) g(n.a, nodes_[n.a].val) += gr(0, 0) * nodes_[n.b].val;
        if (needs(n.b)) g(n.b, nodes_[n.b].val) += gr(0, 0) * nodes_[n.a].val;
        break;
      case Op::SqrtS:
        if (needs(n.a))
          g(n.a, nodes_[n.a].val)(0, 0) += gr(0, 0) * 0.5 / n.val(0, 0);
        break;
      case Op::MulSS:
        if (needs(n.a)) g(n.a, nodes_[n.a].val)(0, 0) += gr(0, 0) * nodes_[n.b].val(0, 0);
        if (needs(n.b)) g(n.b, nodes_[n.b].val)(0, 0) += gr(0, 0) * nodes_[n.a].val(0, 0);
        break;
      case Op::DivSS: {
        double bv = nodes_[n.b].val(0, 0);
        if (needs(n.a)) g(n.a, nodes_[n.a].val)(0, 0) += gr(0, 0) / bv;
        if (needs(n.b))
          g(n.b, nodes_[n.b].val)(0, 0) -=
              gr(0, 0) * nodes_[n.a].val(0, 0) / (bv * bv);
        break;
      }
      case Op::AbsS: {
        double av = nodes_[n.a].val(0, 0);
        double sgn = av > 0 ? 1.0 : (av < 0 ? -1.0 : 0.0);
        if (needs(n.a)) g(n.a, nodes_[n.a].val)(0, 0) += gr(0, 0) * sgn;
        break;
      }
    }
  }
}

}  // namespace advseq::nn
