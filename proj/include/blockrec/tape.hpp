#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "blockrec/param_store.hpp"
#include "blockrec/tensor.hpp"

namespace blockrec {

// Handle to a node on a Tape. Only valid for the tape that produced it.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Stable softmax of a plain vector; sums to 1 and is strictly positive
// for finite input.
std::vector<double> softmax(const std::vector<double>& logits);

// Dynamic reverse-mode tape over dense tensors. A fresh tape is recorded
// per forward pass (the decode loop has data-dependent length and the
// candidate count varies per query). backward() accumulates adjoints for
// every requires_grad node and adds leaf adjoints into any bound Param
// gradients; repeated calls accumulate additively.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves.
  Var constant(Tensor t);             // never receives gradient
  Var leaf(Tensor t);                 // honors t.requires_grad
  Var param(Param& p);                // requires_grad leaf bound to p
  Var zeros(std::vector<std::size_t> shape) { return constant(Tensor::zeros(std::move(shape))); }

  // Primitives. Binary elementwise ops are broadcast-free.
  Var matmul(Var a, Var b);           // [m x k]*[k x n] -> [m x n], or [m x k]*[k] -> [m]
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var tanh(Var x);
  Var sigmoid(Var x);
  Var exp(Var x);
  Var scale(Var x, double c);
  Var sum(Var x);                     // scalar
  Var maxout(Var x, std::size_t pool);
  Var concat(std::span<const Var> parts);
  Var concat(std::initializer_list<Var> parts);

  // -log softmax(logits)[target]; probs_out (optional) receives the
  // normalized probability vector.
  Var softmax_cross_entropy(Var logits, std::size_t target, std::vector<double>* probs_out = nullptr);

  // max(z,0) - label*z + log1p(exp(-|z|)) on a scalar logit, label in {0,1}.
  Var bce_with_logit(Var logit, double label);

  void backward(Var loss);

  const Tensor& value(Var v) const { return nodes_[check(v)].value; }
  const std::vector<double>& grad(Var v) const { return nodes_[check(v)].grad; }
  bool requires_grad(Var v) const { return nodes_[check(v)].requires_grad; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    bool requires_grad = false;
    Param* bound = nullptr;
    std::function<void(Tape&)> back;
  };

  std::size_t check(Var v) const;
  Var push(Tensor value, bool requires_grad);
  void add_grad(int id, const double* g, std::size_t n);

  std::vector<Node> nodes_;
};

// Weight handles for one LSTM cell: x/h projections and bias per gate
// (input, forget, output, candidate).
struct LstmVars {
  Var wi, ui, bi;
  Var wf, uf, bf;
  Var wo, uo, bo;
  Var wg, ug, bg;
};

struct LstmStep {
  Var h, c;
};

// c' = f.c + i.g ; h' = o.tanh(c') with the standard sigmoid gates.
LstmStep lstm_cell(Tape& tape, Var x, Var h, Var c, const LstmVars& w);

}  // namespace blockrec
