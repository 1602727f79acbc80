#include "blockrec/tape.hpp"

#include <algorithm>
#include <cmath>

#include "blockrec/errors.hpp"
#include "blockrec/kernels.hpp"

namespace blockrec {

std::vector<double> softmax(const std::vector<double>& logits) {
  double mx = -HUGE_VAL;
  for (double x : logits) mx = std::max(mx, x);
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (auto& p : out) p /= sum;
  return out;
}

std::size_t Tape::check(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw contract_error("Var does not belong to this tape");
  return static_cast<std::size_t>(v.id);
}

Var Tape::push(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

void Tape::add_grad(int id, const double* g, std::size_t n) {
  Node& node = nodes_[static_cast<std::size_t>(id)];
  if (!node.requires_grad) return;
  if (node.grad.size() != n) node.grad.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) node.grad[i] += g[i];
}

Var Tape::constant(Tensor t) {
  t.requires_grad = false;
  return push(std::move(t), false);
}

Var Tape::leaf(Tensor t) {
  const bool rg = t.requires_grad;
  return push(std::move(t), rg);
}

Var Tape::param(Param& p) {
  Tensor t = p.value;
  t.requires_grad = true;
  Var v = push(std::move(t), true);
  nodes_[check(v)].bound = &p;
  return v;
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.rank() != 2 || (tb.rank() != 2 && tb.rank() != 1))
    throw dimension_error("matmul needs [m x k] by [k x n] or [k], got " + shape_str(ta.shape) +
                          " and " + shape_str(tb.shape));
  const std::size_t m = ta.shape[0], k = ta.shape[1];
  const std::size_t bk = tb.shape[0];
  const std::size_t n = tb.rank() == 2 ? tb.shape[1] : 1;
  if (k != bk)
    throw dimension_error("matmul inner dimensions disagree: " + shape_str(ta.shape) + " vs " +
                          shape_str(tb.shape));
  Tensor out = tb.rank() == 2 ? Tensor::zeros({m, n}) : Tensor::zeros({m});
  kernels::matmul_serial(ta.values.data(), tb.values.data(), out.values.data(), m, k, n);
  const bool rg = requires_grad(a) || requires_grad(b);
  Var o = push(std::move(out), rg);
  if (rg) {
    const int ai = a.id, bi = b.id, oi = o.id;
    nodes_[check(o)].back = [ai, bi, oi, m, k, n](Tape& t) {
      const auto& g = t.nodes_[oi].grad;
      const auto& av = t.nodes_[ai].value.values;
      const auto& bv = t.nodes_[bi].value.values;
      if (t.nodes_[ai].requires_grad) {
        // dA = G * B^T
        std::vector<double> da(m * k, 0.0);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const double gij = g[i * n + j];
            for (std::size_t l = 0; l < k; ++l) da[i * k + l] += gij * bv[l * n + j];
          }
        t.add_grad(ai, da.data(), da.size());
      }
      if (t.nodes_[bi].requires_grad) {
        // dB = A^T * G
        std::vector<double> db(k * n, 0.0);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t l = 0; l < k; ++l) {
            const double ail = av[i * k + l];
            for (std::size_t j = 0; j < n; ++j) db[l * n + j] += ail * g[i * n + j];
          }
        t.add_grad(bi, db.data(), db.size());
      }
    };
  }
  return o;
}

namespace {
void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw dimension_error(std::string(op) + " needs identical shapes, got " + shape_str(a.shape) +
                          " and " + shape_str(b.shape));
}
}  // namespace

Var Tape::add(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require_same_shape(ta, tb, "add");
  Tensor out = ta;
  out.requires_grad = false;
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] += tb.values[i];
  const bool rg = requires_grad(a) || requires_grad(b);
  Var o = push(std::move(out), rg);
  if (rg) {
    const int ai = a.id, bi = b.id, oi = o.id;
    nodes_[check(o)].back = [ai, bi, oi](Tape& t) {
      const auto& g = t.nodes_[oi].grad;
      t.add_grad(ai, g.data(), g.size());
      t.add_grad(bi, g.data(), g.size());
    };
  }
  return o;
}

Var Tape::sub(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require_same_shape(ta, tb, "sub");
  Tensor out = ta;
  out.requires_grad = false;
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] -= tb.values[i];
  const bool rg = requires_grad(a) || requires_grad(b);
  Var o = push(std::move(out), rg);
  if (rg) {
    const int ai = a.id, bi = b.id, oi = o.id;
    nodes_[check(o)].back = [ai, bi, oi](Tape& t) {
      const auto& g = t.nodes_[oi].grad;
      t.add_grad(ai, g.data(), g.size());
      if (t.nodes_[bi].requires_grad) {
        std::vector<double> neg(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) neg[i] = -g[i];
        t.add_grad(bi, neg.data(), neg.size());
      }
    };
  }
  return o;
}

Var Tape::mul(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require_same_shape(ta, tb, "mul");
  Tensor out = ta;
  out.requires_grad = false;
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] *= tb.values[i];
  const bool rg = requires_grad(a) || requires_grad(b);
  Var o = push(std::move(out), rg);
  if (rg) {
    const int ai = a.id, bi = b.id, oi = o.id;
    nodes_[check(o)].back = [ai, bi, oi](Tape& t) {
      const auto& g = t.nodes_[oi].grad;
      if (t.nodes_[ai].requires_grad) {
        const auto& bv = t.nodes_[bi].value.values;
        std::vector<double> da(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) da[i] = g[i] * bv[i];
        t.add_grad(ai, da.data(), da.size());
      }
      if (t.nodes_[bi].requires_grad) {
        const auto& av = t.nodes_[ai].value.values;
        std::vector<double> db(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) db[i] = g[i] * av[i];
        t.add_grad(bi, db.data(), db.size());
      }
    };
  }
  return o;
}

Var Tape::tanh(Var x) {
  Tensor out = value(x);
  out.requires_grad = false;
  for (auto& v : out.values) v = std::tanh(v);
  const bool rg = requires_grad(x);
  Var o = push(std::move(out), rg);
  if (rg) {
    const int xi = x.id, oi = o.id;
    nodes_[check(o)].back = [xi, oi](Tape& t) {
      const auto& g = t.nodes_[oi].grad;
      const auto& y = t.nodes_[oi].value.values;
      std::vector<double> dx(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] = g[i] * (1.0 - y[i] * y[i]);
      t.add_grad(xi, dx.data(), dx.size());
    };
  }
  return o;
}

Var Tape::sigmoid(Var x) {
  Tensor out = value(x);
  out.requires_grad = false;
  for (auto& v : out.values) v = 1.0 / (1.0 + std::exp(-v));
  const bool rg = requires_grad(x);
  Var o = push(std::move(out), rg);
  if (rg) {
    const int xi = x.id, oi = o.id;
    nodes_[check(o)].back = [xi, oi](Tape& t) {
      const auto& g = t.nodes_[oi].grad;
      const auto& y = t.nodes_[oi].value.values;
      std::vector<double> dx(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] = g[i] * y[i] * (1.0 - y[i]);
      t.add_grad(xi, dx.data(), dx.size());
    };
  }
  return o;
}

Var Tape::exp(Var x) {
  Tensor out = value(x);
  out.requires_grad = false;
  for (auto& v : out.values) v = std::exp(v);
  const bool rg = requires_grad(x);
  Var o = push(std::move(out), rg);
  if (rg) {
    const int xi = x.id, oi = o.id;
    nodes_[check(o)].back = [xi, oi](Tape& t) {
      const auto& g = t.nodes_[oi].grad;
      const auto& y = t.nodes_[oi].value.values;
      std::vector<double> dx(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] = g[i] * y[i];
      t.add_grad(xi, dx.data(), dx.size());
    };
  }
  return o;
}

Var Tape::scale(Var x, double c) {
  Tensor out = value(x);
  out.requires_grad = false;
  for (auto& v : out.values) v *= c;
  const bool rg = requires_grad(x);
  Var o = push(std::move(out), rg);
  if (rg) {
    const int xi = x.id, oi = o.id;
    nodes_[check(o)].back = [xi, oi, c](Tape& t) {
      const auto& g = t.nodes_[oi].grad;
      std::vector<double> dx(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] = g[i] * c;
      t.add_grad(xi, dx.data(), dx.size());
    };
  }
  return o;
}

Var Tape::sum(Var x) {
  const Tensor& tx = value(x);
  const std::size_t n = tx.size();
  double s = 0.0;
  for (double v : tx.values) s += v;
  const bool rg = requires_grad(x);
  Var o = push(Tensor::scalar(s), rg);
  if (rg) {
    const int xi = x.id, oi = o.id;
    nodes_[check(o)].back = [xi, oi, n](Tape& t) {
      const double g = t.nodes_[oi].grad[0];
      std::vector<double> dx(n, g);
      t.add_grad(xi, dx.data(), n);
    };
  }
  return o;
}

Var Tape::maxout(Var x, std::size_t pool) {
  const Tensor& tx = value(x);
  if (pool == 0 || tx.rank() != 1 || tx.size() % pool != 0)
    throw dimension_error("maxout pool " + std::to_string(pool) +
                          " does not divide input shape " + shape_str(tx.shape));
  const std::size_t d = tx.size() / pool;
  const std::size_t n = tx.size();
  Tensor out = Tensor::zeros({d});
  std::vector<std::size_t> argmax(d);
  for (std::size_t j = 0; j < d; ++j) {
    std::size_t best = j * pool;
    for (std::size_t i = 1; i < pool; ++i)
      if (tx.values[j * pool + i] > tx.values[best]) best = j * pool + i;  // ties keep lowest
    argmax[j] = best;
    out.values[j] = tx.values[best];
  }
  const bool rg = requires_grad(x);
  Var o = push(std::move(out), rg);
  if (rg) {
    const int xi = x.id, oi = o.id;
    nodes_[check(o)].back = [xi, oi, n, argmax = std::move(argmax)](Tape& t) {
      const auto& g = t.nodes_[oi].grad;
      std::vector<double> dx(n, 0.0);
      for (std::size_t j = 0; j < g.size(); ++j) dx[argmax[j]] = g[j];
      t.add_grad(xi, dx.data(), n);
    };
  }
  return o;
}

Var Tape::concat(std::span<const Var> parts) {
  if (parts.empty()) throw contract_error("concat of zero parts");
  std::size_t total = 0;
  bool rg = false;
  for (Var p : parts) {
    const Tensor& tp = value(p);
    if (tp.rank() != 1) throw dimension_error("concat needs rank-1 parts, got " + shape_str(tp.shape));
    total += tp.size();
    rg = rg || requires_grad(p);
  }
  Tensor out = Tensor::zeros({total});
  std::size_t off = 0;
  std::vector<int> ids;
  std::vector<std::size_t> sizes;
  ids.reserve(parts.size());
  sizes.reserve(parts.size());
  for (Var p : parts) {
    const Tensor& tp = value(p);
    std::copy(tp.values.begin(), tp.values.end(), out.values.begin() + static_cast<long>(off));
    off += tp.size();
    ids.push_back(p.id);
    sizes.push_back(tp.size());
  }
  Var o = push(std::move(out), rg);
  if (rg) {
    const int oi = o.id;
    nodes_[check(o)].back = [oi, ids = std::move(ids), sizes = std::move(sizes)](Tape& t) {
      const auto& g = t.nodes_[oi].grad;
      std::size_t off2 = 0;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        t.add_grad(ids[i], g.data() + off2, sizes[i]);
        off2 += sizes[i];
      }
    };
  }
  return o;
}

Var Tape::concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}

Var Tape::softmax_cross_entropy(Var logits, std::size_t target, std::vector<double>* probs_out) {
  const Tensor& tl = value(logits);
  if (tl.rank() != 1) throw dimension_error("cross entropy over rank-1 logits, got " + shape_str(tl.shape));
  const std::size_t n = tl.size();
  if (target >= n)
    throw index_error("cross entropy target " + std::to_string(target) + " out of range [0, " +
                      std::to_string(n) + ")");
  double mx = -HUGE_VAL;
  for (double v : tl.values) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : tl.values) sum += std::exp(v - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> probs(n);
  for (std::size_t i = 0; i < n; ++i) probs[i] = std::exp(tl.values[i] - lse);
  if (probs_out) *probs_out = probs;
  const double loss = lse - tl.values[target];
  const bool rg = requires_grad(logits);
  Var o = push(Tensor::scalar(loss), rg);
  if (rg) {
    const int li = logits.id, oi = o.id;
    nodes_[check(o)].back = [li, oi, target, probs = std::move(probs)](Tape& t) {
      const double g = t.nodes_[oi].grad[0];
      std::vector<double> dl(probs.size());
      for (std::size_t i = 0; i < probs.size(); ++i)
        dl[i] = g * (probs[i] - (i == target ? 1.0 : 0.0));
      t.add_grad(li, dl.data(), dl.size());
    };
  }
  return o;
}

Var Tape::bce_with_logit(Var logit, double label) {
  const Tensor& tz = value(logit);
  if (tz.size() != 1) throw dimension_error("bce_with_logit expects a scalar logit, got " + shape_str(tz.shape));
  const double z = tz.values[0];
  const double loss = std::max(z, 0.0) - label * z + std::log1p(std::exp(-std::abs(z)));
  const bool rg = requires_grad(logit);
  Var o = push(Tensor::scalar(loss), rg);
  if (rg) {
    const int zi = logit.id, oi = o.id;
    nodes_[check(o)].back = [zi, oi, z, label](Tape& t) {
      const double g = t.nodes_[oi].grad[0];
      const double sig = 1.0 / (1.0 + std::exp(-z));
      const double dz = g * (sig - label);
      t.add_grad(zi, &dz, 1);
    };
  }
  return o;
}

void Tape::backward(Var loss) {
  const std::size_t li = check(loss);
  if (nodes_[li].value.size() != 1)
    throw contract_error("backward needs a scalar loss, got shape " +
                         shape_str(nodes_[li].value.shape));
  for (auto& n : nodes_) {
    if (n.requires_grad)
      n.grad.assign(n.value.size(), 0.0);
    else
      n.grad.clear();
  }
  if (!nodes_[li].requires_grad) return;  // loss detached from every parameter
  nodes_[li].grad[0] = 1.0;
  // Creation order is a topological order: inputs precede consumers.
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (n.back && n.requires_grad) n.back(*this);
  }
  for (auto& n : nodes_) {
    if (!n.bound) continue;
    Param& p = *n.bound;
    if (p.grad.size() != n.grad.size()) p.grad.assign(n.grad.size(), 0.0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
  }
}

LstmStep lstm_cell(Tape& tape, Var x, Var h, Var c, const LstmVars& w) {
  auto gate = [&](Var wx, Var uh, Var b) {
    return tape.add(tape.add(tape.matmul(wx, x), tape.matmul(uh, h)), b);
  };
  const Var i = tape.sigmoid(gate(w.wi, w.ui, w.bi));
  const Var f = tape.sigmoid(gate(w.wf, w.uf, w.bf));
  const Var o = tape.sigmoid(gate(w.wo, w.uo, w.bo));
  const Var g = tape.tanh(gate(w.wg, w.ug, w.bg));
  const Var c_next = tape.add(tape.mul(f, c), tape.mul(i, g));
  const Var h_next = tape.mul(o, tape.tanh(c_next));
  return {h_next, c_next};
}

}  // namespace blockrec
