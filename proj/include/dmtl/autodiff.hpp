#pragma once

// Reverse-mode automatic differentiation over Tensor values.
//
// A Tape records every forward operation as a node holding its output value and
// a closure that pushes the node's gradient back to its inputs. Nodes are
// appended in evaluation order, so reverse node order is a valid topological
// order for backprop. Leaves created with Tape::param are bound to a Variable;
// backward() adds their gradient into Variable::grad when the Variable is
// trainable. A tape is meant to be rebuilt for every iteration.

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <deque>
#include <vector>

#include "dmtl/error.hpp"
#include "dmtl/tensor.hpp"

namespace dmtl {

class Tape;

/// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  inline const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Pushes `out_grad` (gradient w.r.t. the node output) into the node's inputs.
  using Backprop = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, false, false, nullptr, {}});
    return Var(this, nodes_.size() - 1);
  }

  Var param(Variable& variable) {
    nodes_.push_back(Node{variable.value, {}, false, variable.trainable, &variable, {}});
    return Var(this, nodes_.size() - 1);
  }

  /// Records an operation output. The closure is kept only if some input needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backprop backprop) {
    bool needs = false;
    for (const Var& v : inputs) {
      check_owner(v);
      needs = needs || nodes_[v.id()].needs_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, false, needs, nullptr, needs ? std::move(backprop) : Backprop{}});
    return Var(this, nodes_.size() - 1);
  }

  const Tensor& value(const Var& v) const { return nodes_.at(v.id()).value; }
  const Tensor& value_at(std::size_t id) const { return nodes_.at(id).value; }
  bool needs_grad(const Var& v) const { return nodes_.at(v.id()).needs_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient buffer of a node, allocated as zeros on first access.
  Tensor& grad_buffer(const Var& v) {
    Node& n = nodes_.at(v.id());
    if (!n.has_grad) {
      n.grad = Tensor(n.value.shape());
      n.has_grad = true;
    }
    return n.grad;
  }

  /// Gradient held by a node after backward(); zeros if nothing reached it.
  Tensor grad(const Var& v) const {
    const Node& n = nodes_.at(v.id());
    return n.has_grad ? n.grad : Tensor(n.value.shape());
  }

  void backward(const Var& loss) {
    check_owner(loss);
    const Node& root = nodes_[loss.id()];
    if (root.value.size() != 1) {
      throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(root.value.shape()));
    }
    grad_buffer(loss)[0] = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || !n.has_grad) continue;
      if (n.backprop) n.backprop(*this, n.grad);
      if (n.param != nullptr && n.param->trainable) {
        auto& dst = n.param->grad.data();
        const auto& src = n.grad.data();
        for (std::size_t k = 0; k < src.size(); ++k) dst[k] += src[k];
      }
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad;
    bool needs_grad;
    Variable* param;
    Backprop backprop;
  };

  void check_owner(const Var& v) const {
    if (v.tape() != this) throw ArgumentError("variable recorded on a different tape");
  }

  std::deque<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(*this); }

namespace ops {

namespace detail {

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

inline void require_scalar(const char* op, const Tensor& t) {
  if (t.size() != 1) throw ShapeError(std::string(op) + ": expected scalar, got " + shape_str(t.shape()));
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

/// x[B,in] * W[in,out] + b[out] -> [B,out]
inline Var affine(const Var& x, const Var& w, const Var& b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1 || xv.shape()[1] != wv.shape()[0] ||
      bv.shape()[0] != wv.shape()[1]) {
    throw ShapeError("affine: incompatible shapes x" + shape_str(xv.shape()) + " W" + shape_str(wv.shape()) + " b" +
                     shape_str(bv.shape()));
  }
  const std::size_t rows = xv.shape()[0], in = wv.shape()[0], out = wv.shape()[1];
  Tensor y({rows, out});
  for (std::size_t r = 0; r < rows; ++r) {
    double* yr = &y.data()[r * out];
    for (std::size_t c = 0; c < out; ++c) yr[c] = bv[c];
    for (std::size_t k = 0; k < in; ++k) {
      const double xk = xv[r * in + k];
      if (xk == 0.0) continue;
      const double* wk = &wv.data()[k * out];
      for (std::size_t c = 0; c < out; ++c) yr[c] += xk * wk[c];
    }
  }
  Tape& tape = *x.tape();
  return tape.record(std::move(y), {x, w, b}, [x, w, b, rows, in, out](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(x);
    const Tensor& wv = t.value(w);
    if (t.needs_grad(x)) {
      Tensor& gx = t.grad_buffer(x);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < in; ++k) {
          double acc = 0.0;
          const double* wk = &wv.data()[k * out];
          const double* gr = &g.data()[r * out];
          for (std::size_t c = 0; c < out; ++c) acc += gr[c] * wk[c];
          gx[r * in + k] += acc;
        }
    }
    if (t.needs_grad(w)) {
      Tensor& gw = t.grad_buffer(w);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < in; ++k) {
          const double xk = xv[r * in + k];
          if (xk == 0.0) continue;
          double* gwk = &gw.data()[k * out];
          const double* gr = &g.data()[r * out];
          for (std::size_t c = 0; c < out; ++c) gwk[c] += xk * gr[c];
        }
    }
    if (t.needs_grad(b)) {
      Tensor& gb = t.grad_buffer(b);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < out; ++c) gb[c] += g[r * out + c];
    }
  });
}

inline Var relu(const Var& x) {
  Tensor y = x.value();
  for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
  return x.tape()->record(std::move(y), {x}, [x](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(x);
    Tensor& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] > 0.0) gx[i] += g[i];
  });
}

inline Var sigmoid(const Var& x) {
  Tensor y = x.value();
  for (double& v : y.data()) v = detail::sigmoid(v);
  Tape* tape = x.tape();
  const std::size_t self = tape->size();
  return tape->record(std::move(y), {x}, [x, self](Tape& t, const Tensor& g) {
    const Tensor& yv = t.value_at(self);
    Tensor& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * yv[i] * (1.0 - yv[i]);
  });
}

/// c * x for a constant c.
inline Var scalar_mul(const Var& x, double c) {
  Tensor y = x.value();
  for (double& v : y.data()) v *= c;
  return x.tape()->record(std::move(y), {x}, [x, c](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
  });
}

/// x + c for a constant c.
inline Var add_scalar(const Var& x, double c) {
  Tensor y = x.value();
  for (double& v : y.data()) v += c;
  return x.tape()->record(std::move(y), {x}, [x](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

/// s * x where s is a one-element node.
inline Var scale(const Var& x, const Var& s) {
  detail::require_scalar("scale", s.value());
  const double sv = s.value()[0];
  Tensor y = x.value();
  for (double& v : y.data()) v *= sv;
  return x.tape()->record(std::move(y), {x, s}, [x, s](Tape& t, const Tensor& g) {
    const double sv = t.value(s)[0];
    if (t.needs_grad(x)) {
      Tensor& gx = t.grad_buffer(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += sv * g[i];
    }
    if (t.needs_grad(s)) {
      const Tensor& xv = t.value(x);
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += xv[i] * g[i];
      t.grad_buffer(s)[0] += acc;
    }
  });
}

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape("add", a.value(), b.value());
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return a.tape()->record(std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g) {
    for (const Var& v : {a, b}) {
      if (!t.needs_grad(v)) continue;
      Tensor& gv = t.grad_buffer(v);
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
    }
  });
}

inline Var sum(const Var& x) {
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  return x.tape()->record(Tensor::scalar(acc), {x}, [x](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(x);
    for (double& v : gx.data()) v += g[0];
  });
}

inline Var mean(const Var& x) {
  const double n = static_cast<double>(x.value().size());
  return scalar_mul(sum(x), 1.0 / n);
}

/// One entry of x as a scalar node.
inline Var element(const Var& x, std::size_t index) {
  if (index >= x.value().size()) {
    throw ShapeError("element: index " + std::to_string(index) + " out of range for " + shape_str(x.shape()));
  }
  return x.tape()->record(Tensor::scalar(x.value()[index]), {x}, [x, index](Tape& t, const Tensor& g) {
    t.grad_buffer(x)[index] += g[0];
  });
}

/// Mean over rows of -log softmax(logits)[label].
inline Var softmax_cross_entropy(const Var& logits, std::span<const int> labels) {
  const Tensor& lv = logits.value();
  if (lv.rank() != 2 || lv.shape()[0] != labels.size()) {
    throw ShapeError("softmax_cross_entropy: logits " + shape_str(lv.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t rows = lv.shape()[0], classes = lv.shape()[1];
  Tensor probs({rows, classes});
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int label = labels[r];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw ShapeError("softmax_cross_entropy: label " + std::to_string(label) + " outside [0," +
                       std::to_string(classes) + ")");
    }
    double mx = lv.at(r, 0);
    for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, lv.at(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(lv.at(r, c) - mx);
    for (std::size_t c = 0; c < classes; ++c) probs.at(r, c) = std::exp(lv.at(r, c) - mx) / z;
    loss += -(lv.at(r, static_cast<std::size_t>(label)) - mx - std::log(z));
  }
  loss /= static_cast<double>(rows);
  std::vector<int> lab(labels.begin(), labels.end());
  return logits.tape()->record(
      Tensor::scalar(loss), {logits},
      [logits, probs = std::move(probs), lab = std::move(lab), rows, classes](Tape& t, const Tensor& g) {
        Tensor& gl = t.grad_buffer(logits);
        const double s = g[0] / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < classes; ++c) {
            const double onehot = static_cast<std::size_t>(lab[r]) == c ? 1.0 : 0.0;
            gl.at(r, c) += s * (probs.at(r, c) - onehot);
          }
      });
}

/// Mean squared error over all entries.
inline Var l2_loss(const Var& pred, const Tensor& target) {
  detail::require_same_shape("l2_loss", pred.value(), target);
  const Tensor& pv = pred.value();
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double d = pv[i] - target[i];
    acc += d * d;
  }
  const double n = static_cast<double>(pv.size());
  return pred.tape()->record(Tensor::scalar(acc / n), {pred}, [pred, target, n](Tape& t, const Tensor& g) {
    const Tensor& pv = t.value(pred);
    Tensor& gp = t.grad_buffer(pred);
    for (std::size_t i = 0; i < pv.size(); ++i) gp[i] += g[0] * 2.0 * (pv[i] - target[i]) / n;
  });
}

}  // namespace ops
}  // namespace dmtl
