#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dwm/errors.hpp"

namespace dwm::ad {

// Reverse-mode automatic differentiation over dense matrices. Tensors are
// cheap handles to graph nodes; values are shared so detach() costs nothing.
// Convention throughout: columns are batch items, rows are features.
template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <typename S>
struct Node {
  std::shared_ptr<Mat<S>> value;
  Mat<S> grad;
  bool grad_init = false;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node<S>>> parents;
  std::function<void(Node<S>&)> backprop;
};

template <typename S>
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Mat<S> v, const char* op = "const") {
    Tensor t;
    t.node_ = std::make_shared<Node<S>>();
    t.node_->value = std::make_shared<Mat<S>>(std::move(v));
    t.node_->op = op;
    check_value(*t.node_);
    return t;
  }

  static Tensor param(Mat<S> v, const char* op = "param") {
    Tensor t = constant(std::move(v), op);
    t.node_->requires_grad = true;
    return t;
  }

  static Tensor scalar(S v) { return constant(Mat<S>::Constant(1, 1, v), "scalar"); }

  bool defined() const { return node_ != nullptr; }
  const Mat<S>& value() const { return *node_->value; }
  Mat<S>& mutable_value() { return *node_->value; }
  Eigen::Index rows() const { return node_->value->rows(); }
  Eigen::Index cols() const { return node_->value->cols(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const char* op() const { return node_->op; }

  const Mat<S>& grad() const {
    if (!node_->grad_init) {
      const_cast<Node<S>*>(node_.get())->grad = Mat<S>::Zero(rows(), cols());
      const_cast<Node<S>*>(node_.get())->grad_init = true;
    }
    return node_->grad;
  }

  void zero_grad() {
    node_->grad_init = false;
    node_->grad.resize(0, 0);
  }

  // Shares the value storage, drops graph history and gradient tracking.
  Tensor detach() const {
    Tensor t;
    t.node_ = std::make_shared<Node<S>>();
    t.node_->value = node_->value;
    t.node_->op = "detach";
    return t;
  }

  // Reverse pass from a scalar (1x1) tensor.
  void backward() const {
    if (rows() != 1 || cols() != 1) throw NumericalError("backward: root must be a scalar");
    std::vector<Node<S>*> order;
    std::unordered_set<Node<S>*> seen;
    std::vector<std::pair<Node<S>*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, i] = stack.back();
      if (i < n->parents.size()) {
        Node<S>* p = n->parents[i++].get();
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    accum(*node_, Mat<S>::Ones(1, 1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<S>* n = *it;
      if (n->backprop && n->grad_init) n->backprop(*n);
    }
  }

  static void check_value(const Node<S>& n) {
    if (!n.value->allFinite()) {
      throw NumericalError(std::string("non-finite value produced by op '") + n.op + "'");
    }
  }

  static void accum(Node<S>& n, const Mat<S>& g) {
    if (!n.requires_grad) return;
    if (!g.allFinite()) throw NumericalError(std::string("non-finite gradient flowing into op '") + n.op + "'");
    if (!n.grad_init) {
      n.grad = g;
      n.grad_init = true;
    } else {
      n.grad += g;
    }
  }

  std::shared_ptr<Node<S>> node() const { return node_; }

  static Tensor make(const char* op, Mat<S> value, std::vector<Tensor> parents,
                     std::function<void(Node<S>&)> backprop) {
    Tensor t;
    t.node_ = std::make_shared<Node<S>>();
    t.node_->value = std::make_shared<Mat<S>>(std::move(value));
    t.node_->op = op;
    bool rg = false;
    for (const Tensor& p : parents) {
      t.node_->parents.push_back(p.node_);
      rg = rg || p.requires_grad();
    }
    t.node_->requires_grad = rg;
    if (rg) t.node_->backprop = std::move(backprop);
    check_value(*t.node_);
    return t;
  }

 private:
  std::shared_ptr<Node<S>> node_;
};

// ---- primitive ops ---------------------------------------------------------

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  Mat<S> v = a.value() * b.value();
  return Tensor<S>::make("matmul", std::move(v), {a, b}, [](Node<S>& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (pa.requires_grad) Tensor<S>::accum(pa, n.grad * pb.value->transpose());
    if (pb.requires_grad) Tensor<S>::accum(pb, pa.value->transpose() * n.grad);
  });
}

template <typename S>
Tensor<S> operator*(const Tensor<S>& a, const Tensor<S>& b) {
  return matmul(a, b);
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  return Tensor<S>::make("add", a.value() + b.value(), {a, b}, [](Node<S>& n) {
    Tensor<S>::accum(*n.parents[0], n.grad);
    Tensor<S>::accum(*n.parents[1], n.grad);
  });
}

template <typename S>
Tensor<S> operator+(const Tensor<S>& a, const Tensor<S>& b) {
  return add(a, b);
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return Tensor<S>::make("sub", a.value() - b.value(), {a, b}, [](Node<S>& n) {
    Tensor<S>::accum(*n.parents[0], n.grad);
    Tensor<S>::accum(*n.parents[1], -n.grad);
  });
}

template <typename S>
Tensor<S> operator-(const Tensor<S>& a, const Tensor<S>& b) {
  return sub(a, b);
}

template <typename S>
Tensor<S> neg(const Tensor<S>& a) {
  return Tensor<S>::make("neg", -a.value(), {a}, [](Node<S>& n) { Tensor<S>::accum(*n.parents[0], -n.grad); });
}

template <typename S>
Tensor<S> operator-(const Tensor<S>& a) {
  return neg(a);
}

// x (n x m) plus a column vector broadcast over the batch
template <typename S>
Tensor<S> add_colvec(const Tensor<S>& x, const Tensor<S>& b) {
  Mat<S> v = x.value();
  v.colwise() += Eigen::Ref<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(b.value().col(0));
  return Tensor<S>::make("add_colvec", std::move(v), {x, b}, [](Node<S>& n) {
    Tensor<S>::accum(*n.parents[0], n.grad);
    Tensor<S>::accum(*n.parents[1], n.grad.rowwise().sum());
  });
}

template <typename S>
Tensor<S> cmul(const Tensor<S>& a, const Tensor<S>& b) {
  return Tensor<S>::make("cmul", a.value().cwiseProduct(b.value()), {a, b}, [](Node<S>& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (pa.requires_grad) Tensor<S>::accum(pa, n.grad.cwiseProduct(*pb.value));
    if (pb.requires_grad) Tensor<S>::accum(pb, n.grad.cwiseProduct(*pa.value));
  });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S c) {
  return Tensor<S>::make("scale", a.value() * c, {a},
                         [c](Node<S>& n) { Tensor<S>::accum(*n.parents[0], n.grad * c); });
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& a, S c) {
  return Tensor<S>::make("add_scalar", (a.value().array() + c).matrix(), {a},
                         [](Node<S>& n) { Tensor<S>::accum(*n.parents[0], n.grad); });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& a) {
  Mat<S> y = a.value().unaryExpr([](S x) {
    return x >= S(0) ? S(1) / (S(1) + std::exp(-x)) : std::exp(x) / (S(1) + std::exp(x));
  });
  return Tensor<S>::make("sigmoid", std::move(y), {a}, [](Node<S>& n) {
    const Mat<S>& y = *n.value;
    Tensor<S>::accum(*n.parents[0], n.grad.cwiseProduct((y.array() * (S(1) - y.array())).matrix()));
  });
}

template <typename S>
Tensor<S> tanh(const Tensor<S>& a) {
  Mat<S> y = a.value().array().tanh().matrix();
  return Tensor<S>::make("tanh", std::move(y), {a}, [](Node<S>& n) {
    const Mat<S>& y = *n.value;
    Tensor<S>::accum(*n.parents[0], n.grad.cwiseProduct((S(1) - y.array().square()).matrix()));
  });
}

template <typename S>
Tensor<S> silu(const Tensor<S>& a) {
  Mat<S> sig = a.value().unaryExpr([](S x) {
    return x >= S(0) ? S(1) / (S(1) + std::exp(-x)) : std::exp(x) / (S(1) + std::exp(x));
  });
  Mat<S> y = a.value().cwiseProduct(sig);
  auto sig_shared = std::make_shared<Mat<S>>(std::move(sig));
  return Tensor<S>::make("silu", std::move(y), {a}, [sig_shared](Node<S>& n) {
    const Mat<S>& x = *n.parents[0]->value;
    const Mat<S>& s = *sig_shared;
    // d/dx x*sigma(x) = sigma(x) * (1 + x * (1 - sigma(x)))
    Mat<S> d = (s.array() * (S(1) + x.array() * (S(1) - s.array()))).matrix();
    Tensor<S>::accum(*n.parents[0], n.grad.cwiseProduct(d));
  });
}

template <typename S>
Tensor<S> relu(const Tensor<S>& a) {
  return Tensor<S>::make("relu", a.value().cwiseMax(S(0)), {a}, [](Node<S>& n) {
    const Mat<S>& x = *n.parents[0]->value;
    Tensor<S>::accum(*n.parents[0], n.grad.cwiseProduct((x.array() > S(0)).template cast<S>().matrix()));
  });
}

template <typename S>
Tensor<S> exp(const Tensor<S>& a) {
  Mat<S> y = a.value().array().exp().matrix();
  return Tensor<S>::make("exp", std::move(y), {a}, [](Node<S>& n) {
    Tensor<S>::accum(*n.parents[0], n.grad.cwiseProduct(*n.value));
  });
}

template <typename S>
Tensor<S> log(const Tensor<S>& a) {
  Mat<S> y = a.value().array().log().matrix();
  return Tensor<S>::make("log", std::move(y), {a}, [](Node<S>& n) {
    Tensor<S>::accum(*n.parents[0], n.grad.cwiseQuotient(*n.parents[0]->value));
  });
}

template <typename S>
Tensor<S> square(const Tensor<S>& a) {
  return Tensor<S>::make("square", a.value().array().square().matrix(), {a}, [](Node<S>& n) {
    Tensor<S>::accum(*n.parents[0], S(2) * n.grad.cwiseProduct(*n.parents[0]->value));
  });
}

// log(1 + e^x), numerically stable; gradient is sigmoid(x)
template <typename S>
Tensor<S> softplus(const Tensor<S>& a) {
  Mat<S> y = a.value().unaryExpr([](S x) { return x > S(30) ? x : std::log1p(std::exp(std::min(x, S(30)))); });
  return Tensor<S>::make("softplus", std::move(y), {a}, [](Node<S>& n) {
    Mat<S> s = n.parents[0]->value->unaryExpr([](S x) {
      return x >= S(0) ? S(1) / (S(1) + std::exp(-x)) : std::exp(x) / (S(1) + std::exp(x));
    });
    Tensor<S>::accum(*n.parents[0], n.grad.cwiseProduct(s));
  });
}

// Gradient passes where lo <= x <= hi, is zero where the value clamps.
template <typename S>
Tensor<S> clamp(const Tensor<S>& a, S lo, S hi) {
  Mat<S> y = a.value().cwiseMax(lo).cwiseMin(hi);
  return Tensor<S>::make("clamp", std::move(y), {a}, [lo, hi](Node<S>& n) {
    const Mat<S>& x = *n.parents[0]->value;
    Mat<S> mask = ((x.array() >= lo) && (x.array() <= hi)).template cast<S>().matrix();
    Tensor<S>::accum(*n.parents[0], n.grad.cwiseProduct(mask));
  });
}

// max(a, c) elementwise against a constant; gradient passes where a > c
template <typename S>
Tensor<S> cmax_scalar(const Tensor<S>& a, S c) {
  return Tensor<S>::make("cmax_scalar", a.value().cwiseMax(c), {a}, [c](Node<S>& n) {
    const Mat<S>& x = *n.parents[0]->value;
    Mat<S> mask = (x.array() > c).template cast<S>().matrix();
    Tensor<S>::accum(*n.parents[0], n.grad.cwiseProduct(mask));
  });
}

// elementwise min; ties route the gradient to a
template <typename S>
Tensor<S> cmin(const Tensor<S>& a, const Tensor<S>& b) {
  return Tensor<S>::make("cmin", a.value().cwiseMin(b.value()), {a, b}, [](Node<S>& n) {
    const Mat<S>& xa = *n.parents[0]->value;
    const Mat<S>& xb = *n.parents[1]->value;
    Mat<S> take_a = (xa.array() <= xb.array()).template cast<S>().matrix();
    Tensor<S>::accum(*n.parents[0], n.grad.cwiseProduct(take_a));
    Tensor<S>::accum(*n.parents[1], n.grad.cwiseProduct((S(1) - take_a.array()).matrix()));
  });
}

template <typename S>
Tensor<S> sum(const Tensor<S>& a) {
  Mat<S> v(1, 1);
  v(0, 0) = a.value().sum();
  return Tensor<S>::make("sum", std::move(v), {a}, [](Node<S>& n) {
    auto& p = *n.parents[0];
    Tensor<S>::accum(p, Mat<S>::Constant(p.value->rows(), p.value->cols(), n.grad(0, 0)));
  });
}

template <typename S>
Tensor<S> mean(const Tensor<S>& a) {
  Mat<S> v(1, 1);
  v(0, 0) = a.value().mean();
  return Tensor<S>::make("mean", std::move(v), {a}, [](Node<S>& n) {
    auto& p = *n.parents[0];
    const S scale = n.grad(0, 0) / static_cast<S>(p.value->size());
    Tensor<S>::accum(p, Mat<S>::Constant(p.value->rows(), p.value->cols(), scale));
  });
}

// per-column (per batch item) sum -> 1 x cols
template <typename S>
Tensor<S> colwise_sum(const Tensor<S>& a) {
  Mat<S> v = a.value().colwise().sum();
  return Tensor<S>::make("colwise_sum", std::move(v), {a}, [](Node<S>& n) {
    auto& p = *n.parents[0];
    Tensor<S>::accum(p, Mat<S>::Ones(p.value->rows(), 1) * n.grad);
  });
}

template <typename S>
Tensor<S> concat_rows(const std::vector<Tensor<S>>& parts) {
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  for (const auto& p : parts) rows += p.rows();
  Mat<S> v(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    v.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return Tensor<S>::make("concat_rows", std::move(v), parts, [](Node<S>& n) {
    Eigen::Index at = 0;
    for (auto& p : n.parents) {
      const Eigen::Index r = p->value->rows();
      Tensor<S>::accum(*p, n.grad.middleRows(at, r));
      at += r;
    }
  });
}

// per-column smooth L2 normalisation: y = x / sqrt(||x||^2 + eps^2)
template <typename S>
Tensor<S> unit_columns(const Tensor<S>& a, S eps) {
  Mat<S> y = a.value();
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    y.col(j) /= std::sqrt(y.col(j).squaredNorm() + eps * eps);
  }
  return Tensor<S>::make("unit_columns", std::move(y), {a}, [eps](Node<S>& n) {
    const Mat<S>& x = *n.parents[0]->value;
    Mat<S> g(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const S inv = S(1) / std::sqrt(x.col(j).squaredNorm() + eps * eps);
      const S dot = x.col(j).dot(n.grad.col(j));
      g.col(j) = inv * n.grad.col(j) - (inv * inv * inv * dot) * x.col(j);
    }
    Tensor<S>::accum(*n.parents[0], g);
  });
}

template <typename S>
Tensor<S> slice_rows(const Tensor<S>& a, Eigen::Index start, Eigen::Index count) {
  Mat<S> v = a.value().middleRows(start, count);
  return Tensor<S>::make("slice_rows", std::move(v), {a}, [start, count](Node<S>& n) {
    auto& p = *n.parents[0];
    Mat<S> g = Mat<S>::Zero(p.value->rows(), p.value->cols());
    g.middleRows(start, count) = n.grad;
    Tensor<S>::accum(p, g);
  });
}

}  // namespace dwm::ad
