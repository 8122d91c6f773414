#pragma once

// Central finite-difference gradient audit for double-precision graphs.

#include <functional>
#include <vector>

#include "dwm/autodiff.hpp"

namespace gradcheck {

using DTensor = dwm::ad::Tensor<double>;
using DMat = dwm::ad::Mat<double>;

// Rebuilds the loss through `loss_fn` (which must read the params' current
// values) and compares reverse-mode gradients against (f(x+h)-f(x-h))/2h.
// Returns the maximum relative error over every parameter entry.
inline double max_rel_grad_err(std::vector<DTensor>& params, const std::function<DTensor()>& loss_fn,
                               double h = 1e-4) {
  for (auto& p : params) p.zero_grad();
  DTensor loss = loss_fn();
  loss.backward();
  std::vector<DMat> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) analytic.push_back(p.grad());

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    DMat& v = params[pi].mutable_value();
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      for (Eigen::Index i = 0; i < v.rows(); ++i) {
        const double keep = v(i, j);
        v(i, j) = keep + h;
        const double up = loss_fn().value()(0, 0);
        v(i, j) = keep - h;
        const double down = loss_fn().value()(0, 0);
        v(i, j) = keep;
        const double fd = (up - down) / (2.0 * h);
        const double ad = analytic[pi](i, j);
        const double denom = std::max({std::abs(fd), std::abs(ad), 1e-3});
        worst = std::max(worst, std::abs(fd - ad) / denom);
      }
    }
  }
  return worst;
}

inline DMat random_mat(Eigen::Index r, Eigen::Index c, dwm::RngStream& rng, double scale = 1.0) {
  DMat m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.normal() * scale;
  return m;
}

}  // namespace gradcheck
