#pragma once

#include <string>
#include <vector>

#include "dwm/autodiff.hpp"
#include "dwm/rng.hpp"

namespace dwm::nn {

using dwm::ad::Mat;
using dwm::ad::Tensor;

template <typename S>
Mat<S> random_normal(Eigen::Index rows, Eigen::Index cols, RngStream& rng, double std_dev) {
  Mat<S> m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = static_cast<S>(rng.normal() * std_dev);
  return m;
}

// Named parameter list shared by the optimiser and the checkpoint writer.
template <typename S>
struct ParamList {
  std::vector<std::string> names;
  std::vector<Tensor<S>> tensors;

  void add(const std::string& name, const Tensor<S>& t) {
    names.push_back(name);
    tensors.push_back(t);
  }
  void append(const std::string& prefix, const ParamList<S>& other) {
    for (std::size_t i = 0; i < other.tensors.size(); ++i) {
      names.push_back(prefix + other.names[i]);
      tensors.push_back(other.tensors[i]);
    }
  }
  std::size_t size() const { return tensors.size(); }
  void zero_grads() {
    for (auto& t : tensors) const_cast<Tensor<S>&>(t).zero_grad();
  }
};

template <typename S>
struct Dense {
  Tensor<S> weight;  // out x in
  Tensor<S> bias;    // out x 1

  Dense() = default;
  // weight ~ N(0, init_scale^2 / fan_in); init_scale 0 keeps heads at zero
  Dense(int in, int out, RngStream& rng, double init_scale = 1.0) {
    const double std_dev = init_scale > 0.0 ? init_scale / std::sqrt(static_cast<double>(in)) : 0.0;
    weight = Tensor<S>::param(init_scale > 0.0 ? random_normal<S>(out, in, rng, std_dev) : Mat<S>::Zero(out, in),
                              "dense.weight");
    bias = Tensor<S>::param(Mat<S>::Zero(out, 1), "dense.bias");
  }

  Tensor<S> operator()(const Tensor<S>& x) const { return ad::add_colvec(ad::matmul(weight, x), bias); }

  Dense detached() const {
    Dense d;
    d.weight = weight.detach();
    d.bias = bias.detach();
    return d;
  }

  void collect(const std::string& prefix, ParamList<S>& out) const {
    out.add(prefix + "weight", weight);
    out.add(prefix + "bias", bias);
  }
};

// Hidden layers use SiLU, the output layer is linear.
template <typename S>
struct Mlp {
  std::vector<Dense<S>> layers;

  Mlp() = default;
  Mlp(int in, int hidden, int hidden_layers, int out, RngStream& rng, double head_init_scale = 1.0) {
    int prev = in;
    for (int i = 0; i < hidden_layers; ++i) {
      layers.emplace_back(prev, hidden, rng);
      prev = hidden;
    }
    layers.emplace_back(prev, out, rng, head_init_scale);
  }

  Tensor<S> operator()(Tensor<S> x) const {
    for (std::size_t i = 0; i + 1 < layers.size(); ++i) x = ad::silu(layers[i](x));
    return layers.back()(x);
  }

  Mlp detached() const {
    Mlp m;
    m.layers.reserve(layers.size());
    for (const auto& l : layers) m.layers.push_back(l.detached());
    return m;
  }

  void collect(const std::string& prefix, ParamList<S>& out) const {
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(prefix + "l" + std::to_string(i) + ".", out);
  }
};

// Gated recurrent cell, PyTorch gate layout (reset, update, candidate):
//   r = sigma(Wr x + Ur h + br + cr)
//   z = sigma(Wz x + Uz h + bz + cz)
//   n = tanh(Wn x + bn + r .* (Un h + cn))
//   h' = (1 - z) .* h + z .* n
// With all parameters zero this reduces to h' = 0.5 * h.
template <typename S>
struct GruCell {
  Dense<S> input_proj;   // in -> 3h
  Dense<S> hidden_proj;  // h -> 3h
  int hidden = 0;

  GruCell() = default;
  GruCell(int in, int hidden_dim, RngStream& rng)
      : input_proj(in, 3 * hidden_dim, rng), hidden_proj(hidden_dim, 3 * hidden_dim, rng), hidden(hidden_dim) {}

  Tensor<S> operator()(const Tensor<S>& x, const Tensor<S>& h) const {
    if (h.rows() != hidden) throw NumericalError("gru_cell: hidden state dimension mismatch");
    const Tensor<S> xi = input_proj(x);
    const Tensor<S> hi = hidden_proj(h);
    const Tensor<S> r = ad::sigmoid(ad::slice_rows(xi, 0, hidden) + ad::slice_rows(hi, 0, hidden));
    const Tensor<S> z = ad::sigmoid(ad::slice_rows(xi, hidden, hidden) + ad::slice_rows(hi, hidden, hidden));
    const Tensor<S> n =
        ad::tanh(ad::slice_rows(xi, 2 * hidden, hidden) + ad::cmul(r, ad::slice_rows(hi, 2 * hidden, hidden)));
    const Tensor<S> one_minus_z = ad::add_scalar(ad::neg(z), S(1));
    return ad::cmul(one_minus_z, h) + ad::cmul(z, n);
  }

  GruCell detached() const {
    GruCell g;
    g.input_proj = input_proj.detached();
    g.hidden_proj = hidden_proj.detached();
    g.hidden = hidden;
    return g;
  }

  void collect(const std::string& prefix, ParamList<S>& out) const {
    input_proj.collect(prefix + "x.", out);
    hidden_proj.collect(prefix + "h.", out);
  }
};

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

// Diagonal Gaussian with clamped log standard deviation; sampling is
// reparameterised so gradients flow through mean and log_std.
template <typename S>
struct DiagonalGaussian {
  Tensor<S> mean;
  Tensor<S> log_std;  // already clamped to [kLogStdMin, kLogStdMax]

  static DiagonalGaussian from_raw(const Tensor<S>& mean, const Tensor<S>& raw_log_std) {
    return {mean, ad::clamp(raw_log_std, S(kLogStdMin), S(kLogStdMax))};
  }

  // splits a stacked head output (2n rows) into mean / clamped log_std
  static DiagonalGaussian from_stacked(const Tensor<S>& stacked) {
    const Eigen::Index n = stacked.rows() / 2;
    return from_raw(ad::slice_rows(stacked, 0, n), ad::slice_rows(stacked, n, n));
  }

  DiagonalGaussian detach() const { return {mean.detach(), log_std.detach()}; }

  Tensor<S> rsample(RngStream& rng) const {
    Mat<S> eps(mean.rows(), mean.cols());
    for (Eigen::Index j = 0; j < eps.cols(); ++j)
      for (Eigen::Index i = 0; i < eps.rows(); ++i) eps(i, j) = static_cast<S>(rng.normal());
    return mean + ad::cmul(ad::exp(log_std), Tensor<S>::constant(std::move(eps), "noise"));
  }

  // entropy per batch item (1 x cols), up to the additive constant included
  Tensor<S> entropy() const {
    constexpr double kHalfLog2PiE = 1.4189385332046727;  // 0.5*log(2*pi*e)
    return ad::colwise_sum(ad::add_scalar(log_std, S(kHalfLog2PiE)));
  }
};

// Closed-form KL(q || p) between diagonal Gaussians, summed over dimensions,
// one entry per batch column.
template <typename S>
Tensor<S> kl_diag_gauss(const DiagonalGaussian<S>& q, const DiagonalGaussian<S>& p) {
  if (q.mean.rows() != p.mean.rows() || q.mean.cols() != p.mean.cols()) {
    throw NumericalError("kl_diag_gauss: dimension mismatch");
  }
  const Tensor<S> log_ratio = p.log_std - q.log_std;
  const Tensor<S> var_ratio = ad::exp(ad::scale(q.log_std - p.log_std, S(2)));
  const Tensor<S> mean_term = ad::cmul(ad::square(q.mean - p.mean), ad::exp(ad::scale(p.log_std, S(-2))));
  const Tensor<S> per_dim = ad::add_scalar(log_ratio + ad::scale(var_ratio + mean_term, S(0.5)), S(-0.5));
  return ad::colwise_sum(per_dim);
}

// Standard bias-corrected Adam with optional global-norm gradient clipping.
template <typename S>
class Adam {
 public:
  Adam() = default;
  Adam(double lr, double clip_norm = 0.0, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), clip_(clip_norm), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamList<S>& params) {
    ensure_state(params);
    S clip_scale = S(1);
    if (clip_ > 0.0) {
      double norm_sq = 0.0;
      for (auto& t : params.tensors) norm_sq += static_cast<double>(t.grad().squaredNorm());
      const double norm = std::sqrt(norm_sq);
      if (norm > clip_) clip_scale = static_cast<S>(clip_ / norm);
    }
    ++t_;
    const S bc1 = S(1) - static_cast<S>(std::pow(beta1_, t_));
    const S bc2 = S(1) - static_cast<S>(std::pow(beta2_, t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Mat<S> g = params.tensors[i].grad() * clip_scale;
      State& st = state_[i];
      st.m = S(beta1_) * st.m + (S(1) - S(beta1_)) * g;
      st.v = (S(beta2_) * st.v.array() + (S(1) - S(beta2_)) * g.array().square()).matrix();
      const auto m_hat = st.m.array() / bc1;
      const auto v_hat = st.v.array() / bc2;
      params.tensors[i].mutable_value().array() -= S(lr_) * m_hat / (v_hat.sqrt() + S(eps_));
    }
  }

  long step_count() const { return t_; }
  void set_step_count(long t) { t_ = t; }

  struct State {
    Mat<S> m, v;
  };
  std::vector<State>& state() { return state_; }
  const std::vector<State>& state() const { return state_; }
  void ensure_state(const ParamList<S>& params) {
    if (state_.empty()) {
      state_.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        state_[i].m = Mat<S>::Zero(params.tensors[i].rows(), params.tensors[i].cols());
        state_[i].v = Mat<S>::Zero(params.tensors[i].rows(), params.tensors[i].cols());
      }
    }
  }

 private:
  double lr_ = 1e-3;
  double clip_ = 0.0;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long t_ = 0;
  std::vector<State> state_;
};

}  // namespace dwm::nn
