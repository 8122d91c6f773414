#pragma once

#include <vector>

#include "dwm/worldmodel.hpp"

namespace dwm::agent {

using dwm::ad::Mat;
using dwm::ad::Tensor;
using dwm::nn::DiagonalGaussian;

enum class ActionMode { kSample, kMean };

// Trajectory imagined entirely inside the world model: H+1 latents, H
// actions, H predicted rewards (rewards[i] follows actions[i]), H+1 critic
// values and H lambda-returns. No environment access is involved.
template <typename S>
struct ImaginedTrajectory {
  std::vector<Tensor<S>> det;      // H+1
  std::vector<Tensor<S>> stoch;    // H+1
  std::vector<Tensor<S>> actions;  // H
  std::vector<Tensor<S>> rewards;  // H, 1 x B
  std::vector<Tensor<S>> values;   // H+1, 1 x B (computed on detached latents)
  Mat<S> lambda_rets;              // H x B
};

// R_i = r_i + gamma * ((1 - lambda) * V_{i+1} + lambda * R_{i+1}),
// bootstrapped with R_H = V_H. rewards is H x B, values (H+1) x B.
template <typename S>
Mat<S> lambda_returns(const Mat<S>& rewards, const Mat<S>& values, S gamma, S lambda) {
  const Eigen::Index H = rewards.rows();
  if (values.rows() != H + 1 || values.cols() != rewards.cols()) {
    throw NumericalError("lambda_returns: need H rewards and H+1 values");
  }
  Mat<S> out(H, rewards.cols());
  Eigen::Matrix<S, 1, Eigen::Dynamic> next = values.row(H);
  for (Eigen::Index i = H - 1; i >= 0; --i) {
    out.row(i) = rewards.row(i) + gamma * ((S(1) - lambda) * values.row(i + 1) + lambda * next);
    next = out.row(i);
  }
  return out;
}

template <typename S>
class ActorCritic {
 public:
  ActorCritic() = default;
  ActorCritic(int det_dim, int stoch_dim, int hidden_dim, int action_dim, RngStream& init_rng)
      : action_dim_(action_dim),
        actor_(det_dim + stoch_dim, hidden_dim, 2, 2 * action_dim, init_rng, 0.01),
        critic_(det_dim + stoch_dim, hidden_dim, 2, 1, init_rng, 0.01) {
    // start the policy moderately narrow (std ~ 0.5)
    actor_.layers.back().bias.mutable_value().bottomRows(action_dim).setConstant(S(-0.7));
  }

  DiagonalGaussian<S> policy(const Tensor<S>& d, const Tensor<S>& z) const {
    return DiagonalGaussian<S>::from_stacked(actor_(ad::concat_rows<S>({d, z})));
  }

  Tensor<S> value(const Tensor<S>& d, const Tensor<S>& z) const { return critic_(ad::concat_rows<S>({d, z})); }

  // Collection-time action for a single latent column; values only.
  Mat<S> act(const Mat<S>& d, const Mat<S>& z, ActionMode mode, RngStream& rng) const {
    const DiagonalGaussian<S> pi = policy(Tensor<S>::constant(d, "d"), Tensor<S>::constant(z, "z"));
    if (mode == ActionMode::kMean) return pi.mean.value();
    return pi.rsample(rng).value();
  }

  // Rolls the policy through the world model prior for H steps starting from
  // real posterior states (columns). Actions are reparameterised samples in
  // kSample mode, so actor_loss gradients flow through the rewards into the
  // policy. Pass a parameter-detached world model view: imagined rewards must
  // not push gradients into the model itself.
  ImaginedTrajectory<S> imagine(const wm::WorldModel<S>& model, const Mat<S>& start_d, const Mat<S>& start_z,
                                int horizon, S gamma, S lambda, ActionMode mode, RngStream& noise) const {
    ImaginedTrajectory<S> traj;
    traj.det.push_back(Tensor<S>::constant(start_d, "start_d"));
    traj.stoch.push_back(Tensor<S>::constant(start_z, "start_z"));
    for (int i = 0; i < horizon; ++i) {
      const DiagonalGaussian<S> pi = policy(traj.det.back(), traj.stoch.back());
      traj.actions.push_back(mode == ActionMode::kSample ? pi.rsample(noise) : pi.mean);
      const Tensor<S> d_next = model.transition(traj.det.back(), traj.stoch.back(), traj.actions.back());
      const DiagonalGaussian<S> prior = model.predict_prior(d_next);
      const Tensor<S> z_next = mode == ActionMode::kSample ? prior.rsample(noise) : prior.mean;
      traj.det.push_back(d_next);
      traj.stoch.push_back(z_next);
      traj.rewards.push_back(model.decode_reward(d_next, z_next));
    }
    // critic on stop-gradient latents; lambda-returns are plain numbers
    const Eigen::Index B = start_d.cols();
    Mat<S> rew(horizon, B), val(horizon + 1, B);
    for (int i = 0; i <= horizon; ++i) {
      traj.values.push_back(value(traj.det[i].detach(), traj.stoch[i].detach()));
      val.row(i) = traj.values.back().value().row(0);
      if (i < horizon) rew.row(i) = traj.rewards[i].value().row(0);
    }
    traj.lambda_rets = lambda_returns(rew, val, gamma, lambda);
    return traj;
  }

  // Mean squared error of the critic against the (constant) lambda-returns.
  Tensor<S> critic_loss(const ImaginedTrajectory<S>& traj) const {
    const int H = static_cast<int>(traj.actions.size());
    Tensor<S> acc;
    for (int i = 0; i < H; ++i) {
      const Tensor<S> target = Tensor<S>::constant(traj.lambda_rets.row(i), "lambda_return");
      const Tensor<S> se = ad::square(traj.values[i] - target);
      acc = acc.defined() ? acc + se : se;
    }
    return ad::scale(ad::mean(acc), S(1.0 / H));
  }

  // Minimises the negated sum of imagined rewards; an optional entropy bonus
  // (disabled by default) regularises the policy at the start states.
  Tensor<S> actor_loss(const ImaginedTrajectory<S>& traj, S entropy_coef = S(0)) const {
    Tensor<S> acc;
    for (const Tensor<S>& r : traj.rewards) acc = acc.defined() ? acc + r : r;
    Tensor<S> loss = ad::neg(ad::mean(acc));
    if (entropy_coef > S(0)) {
      const DiagonalGaussian<S> pi = policy(traj.det.front(), traj.stoch.front());
      loss = loss - ad::scale(ad::mean(pi.entropy()), entropy_coef);
    }
    return loss;
  }

  void collect(const std::string& prefix, nn::ParamList<S>& out) const {
    collect_actor(prefix + "actor.", out);
    collect_critic(prefix + "critic.", out);
  }
  void collect_actor(const std::string& prefix, nn::ParamList<S>& out) const { actor_.collect(prefix, out); }
  void collect_critic(const std::string& prefix, nn::ParamList<S>& out) const { critic_.collect(prefix, out); }

  int action_dim() const { return action_dim_; }

 private:
  int action_dim_ = 0;
  nn::Mlp<S> actor_;
  nn::Mlp<S> critic_;
};

}  // namespace dwm::agent
