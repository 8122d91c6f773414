#pragma once

#include <utility>
#include <vector>

#include "dwm/nn.hpp"

namespace dwm::wm {

using dwm::ad::Mat;
using dwm::ad::Tensor;
using dwm::nn::DiagonalGaussian;

struct WorldModelConfig {
  int obs_dim = 18;
  int action_dim = 13;
  int det_dim = 256;
  int stoch_dim = 32;
  int hidden_dim = 256;
  double free_bits = 1.0;
  double beta_dyn = 1.0;
  double beta_rep = 0.1;
  double reward_weight = 1.0;  // relative weight of the reward likelihood inside pred
};

// Batch of training sequences laid out per time step, columns are sequences.
// observations has T+1 entries (the terminal observation included), actions
// and rewards have T entries; rewards[t] follows actions[t].
template <typename S>
struct SequenceBatch {
  std::vector<Mat<S>> observations;
  std::vector<Mat<S>> actions;
  std::vector<Mat<S>> rewards;  // 1 x B each
};

struct WmLossBreakdown {
  double pred = 0.0;
  double dyn = 0.0;
  double rep = 0.0;
  double total = 0.0;
};

template <typename S>
struct WmTrainOutput {
  Tensor<S> total_loss;
  WmLossBreakdown breakdown;
  Mat<S> post_d;  // det x (B * (T+1)), flattened posterior states for imagination starts
  Mat<S> post_z;  // stoch x (B * (T+1))
};

// Recurrent state-space model: deterministic GRU memory, stochastic Gaussian
// state, plus posterior encoder, prior dynamics head, observation decoder and
// reward head. One instance per agent; single-owner.
template <typename S>
class WorldModel {
 public:
  WorldModel() = default;
  WorldModel(const WorldModelConfig& cfg, RngStream& init_rng)
      : cfg_(cfg),
        embed_(cfg.stoch_dim + cfg.action_dim, cfg.hidden_dim, init_rng),
        gru_(cfg.hidden_dim, cfg.det_dim, init_rng),
        encoder_(cfg.det_dim + cfg.obs_dim, cfg.hidden_dim, 2, 2 * cfg.stoch_dim, init_rng, 0.01),
        prior_(cfg.det_dim, cfg.hidden_dim, 2, 2 * cfg.stoch_dim, init_rng, 0.01),
        obs_head_(cfg.det_dim + cfg.stoch_dim, cfg.hidden_dim, 2, cfg.obs_dim, init_rng, 0.01),
        reward_head_(cfg.det_dim + cfg.stoch_dim, cfg.hidden_dim, 2, 1, init_rng, 0.01) {}

  const WorldModelConfig& config() const { return cfg_; }

  // Raw actions are scale-degenerate: the beam part only acts on the radio
  // through its direction and the last entry only through a sigmoid. The
  // transition embeds the action in those canonical coordinates (unit-norm
  // beam block, clamped split logit) so model inputs stay on a compact
  // manifold however large the policy's raw outputs get. Differentiable, so
  // imagination gradients still reach the policy.
  Tensor<S> canonical_action(const Tensor<S>& a) const {
    const Eigen::Index beam_rows = cfg_.action_dim - 1;
    const Tensor<S> beam = ad::unit_columns(ad::slice_rows(a, 0, beam_rows), S(1e-4));
    const Tensor<S> split = ad::clamp(ad::slice_rows(a, beam_rows, 1), S(-10), S(10));
    return ad::concat_rows<S>({beam, split});
  }

  // d' = GRU(embed([z; canonical(a)]), d)
  Tensor<S> transition(const Tensor<S>& d, const Tensor<S>& z, const Tensor<S>& a) const {
    return gru_(ad::silu(embed_(ad::concat_rows<S>({z, canonical_action(a)}))), d);
  }

  DiagonalGaussian<S> encode(const Tensor<S>& d, const Tensor<S>& obs) const {
    return DiagonalGaussian<S>::from_stacked(encoder_(ad::concat_rows<S>({d, obs})));
  }

  DiagonalGaussian<S> predict_prior(const Tensor<S>& d) const {
    return DiagonalGaussian<S>::from_stacked(prior_(d));
  }

  Tensor<S> decode_obs(const Tensor<S>& d, const Tensor<S>& z) const {
    return obs_head_(ad::concat_rows<S>({d, z}));
  }

  Tensor<S> decode_reward(const Tensor<S>& d, const Tensor<S>& z) const {
    return reward_head_(ad::concat_rows<S>({d, z}));
  }

  Mat<S> initial_det(Eigen::Index batch) const { return Mat<S>::Zero(cfg_.det_dim, batch); }

  // ||decoded mean - obs||^2 for a single latent column
  double reconstruction_error(const Mat<S>& obs, const Mat<S>& d, const Mat<S>& z) const {
    const Tensor<S> decoded =
        decode_obs(Tensor<S>::constant(d, "d"), Tensor<S>::constant(z, "z"));
    return static_cast<double>((decoded.value() - obs).squaredNorm());
  }

  // Three-term sequence loss. Reconstruction and reward terms are Gaussian
  // negative log likelihoods with unit variance (constants dropped), the two
  // KL terms carry the stop-gradient asymmetry and a per-step free-bits
  // floor. Every term is reported time-averaged so the floor reads as
  // dyn, rep >= free_bits.
  WmTrainOutput<S> loss(const SequenceBatch<S>& batch, RngStream& noise) const {
    const int steps = static_cast<int>(batch.observations.size());  // T + 1
    const int T = static_cast<int>(batch.actions.size());
    if (steps != T + 1 || static_cast<int>(batch.rewards.size()) != T) {
      throw NumericalError("wm loss: sequence batch layout must be T+1 observations, T actions, T rewards");
    }
    const Eigen::Index B = batch.observations.front().cols();

    WmTrainOutput<S> out;
    out.post_d.resize(cfg_.det_dim, B * steps);
    out.post_z.resize(cfg_.stoch_dim, B * steps);

    Tensor<S> recon_acc, reward_acc, dyn_acc, rep_acc;
    auto acc = [](Tensor<S>& slot, const Tensor<S>& term) { slot = slot.defined() ? slot + term : term; };

    Tensor<S> d = Tensor<S>::constant(initial_det(B), "d0");
    Tensor<S> z;
    for (int t = 0; t < steps; ++t) {
      if (t > 0) {
        const Tensor<S> a = Tensor<S>::constant(batch.actions[t - 1], "action");
        d = transition(d, z, a);
      }
      const Tensor<S> obs = Tensor<S>::constant(batch.observations[t], "obs");
      const DiagonalGaussian<S> post = encode(d, obs);
      const DiagonalGaussian<S> prior = predict_prior(d);
      z = post.rsample(noise);

      out.post_d.middleCols(static_cast<Eigen::Index>(t) * B, B) = d.value();
      out.post_z.middleCols(static_cast<Eigen::Index>(t) * B, B) = z.value();

      acc(recon_acc, ad::colwise_sum(ad::square(decode_obs(d, z) - obs)));
      if (t > 0) {
        const Tensor<S> r = Tensor<S>::constant(batch.rewards[t - 1], "reward");
        // Predict the reward from the posterior state and, with equal weight,
        // from a prior sample. The posterior alone can read the realised rate
        // back out of the observation, which leaves imagination (which only
        // has the prior) without a usable reward gradient; the prior-sample
        // term grounds the head the way rollouts consume it.
        const Tensor<S> from_post = ad::square(decode_reward(d, z) - r);
        const Tensor<S> from_prior = ad::square(decode_reward(d, prior.rsample(noise)) - r);
        acc(reward_acc, ad::scale(from_post + from_prior, S(0.5)));
      }
      acc(dyn_acc, ad::cmax_scalar(nn::kl_diag_gauss(post.detach(), prior), S(cfg_.free_bits)));
      acc(rep_acc, ad::cmax_scalar(nn::kl_diag_gauss(post, prior.detach()), S(cfg_.free_bits)));
    }

    const Tensor<S> pred = ad::scale(ad::mean(recon_acc), S(0.5 / steps)) +
                           ad::scale(ad::mean(reward_acc), S(0.5 * cfg_.reward_weight / T));
    const Tensor<S> dyn = ad::scale(ad::mean(dyn_acc), S(1.0 / steps));
    const Tensor<S> rep = ad::scale(ad::mean(rep_acc), S(1.0 / steps));
    out.total_loss = pred + ad::scale(dyn, S(cfg_.beta_dyn)) + ad::scale(rep, S(cfg_.beta_rep));

    out.breakdown.pred = static_cast<double>(pred.value()(0, 0));
    out.breakdown.dyn = static_cast<double>(dyn.value()(0, 0));
    out.breakdown.rep = static_cast<double>(rep.value()(0, 0));
    out.breakdown.total = static_cast<double>(out.total_loss.value()(0, 0));
    return out;
  }

  // Parameter-detached view sharing the same weights; forward passes through
  // it never accumulate gradients into the world model.
  WorldModel detached_view() const {
    WorldModel w;
    w.cfg_ = cfg_;
    w.embed_ = embed_.detached();
    w.gru_ = gru_.detached();
    w.encoder_ = encoder_.detached();
    w.prior_ = prior_.detached();
    w.obs_head_ = obs_head_.detached();
    w.reward_head_ = reward_head_.detached();
    return w;
  }

  void collect(const std::string& prefix, nn::ParamList<S>& out) const {
    embed_.collect(prefix + "embed.", out);
    gru_.collect(prefix + "gru.", out);
    encoder_.collect(prefix + "encoder.", out);
    prior_.collect(prefix + "prior.", out);
    obs_head_.collect(prefix + "obs_head.", out);
    reward_head_.collect(prefix + "reward_head.", out);
  }

  nn::ParamList<S> params() const {
    nn::ParamList<S> p;
    collect("", p);
    return p;
  }

 private:
  WorldModelConfig cfg_;
  nn::Dense<S> embed_;
  nn::GruCell<S> gru_;
  nn::Mlp<S> encoder_;
  nn::Mlp<S> prior_;
  nn::Mlp<S> obs_head_;
  nn::Mlp<S> reward_head_;
};

}  // namespace dwm::wm
