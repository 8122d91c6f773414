#pragma once

#include <optional>
#include <vector>

#include "dwm/agent.hpp"
#include "dwm/env.hpp"
#include "dwm/worldmodel.hpp"

namespace dwm::coord {

using dwm::ad::Mat;
using dwm::ad::Tensor;

// Uncertainty indicators feeding the offloading gate. interference_feat uses
// the same fixed log/affine compression as the observation vector;
// recon_error is the raw squared reconstruction error (floored at 0).
struct GateInput {
  double interference_feat = 0.0;
  double recon_error = 0.0;
};

struct GateRecord {
  GateInput input;
  int decision = 0;                        // D
  double realized_reward = 0.0;            // r_local (D=0) or r_dec (D=1)
  std::optional<double> counterfactual;    // reward-head estimate at the original latent, present iff D=1
  std::optional<double> improvement;       // realized - counterfactual; logged only, never trained on
  double log_prob = 0.0;
  double value_est = 0.0;
};

// R_gate: local reward as-is, offloaded reward minus the communication cost.
inline double gate_reward(const GateRecord& rec, double cost) {
  if (!std::isfinite(rec.realized_reward)) throw NumericalError("gate_reward: record is missing its realized reward");
  return rec.decision == 1 ? rec.realized_reward - cost : rec.realized_reward;
}

struct GateDecision {
  int decision = 0;
  double log_prob = 0.0;
  double value_est = 0.0;
  double probability = 0.0;
};

// Per-agent binary offloading policy: a 2 -> hidden -> hidden -> 1 sigmoid
// actor and a twin critic, trained with a clipped surrogate on single-step
// advantages R_gate - value_est.
template <typename S>
class GatePolicy {
 public:
  GatePolicy() = default;
  GatePolicy(int hidden_dim, RngStream& init_rng)
      : actor_(2, hidden_dim, 2, 1, init_rng, 0.01), critic_(2, hidden_dim, 2, 1, init_rng, 0.01) {}

  static Mat<S> features(const GateInput& u) {
    Mat<S> f(2, 1);
    f(0, 0) = static_cast<S>(u.interference_feat);
    f(1, 0) = static_cast<S>(recon_error_feature(u.recon_error));
    return f;
  }

  // Training mode samples the Bernoulli head; evaluation thresholds at 0.5
  // with ties broken to local execution.
  GateDecision decide(const GateInput& u, agent::ActionMode mode, RngStream& rng) const {
    const Mat<S> f = features(u);
    const double logit = static_cast<double>(actor_(Tensor<S>::constant(f, "gate_in")).value()(0, 0));
    const double p = 1.0 / (1.0 + std::exp(-logit));
    GateDecision d;
    d.probability = p;
    d.value_est = static_cast<double>(critic_(Tensor<S>::constant(f, "gate_in")).value()(0, 0));
    if (mode == agent::ActionMode::kSample) {
      d.decision = rng.uniform() < p ? 1 : 0;
    } else {
      d.decision = p > 0.5 ? 1 : 0;
    }
    d.log_prob = d.decision == 1 ? std::log(std::max(p, 1e-12)) : std::log(std::max(1.0 - p, 1e-12));
    return d;
  }

  struct UpdateStats {
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double total = 0.0;
  };

  // One clipped-surrogate step over a record batch.
  Tensor<S> surrogate_loss(const std::vector<GateRecord>& records, double cost, double clip,
                           double value_coef, UpdateStats* stats = nullptr) const {
    const int n = static_cast<int>(records.size());
    Mat<S> u(2, n), mask(1, n), logp_old(1, n), adv(1, n), ret(1, n);
    for (int i = 0; i < n; ++i) {
      u.col(i) = features(records[i].input).col(0);
      mask(0, i) = static_cast<S>(records[i].decision);
      logp_old(0, i) = static_cast<S>(records[i].log_prob);
      const double r = gate_reward(records[i], cost);
      ret(0, i) = static_cast<S>(r);
      adv(0, i) = static_cast<S>(r - records[i].value_est);
    }
    const Tensor<S> input = Tensor<S>::constant(std::move(u), "gate_batch");
    const Tensor<S> logits = actor_(input);
    const Tensor<S> d_mask = Tensor<S>::constant(std::move(mask), "gate_mask");
    const Tensor<S> one_minus = ad::add_scalar(ad::neg(d_mask), S(1));
    // log pi(D|u) = D*log sigma(logit) + (1-D)*log sigma(-logit)
    const Tensor<S> logp = ad::cmul(d_mask, ad::neg(ad::softplus(ad::neg(logits)))) +
                           ad::cmul(one_minus, ad::neg(ad::softplus(logits)));
    const Tensor<S> ratio = ad::exp(logp - Tensor<S>::constant(std::move(logp_old), "gate_logp_old"));
    const Tensor<S> advantage = Tensor<S>::constant(std::move(adv), "gate_adv");
    const Tensor<S> clipped = ad::clamp(ratio, S(1.0 - clip), S(1.0 + clip));
    const Tensor<S> surr = ad::cmin(ad::cmul(ratio, advantage), ad::cmul(clipped, advantage));
    const Tensor<S> policy_loss = ad::neg(ad::mean(surr));
    const Tensor<S> value_loss = ad::mean(ad::square(critic_(input) - Tensor<S>::constant(std::move(ret), "gate_ret")));
    const Tensor<S> total = policy_loss + ad::scale(value_loss, S(value_coef));
    if (stats) {
      stats->policy_loss = static_cast<double>(policy_loss.value()(0, 0));
      stats->value_loss = static_cast<double>(value_loss.value()(0, 0));
      stats->total = static_cast<double>(total.value()(0, 0));
    }
    return total;
  }

  void collect(const std::string& prefix, nn::ParamList<S>& out) const {
    actor_.collect(prefix + "actor.", out);
    critic_.collect(prefix + "critic.", out);
  }

 private:
  nn::Mlp<S> actor_;
  nn::Mlp<S> critic_;
};

// Edge-side latent refinement: subtract the element-wise mean of the
// offloaded latents (columns). A singleton group is returned unchanged;
// subtracting its own mean would zero the latent for no coordination gain.
// For coef == 1 the last column is recomputed as the negated left-to-right
// sum of the others, which makes the group sum exactly zero in floating
// point and, for two agents, makes the refined latents exact negations.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> decorrelate(
    const Eigen::MatrixBase<Derived>& latents, typename Derived::Scalar coef = 1) {
  using S = typename Derived::Scalar;
  using M = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index n = latents.cols();
  M out = latents;
  if (n < 2) return out;
  Eigen::Matrix<S, Eigen::Dynamic, 1> mean = M::Zero(latents.rows(), 1);
  for (Eigen::Index j = 0; j < n; ++j) mean += latents.col(j);
  mean /= static_cast<S>(n);
  out.colwise() -= (coef * mean).eval().col(0);
  if (coef == S(1)) {
    Eigen::Matrix<S, Eigen::Dynamic, 1> acc = out.col(0);
    for (Eigen::Index j = 1; j < n - 1; ++j) acc += out.col(j);
    out.col(n - 1) = -acc;
  }
  return out;
}

// Reward-head mean at the original (pre-refinement) latent: the gate's
// estimate of what local execution would have returned.
template <typename S>
double counterfactual_local(const wm::WorldModel<S>& model, const Mat<S>& d, const Mat<S>& z) {
  return static_cast<double>(
      model.decode_reward(Tensor<S>::constant(d, "d"), Tensor<S>::constant(z, "z")).value()(0, 0));
}

// One FUE agent: world model, actor-critic, gate, and the live belief.
template <typename S>
struct AgentCore {
  wm::WorldModel<S> model;
  agent::ActorCritic<S> ac;
  GatePolicy<S> gate;
  Mat<S> belief_d, belief_z, prev_action;
  bool fresh = true;  // true until the first belief update of the episode

  void begin_episode() {
    belief_d = model.initial_det(1);
    belief_z = Mat<S>::Zero(model.config().stoch_dim, 1);
    prev_action = Mat<S>::Zero(model.config().action_dim, 1);
    fresh = true;
  }
};

template <typename S>
struct AgentStreams {
  RngStream latent;
  RngStream policy;
  RngStream gate;
};

struct ExecOptions {
  agent::ActionMode mode = agent::ActionMode::kSample;
  bool gates_enabled = true;
  double decorrelation_coef = 1.0;
};

template <typename S>
struct SlotDecision {
  std::vector<RawAction> actions;        // one per agent, doubles for the env
  std::vector<GateRecord> gate_records;  // one per agent when gates are enabled, else empty
  std::vector<double> recon_errors;      // one per agent
};

// Three-phase execution protocol for one slot.
// Phase 1: per-agent belief update, reconstruction error and gate decision.
// Phase 2: decorrelate the latents of the offloading group at the edge.
// Phase 3: every agent acts through its own policy, on the refined latent if
// it offloaded, and actions are post-processed downstream. With gates
// disabled the slot is exactly the decentralized path; no gate stream is
// consumed, so trajectories match the gate-free rollout bit for bit.
template <typename S>
SlotDecision<S> execute_slot(std::vector<AgentCore<S>>& agents, const std::vector<AgentObservation>& observations,
                             const ExecOptions& opt, std::vector<AgentStreams<S>>& streams) {
  const int K = static_cast<int>(agents.size());
  SlotDecision<S> out;
  out.actions.resize(K);
  out.recon_errors.resize(K);
  if (opt.gates_enabled) out.gate_records.resize(K);

  // Phase 1
  std::vector<int> offload;
  std::vector<Mat<S>> obs_cols(K);
  for (int k = 0; k < K; ++k) {
    AgentCore<S>& a = agents[k];
    const Eigen::VectorXd obs_d = observations[k].to_vector();
    Mat<S> obs = obs_d.template cast<S>();
    obs_cols[k] = obs;
    if (a.belief_d.size() == 0) a.begin_episode();

    Tensor<S> d_t;
    if (a.fresh) {
      d_t = Tensor<S>::constant(a.belief_d, "d0");
      a.fresh = false;
    } else {
      d_t = a.model.transition(Tensor<S>::constant(a.belief_d, "d"), Tensor<S>::constant(a.belief_z, "z"),
                               Tensor<S>::constant(a.prev_action, "a"));
    }
    const nn::DiagonalGaussian<S> post = a.model.encode(d_t, Tensor<S>::constant(obs, "obs"));
    const Tensor<S> z_t = opt.mode == agent::ActionMode::kSample ? post.rsample(streams[k].latent) : post.mean;
    a.belief_d = d_t.value();
    a.belief_z = z_t.value();
    out.recon_errors[k] = a.model.reconstruction_error(obs, a.belief_d, a.belief_z);

    if (opt.gates_enabled) {
      GateInput u;
      u.interference_feat = observations[k].interference_feat;
      u.recon_error = out.recon_errors[k];
      const GateDecision dec = agents[k].gate.decide(u, opt.mode, streams[k].gate);
      GateRecord rec;
      rec.input = u;
      rec.decision = dec.decision;
      rec.log_prob = dec.log_prob;
      rec.value_est = dec.value_est;
      if (dec.decision == 1) {
        rec.counterfactual = counterfactual_local(agents[k].model, a.belief_d, a.belief_z);
        offload.push_back(k);
      }
      out.gate_records[k] = std::move(rec);
    }
  }

  // Phase 2
  std::vector<Mat<S>> refined(K);
  if (!offload.empty()) {
    Mat<S> group(agents.front().model.config().stoch_dim, static_cast<Eigen::Index>(offload.size()));
    for (std::size_t i = 0; i < offload.size(); ++i) group.col(static_cast<Eigen::Index>(i)) = agents[offload[i]].belief_z.col(0);
    const Mat<S> dec = decorrelate(group, static_cast<S>(opt.decorrelation_coef));
    for (std::size_t i = 0; i < offload.size(); ++i) refined[offload[i]] = dec.col(static_cast<Eigen::Index>(i));
  }

  // Phase 3
  for (int k = 0; k < K; ++k) {
    AgentCore<S>& a = agents[k];
    const Mat<S>& z_for_action = refined[k].size() > 0 ? refined[k] : a.belief_z;
    const Mat<S> action = a.ac.act(a.belief_d, z_for_action, opt.mode, streams[k].policy);
    a.prev_action = action;
    out.actions[k] = action.template cast<double>();
  }
  return out;
}

}  // namespace dwm::coord
