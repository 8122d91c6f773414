#include "dwm/env.hpp"

#include <json.hpp>

#include "dwm/errors.hpp"

namespace dwm {

Eigen::VectorXd AgentObservation::to_vector() const {
  Eigen::VectorXd v(channel_feat.size() + 6);
  v.head(channel_feat.size()) = channel_feat;
  Eigen::Index i = channel_feat.size();
  v(i++) = interference_feat;
  v(i++) = prev_energy_feat;
  v(i++) = prev_rate_feat;
  v(i++) = violation_flags[0];
  v(i++) = violation_flags[1];
  v(i++) = violation_flags[2];
  return v;
}

std::pair<Eigen::VectorXcd, double> postprocess_action(const RawAction& raw, const SystemConfig& cfg) {
  const int nf = cfg.fbs_antennas;
  if (raw.size() != 2 * nf + 1) throw NumericalError("postprocess_action: raw action must have 2*N_F+1 entries");
  if (!raw.allFinite()) throw NumericalError("postprocess_action: non-finite raw action");
  const double norm = raw.head(2 * nf).norm();
  Eigen::VectorXcd w = Eigen::VectorXcd::Zero(nf);
  if (norm > 0.0) {
    const double scale = std::sqrt(cfg.p_max_mw()) / norm;
    for (int i = 0; i < nf; ++i) w(i) = std::complex<double>(raw(i) * scale, raw(nf + i) * scale);
  }
  const double alpha = 1.0 / (1.0 + std::exp(-raw(2 * nf)));
  return {std::move(w), alpha};
}

double compute_reward(const SlotOutcome& outcome, int k, const SystemConfig& cfg) {
  auto relu = [](double x) { return x > 0.0 ? x : 0.0; };
  double penalty = cfg.lambda1 * relu(cfg.xi_fue - outcome.fue_rates(k));
  penalty += cfg.lambda2 * relu(cfg.phi_fue_mw - outcome.harvested_mw(k));
  double sue_term = 0.0;
  for (int m = 0; m < outcome.sue_rates.size(); ++m) {
    const double total = outcome.sue_ter_interference(m);
    // no terrestrial interference at this SUE -> no responsibility to share
    const double w_km = total > 0.0 ? outcome.ter_attribution(k, m) / total : 0.0;
    sue_term += relu(cfg.xi_sue - outcome.sue_rates(m)) * w_km;
  }
  penalty += cfg.lambda3 * sue_term;
  return cfg.omega * outcome.fue_rates(k) - penalty;
}

std::array<int, 3> violation_flags(const SlotOutcome& outcome, int k, const SystemConfig& cfg) {
  std::array<int, 3> f{0, 0, 0};
  f[0] = outcome.fue_rates(k) < cfg.xi_fue ? 1 : 0;
  f[1] = outcome.harvested_mw(k) < cfg.phi_fue_mw ? 1 : 0;
  for (int m = 0; m < outcome.sue_rates.size(); ++m) {
    if (outcome.sue_rates(m) < cfg.xi_sue && outcome.ter_attribution(k, m) > 0.0) {
      f[2] = 1;
      break;
    }
  }
  return f;
}

Environment::Environment(const SystemConfig& cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {}

std::vector<AgentObservation> Environment::reset(std::uint64_t episode) {
  episode_ = episode;
  slot_ = 0;
  channels_ = std::make_unique<ChannelModel>(cfg_, seed_, episode);
  dump_channel_trace();
  return make_observations(nullptr);
}

std::vector<AgentObservation> Environment::make_observations(const SlotOutcome* prev) const {
  const int K = cfg_.num_fues, nf = cfg_.fbs_antennas;
  // FBS->FUE links sit after the M + K satellite links
  const int fbs_fue_base = cfg_.num_sues + K;
  std::vector<AgentObservation> obs(K);
  for (int k = 0; k < K; ++k) {
    AgentObservation& o = obs[k];
    const Eigen::VectorXcd& g = channels_->fading(fbs_fue_base + k).g;
    o.channel_feat.resize(2 * nf);
    for (int i = 0; i < nf; ++i) {
      o.channel_feat(i) = g(i).real();
      o.channel_feat(nf + i) = g(i).imag();
    }
    if (prev) {
      o.interference_feat = interference_feature(prev->fue_co_interference(k) + prev->fue_sat_interference(k));
      o.prev_energy_feat = energy_feature(prev->harvested_mw(k));
      o.prev_rate_feat = rate_feature(prev->fue_rates(k));
      o.violation_flags = violation_flags(*prev, k, cfg_);
    } else {
      o.interference_feat = interference_feature(0.0);
      o.prev_energy_feat = energy_feature(0.0);
      o.prev_rate_feat = rate_feature(0.0);
      o.violation_flags = {0, 0, 0};
    }
  }
  return obs;
}

StepResult Environment::step(const std::vector<RawAction>& raw_actions) {
  const int K = cfg_.num_fues;
  if (static_cast<int>(raw_actions.size()) != K) throw NumericalError("env step: one raw action per agent required");
  if (slot_ >= cfg_.episode_len) throw NumericalError("env step: episode already finished");

  StepResult res;
  res.applied.beamformers.resize(K);
  res.applied.ps_ratios.resize(K);
  for (int k = 0; k < K; ++k) {
    auto [w, alpha] = postprocess_action(raw_actions[k], cfg_);
    res.applied.beamformers[k] = std::move(w);
    res.applied.ps_ratios(k) = alpha;
  }

  res.outcome = evaluate_slot(channels_->state(), res.applied, cfg_);
  res.rewards.resize(K);
  res.flags.resize(K);
  for (int k = 0; k < K; ++k) {
    res.rewards[k] = compute_reward(res.outcome, k, cfg_);
    res.flags[k] = violation_flags(res.outcome, k, cfg_);
  }

  ++slot_;
  res.done = slot_ >= cfg_.episode_len;
  channels_->advance();
  dump_channel_trace();
  res.observations = make_observations(&res.outcome);
  return res;
}

void Environment::dump_channel_trace() const {
  if (!channel_trace_) return;
  using nlohmann::json;
  const NetworkState& net = channels_->state();
  auto dump = [&](const char* kind, int a, int b, const ChannelVector& cv) {
    json rec;
    rec["slot"] = net.slot;
    rec["link"] = kind;
    rec["i"] = a;
    rec["j"] = b;
    json re = json::array(), im = json::array();
    for (Eigen::Index i = 0; i < cv.gains.size(); ++i) {
      re.push_back(cv.gains(i).real());
      im.push_back(cv.gains(i).imag());
    }
    rec["re"] = std::move(re);
    rec["im"] = std::move(im);
    (*channel_trace_) << rec.dump() << '\n';
  };
  for (int m = 0; m < cfg_.num_sues; ++m) dump("sat_to_sue", m, -1, net.sat_to_sue[m]);
  for (int k = 0; k < cfg_.num_fues; ++k) dump("sat_to_fue", k, -1, net.sat_to_fue[k]);
  for (int k = 0; k < cfg_.num_fues; ++k) dump("fbs_to_fue", k, -1, net.fbs_to_fue[k]);
  for (int m = 0; m < cfg_.num_sues; ++m)
    for (int k = 0; k < cfg_.num_fues; ++k) dump("fbs_to_sue", m, k, net.fbs_to_sue[m][k]);
}

void write_step_trace(std::ostream& out, std::uint64_t episode, int slot, const StepResult& step) {
  using nlohmann::json;
  for (std::size_t k = 0; k < step.rewards.size(); ++k) {
    json rec;
    rec["episode"] = episode;
    rec["slot"] = slot;
    rec["agent"] = k;
    rec["alpha"] = step.applied.ps_ratios(static_cast<int>(k));
    json wre = json::array(), wim = json::array();
    for (Eigen::Index i = 0; i < step.applied.beamformers[k].size(); ++i) {
      wre.push_back(step.applied.beamformers[k](i).real());
      wim.push_back(step.applied.beamformers[k](i).imag());
    }
    rec["w_re"] = std::move(wre);
    rec["w_im"] = std::move(wim);
    rec["rate"] = step.outcome.fue_rates(static_cast<int>(k));
    rec["harvested_mw"] = step.outcome.harvested_mw(static_cast<int>(k));
    rec["eh_input_mw"] = step.outcome.eh_input_mw(static_cast<int>(k));
    rec["reward"] = step.rewards[k];
    rec["flags"] = step.flags[k];
    out << rec.dump() << '\n';
  }
}

}  // namespace dwm
