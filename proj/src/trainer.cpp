#include "dwm/trainer.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "dwm/baselines.hpp"
#include "dwm/errors.hpp"

namespace dwm {

namespace {

namespace fs = std::filesystem;
using coord::AgentCore;
using coord::GateRecord;
using nn::ParamList;

wm::WorldModelConfig wm_config(const SystemConfig& cfg) {
  wm::WorldModelConfig w;
  w.obs_dim = cfg.obs_dim();
  w.action_dim = cfg.action_dim();
  w.det_dim = cfg.det_dim;
  w.stoch_dim = cfg.stoch_dim;
  w.hidden_dim = cfg.hidden_dim;
  w.free_bits = cfg.free_bits;
  w.reward_weight = cfg.reward_pred_weight;
  return w;
}

AgentCoreF make_agent(const SystemConfig& cfg, std::uint64_t seed, int k) {
  AgentCoreF a;
  RngStream wm_rng(seed, static_cast<std::uint32_t>(k), Purpose::kParamInit, 1);
  RngStream ac_rng(seed, static_cast<std::uint32_t>(k), Purpose::kParamInit, 2);
  RngStream gate_rng(seed, static_cast<std::uint32_t>(k), Purpose::kParamInit, 3);
  a.model = wm::WorldModel<TrainScalar>(wm_config(cfg), wm_rng);
  a.ac = agent::ActorCritic<TrainScalar>(cfg.det_dim, cfg.stoch_dim, cfg.hidden_dim, cfg.action_dim(), ac_rng);
  a.gate = coord::GatePolicy<TrainScalar>(cfg.gate_hidden_dim, gate_rng);
  a.begin_episode();
  return a;
}

struct AgentParamLists {
  ParamList<TrainScalar> wm, actor, critic, gate;
};

AgentParamLists param_lists(const AgentCoreF& a) {
  AgentParamLists p;
  a.model.collect("", p.wm);
  a.ac.collect_actor("", p.actor);
  a.ac.collect_critic("", p.critic);
  a.gate.collect("", p.gate);
  return p;
}

void store_params(Checkpoint& ck, const std::string& prefix, const ParamList<TrainScalar>& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    ck.put_matrix(prefix + params.names[i], params.tensors[i].value());
  }
}

void load_params(const Checkpoint& ck, const std::string& prefix, ParamList<TrainScalar>& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    Eigen::MatrixXf m = ck.matrix(prefix + params.names[i]);
    Eigen::MatrixXf& dst = const_cast<ad::Tensor<TrainScalar>&>(params.tensors[i]).mutable_value();
    if (m.rows() != dst.rows() || m.cols() != dst.cols()) {
      throw IoError("checkpoint: shape mismatch for '" + prefix + params.names[i] + "'");
    }
    dst = std::move(m);
  }
}

void store_adam(Checkpoint& ck, const std::string& prefix, const nn::Adam<TrainScalar>& opt,
                const ParamList<TrainScalar>& params) {
  ck.put_u64(prefix + "steps", static_cast<std::uint64_t>(opt.step_count()));
  const auto& st = opt.state();
  for (std::size_t i = 0; i < st.size(); ++i) {
    ck.put_matrix(prefix + params.names[i] + ".m", st[i].m);
    ck.put_matrix(prefix + params.names[i] + ".v", st[i].v);
  }
}

void load_adam(const Checkpoint& ck, const std::string& prefix, nn::Adam<TrainScalar>& opt,
               const ParamList<TrainScalar>& params) {
  opt.set_step_count(static_cast<long>(ck.u64(prefix + "steps")));
  opt.ensure_state(const_cast<ParamList<TrainScalar>&>(params));
  auto& st = opt.state();
  for (std::size_t i = 0; i < st.size(); ++i) {
    if (!ck.has(prefix + params.names[i] + ".m")) continue;  // optimiser not yet stepped at save time
    st[i].m = ck.matrix(prefix + params.names[i] + ".m");
    st[i].v = ck.matrix(prefix + params.names[i] + ".v");
  }
}

RawAction egt_raw_action(const Eigen::VectorXcd& channel, const SystemConfig& cfg) {
  auto [w, alpha] = egt_policy(channel, cfg.p_max_mw(), cfg.egt_alpha);
  const int nf = cfg.fbs_antennas;
  RawAction raw = RawAction::Zero(2 * nf + 1);
  for (int i = 0; i < nf; ++i) {
    raw(i) = w(i).real();
    raw(nf + i) = w(i).imag();
  }
  const double a = std::clamp(alpha, 1e-9, 1.0 - 1e-9);
  raw(2 * nf) = std::log(a / (1.0 - a));
  return raw;
}

}  // namespace

Trainer::Trainer(const SystemConfig& cfg, bool parallel_agent_updates)
    : cfg_(cfg), parallel_(parallel_agent_updates), env_(cfg, cfg.seed) {
  for (int k = 0; k < cfg_.num_fues; ++k) {
    replay_.emplace_back(cfg_.replay_capacity, cfg_.episode_len);
    wm_opt_.emplace_back(cfg_.wm_lr, cfg_.grad_clip);
    actor_opt_.emplace_back(cfg_.actor_lr, cfg_.grad_clip);
    critic_opt_.emplace_back(cfg_.critic_lr, cfg_.grad_clip);
    gate_opt_.emplace_back(cfg_.gate_lr, cfg_.grad_clip);
  }
  pending_gate_.resize(cfg_.num_fues);
}

void Trainer::init() {
  agents_.clear();
  for (int k = 0; k < cfg_.num_fues; ++k) agents_.push_back(make_agent(cfg_, cfg_.seed, k));
  next_episode_ = 0;
}

Trainer::EpisodeLog Trainer::collect_episode(std::uint64_t episode) {
  const int K = cfg_.num_fues;
  const bool gated = gates_active(episode);

  std::vector<AgentObservation> obs = env_.reset(episode);
  std::vector<coord::AgentStreams<TrainScalar>> streams;
  streams.reserve(K);
  for (int k = 0; k < K; ++k) {
    streams.push_back({RngStream(cfg_.seed, static_cast<std::uint32_t>(k), Purpose::kLatentNoise, episode),
                       RngStream(cfg_.seed, static_cast<std::uint32_t>(k), Purpose::kPolicyNoise, episode),
                       RngStream(cfg_.seed, static_cast<std::uint32_t>(k), Purpose::kGateNoise, episode)});
  }

  const int T = cfg_.episode_len;
  std::vector<EpisodeRecord> records(K);
  for (int k = 0; k < K; ++k) {
    records[k].observations.resize(cfg_.obs_dim(), T + 1);
    records[k].actions.resize(cfg_.action_dim(), T);
    records[k].rewards.resize(T);
    records[k].flags.resize(3, T);
  }

  EpisodeLog log;
  log.episode_reward.assign(K, 0.0);
  coord::ExecOptions exec;
  exec.mode = agent::ActionMode::kSample;
  exec.gates_enabled = gated;
  exec.decorrelation_coef = cfg_.decorrelation_coef;

  for (int k = 0; k < K; ++k) agents_[k].begin_episode();

  for (int t = 0; t < T; ++t) {
    for (int k = 0; k < K; ++k) records[k].observations.col(t) = obs[k].to_vector().cast<float>();
    coord::SlotDecision<TrainScalar> dec = coord::execute_slot(agents_, obs, exec, streams);
    StepResult step = env_.step(dec.actions);

    SlotMetrics m = make_slot_metrics(step, cfg_);
    double offload_sum = 0.0;
    for (int k = 0; k < K; ++k) {
      records[k].actions.col(t) = dec.actions[k].cast<float>();
      records[k].rewards(t) = static_cast<float>(step.rewards[k]);
      for (int f = 0; f < 3; ++f) records[k].flags(f, t) = static_cast<float>(step.flags[k][f]);
      log.episode_reward[k] += step.rewards[k];
      if (gated) {
        GateRecord rec = dec.gate_records[k];
        rec.realized_reward = step.rewards[k];
        if (rec.decision == 1 && rec.counterfactual) {
          rec.improvement = rec.realized_reward - *rec.counterfactual;
          m.delta[k] = *rec.improvement;
        }
        m.offload[k] = rec.decision;
        offload_sum += rec.decision;
        pending_gate_[k].push_back(std::move(rec));
      }
    }
    m.offload_rate = offload_sum / K;
    log.slots.push_back(std::move(m));
    obs = step.observations;
  }
  for (int k = 0; k < K; ++k) {
    records[k].observations.col(T) = obs[k].to_vector().cast<float>();
    replay_[k].push(std::move(records[k]));
  }
  return log;
}

Trainer::AgentUpdate Trainer::update_one(int k, std::uint64_t episode) {
  AgentCoreF& a = agents_[k];
  const int T = cfg_.episode_len;
  const int B = cfg_.batch_size;
  AgentUpdate last{};
  for (int round = 0; round < cfg_.updates_per_episode; ++round) {
    last = update_round(k, episode * 64 + static_cast<std::uint64_t>(round));
  }
  return last;
}

Trainer::AgentUpdate Trainer::update_round(int k, std::uint64_t round_ctx) {
  AgentCoreF& a = agents_[k];
  const int T = cfg_.episode_len;
  const int B = cfg_.batch_size;

  RngStream sample_rng(cfg_.seed, static_cast<std::uint32_t>(k), Purpose::kReplaySample, round_ctx);
  RngStream noise_rng(cfg_.seed, static_cast<std::uint32_t>(k), Purpose::kTrainNoise, round_ctx);

  wm::SequenceBatch<TrainScalar> batch;
  batch.observations.assign(T + 1, ad::Mat<TrainScalar>(cfg_.obs_dim(), B));
  batch.actions.assign(T, ad::Mat<TrainScalar>(cfg_.action_dim(), B));
  batch.rewards.assign(T, ad::Mat<TrainScalar>(1, B));
  for (int b = 0; b < B; ++b) {
    const EpisodeRecord& e = replay_[k].at(replay_[k].sample_index(sample_rng));
    for (int t = 0; t <= T; ++t) batch.observations[t].col(b) = e.observations.col(t);
    for (int t = 0; t < T; ++t) {
      batch.actions[t].col(b) = e.actions.col(t);
      batch.rewards[t](0, b) = e.rewards(t);
    }
  }

  AgentParamLists params = param_lists(a);
  AgentUpdate up;

  // world model step
  wm::WmTrainOutput<TrainScalar> wm_out = a.model.loss(batch, noise_rng);
  up.wm = wm_out.breakdown;
  params.wm.zero_grads();
  wm_out.total_loss.backward();
  wm_opt_[k].step(params.wm);

  // imagination starts: posterior states of the replayed batch, optionally
  // subsampled
  ad::Mat<TrainScalar> start_d = std::move(wm_out.post_d);
  ad::Mat<TrainScalar> start_z = std::move(wm_out.post_z);
  const Eigen::Index total = start_d.cols();
  if (cfg_.imagination_starts > 0 && cfg_.imagination_starts < total) {
    ad::Mat<TrainScalar> sd(start_d.rows(), cfg_.imagination_starts), sz(start_z.rows(), cfg_.imagination_starts);
    for (int i = 0; i < cfg_.imagination_starts; ++i) {
      const Eigen::Index idx = static_cast<Eigen::Index>(noise_rng.uniform_int(static_cast<std::uint64_t>(total)));
      sd.col(i) = start_d.col(idx);
      sz.col(i) = start_z.col(idx);
    }
    start_d = std::move(sd);
    start_z = std::move(sz);
  }

  // actor-critic step on an imagined batch through the frozen model
  const wm::WorldModel<TrainScalar> frozen = a.model.detached_view();
  agent::ImaginedTrajectory<TrainScalar> traj =
      a.ac.imagine(frozen, start_d, start_z, cfg_.horizon, static_cast<TrainScalar>(cfg_.gamma),
                   static_cast<TrainScalar>(cfg_.lambda_return), agent::ActionMode::kSample, noise_rng);
  ad::Tensor<TrainScalar> actor_loss = a.ac.actor_loss(traj, static_cast<TrainScalar>(cfg_.entropy_coef));
  up.actor = static_cast<double>(actor_loss.value()(0, 0));
  params.actor.zero_grads();
  actor_loss.backward();
  actor_opt_[k].step(params.actor);

  ad::Tensor<TrainScalar> critic_loss = a.ac.critic_loss(traj);
  up.critic = static_cast<double>(critic_loss.value()(0, 0));
  params.critic.zero_grads();
  critic_loss.backward();
  critic_opt_[k].step(params.critic);

  return up;
}

LossMetrics Trainer::update_agents(std::uint64_t episode) {
  LossMetrics out;
  const int K = cfg_.num_fues;
  if (replay_.front().size() < static_cast<std::size_t>(cfg_.batch_size)) return out;

  std::vector<AgentUpdate> ups(K);
  if (parallel_ && K > 1) {
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(K);
    for (int k = 0; k < K; ++k) {
      workers.emplace_back([&, k] {
        try {
          ups[k] = update_one(k, episode);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      });
    }
    for (auto& w : workers) w.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  } else {
    for (int k = 0; k < K; ++k) ups[k] = update_one(k, episode);
  }

  for (const AgentUpdate& u : ups) {
    out.wm_pred += u.wm.pred / K;
    out.wm_dyn += u.wm.dyn / K;
    out.wm_rep += u.wm.rep / K;
    out.wm_total += u.wm.total / K;
    out.actor += u.actor / K;
    out.critic += u.critic / K;
  }
  out.valid = true;
  return out;
}

double Trainer::update_gates() {
  double loss = 0.0;
  int updated = 0;
  for (int k = 0; k < cfg_.num_fues; ++k) {
    if (pending_gate_[k].empty()) continue;
    AgentParamLists params = param_lists(agents_[k]);
    coord::GatePolicy<TrainScalar>::UpdateStats stats;
    ad::Tensor<TrainScalar> total = agents_[k].gate.surrogate_loss(pending_gate_[k], cfg_.gate_cost, cfg_.gate_clip,
                                                                   cfg_.gate_value_coef, &stats);
    params.gate.zero_grads();
    total.backward();
    gate_opt_[k].step(params.gate);
    pending_gate_[k].clear();
    loss += stats.total;
    ++updated;
  }
  return updated > 0 ? loss / updated : 0.0;
}

void Trainer::run(int n, MetricsWriter* metrics) {
  for (int i = 0; i < n; ++i) {
    const std::uint64_t ep = next_episode_;
    EpisodeLog log = collect_episode(ep);
    if (metrics) {
      for (std::size_t t = 0; t < log.slots.size(); ++t) metrics->slot_row(ep, static_cast<int>(t), log.slots[t]);
    }
    LossMetrics losses = update_agents(ep);
    if ((ep + 1) % static_cast<std::uint64_t>(cfg_.gate_update_every) == 0) {
      losses.gate = update_gates();
    }
    if (metrics) metrics->episode_row(ep, log.slots, losses);
    ++next_episode_;
  }
}

Checkpoint Trainer::snapshot() const {
  Checkpoint ck;
  ck.config_hash = cfg_.hash();
  ck.put_u64("meta/next_episode", next_episode_);
  ck.put_u64("meta/seed", cfg_.seed);
  ck.put_u64("meta/num_agents", static_cast<std::uint64_t>(cfg_.num_fues));
  for (int k = 0; k < cfg_.num_fues; ++k) {
    const std::string base = "agent" + std::to_string(k) + "/";
    AgentParamLists params = param_lists(agents_[k]);
    store_params(ck, base + "wm/", params.wm);
    store_params(ck, base + "actor/", params.actor);
    store_params(ck, base + "critic/", params.critic);
    store_params(ck, base + "gate/", params.gate);
    store_adam(ck, base + "opt/wm/", wm_opt_[k], params.wm);
    store_adam(ck, base + "opt/actor/", actor_opt_[k], params.actor);
    store_adam(ck, base + "opt/critic/", critic_opt_[k], params.critic);
    store_adam(ck, base + "opt/gate/", gate_opt_[k], params.gate);

    ck.put_u64(base + "replay/count", replay_[k].size());
    for (std::size_t i = 0; i < replay_[k].size(); ++i) {
      const EpisodeRecord& e = replay_[k].at(i);
      const std::string ep = base + "replay/e" + std::to_string(i) + "/";
      ck.put_matrix(ep + "obs", e.observations);
      ck.put_matrix(ep + "act", e.actions);
      ck.put_matrix(ep + "rew", e.rewards);
      ck.put_matrix(ep + "flags", e.flags);
    }

    const auto& pending = pending_gate_[k];
    if (!pending.empty()) {
      Eigen::MatrixXf g(7, static_cast<Eigen::Index>(pending.size()));
      for (std::size_t i = 0; i < pending.size(); ++i) {
        const GateRecord& r = pending[i];
        const auto j = static_cast<Eigen::Index>(i);
        g(0, j) = static_cast<float>(r.input.interference_feat);
        g(1, j) = static_cast<float>(r.input.recon_error);
        g(2, j) = static_cast<float>(r.decision);
        g(3, j) = static_cast<float>(r.realized_reward);
        g(4, j) = static_cast<float>(r.log_prob);
        g(5, j) = static_cast<float>(r.value_est);
        g(6, j) = r.counterfactual ? static_cast<float>(*r.counterfactual)
                                   : std::numeric_limits<float>::quiet_NaN();
      }
      ck.put_matrix(base + "gate_pending", g);
    }
  }
  return ck;
}

void Trainer::restore(const Checkpoint& ck) {
  if (ck.config_hash != cfg_.hash()) {
    throw ConfigError("checkpoint: config hash mismatch (checkpoint was produced with a different configuration)");
  }
  if (ck.u64("meta/seed") != cfg_.seed) {
    throw ConfigError("checkpoint: training seed mismatch; resuming requires the original seed");
  }
  init();
  next_episode_ = ck.u64("meta/next_episode");
  for (int k = 0; k < cfg_.num_fues; ++k) {
    const std::string base = "agent" + std::to_string(k) + "/";
    AgentParamLists params = param_lists(agents_[k]);
    load_params(ck, base + "wm/", params.wm);
    load_params(ck, base + "actor/", params.actor);
    load_params(ck, base + "critic/", params.critic);
    load_params(ck, base + "gate/", params.gate);
    load_adam(ck, base + "opt/wm/", wm_opt_[k], params.wm);
    load_adam(ck, base + "opt/actor/", actor_opt_[k], params.actor);
    load_adam(ck, base + "opt/critic/", critic_opt_[k], params.critic);
    load_adam(ck, base + "opt/gate/", gate_opt_[k], params.gate);

    replay_[k] = ReplayBuffer(cfg_.replay_capacity, cfg_.episode_len);
    const std::uint64_t count = ck.u64(base + "replay/count");
    for (std::uint64_t i = 0; i < count; ++i) {
      const std::string ep = base + "replay/e" + std::to_string(i) + "/";
      EpisodeRecord e;
      e.observations = ck.matrix(ep + "obs");
      e.actions = ck.matrix(ep + "act");
      e.rewards = ck.matrix(ep + "rew");
      e.flags = ck.matrix(ep + "flags");
      replay_[k].push(std::move(e));
    }

    pending_gate_[k].clear();
    if (ck.has(base + "gate_pending")) {
      const Eigen::MatrixXf g = ck.matrix(base + "gate_pending");
      for (Eigen::Index j = 0; j < g.cols(); ++j) {
        GateRecord r;
        r.input.interference_feat = g(0, j);
        r.input.recon_error = g(1, j);
        r.decision = static_cast<int>(g(2, j));
        r.realized_reward = g(3, j);
        r.log_prob = g(4, j);
        r.value_est = g(5, j);
        if (!std::isnan(g(6, j))) {
          r.counterfactual = g(6, j);
          r.improvement = r.realized_reward - *r.counterfactual;
        }
        pending_gate_[k].push_back(std::move(r));
      }
    }
  }
}

TrainResult train(const SystemConfig& cfg, const TrainOptions& opt) {
  fs::create_directories(opt.out_dir);
  Trainer trainer(cfg, opt.parallel_agent_updates);
  if (!opt.resume_checkpoint.empty()) {
    trainer.restore(Checkpoint::load(opt.resume_checkpoint));
  } else {
    trainer.init();
  }

  {
    std::ofstream cfg_out(opt.out_dir + "/config.json");
    cfg_out << cfg.to_json() << '\n';
  }

  const std::string metrics_path = opt.out_dir + "/metrics.csv";
  const std::string ckpt_path = opt.out_dir + "/checkpoint.dwm";
  MetricsWriter metrics(metrics_path, cfg.num_fues);

  const int total = opt.episodes > 0 ? opt.episodes : cfg.episodes;
  TrainResult result;
  result.metrics_path = metrics_path;
  result.checkpoint_path = ckpt_path;

  const std::uint64_t start = trainer.next_episode();
  try {
    while (trainer.next_episode() < start + static_cast<std::uint64_t>(total)) {
      trainer.run(1, &metrics);
      const std::uint64_t done = trainer.next_episode();
      if (cfg.checkpoint_every > 0 && done % static_cast<std::uint64_t>(cfg.checkpoint_every) == 0) {
        trainer.snapshot().save(ckpt_path);
      }
      if (!opt.quiet && done % 100 == 0) {
        std::cerr << "episode " << done << "/" << start + total << '\n';
      }
    }
  } catch (const NumericalError&) {
    // keep the last good checkpoint in place and report the abort
    metrics.flush();
    throw;
  }
  trainer.snapshot().save(ckpt_path);
  metrics.flush();
  result.episodes_run = trainer.next_episode() - start;
  return result;
}

std::vector<AgentCoreF> load_agents(const SystemConfig& cfg, const Checkpoint& ck, bool allow_mismatch) {
  if (!allow_mismatch && ck.config_hash != cfg.hash()) {
    throw ConfigError("checkpoint: config hash mismatch (pass a sweep override to clone across K)");
  }
  const int stored = static_cast<int>(ck.u64("meta/num_agents"));
  std::vector<AgentCoreF> agents;
  for (int k = 0; k < cfg.num_fues; ++k) {
    AgentCoreF a = make_agent(cfg, cfg.seed, k);
    const std::string base = "agent" + std::to_string(k % stored) + "/";
    AgentParamLists params = param_lists(a);
    load_params(ck, base + "wm/", params.wm);
    load_params(ck, base + "actor/", params.actor);
    load_params(ck, base + "critic/", params.critic);
    load_params(ck, base + "gate/", params.gate);
    agents.push_back(std::move(a));
  }
  return agents;
}

EvalSummary evaluate(const SystemConfig& cfg_in, const EvalOptions& opt) {
  SystemConfig cfg = cfg_in;
  if (opt.num_fues_override > 0) cfg.num_fues = opt.num_fues_override;
  validate(cfg);
  const int K = cfg.num_fues;

  std::vector<AgentCoreF> agents;
  if (opt.policy == EvalPolicy::kCheckpoint) {
    const Checkpoint ck = Checkpoint::load(opt.checkpoint_path);
    const bool allow = opt.allow_checkpoint_mismatch || opt.num_fues_override > 0;
    agents = load_agents(cfg, ck, allow);
  }

  Environment env(cfg, cfg.seed);
  std::ofstream step_trace, channel_trace;
  if (!opt.step_trace_path.empty()) step_trace.open(opt.step_trace_path, std::ios::trunc);
  if (!opt.channel_trace_path.empty()) {
    channel_trace.open(opt.channel_trace_path, std::ios::trunc);
    env.enable_channel_trace(&channel_trace);
  }
  std::unique_ptr<MetricsWriter> metrics;
  if (!opt.metrics_path.empty()) metrics = std::make_unique<MetricsWriter>(opt.metrics_path, K);

  coord::ExecOptions exec;
  exec.mode = agent::ActionMode::kMean;
  exec.gates_enabled = !cfg.pure_dwm;
  exec.decorrelation_coef = cfg.decorrelation_coef;

  SummaryAccumulator acc;
  for (int e = 0; e < opt.episodes; ++e) {
    const std::uint64_t ep = kEvalEpisodeBase + static_cast<std::uint64_t>(e);
    std::vector<AgentObservation> obs = env.reset(ep);
    std::vector<coord::AgentStreams<TrainScalar>> streams;
    std::vector<RngStream> action_rng;
    for (int k = 0; k < K; ++k) {
      streams.push_back({RngStream(cfg.seed, static_cast<std::uint32_t>(k), Purpose::kEvalNoise, ep * 4 + 0),
                         RngStream(cfg.seed, static_cast<std::uint32_t>(k), Purpose::kEvalNoise, ep * 4 + 1),
                         RngStream(cfg.seed, static_cast<std::uint32_t>(k), Purpose::kEvalNoise, ep * 4 + 2)});
      action_rng.emplace_back(cfg.seed, static_cast<std::uint32_t>(k), Purpose::kEvalNoise, ep * 4 + 3);
    }
    for (auto& a : agents) a.begin_episode();

    std::vector<SlotMetrics> slot_log;
    for (int t = 0; t < cfg.episode_len; ++t) {
      std::vector<RawAction> actions(K);
      std::vector<int> offload(K, 0);
      switch (opt.policy) {
        case EvalPolicy::kCheckpoint: {
          coord::SlotDecision<TrainScalar> dec = coord::execute_slot(agents, obs, exec, streams);
          actions = std::move(dec.actions);
          for (int k = 0; k < K; ++k) {
            if (!dec.gate_records.empty()) offload[k] = dec.gate_records[k].decision;
          }
          break;
        }
        case EvalPolicy::kRandom:
          for (int k = 0; k < K; ++k) actions[k] = random_policy(action_rng[k], cfg.action_dim());
          break;
        case EvalPolicy::kEgt:
          for (int k = 0; k < K; ++k) actions[k] = egt_raw_action(env.network().fbs_to_fue[k].gains, cfg);
          break;
        case EvalPolicy::kZero:
          for (int k = 0; k < K; ++k) actions[k] = RawAction::Zero(cfg.action_dim());
          break;
      }
      StepResult step = env.step(actions);
      SlotMetrics m = make_slot_metrics(step, cfg);
      double offload_sum = 0.0;
      for (int k = 0; k < K; ++k) {
        m.offload[k] = offload[k];
        offload_sum += offload[k];
      }
      m.offload_rate = offload_sum / K;
      acc.add(m);
      if (metrics) metrics->slot_row(ep, t, m);
      if (step_trace.is_open()) write_step_trace(step_trace, ep, t, step);
      slot_log.push_back(std::move(m));
      obs = step.observations;
    }
    if (metrics) metrics->episode_row(ep, slot_log, LossMetrics{});
  }

  EvalSummary summary = acc.finish(static_cast<std::uint64_t>(opt.episodes));
  if (!opt.summary_path.empty()) {
    std::ofstream out(opt.summary_path, std::ios::trunc);
    out << summary.to_json() << '\n';
  }
  return summary;
}

std::vector<SweepRow> sweep_k(const SystemConfig& cfg, const std::vector<int>& k_values, const EvalOptions& base) {
  if (k_values.empty()) throw ConfigError("sweep: the K list must not be empty");
  std::vector<SweepRow> rows;
  auto add = [&rows](int k, const std::string& policy, const EvalSummary& s) {
    rows.push_back({k, policy, "sum_rate", s.sum_rate_mean, s.sum_rate_stderr});
    rows.push_back({k, policy, "violation_rate", s.violation_rate, s.violation_stderr});
    rows.push_back({k, policy, "harvested_mw", s.harvested_mean_mw, s.harvested_stderr});
  };
  for (int k : k_values) {
    EvalOptions opt = base;
    opt.num_fues_override = k;
    opt.metrics_path.clear();
    opt.summary_path.clear();
    opt.step_trace_path.clear();
    opt.channel_trace_path.clear();

    opt.policy = EvalPolicy::kRandom;
    add(k, "random", evaluate(cfg, opt));
    opt.policy = EvalPolicy::kEgt;
    add(k, "egt", evaluate(cfg, opt));
    if (!base.checkpoint_path.empty()) {
      opt.policy = EvalPolicy::kCheckpoint;
      opt.checkpoint_path = base.checkpoint_path;
      add(k, "trained", evaluate(cfg, opt));
    }
  }
  return rows;
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("sweep: cannot open '" + path + "' for writing");
  out << "k,policy,metric,value,std_error\n";
  for (const SweepRow& r : rows) {
    out << r.k << ',' << r.policy << ',' << r.metric << ',' << format_double(r.value) << ','
        << format_double(r.std_error) << '\n';
  }
}

}  // namespace dwm
