#include <doctest.h>

#include "dwm/coord.hpp"
#include "grad_check.hpp"

using namespace dwm;
using agent::ActionMode;
using coord::AgentCore;
using coord::GateInput;
using coord::GatePolicy;
using coord::GateRecord;
using gradcheck::DMat;
using gradcheck::DTensor;
using gradcheck::random_mat;

namespace {

using FMat = ad::Mat<float>;

AgentCore<float> tiny_agent(std::uint64_t seed) {
  wm::WorldModelConfig wcfg;
  wcfg.obs_dim = 18;
  wcfg.action_dim = 13;
  wcfg.det_dim = 16;
  wcfg.stoch_dim = 4;
  wcfg.hidden_dim = 16;
  AgentCore<float> a;
  RngStream r1(seed, 0, Purpose::kParamInit, 1);
  RngStream r2(seed, 0, Purpose::kParamInit, 2);
  RngStream r3(seed, 0, Purpose::kParamInit, 3);
  a.model = wm::WorldModel<float>(wcfg, r1);
  a.ac = agent::ActorCritic<float>(wcfg.det_dim, wcfg.stoch_dim, wcfg.hidden_dim, wcfg.action_dim, r2);
  a.gate = GatePolicy<float>(16, r3);
  a.begin_episode();
  return a;
}

AgentObservation random_obs(RngStream& rng) {
  AgentObservation o;
  o.channel_feat.resize(12);
  for (int i = 0; i < 12; ++i) o.channel_feat(i) = rng.normal();
  o.interference_feat = rng.uniform(-2.0, 1.0);
  o.prev_energy_feat = rng.uniform(-2.0, 1.0);
  o.prev_rate_feat = rng.uniform(0.0, 2.0);
  o.violation_flags = {0, 1, 0};
  return o;
}

void set_gate_logit_bias(AgentCore<float>& a, float bias) {
  nn::ParamList<float> params;
  a.gate.collect("", params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params.names[i] == "actor.l2.bias") params.tensors[i].mutable_value()(0, 0) = bias;
  }
}

}  // namespace

TEST_CASE("gate decision modes and tie breaking") {
  RngStream init(1, 0, Purpose::kParamInit);
  GatePolicy<float> gate(8, init);
  // zero head -> logit 0 -> probability exactly 0.5
  nn::ParamList<float> params;
  gate.collect("", params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params.names[i].rfind("actor.l2.", 0) == 0) params.tensors[i].mutable_value().setZero();
  }
  GateInput u{0.3, 1.0};
  RngStream rng(2, 0, Purpose::kGateNoise);
  const auto eval_dec = gate.decide(u, ActionMode::kMean, rng);
  CHECK(eval_dec.probability == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(eval_dec.decision == 0);  // ties break to local execution

  // sampled decisions follow the Bernoulli head
  int ones = 0;
  for (int i = 0; i < 2000; ++i) ones += gate.decide(u, ActionMode::kSample, rng).decision;
  CHECK(ones > 800);
  CHECK(ones < 1200);
}

TEST_CASE("saturated gate head offloads almost surely") {
  AgentCore<float> a = tiny_agent(3);
  set_gate_logit_bias(a, 20.0f);
  GateInput u{0.0, 0.0};
  RngStream rng(4, 0, Purpose::kGateNoise);
  for (int i = 0; i < 10000; ++i) {
    const auto dec = a.gate.decide(u, ActionMode::kSample, rng);
    CHECK(dec.decision == 1);
    CHECK(dec.probability > 1.0 - 1e-8);
  }
}

TEST_CASE("gate reward applies the communication cost to offloads only") {
  GateRecord rec;
  rec.decision = 0;
  rec.realized_reward = 2.0;
  CHECK(coord::gate_reward(rec, 0.1) == doctest::Approx(2.0).epsilon(1e-15));
  rec.decision = 1;
  rec.realized_reward = 2.5;
  CHECK(coord::gate_reward(rec, 0.1) == doctest::Approx(2.4).epsilon(1e-15));
  rec.realized_reward = std::nan("");
  CHECK_THROWS_AS(coord::gate_reward(rec, 0.1), NumericalError);
}

TEST_CASE("counterfactual estimate is exactly the reward head output") {
  AgentCore<float> a = tiny_agent(5);
  RngStream rng(6, 0, Purpose::kGeneric);
  FMat d = FMat::Zero(16, 1), z = FMat::Zero(4, 1);
  for (int i = 0; i < 16; ++i) d(i, 0) = static_cast<float>(rng.normal());
  for (int i = 0; i < 4; ++i) z(i, 0) = static_cast<float>(rng.normal());
  const double head = static_cast<double>(
      a.model.decode_reward(ad::Tensor<float>::constant(d), ad::Tensor<float>::constant(z)).value()(0, 0));
  CHECK(coord::counterfactual_local(a.model, d, z) == head);
}

TEST_CASE("decorrelation arithmetic") {
  SUBCASE("worked two-agent example") {
    DMat z(2, 2);
    z << 1.0, 3.0, 2.0, 4.0;  // z1 = [1,2], z2 = [3,4]
    const DMat out = coord::decorrelate(z);
    CHECK(out(0, 0) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(out(1, 0) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(out(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(out(1, 1) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK((out.col(0) + out.col(1)).norm() == 0.0);
  }

  SUBCASE("identical latents collapse to zero") {
    DMat z(3, 2);
    z.col(0) << 0.5, -1.0, 2.0;
    z.col(1) = z.col(0);
    const DMat out = coord::decorrelate(z);
    CHECK(out.norm() == 0.0);
  }

  SUBCASE("singleton groups pass through unchanged") {
    DMat z(4, 1);
    z << 1.0, -2.0, 0.5, 3.0;
    CHECK(coord::decorrelate(z) == z);
  }

  SUBCASE("group sums are exactly zero and pairs are exact negations") {
    RngStream rng(7, 0, Purpose::kGeneric);
    for (int trial = 0; trial < 10000; ++trial) {
      const int n = 2 + static_cast<int>(rng.uniform_int(9));
      const DMat z = random_mat(8, n, rng, 10.0);
      const DMat out = coord::decorrelate(z);
      Eigen::VectorXd acc = out.col(0);
      for (int j = 1; j < n; ++j) acc += out.col(j);
      CHECK(acc.cwiseAbs().maxCoeff() == 0.0);
      if (n == 2) CHECK((out.col(0) + out.col(1)).cwiseAbs().maxCoeff() == 0.0);
    }
  }

  SUBCASE("idempotent on already-centered groups") {
    RngStream rng(8, 0, Purpose::kGeneric);
    for (int trial = 0; trial < 200; ++trial) {
      const DMat z = random_mat(6, 4, rng, 3.0);
      const DMat once = coord::decorrelate(z);
      const DMat twice = coord::decorrelate(once);
      CHECK((twice - once).cwiseAbs().maxCoeff() == 0.0);
    }
  }

  SUBCASE("a non-unit coefficient scales the subtracted component") {
    DMat z(1, 2);
    z << 1.0, 3.0;  // mean 2
    const DMat out = coord::decorrelate(z, 0.5);
    CHECK(out(0, 0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(out(0, 1) == doctest::Approx(2.0).epsilon(1e-15));
  }
}

TEST_CASE("gate training calibrates to the engineered benefit") {
  // synthetic bandit: offloading adds `benefit` to the realized reward and
  // costs `c`; the gate should saturate accordingly
  auto train_gate = [](double benefit, double cost, int updates) {
    RngStream init(9, 0, Purpose::kParamInit);
    GatePolicy<float> gate(16, init);
    nn::ParamList<float> params;
    gate.collect("", params);
    nn::Adam<float> opt(3e-4f, 100.0f);
    RngStream rng(10, 0, Purpose::kGateNoise);
    double rate = 0.0;
    for (int it = 0; it < updates; ++it) {
      std::vector<GateRecord> batch;
      int offloads = 0;
      for (int i = 0; i < 64; ++i) {
        GateInput u{rng.uniform(-1.0, 1.0), std::abs(rng.normal())};
        const auto dec = gate.decide(u, ActionMode::kSample, rng);
        GateRecord rec;
        rec.input = u;
        rec.decision = dec.decision;
        rec.log_prob = dec.log_prob;
        rec.value_est = dec.value_est;
        const double base = rng.normal() * 0.1;
        rec.realized_reward = dec.decision == 1 ? base + benefit : base;
        offloads += dec.decision;
        batch.push_back(std::move(rec));
      }
      rate = offloads / 64.0;
      const auto loss = gate.surrogate_loss(batch, cost, 0.2, 0.5);
      params.zero_grads();
      loss.backward();
      opt.step(params);
    }
    return rate;
  };

  SUBCASE("benefit above the cost drives the gate open") {
    CHECK(train_gate(0.5, 0.05, 3000) > 0.95);
  }
  SUBCASE("negative benefit drives the gate shut") {
    CHECK(train_gate(-0.5, 0.05, 3000) < 0.05);
  }
  SUBCASE("an overwhelming cost forces local execution") {
    CHECK(train_gate(0.5, 1000.0, 3000) < 0.02);
  }
}

TEST_CASE("gate surrogate loss passes finite differences") {
  RngStream init(11, 0, Purpose::kParamInit);
  GatePolicy<double> gate(8, init);
  nn::ParamList<double> plist;
  gate.collect("", plist);
  std::vector<DTensor> params = plist.tensors;

  RngStream rng(12, 0, Purpose::kGeneric);
  std::vector<GateRecord> records;
  for (int i = 0; i < 16; ++i) {
    GateRecord rec;
    rec.input = {rng.uniform(-1.0, 1.0), std::abs(rng.normal())};
    rec.decision = rng.uniform() < 0.5 ? 1 : 0;
    rec.log_prob = std::log(rng.uniform(0.2, 0.8));
    rec.value_est = rng.normal();
    rec.realized_reward = rng.normal();
    records.push_back(rec);
  }
  const double err = gradcheck::max_rel_grad_err(
      params, [&] { return gate.surrogate_loss(records, 0.05, 0.2, 0.5); });
  CHECK(err < 1e-4);
}

TEST_CASE("gates-closed execution is bit-identical to the decentralized path") {
  std::vector<AgentCore<float>> agents{tiny_agent(13), tiny_agent(14)};
  std::vector<AgentCore<float>> mirror{tiny_agent(13), tiny_agent(14)};

  RngStream obs_rng(15, 0, Purpose::kGeneric);
  std::vector<std::vector<AgentObservation>> episode;
  for (int t = 0; t < 6; ++t) {
    std::vector<AgentObservation> slot;
    RngStream per_slot(16, static_cast<std::uint32_t>(t), Purpose::kGeneric);
    slot.push_back(random_obs(per_slot));
    slot.push_back(random_obs(per_slot));
    episode.push_back(std::move(slot));
  }

  coord::ExecOptions closed;
  closed.mode = ActionMode::kSample;
  closed.gates_enabled = false;

  std::vector<coord::AgentStreams<float>> s1, s2;
  for (int k = 0; k < 2; ++k) {
    s1.push_back({RngStream(21, k, Purpose::kLatentNoise, 0), RngStream(21, k, Purpose::kPolicyNoise, 0),
                  RngStream(21, k, Purpose::kGateNoise, 0)});
    s2.push_back({RngStream(21, k, Purpose::kLatentNoise, 0), RngStream(21, k, Purpose::kPolicyNoise, 0),
                  RngStream(21, k, Purpose::kGateNoise, 0)});
  }

  for (int t = 0; t < 6; ++t) {
    const auto dec = coord::execute_slot(agents, episode[t], closed, s1);
    CHECK(dec.gate_records.empty());
    // env-only path: belief update and policy, no gate or edge involved
    for (int k = 0; k < 2; ++k) {
      AgentCore<float>& a = mirror[k];
      const FMat obs = episode[t][k].to_vector().cast<float>();
      ad::Tensor<float> d_t;
      if (t == 0) {
        d_t = ad::Tensor<float>::constant(a.belief_d);
      } else {
        d_t = a.model.transition(ad::Tensor<float>::constant(a.belief_d), ad::Tensor<float>::constant(a.belief_z),
                                 ad::Tensor<float>::constant(a.prev_action));
      }
      const auto post = a.model.encode(d_t, ad::Tensor<float>::constant(obs));
      const ad::Tensor<float> z_t = post.rsample(s2[k].latent);
      a.belief_d = d_t.value();
      a.belief_z = z_t.value();
      const FMat action = a.ac.act(a.belief_d, a.belief_z, ActionMode::kSample, s2[k].policy);
      a.prev_action = action;
      const RawAction expect = action.cast<double>();
      REQUIRE(dec.actions[k].size() == expect.size());
      for (Eigen::Index i = 0; i < expect.size(); ++i) CHECK(dec.actions[k](i) == expect(i));
    }
  }
}

TEST_CASE("open gates with identical agents act on identical refined latents") {
  std::vector<AgentCore<float>> agents{tiny_agent(17), tiny_agent(17)};  // same parameters
  set_gate_logit_bias(agents[0], 20.0f);
  set_gate_logit_bias(agents[1], 20.0f);

  RngStream obs_rng(18, 0, Purpose::kGeneric);
  const AgentObservation shared_obs = random_obs(obs_rng);
  std::vector<AgentObservation> obs{shared_obs, shared_obs};

  coord::ExecOptions open;
  open.mode = ActionMode::kMean;  // deterministic
  open.gates_enabled = true;

  std::vector<coord::AgentStreams<float>> streams;
  for (int k = 0; k < 2; ++k) {
    streams.push_back({RngStream(19, k, Purpose::kLatentNoise, 0), RngStream(19, k, Purpose::kPolicyNoise, 0),
                       RngStream(19, k, Purpose::kGateNoise, 0)});
  }
  const auto dec = coord::execute_slot(agents, obs, open, streams);
  REQUIRE(dec.gate_records.size() == 2);
  CHECK(dec.gate_records[0].decision == 1);
  CHECK(dec.gate_records[1].decision == 1);
  CHECK(dec.gate_records[0].counterfactual.has_value());
  // identical beliefs -> refined latents are both exactly zero -> same action
  for (Eigen::Index i = 0; i < dec.actions[0].size(); ++i) CHECK(dec.actions[0](i) == dec.actions[1](i));

  // and a two-agent offload group acts on exact negations
  std::vector<AgentCore<float>> pair{tiny_agent(20), tiny_agent(21)};
  set_gate_logit_bias(pair[0], 20.0f);
  set_gate_logit_bias(pair[1], 20.0f);
  std::vector<AgentObservation> obs2;
  obs2.push_back(random_obs(obs_rng));
  obs2.push_back(random_obs(obs_rng));
  std::vector<coord::AgentStreams<float>> streams2;
  for (int k = 0; k < 2; ++k) {
    streams2.push_back({RngStream(22, k, Purpose::kLatentNoise, 0), RngStream(22, k, Purpose::kPolicyNoise, 0),
                        RngStream(22, k, Purpose::kGateNoise, 0)});
  }
  coord::execute_slot(pair, obs2, open, streams2);
  const FMat group = (FMat(4, 2) << pair[0].belief_z, pair[1].belief_z).finished();
  const FMat refined = coord::decorrelate(group);
  CHECK((refined.col(0) + refined.col(1)).cwiseAbs().maxCoeff() == 0.0f);
}
