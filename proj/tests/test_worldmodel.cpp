#include <doctest.h>

#include "dwm/worldmodel.hpp"
#include "grad_check.hpp"

using namespace dwm;
using gradcheck::DMat;
using gradcheck::DTensor;
using gradcheck::random_mat;
using WmD = wm::WorldModel<double>;

namespace {

wm::WorldModelConfig tiny_config() {
  wm::WorldModelConfig c;
  c.obs_dim = 6;
  c.action_dim = 3;
  c.det_dim = 16;
  c.stoch_dim = 4;
  c.hidden_dim = 16;
  return c;
}

void zero_params(const WmD& model) {
  nn::ParamList<double> p = model.params();
  for (auto& t : p.tensors) t.mutable_value().setZero();
}

double rel_err(double got, double want) {
  return std::abs(got - want) / std::max({std::abs(got), std::abs(want), 1e-300});
}

// Scalar toy dynamics used by the fit oracles: s' = 0.9 s + 0.5 a,
// reward = -s^2, observation = s (plus optional innovation noise).
struct ToyEnv {
  double decay = 0.9;
  double gain = 0.5;
  double noise = 0.0;
  double state = 0.0;

  void reset(double s0) { state = s0; }
  double step(double action, RngStream* rng) {
    state = decay * state + gain * action;
    if (noise > 0.0 && rng) state += noise * rng->normal();
    return -state * state;  // reward
  }
};

wm::SequenceBatch<double> toy_batch(ToyEnv env, int T, int B, double action_value, RngStream* noise_rng,
                                    RngStream& start_rng) {
  wm::SequenceBatch<double> batch;
  batch.observations.assign(T + 1, DMat(1, B));
  batch.actions.assign(T, DMat::Constant(1, B, action_value));
  batch.rewards.assign(T, DMat(1, B));
  for (int b = 0; b < B; ++b) {
    env.reset(start_rng.uniform(-1.0, 1.0));
    batch.observations[0](0, b) = env.state;
    for (int t = 0; t < T; ++t) {
      batch.rewards[t](0, b) = env.step(action_value, noise_rng);
      batch.observations[t + 1](0, b) = env.state;
    }
  }
  return batch;
}

// widens a scalar toy batch to the configured obs/action dims
wm::SequenceBatch<double> widen(const wm::SequenceBatch<double>& batch, const wm::WorldModelConfig& cfg) {
  wm::SequenceBatch<double> wide;
  const auto B = batch.observations.front().cols();
  wide.rewards = batch.rewards;
  for (const DMat& o : batch.observations) {
    DMat w = DMat::Zero(cfg.obs_dim, B);
    w.row(0) = o.row(0);
    wide.observations.push_back(std::move(w));
  }
  for (const DMat& a : batch.actions) {
    DMat w = DMat::Zero(cfg.action_dim, B);
    w.row(0) = a.row(0);
    wide.actions.push_back(std::move(w));
  }
  return wide;
}

}  // namespace

TEST_CASE("component shapes follow the configured dimensions") {
  wm::WorldModelConfig cfg;  // default dims: 256 deterministic, 32 stochastic
  RngStream rng(1, 0, Purpose::kParamInit);
  WmD model(cfg, rng);
  const DTensor d = DTensor::constant(DMat::Zero(256, 1));
  const DTensor z = DTensor::constant(DMat::Zero(32, 1));
  const DTensor a = DTensor::constant(DMat::Zero(13, 1));
  const DTensor obs = DTensor::constant(DMat::Zero(18, 1));

  const DTensor d_next = model.transition(d, z, a);
  CHECK(d_next.rows() == 256);
  CHECK(d_next.cols() == 1);

  const auto post = model.encode(d, obs);
  CHECK(post.mean.rows() == 32);
  CHECK(post.log_std.rows() == 32);
  const auto prior = model.predict_prior(d);
  CHECK(prior.mean.rows() == 32);
  CHECK(prior.log_std.rows() == 32);

  CHECK(model.decode_obs(d, z).rows() == 18);
  CHECK(model.decode_reward(d, z).rows() == 1);
}

TEST_CASE("zero-parameter transition halves the deterministic state") {
  const wm::WorldModelConfig cfg = tiny_config();
  RngStream rng(2, 0, Purpose::kParamInit);
  WmD model(cfg, rng);
  zero_params(model);
  RngStream data_rng(3, 0, Purpose::kGeneric);
  const DMat d0 = random_mat(cfg.det_dim, 2, data_rng);
  const DTensor d_next = model.transition(DTensor::constant(d0), DTensor::constant(DMat::Zero(cfg.stoch_dim, 2)),
                                          DTensor::constant(DMat::Zero(cfg.action_dim, 2)));
  CHECK((d_next.value() - 0.5 * d0).norm() < 1e-14);
}

TEST_CASE("transition backpropagates into all three inputs") {
  const wm::WorldModelConfig cfg = tiny_config();
  RngStream rng(4, 0, Purpose::kParamInit);
  WmD model(cfg, rng);
  RngStream data_rng(5, 0, Purpose::kGeneric);
  DTensor d = DTensor::param(random_mat(cfg.det_dim, 1, data_rng));
  DTensor z = DTensor::param(random_mat(cfg.stoch_dim, 1, data_rng));
  DTensor a = DTensor::param(random_mat(cfg.action_dim, 1, data_rng));
  std::vector<DTensor> params{d, z, a};
  const double err =
      gradcheck::max_rel_grad_err(params, [&] { return ad::mean(ad::square(model.transition(d, z, a))); });
  CHECK(err < 1e-4);
  for (auto& p : params) p.zero_grad();
  ad::mean(ad::square(model.transition(d, z, a))).backward();
  CHECK(d.grad().norm() > 0.0);
  CHECK(z.grad().norm() > 0.0);
  CHECK(a.grad().norm() > 0.0);
}

TEST_CASE("posterior is deterministic in its inputs and the prior ignores observations") {
  const wm::WorldModelConfig cfg = tiny_config();
  RngStream rng(6, 0, Purpose::kParamInit);
  WmD model(cfg, rng);
  RngStream data_rng(7, 0, Purpose::kGeneric);
  const DMat d = random_mat(cfg.det_dim, 1, data_rng);
  const DMat obs = random_mat(cfg.obs_dim, 1, data_rng);

  const auto p1 = model.encode(DTensor::constant(d), DTensor::constant(obs));
  const auto p2 = model.encode(DTensor::constant(d), DTensor::constant(obs));
  CHECK(p1.mean.value() == p2.mean.value());
  CHECK(p1.log_std.value() == p2.log_std.value());

  const auto prior1 = model.predict_prior(DTensor::constant(d));
  DMat obs2 = obs;
  obs2.array() += 3.0;
  const auto post2 = model.encode(DTensor::constant(d), DTensor::constant(obs2));
  const auto prior2 = model.predict_prior(DTensor::constant(d));
  CHECK(prior1.mean.value() == prior2.mean.value());
  CHECK((p1.mean.value() - post2.mean.value()).norm() > 0.0);
}

TEST_CASE("reconstruction error definition") {
  const wm::WorldModelConfig cfg = tiny_config();
  RngStream rng(8, 0, Purpose::kParamInit);
  WmD model(cfg, rng);
  zero_params(model);
  const DMat d = DMat::Zero(cfg.det_dim, 1);
  const DMat z = DMat::Zero(cfg.stoch_dim, 1);

  CHECK(model.reconstruction_error(DMat::Zero(cfg.obs_dim, 1), d, z) == 0.0);
  DMat obs = DMat::Zero(cfg.obs_dim, 1);
  obs(2, 0) = 1.0;
  CHECK(model.reconstruction_error(obs, d, z) == doctest::Approx(1.0).epsilon(1e-12));

  RngStream data_rng(9, 0, Purpose::kGeneric);
  RngStream init2(10, 0, Purpose::kParamInit);
  WmD model2(cfg, init2);
  const DMat dr = random_mat(cfg.det_dim, 1, data_rng);
  const DMat zr = random_mat(cfg.stoch_dim, 1, data_rng);
  const DMat obsr = random_mat(cfg.obs_dim, 1, data_rng);
  const DMat decoded = model2.decode_obs(DTensor::constant(dr), DTensor::constant(zr)).value();
  CHECK(rel_err(model2.reconstruction_error(obsr, dr, zr), (decoded - obsr).squaredNorm()) < 1e-12);
}

TEST_CASE("free-bits floor and the loss breakdown identity") {
  const wm::WorldModelConfig cfg = tiny_config();
  RngStream rng(11, 0, Purpose::kParamInit);
  WmD model(cfg, rng);
  // zero encoder and prior -> q = p = N(0, 1) everywhere -> KL = 0 -> floor
  nn::ParamList<double> params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params.names[i].rfind("encoder.", 0) == 0 || params.names[i].rfind("prior.", 0) == 0) {
      params.tensors[i].mutable_value().setZero();
    }
  }
  RngStream start(12, 0, Purpose::kGeneric), noise(13, 0, Purpose::kTrainNoise);
  ToyEnv env;
  const auto wide = widen(toy_batch(env, 5, 3, 0.3, nullptr, start), cfg);
  const auto out = model.loss(wide, noise);
  CHECK(out.breakdown.dyn == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(out.breakdown.rep == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(out.breakdown.total ==
        doctest::Approx(out.breakdown.pred + 1.0 * out.breakdown.dyn + 0.1 * out.breakdown.rep).epsilon(1e-9));
  CHECK(out.post_d.cols() == 3 * 6);
  CHECK(out.post_z.cols() == 3 * 6);

  // push the posterior away from the prior: the KL passes through unclipped
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params.names[i] == "encoder.l2.bias") {
      params.tensors[i].mutable_value().topRows(cfg.stoch_dim).setConstant(3.0);
    }
  }
  RngStream noise2(13, 0, Purpose::kTrainNoise);
  const auto out2 = model.loss(wide, noise2);
  // KL(N(3,1) || N(0,1)) = 4.5 per dimension
  CHECK(out2.breakdown.dyn == doctest::Approx(4.5 * cfg.stoch_dim).epsilon(1e-6));
  CHECK(out2.breakdown.dyn > 1.0);
}

TEST_CASE("stop-gradient asymmetry of the two KL terms") {
  const wm::WorldModelConfig cfg = tiny_config();
  RngStream rng(14, 0, Purpose::kParamInit);
  WmD model(cfg, rng);
  nn::ParamList<double> params = model.params();
  RngStream data_rng(15, 0, Purpose::kGeneric);
  const DTensor d = DTensor::constant(random_mat(cfg.det_dim, 2, data_rng));
  const DTensor obs = DTensor::constant(random_mat(cfg.obs_dim, 2, data_rng));

  auto grads_by_prefix = [&params](const std::string& prefix) {
    double norm = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params.names[i].rfind(prefix, 0) == 0) norm += params.tensors[i].grad().squaredNorm();
    }
    return norm;
  };

  SUBCASE("dynamics term ignores the posterior parameters") {
    params.zero_grads();
    const auto post = model.encode(d, obs);
    const auto prior = model.predict_prior(d);
    ad::mean(nn::kl_diag_gauss(post.detach(), prior)).backward();
    CHECK(grads_by_prefix("encoder.") == 0.0);
    CHECK(grads_by_prefix("prior.") > 0.0);
  }

  SUBCASE("representation term ignores the prior parameters") {
    params.zero_grads();
    const auto post = model.encode(d, obs);
    const auto prior = model.predict_prior(d);
    ad::mean(nn::kl_diag_gauss(post, prior.detach())).backward();
    CHECK(grads_by_prefix("prior.") == 0.0);
    CHECK(grads_by_prefix("encoder.") > 0.0);
  }
}

TEST_CASE("sequence loss gradient audit on a tiny model") {
  wm::WorldModelConfig cfg;
  cfg.det_dim = 8;
  cfg.hidden_dim = 8;
  cfg.stoch_dim = 3;
  cfg.obs_dim = 4;
  cfg.action_dim = 2;
  RngStream rng(16, 0, Purpose::kParamInit);
  WmD model(cfg, rng);
  nn::ParamList<double> plist = model.params();
  std::vector<DTensor> params = plist.tensors;

  RngStream data_rng(17, 0, Purpose::kGeneric);
  wm::SequenceBatch<double> batch;
  const int T = 3, B = 2;
  for (int t = 0; t <= T; ++t) batch.observations.push_back(random_mat(cfg.obs_dim, B, data_rng));
  for (int t = 0; t < T; ++t) {
    batch.actions.push_back(random_mat(cfg.action_dim, B, data_rng));
    batch.rewards.push_back(random_mat(1, B, data_rng));
  }
  // the reparameterisation noise must be identical on every replay
  auto loss = [&] {
    RngStream noise(18, 0, Purpose::kTrainNoise);
    return model.loss(batch, noise).total_loss;
  };
  CHECK(gradcheck::max_rel_grad_err(params, loss) < 1e-4);
}

TEST_CASE("overfits a memorized five-step sequence") {
  wm::WorldModelConfig cfg;
  cfg.obs_dim = 1;
  cfg.action_dim = 1;
  cfg.det_dim = 24;
  cfg.stoch_dim = 4;
  cfg.hidden_dim = 24;
  cfg.free_bits = 0.0;  // keep the KL gradient alive so the prior locks on
  RngStream rng(19, 0, Purpose::kParamInit);
  WmD model(cfg, rng);
  nn::ParamList<double> params = model.params();
  nn::Adam<double> opt(1e-3, 100.0);

  RngStream start(20, 0, Purpose::kGeneric);
  ToyEnv env;
  const auto batch = toy_batch(env, 5, 1, 0.4, nullptr, start);

  for (int it = 0; it < 2000; ++it) {
    RngStream noise(21, 0, Purpose::kTrainNoise, static_cast<std::uint64_t>(it));
    const auto out = model.loss(batch, noise);
    params.zero_grads();
    out.total_loss.backward();
    opt.step(params);
  }

  RngStream noise(22, 0, Purpose::kTrainNoise);
  const auto out = model.loss(batch, noise);
  double worst = 0.0;
  for (int t = 0; t <= 5; ++t) {
    const DMat d = out.post_d.col(t);
    const DMat z = out.post_z.col(t);
    worst = std::max(worst, model.reconstruction_error(batch.observations[t], d, z));
  }
  CHECK(worst < 1e-2);

  // on the fitted deterministic sequence the prior tracks the posterior
  double max_gap = 0.0;
  DTensor d = DTensor::constant(DMat::Zero(cfg.det_dim, 1));
  DTensor z = model.encode(d, DTensor::constant(batch.observations[0])).mean;
  for (int t = 1; t <= 5; ++t) {
    d = model.transition(d, z, DTensor::constant(batch.actions[t - 1]));
    const auto prior = model.predict_prior(d);
    const auto post = model.encode(d, DTensor::constant(batch.observations[t]));
    max_gap = std::max(max_gap, (prior.mean.value() - post.mean.value()).lpNorm<Eigen::Infinity>());
    z = post.mean;
  }
  CHECK(max_gap < 0.1);
}

TEST_CASE("prior learns one-step prediction on an observable toy chain") {
  wm::WorldModelConfig cfg;
  cfg.obs_dim = 1;
  cfg.action_dim = 1;
  cfg.det_dim = 24;
  cfg.stoch_dim = 4;
  cfg.hidden_dim = 24;
  RngStream rng(23, 0, Purpose::kParamInit);
  WmD model(cfg, rng);
  nn::ParamList<double> params = model.params();
  nn::Adam<double> opt(1e-3, 100.0);

  ToyEnv env;
  env.noise = 0.05;
  const int T = 8, B = 8;
  double obs_sq = 0.0;
  long obs_n = 0;
  for (int it = 0; it < 5000; ++it) {
    RngStream start(24, 0, Purpose::kGeneric, static_cast<std::uint64_t>(it));
    RngStream innov(25, 0, Purpose::kGeneric, static_cast<std::uint64_t>(it));
    const auto batch = toy_batch(env, T, B, 0.4, &innov, start);
    if (it < 100) {
      for (const DMat& o : batch.observations) {
        obs_sq += o.array().square().sum();
        obs_n += o.size();
      }
    }
    RngStream noise(26, 0, Purpose::kTrainNoise, static_cast<std::uint64_t>(it));
    const auto out = model.loss(batch, noise);
    params.zero_grads();
    out.total_loss.backward();
    opt.step(params);
  }
  const double obs_std = std::sqrt(obs_sq / obs_n);

  // posterior belief at t, then prior one-step prediction of o_{t+1}
  RngStream start(27, 0, Purpose::kGeneric, 777);
  RngStream innov(28, 0, Purpose::kGeneric, 777);
  const auto test_batch = toy_batch(env, T, 16, 0.4, &innov, start);
  DTensor d = DTensor::constant(DMat::Zero(cfg.det_dim, 16));
  DTensor z = model.encode(d, DTensor::constant(test_batch.observations[0])).mean;
  double err = 0.0, kl_sum = 0.0;
  long n = 0;
  for (int t = 1; t <= T; ++t) {
    d = model.transition(d, z, DTensor::constant(test_batch.actions[t - 1]));
    const auto prior = model.predict_prior(d);
    const DMat predicted = model.decode_obs(d, prior.mean).value();
    err += (predicted - test_batch.observations[t]).array().abs().sum();
    n += predicted.size();
    const auto post = model.encode(d, DTensor::constant(test_batch.observations[t]));
    kl_sum += nn::kl_diag_gauss(post, prior).value().mean();
    z = post.mean;
  }
  CHECK(err / n < 0.2 * obs_std);
  CHECK(kl_sum > 0.0);  // the posterior keeps using the observation
}

TEST_CASE("loss terms stay finite under random parameters") {
  // the clamped Gaussian machinery at high volume, the full sequence loss at
  // a smaller one
  RngStream rng(29, 0, Purpose::kGeneric);
  for (int i = 0; i < 100000; ++i) {
    nn::DiagonalGaussian<double> q = nn::DiagonalGaussian<double>::from_raw(
        DTensor::constant(DMat::Constant(1, 1, rng.uniform(-20.0, 20.0))),
        DTensor::constant(DMat::Constant(1, 1, rng.uniform(-50.0, 50.0))));
    nn::DiagonalGaussian<double> p = nn::DiagonalGaussian<double>::from_raw(
        DTensor::constant(DMat::Constant(1, 1, rng.uniform(-20.0, 20.0))),
        DTensor::constant(DMat::Constant(1, 1, rng.uniform(-50.0, 50.0))));
    const double kl = nn::kl_diag_gauss(q, p).value()(0, 0);
    CHECK(std::isfinite(kl));
    CHECK(kl >= 0.0);
  }

  const wm::WorldModelConfig cfg = tiny_config();
  RngStream start(30, 0, Purpose::kGeneric);
  ToyEnv env;
  for (int trial = 0; trial < 25; ++trial) {
    RngStream init(31, 0, Purpose::kParamInit, static_cast<std::uint64_t>(trial));
    WmD model(cfg, init);
    nn::ParamList<double> params = model.params();
    for (auto& t : params.tensors) t.mutable_value() *= rng.uniform(0.0, 8.0);
    const auto wide = widen(toy_batch(env, 4, 2, 0.1, nullptr, start), cfg);
    RngStream noise(32, 0, Purpose::kTrainNoise, static_cast<std::uint64_t>(trial));
    const auto out = model.loss(wide, noise);
    CHECK(std::isfinite(out.breakdown.total));
    CHECK(out.breakdown.dyn >= 1.0);
    CHECK(out.breakdown.rep >= 1.0);
  }
}
