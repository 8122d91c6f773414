#include "dwm/channel.hpp"

#include <cmath>

#include "dwm/errors.hpp"
#include "dwm/units.hpp"

namespace dwm {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;

int link_count(const SystemConfig& c) { return c.num_sues + c.num_fues + c.num_fues + c.num_sues * c.num_fues; }
}  // namespace

double path_loss_satellite(double distance_m, double gain_tx, double gain_rx, double carrier_hz) {
  if (distance_m <= 0.0 || gain_tx <= 0.0 || gain_rx <= 0.0 || carrier_hz <= 0.0) {
    throw NumericalError("path_loss_satellite: arguments must be > 0");
  }
  const double bracket = kSpeedOfLight / (2.0 * kTwoPi * carrier_hz * distance_m);  // c / (4 pi f d)
  return gain_tx * gain_rx * bracket * bracket;
}

double path_loss_terrestrial(double distance_m, double offset_db, double exponent_db) {
  if (distance_m <= 0.0) throw NumericalError("path_loss_terrestrial: distance must be > 0");
  const double loss_db = -(offset_db + exponent_db * std::log10(distance_m));
  return std::pow(10.0, loss_db / 10.0);
}

Geometry sample_geometry(const SystemConfig& cfg, RngStream& rng) {
  Geometry g;
  g.sat_distance_m = cfg.sat_distance_m;
  g.fue_distance_m.resize(cfg.num_fues);
  g.sue_distance_m.resize(cfg.num_sues);
  const double r0 = cfg.fue_radius_min_m, r1 = cfg.fue_radius_max_m;
  for (int k = 0; k < cfg.num_fues; ++k) {
    // uniform over the annulus area
    g.fue_distance_m[k] = std::sqrt(rng.uniform() * (r1 * r1 - r0 * r0) + r0 * r0);
  }
  for (int m = 0; m < cfg.num_sues; ++m) {
    g.sue_distance_m[m] = cfg.sue_radius_m * std::sqrt(rng.uniform());
  }
  return g;
}

FadingState init_fading(LinkKind kind, int dim, double rician_k, double rho, RngStream& init_rng,
                        const Eigen::VectorXd* los_phases) {
  FadingState s;
  s.rho = rho;
  s.slot_index = 0;
  s.g.resize(dim);
  if (is_satellite_link(kind)) {
    const double los_w = std::sqrt(rician_k / (rician_k + 1.0));
    const double nlos_w = std::sqrt(1.0 / (rician_k + 1.0));
    for (int i = 0; i < dim; ++i) {
      const double phase = los_phases ? (*los_phases)(i) : 0.0;
      const std::complex<double> los(std::cos(phase), std::sin(phase));
      s.g(i) = los_w * los + nlos_w * init_rng.cnormal();
    }
  } else {
    for (int i = 0; i < dim; ++i) s.g(i) = init_rng.cnormal();
  }
  return s;
}

FadingState step_fading(const FadingState& state, RngStream& rng) {
  FadingState next;
  next.rho = state.rho;
  next.slot_index = state.slot_index + 1;
  const double innov_w = std::sqrt(1.0 - state.rho * state.rho);
  next.g.resize(state.g.size());
  for (Eigen::Index i = 0; i < state.g.size(); ++i) {
    next.g(i) = state.rho * state.g(i) + innov_w * rng.cnormal();
  }
  return next;
}

NetworkState assemble_network_state(const SystemConfig& cfg, const std::vector<FadingState>& fading,
                                    const std::vector<double>& beta,
                                    const std::vector<Eigen::VectorXcd>* sat_beams) {
  const int M = cfg.num_sues, K = cfg.num_fues;
  if (static_cast<int>(fading.size()) != link_count(cfg) || fading.size() != beta.size()) {
    throw NumericalError("assemble_network_state: expected one fading state and path loss per link");
  }
  auto make = [&](int link, LinkKind kind, int dim) {
    if (fading[link].g.size() != dim) throw NumericalError("assemble_network_state: fading dimension mismatch");
    ChannelVector cv;
    cv.kind = kind;
    cv.path_loss = beta[link];
    cv.gains = std::sqrt(beta[link]) * fading[link].g;
    if (!cv.gains.allFinite()) throw NumericalError("assemble_network_state: non-finite channel gains");
    return cv;
  };

  NetworkState net;
  int link = 0;
  net.sat_to_sue.reserve(M);
  for (int m = 0; m < M; ++m) net.sat_to_sue.push_back(make(link++, LinkKind::kSatToSue, cfg.sat_antennas));
  net.sat_to_fue.reserve(K);
  for (int k = 0; k < K; ++k) net.sat_to_fue.push_back(make(link++, LinkKind::kSatToFue, cfg.sat_antennas));
  net.fbs_to_fue.reserve(K);
  for (int k = 0; k < K; ++k) net.fbs_to_fue.push_back(make(link++, LinkKind::kFbsToFue, cfg.fbs_antennas));
  net.fbs_to_sue.resize(M);
  for (int m = 0; m < M; ++m) {
    net.fbs_to_sue[m].reserve(K);
    for (int k = 0; k < K; ++k) net.fbs_to_sue[m].push_back(make(link++, LinkKind::kFbsToSue, cfg.fbs_antennas));
  }

  if (sat_beams) {
    if (static_cast<int>(sat_beams->size()) != M) throw NumericalError("assemble_network_state: beam count mismatch");
    net.sat_beams = *sat_beams;
  } else {
    // Maximum-ratio transmission toward the slot-0 SUE channels with an equal
    // split of the satellite budget.
    const double per_beam = cfg.p_sat_mw() / M;
    net.sat_beams.resize(M);
    for (int m = 0; m < M; ++m) {
      const Eigen::VectorXcd& h = net.sat_to_sue[m].gains;
      const double norm = h.norm();
      net.sat_beams[m] = norm > 0.0 ? Eigen::VectorXcd(std::sqrt(per_beam) * h / norm)
                                    : Eigen::VectorXcd::Zero(cfg.sat_antennas);
    }
  }
  return net;
}

ChannelModel::ChannelModel(const SystemConfig& cfg, std::uint64_t seed, std::uint64_t episode)
    : cfg_(&cfg), seed_(seed), episode_(episode) {
  const int M = cfg.num_sues, K = cfg.num_fues;
  RngStream geo_rng(seed, /*agent=*/0, Purpose::kGeometry, episode);
  geom_ = sample_geometry(cfg, geo_rng);

  const double rho = cfg.jakes_rho();
  const int links = link_count(cfg);
  fading_.reserve(links);
  beta_.reserve(links);
  kind_.reserve(links);
  step_rng_.reserve(links);

  auto add_link = [&](LinkKind kind, int dim, double beta) {
    const int link = static_cast<int>(fading_.size());
    const std::uint64_t ctx = (episode << 12) ^ static_cast<std::uint64_t>(link);
    RngStream init_rng(seed, static_cast<std::uint32_t>(link), Purpose::kFadingInit, ctx);
    if (is_satellite_link(kind)) {
      Eigen::VectorXd phases(dim);
      for (int i = 0; i < dim; ++i) phases(i) = geo_rng.uniform(0.0, kTwoPi);
      fading_.push_back(init_fading(kind, dim, cfg.rician_k, rho, init_rng, &phases));
    } else {
      fading_.push_back(init_fading(kind, dim, cfg.rician_k, rho, init_rng));
    }
    beta_.push_back(beta);
    kind_.push_back(kind);
    step_rng_.emplace_back(seed, static_cast<std::uint32_t>(link), Purpose::kFadingStep, ctx);
  };

  for (int m = 0; m < M; ++m) {
    add_link(LinkKind::kSatToSue, cfg.sat_antennas,
             path_loss_satellite(geom_.sat_distance_m, cfg.gain_sat, cfg.gain_sue, cfg.carrier_hz));
  }
  for (int k = 0; k < K; ++k) {
    add_link(LinkKind::kSatToFue, cfg.sat_antennas,
             path_loss_satellite(geom_.sat_distance_m, cfg.gain_sat, cfg.gain_fue, cfg.carrier_hz));
  }
  for (int k = 0; k < K; ++k) {
    add_link(LinkKind::kFbsToFue, cfg.fbs_antennas,
             path_loss_terrestrial(geom_.fue_distance_m[k], cfg.terr_pl_offset_db, cfg.terr_pl_exponent_db));
  }
  for (int m = 0; m < M; ++m) {
    const double beta = path_loss_terrestrial(geom_.sue_distance_m[m], cfg.terr_pl_offset_db, cfg.terr_pl_exponent_db);
    for (int k = 0; k < K; ++k) add_link(LinkKind::kFbsToSue, cfg.fbs_antennas, beta);
  }

  assemble();
}

void ChannelModel::advance() {
  for (std::size_t i = 0; i < fading_.size(); ++i) fading_[i] = step_fading(fading_[i], step_rng_[i]);
  const std::vector<Eigen::VectorXcd> beams = state_.sat_beams;  // fixed per episode
  assemble();
  state_.sat_beams = beams;
  state_.slot = fading_.front().slot_index;
}

void ChannelModel::assemble() {
  state_ = assemble_network_state(*cfg_, fading_, beta_);
  state_.slot = fading_.front().slot_index;
}

}  // namespace dwm
