#include "dwm/phy.hpp"

#include "dwm/errors.hpp"

namespace dwm {

namespace {

inline double received_power(const Eigen::VectorXcd& channel, const Eigen::VectorXcd& beam) {
  return std::norm(channel.dot(beam));  // |h^H w|^2; Eigen dot conjugates the left argument
}

}  // namespace

double sue_sinr(const NetworkState& net, const JointAction& act, int m, const SystemConfig& cfg) {
  const Eigen::VectorXcd& h = net.sat_to_sue[m].gains;
  const double desired = received_power(h, net.sat_beams[m]);
  double inter_sue = 0.0;
  for (int mp = 0; mp < cfg.num_sues; ++mp) {
    if (mp != m) inter_sue += received_power(h, net.sat_beams[mp]);
  }
  double ter = 0.0;
  for (int k = 0; k < cfg.num_fues; ++k) {
    ter += received_power(net.fbs_to_sue[m][k].gains, act.beamformers[k]);
  }
  return desired / (inter_sue + ter + cfg.sigma_a_mw());
}

double fue_sinr(const NetworkState& net, const JointAction& act, int k, const SystemConfig& cfg) {
  const double alpha = act.ps_ratios(k);
  const Eigen::VectorXcd& h = net.fbs_to_fue[k].gains;
  const double desired = received_power(h, act.beamformers[k]);
  double co = 0.0;
  for (int j = 0; j < cfg.num_fues; ++j) {
    if (j != k) co += received_power(h, act.beamformers[j]);
  }
  double sat = 0.0;
  for (int m = 0; m < cfg.num_sues; ++m) {
    sat += received_power(net.sat_to_fue[k].gains, net.sat_beams[m]);
  }
  return alpha * desired / (alpha * (co + sat) + cfg.sigma_b_mw());
}

double eh_input_power(const NetworkState& net, const JointAction& act, int k) {
  const Eigen::VectorXcd& h = net.fbs_to_fue[k].gains;
  double total = received_power(h, act.beamformers[k]);
  for (std::size_t j = 0; j < act.beamformers.size(); ++j) {
    if (static_cast<int>(j) != k) total += received_power(h, act.beamformers[j]);
  }
  for (const Eigen::VectorXcd& v : net.sat_beams) {
    total += received_power(net.sat_to_fue[k].gains, v);
  }
  return (1.0 - act.ps_ratios(k)) * total;
}

SlotOutcome evaluate_slot(const NetworkState& net, const JointAction& act, const SystemConfig& cfg) {
  const int M = cfg.num_sues, K = cfg.num_fues;
  if (static_cast<int>(act.beamformers.size()) != K || act.ps_ratios.size() != K) {
    throw NumericalError("evaluate_slot: action arity does not match the number of FUEs");
  }
  for (int k = 0; k < K; ++k) {
    if (act.beamformers[k].size() != cfg.fbs_antennas) {
      throw NumericalError("evaluate_slot: beamformer dimension mismatch");
    }
  }

  SlotOutcome out;
  out.sue_rates.resize(M);
  out.sue_sat_interference.resize(M);
  out.sue_ter_interference.resize(M);
  out.ter_attribution.resize(K, M);
  out.fue_rates.resize(K);
  out.fue_co_interference.resize(K);
  out.fue_sat_interference.resize(K);
  out.eh_input_mw.resize(K);
  out.harvested_mw.resize(K);

  for (int m = 0; m < M; ++m) {
    const Eigen::VectorXcd& h = net.sat_to_sue[m].gains;
    const double desired = received_power(h, net.sat_beams[m]);
    double inter_sue = 0.0;
    for (int mp = 0; mp < M; ++mp) {
      if (mp != m) inter_sue += received_power(h, net.sat_beams[mp]);
    }
    double ter = 0.0;
    for (int k = 0; k < K; ++k) {
      const double contrib = received_power(net.fbs_to_sue[m][k].gains, act.beamformers[k]);
      out.ter_attribution(k, m) = contrib;
      ter += contrib;
    }
    out.sue_sat_interference(m) = inter_sue;
    out.sue_ter_interference(m) = ter;
    out.sue_rates(m) = rate_from_sinr(desired / (inter_sue + ter + cfg.sigma_a_mw()));
  }

  for (int k = 0; k < K; ++k) {
    const Eigen::VectorXcd& h = net.fbs_to_fue[k].gains;
    const double alpha = act.ps_ratios(k);
    const double desired = received_power(h, act.beamformers[k]);
    double co = 0.0;
    for (int j = 0; j < K; ++j) {
      if (j != k) co += received_power(h, act.beamformers[j]);
    }
    double sat = 0.0;
    for (int m = 0; m < M; ++m) {
      sat += received_power(net.sat_to_fue[k].gains, net.sat_beams[m]);
    }
    out.fue_co_interference(k) = co;
    out.fue_sat_interference(k) = sat;
    out.fue_rates(k) = rate_from_sinr(alpha * desired / (alpha * (co + sat) + cfg.sigma_b_mw()));
    out.eh_input_mw(k) = (1.0 - alpha) * (desired + co + sat);
    out.harvested_mw(k) = harvested_power(out.eh_input_mw(k), cfg);
  }

  return out;
}

}  // namespace dwm
