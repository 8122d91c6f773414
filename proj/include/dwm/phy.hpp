#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "dwm/channel.hpp"
#include "dwm/config.hpp"

namespace dwm {

// One joint FBS decision: a beamformer per FUE (units sqrt(mW)) and a power
// splitting ratio per FUE.
struct JointAction {
  std::vector<Eigen::VectorXcd> beamformers;  // K x N_F
  Eigen::VectorXd ps_ratios;                  // K, each in [0, 1]
};

struct SlotOutcome {
  Eigen::VectorXd sue_rates;             // M, bps/Hz
  Eigen::VectorXd fue_rates;             // K, bps/Hz
  Eigen::VectorXd fue_co_interference;   // K, I_k^co (mW)
  Eigen::VectorXd fue_sat_interference;  // K, I_k^sat (mW)
  Eigen::VectorXd sue_sat_interference;  // M, I_m^sat (mW)
  Eigen::VectorXd sue_ter_interference;  // M, I_m^ter (mW)
  Eigen::MatrixXd ter_attribution;       // K x M, I_{k,m} (mW); column sums equal I_m^ter
  Eigen::VectorXd eh_input_mw;           // K, P_k^EH
  Eigen::VectorXd harvested_mw;          // K, E_k (clamped to [0, E_max])
};

inline double rate_from_sinr(double sinr) { return std::log2(1.0 + sinr); }

double sue_sinr(const NetworkState& net, const JointAction& act, int m, const SystemConfig& cfg);
double fue_sinr(const NetworkState& net, const JointAction& act, int k, const SystemConfig& cfg);
double eh_input_power(const NetworkState& net, const JointAction& act, int k);

// Logistic harvester curve. Zero input harvests zero, the curve saturates at
// e_max, and the output is clamped to [0, e_max] against rounding.
template <typename T>
T harvested_power(T p_eh_mw, T e_max_mw, T mu, T nu_mw) {
  const T omega = T(1) / (T(1) + std::exp(mu * nu_mw));
  const T logistic = e_max_mw / (T(1) + std::exp(-mu * (p_eh_mw - nu_mw)));
  const T e = (logistic - e_max_mw * omega) / (T(1) - omega);
  return std::clamp(e, T(0), e_max_mw);
}

inline double harvested_power(double p_eh_mw, const SystemConfig& cfg) {
  return harvested_power(p_eh_mw, cfg.e_max_mw, cfg.eh_mu, cfg.eh_nu_mw);
}

SlotOutcome evaluate_slot(const NetworkState& net, const JointAction& act, const SystemConfig& cfg);

}  // namespace dwm
