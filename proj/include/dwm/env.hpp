#pragma once

#include <array>
#include <memory>
#include <ostream>
#include <vector>

#include <Eigen/Dense>

#include "dwm/channel.hpp"
#include "dwm/phy.hpp"

namespace dwm {

// Fixed log/affine feature compression. Constants are frozen (not running
// statistics) so world-model reconstruction targets stay stationary.
inline double interference_feature(double i_mw) { return (std::log10(std::max(i_mw, 1e-12)) + 6.0) / 3.0; }
inline double energy_feature(double e_mw) { return (std::log10(std::max(e_mw, 1e-9)) + 3.0) / 3.0; }
inline double rate_feature(double rate) { return rate / 4.0; }
inline double recon_error_feature(double err) { return (std::log10(std::max(err, 1e-9)) + 2.0) / 2.0; }

// Locally measurable quantities for one FUE agent. Slot-1 observations use
// zero previous energy/rate/interference and zero flags.
struct AgentObservation {
  Eigen::VectorXd channel_feat;        // 2*N_F: Re/Im of the small-scale FBS->FUE fading
  double interference_feat = 0.0;      // compressed I_k^total from the previous slot
  double prev_energy_feat = 0.0;       // compressed E_k(t-1)
  double prev_rate_feat = 0.0;         // compressed R_k(t-1)
  std::array<int, 3> violation_flags{0, 0, 0};

  static int dim(int fbs_antennas) { return 2 * fbs_antennas + 6; }
  Eigen::VectorXd to_vector() const;
};

using RawAction = Eigen::VectorXd;  // 2*N_F + 1 unconstrained reals

// Maps a raw actor output to physical controls: the first 2*N_F entries form
// a complex beamformer scaled onto the power sphere ||w||^2 = P_max, the last
// entry passes through a sigmoid to give alpha. An all-zero beam part is the
// documented degenerate case and yields w = 0 (the agent transmits nothing).
std::pair<Eigen::VectorXcd, double> postprocess_action(const RawAction& raw, const SystemConfig& cfg);

double compute_reward(const SlotOutcome& outcome, int k, const SystemConfig& cfg);

// {R_k < xi_FUE, E_k < Phi_FUE, exists m: R_m < xi_SUE and I_{k,m} > 0}.
// Boundary convention: meeting a threshold exactly is satisfaction.
std::array<int, 3> violation_flags(const SlotOutcome& outcome, int k, const SystemConfig& cfg);

struct StepResult {
  std::vector<double> rewards;                    // K
  std::vector<AgentObservation> observations;     // K, for the next slot
  std::vector<std::array<int, 3>> flags;          // K
  SlotOutcome outcome;
  JointAction applied;
  bool done = false;
};

// Episodic multi-agent environment. All agent actions are collected, the
// world advances once per slot. Fading re-initialises per episode; user
// positions are fixed within an episode.
class Environment {
 public:
  Environment(const SystemConfig& cfg, std::uint64_t seed);

  std::vector<AgentObservation> reset(std::uint64_t episode);
  StepResult step(const std::vector<RawAction>& raw_actions);

  const SystemConfig& config() const { return cfg_; }
  const NetworkState& network() const { return channels_->state(); }
  int slot() const { return slot_; }
  std::uint64_t episode() const { return episode_; }

  // Line-delimited JSON trace of (slot, link, gains) records.
  void enable_channel_trace(std::ostream* sink) { channel_trace_ = sink; }

 private:
  std::vector<AgentObservation> make_observations(const SlotOutcome* prev) const;
  void dump_channel_trace() const;

  SystemConfig cfg_;
  std::uint64_t seed_ = 0;
  std::uint64_t episode_ = 0;
  int slot_ = 0;
  std::unique_ptr<ChannelModel> channels_;
  std::ostream* channel_trace_ = nullptr;
};

// One line per (slot, agent): action, outcome fields, reward, flags.
void write_step_trace(std::ostream& out, std::uint64_t episode, int slot, const StepResult& step);

}  // namespace dwm
