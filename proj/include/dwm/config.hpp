#pragma once

#include <cstdint>
#include <string>

#include "dwm/units.hpp"

namespace dwm {

// Validated, immutable-after-load configuration. Every module consumes this
// object; it is safe to share across concurrent agents.
//
// Table-defaults note: carrier frequency, satellite distance, antenna gains
// and user placement ranges are not pinned by the scenario tables; the
// defaults below were calibrated so that (a) the satellite QoS target is
// reachable under moderate terrestrial interference and (b) the harvesting
// target is reachable inside the femtocell radius. All of them are plain
// config keys and can be overridden per experiment.
struct SystemConfig {
  // network
  int num_sues = 3;       // M
  int num_fues = 2;       // K
  int fbs_antennas = 6;   // N_F
  int sat_antennas = 8;   // N_M

  // channel
  double doppler_hz = 10.0;           // f_d
  double slot_s = 0.001;              // T_s
  double rician_k = 4.0;              // satellite links
  double carrier_hz = 2.0e9;          // f_c
  double sat_distance_m = 600.0e3;    // LEO, fixed per episode
  double gain_sat = 1.0e5;            // G_s (linear)
  double gain_sue = 1.0;              // G_m
  double gain_fue = 10.0;             // G_k
  double fue_radius_min_m = 2.0;      // FUE annulus around the FBS
  double fue_radius_max_m = 6.0;
  double sue_radius_m = 500.0;        // SUE disc around the FBS
  double terr_pl_offset_db = 38.46;   // log-distance model: -(offset + exp*log10 d)
  double terr_pl_exponent_db = 20.0;

  // power / noise (dBm at the boundary only)
  double p_max_dbm = 20.0;     // FBS per-beam budget
  double p_sat_dbm = 43.0;     // satellite total
  double sigma_a_dbm = -70.0;  // SUE noise power
  double sigma_b_dbm = -75.0;  // FUE processing noise power

  // QoS / EH constraints
  double xi_sue = 0.5;      // bps/Hz
  double xi_fue = 0.3;      // bps/Hz
  double phi_fue_mw = 0.1;  // minimum harvested power
  double e_max_mw = 24.0;   // harvester saturation
  double eh_mu = 150.0;     // 1/mW
  double eh_nu_mw = 0.024;  // turn-on threshold

  // reward shaping
  double omega = 1.0;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double lambda3 = 1.0;

  // baselines
  double egt_alpha = 0.5;  // power split used by the equal-gain heuristic

  // coordination (gate + edge refinement)
  bool pure_dwm = false;            // gates forced closed when true
  double decorrelation_coef = 1.0;  // scale on the subtracted mutual component
  double gate_cost = 0.05;          // c
  int gate_hidden_dim = 64;
  double gate_lr = 3.0e-4;
  double gate_clip = 0.2;
  double gate_value_coef = 0.5;
  int gate_update_every = 10;     // episodes between gate updates
  int gate_warmup_episodes = 100; // gates closed while the world model warms up

  // training
  std::uint64_t seed = 1;
  int episodes = 20000;
  int episode_len = 20;
  int batch_size = 16;
  int horizon = 15;  // imagination length H
  double gamma = 0.99;
  double lambda_return = 0.95;
  double wm_lr = 6.0e-4;
  double actor_lr = 3.0e-4;
  double critic_lr = 3.0e-4;
  int det_dim = 256;
  int stoch_dim = 32;
  int hidden_dim = 256;
  int imagination_starts = 0;  // 0 = every posterior state of the batch
  int updates_per_episode = 1; // learner steps per collected episode
  double reward_pred_weight = 1.0;  // relative weight of the reward likelihood in the model loss
  int replay_capacity = 1000;  // episodes per agent
  double entropy_coef = 0.0;
  double free_bits = 1.0;
  double grad_clip = 100.0;
  int checkpoint_every = 500;  // episodes; 0 disables periodic checkpoints

  // derived linear units
  double p_max_mw() const { return dbm_to_mw(p_max_dbm); }
  double p_sat_mw() const { return dbm_to_mw(p_sat_dbm); }
  double sigma_a_mw() const { return dbm_to_mw(sigma_a_dbm); }
  double sigma_b_mw() const { return dbm_to_mw(sigma_b_dbm); }
  int action_dim() const { return 2 * fbs_antennas + 1; }
  int obs_dim() const { return 2 * fbs_antennas + 6; }
  double jakes_rho() const;

  // canonical JSON (sorted keys, full key set)
  std::string to_json() const;
  // FNV-1a over the canonical JSON; embedded in checkpoints
  std::uint64_t hash() const;
};

// Parses a JSON document. Missing keys fall back to the defaults above,
// unknown keys are an error, invariant violations raise ConfigError naming
// the offending field. A blank document yields the full default config.
// Environment variables of the form DWM_<SECTION>_<KEY> (for example
// DWM_TRAINING_HORIZON=10) override file values.
SystemConfig load_config(const std::string& text, bool apply_env_overrides = true);
SystemConfig load_config_file(const std::string& path, bool apply_env_overrides = true);

void validate(const SystemConfig& cfg);

}  // namespace dwm
