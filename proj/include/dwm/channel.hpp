#pragma once

#include <vector>

#include <Eigen/Dense>

#include "dwm/config.hpp"
#include "dwm/rng.hpp"

namespace dwm {

enum class LinkKind { kSatToSue, kSatToFue, kFbsToFue, kFbsToSue };

inline bool is_satellite_link(LinkKind k) { return k == LinkKind::kSatToSue || k == LinkKind::kSatToFue; }

// Small-scale fading with unit average per-entry power. Evolves as the
// first-order Gauss-Markov recursion g(t) = rho*g(t-1) + sqrt(1-rho^2)*e(t).
struct FadingState {
  Eigen::VectorXcd g;
  double rho = 0.0;
  int slot_index = 0;
};

// One physical link: gains = sqrt(path_loss) * small-scale fading.
struct ChannelVector {
  Eigen::VectorXcd gains;
  LinkKind kind = LinkKind::kFbsToFue;
  double path_loss = 1.0;  // linear power ratio beta
};

// Per-episode user layout. Users are static within an episode.
struct Geometry {
  std::vector<double> fue_distance_m;  // K, FBS to FUE
  std::vector<double> sue_distance_m;  // M, FBS to SUE
  double sat_distance_m = 0.0;         // shared by all ground terminals
};

// All channel state for one slot, plus the fixed satellite beamformers.
struct NetworkState {
  std::vector<ChannelVector> sat_to_sue;               // M, length N_M  (h_{s,m})
  std::vector<ChannelVector> sat_to_fue;               // K, length N_M  (g_{s,k})
  std::vector<ChannelVector> fbs_to_fue;               // K, length N_F  (h_k)
  std::vector<std::vector<ChannelVector>> fbs_to_sue;  // [M][K], length N_F (g_{m,k})
  std::vector<Eigen::VectorXcd> sat_beams;             // M, length N_M, ||v||^2 = P_sat/M
  int slot = 0;
};

// Free-space loss with antenna gains: G_s * G_u * (c / (4 pi f_c d))^2.
double path_loss_satellite(double distance_m, double gain_tx, double gain_rx, double carrier_hz);

// Log-distance femtocell model, beta(dB) = -(offset + exponent * log10(d_m)).
double path_loss_terrestrial(double distance_m, double offset_db, double exponent_db);

Geometry sample_geometry(const SystemConfig& cfg, RngStream& rng);

// Satellite links are Rician: sqrt(K/(K+1)) * los + sqrt(1/(K+1)) * CN(0, I),
// where los has unit-modulus entries with phases fixed per episode.
// Terrestrial links are Rayleigh (rician_k ignored). rician_k = 0 is the
// pure-Rayleigh limit and is accepted here even though the config forbids it.
FadingState init_fading(LinkKind kind, int dim, double rician_k, double rho, RngStream& init_rng,
                        const Eigen::VectorXd* los_phases = nullptr);

FadingState step_fading(const FadingState& state, RngStream& rng);

// Per-episode channel generator. Link streams are keyed by
// (seed, link index, purpose, episode) so distinct links evolve on
// statistically independent, individually reproducible streams.
class ChannelModel {
 public:
  ChannelModel(const SystemConfig& cfg, std::uint64_t seed, std::uint64_t episode);

  const NetworkState& state() const { return state_; }
  const Geometry& geometry() const { return geom_; }
  const FadingState& fading(int link) const { return fading_[link]; }
  int num_links() const { return static_cast<int>(fading_.size()); }

  // Advances every link one slot and reassembles the network state.
  void advance();

 private:
  void assemble();

  const SystemConfig* cfg_;
  std::uint64_t seed_ = 0;
  std::uint64_t episode_ = 0;
  Geometry geom_;
  std::vector<FadingState> fading_;
  std::vector<double> beta_;
  std::vector<LinkKind> kind_;
  std::vector<RngStream> step_rng_;
  NetworkState state_;
};

// Builds a NetworkState from externally supplied fading states; used by tests
// that need hand-constructed channels. Layout of `fading` and `beta`:
// M sat->SUE, K sat->FUE, K fbs->FUE, then M*K fbs->SUE in m-major order.
NetworkState assemble_network_state(const SystemConfig& cfg, const std::vector<FadingState>& fading,
                                    const std::vector<double>& beta,
                                    const std::vector<Eigen::VectorXcd>* sat_beams = nullptr);

}  // namespace dwm
