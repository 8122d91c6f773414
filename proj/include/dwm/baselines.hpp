#pragma once

#include "dwm/env.hpp"

namespace dwm {

// Uniform [-1, 1] entries over the full raw action vector.
RawAction random_policy(RngStream& rng, int action_dim);

// Equal gain transmission: every antenna radiates sqrt(P_max / N_F) with its
// phase conjugate-aligned to the FBS->FUE channel; alpha is fixed (0.5 by
// default). A zero channel yields a zero beamformer.
std::pair<Eigen::VectorXcd, double> egt_policy(const Eigen::VectorXcd& channel, double p_max_mw, double alpha = 0.5);

}  // namespace dwm
