#pragma once

#include <deque>

#include <Eigen/Dense>

#include "dwm/errors.hpp"
#include "dwm/rng.hpp"

namespace dwm {

// One complete episode as seen by a single agent. Stored in float32; training
// consumes the same precision, so checkpointed replay round-trips exactly.
struct EpisodeRecord {
  Eigen::MatrixXf observations;  // obs_dim x (T+1), terminal observation included
  Eigen::MatrixXf actions;       // act_dim x T
  Eigen::VectorXf rewards;       // T
  Eigen::MatrixXf flags;         // 3 x T
};

// Ring buffer of complete episodes with uniform sampling; per-agent,
// single-owner. Only full episodes may be stored.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(int capacity_episodes, int episode_len)
      : capacity_(capacity_episodes), episode_len_(episode_len) {}

  void push(EpisodeRecord episode) {
    if (episode.actions.cols() != episode_len_ || episode.observations.cols() != episode_len_ + 1 ||
        episode.rewards.size() != episode_len_) {
      throw NumericalError("replay: only complete episodes may be stored");
    }
    if (static_cast<int>(episodes_.size()) == capacity_) episodes_.pop_front();
    episodes_.push_back(std::move(episode));
  }

  const EpisodeRecord& sample(RngStream& rng) const {
    if (episodes_.empty()) throw NumericalError("replay: sampling from an empty buffer");
    return episodes_[rng.uniform_int(episodes_.size())];
  }

  std::size_t sample_index(RngStream& rng) const { return rng.uniform_int(episodes_.size()); }

  const EpisodeRecord& at(std::size_t i) const { return episodes_[i]; }
  std::size_t size() const { return episodes_.size(); }
  int capacity() const { return capacity_; }
  int episode_len() const { return episode_len_; }

 private:
  int capacity_;
  int episode_len_;
  std::deque<EpisodeRecord> episodes_;
};

}  // namespace dwm
