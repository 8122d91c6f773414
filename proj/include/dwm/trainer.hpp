#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dwm/checkpoint.hpp"
#include "dwm/coord.hpp"
#include "dwm/metrics.hpp"
#include "dwm/replay.hpp"

namespace dwm {

// Networks train in float32; gradient-audit suites instantiate the same
// templates with double.
using TrainScalar = float;
using AgentCoreF = coord::AgentCore<TrainScalar>;

// Evaluation episodes draw channel realisations from a disjoint episode-index
// arena so they never replay training episodes.
inline constexpr std::uint64_t kEvalEpisodeBase = 1ull << 40;

// Full training state for one run: environment, per-agent learner stacks,
// replay, pending gate records. Single-owner; per-agent updates may run on
// worker threads because agents share no mutable state.
class Trainer {
 public:
  explicit Trainer(const SystemConfig& cfg, bool parallel_agent_updates = true);

  void init();                         // fresh parameter initialisation
  void restore(const Checkpoint& ck);  // resume everything, episode counter included
  Checkpoint snapshot() const;

  // Collects and trains episodes [next_episode, next_episode + n).
  void run(int n, MetricsWriter* metrics);

  std::uint64_t next_episode() const { return next_episode_; }
  const SystemConfig& config() const { return cfg_; }
  std::vector<AgentCoreF>& agents() { return agents_; }
  const std::vector<ReplayBuffer>& replay() const { return replay_; }

  struct EpisodeLog {
    std::vector<SlotMetrics> slots;
    std::vector<double> episode_reward;  // per agent, summed over slots
  };
  EpisodeLog collect_episode(std::uint64_t episode);
  LossMetrics update_agents(std::uint64_t episode);

 private:
  struct AgentUpdate {
    wm::WmLossBreakdown wm;
    double actor = 0.0;
    double critic = 0.0;
  };
  AgentUpdate update_one(int k, std::uint64_t episode);
  AgentUpdate update_round(int k, std::uint64_t round_ctx);
  double update_gates();
  bool gates_active(std::uint64_t episode) const {
    return !cfg_.pure_dwm && episode >= static_cast<std::uint64_t>(cfg_.gate_warmup_episodes);
  }

  SystemConfig cfg_;
  bool parallel_;
  Environment env_;
  std::vector<AgentCoreF> agents_;
  std::vector<nn::Adam<TrainScalar>> wm_opt_, actor_opt_, critic_opt_, gate_opt_;
  std::vector<ReplayBuffer> replay_;
  std::vector<std::vector<coord::GateRecord>> pending_gate_;
  std::uint64_t next_episode_ = 0;
};

struct TrainOptions {
  std::string out_dir;
  int episodes = -1;                  // overrides cfg.episodes when > 0
  std::string resume_checkpoint;      // resume full training state when set
  bool parallel_agent_updates = true;
  bool quiet = true;
};

struct TrainResult {
  std::uint64_t episodes_run = 0;
  std::string checkpoint_path;
  std::string metrics_path;
};

// Alternates collection and per-agent updates, streaming metrics rows and
// checkpointing periodically. A non-finite loss aborts the run with the last
// written checkpoint left in place.
TrainResult train(const SystemConfig& cfg, const TrainOptions& opt);

enum class EvalPolicy { kCheckpoint, kRandom, kEgt, kZero };

struct EvalOptions {
  EvalPolicy policy = EvalPolicy::kCheckpoint;
  std::string checkpoint_path;
  int episodes = 100;
  std::string metrics_path;
  std::string summary_path;
  std::string step_trace_path;
  std::string channel_trace_path;
  // sweeps clone checkpoint agents across a different K; plain evaluate
  // refuses a config-hash mismatch
  int num_fues_override = 0;
  bool allow_checkpoint_mismatch = false;
};

// Deterministic evaluation: mean-mode policies, gates thresholded at 0.5.
EvalSummary evaluate(const SystemConfig& cfg, const EvalOptions& opt);

// Loads only network parameters (no optimiser/replay state) from a
// checkpoint into freshly built agent cores; agents beyond the stored count
// reuse stored agents round-robin.
std::vector<AgentCoreF> load_agents(const SystemConfig& cfg, const Checkpoint& ck, bool allow_mismatch);

struct SweepRow {
  int k = 0;
  std::string policy;
  std::string metric;
  double value = 0.0;
  double std_error = 0.0;
};

// Evaluates random, EGT and (when a checkpoint is given) the trained policy
// for each K, holding the number of SUEs fixed. Long-format table: one row
// per (K, policy, metric).
std::vector<SweepRow> sweep_k(const SystemConfig& cfg, const std::vector<int>& k_values, const EvalOptions& base);

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);

}  // namespace dwm
