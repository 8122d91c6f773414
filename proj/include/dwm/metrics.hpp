#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "dwm/env.hpp"

namespace dwm {

// Per-slot scalars derived from one StepResult; the violation columns follow
// the evaluation convention that a slot violates if any user misses any of
// the rate or harvesting constraints.
struct SlotMetrics {
  double sum_rate = 0.0;
  int violation_any = 0;
  int v_fue_qos = 0;
  int v_fue_eh = 0;
  int v_sue_qos = 0;
  double harvested_mean_mw = 0.0;
  double reward_mean = 0.0;
  double offload_rate = 0.0;
  std::vector<double> rate;       // K
  std::vector<double> harvested;  // K
  std::vector<double> reward;     // K
  std::vector<int> offload;       // K
  std::vector<std::optional<double>> delta;  // K, present when the agent offloaded
};

SlotMetrics make_slot_metrics(const StepResult& step, const SystemConfig& cfg);

struct LossMetrics {
  double wm_pred = 0.0, wm_dyn = 0.0, wm_rep = 0.0, wm_total = 0.0;
  double actor = 0.0, critic = 0.0, gate = 0.0;
  bool valid = false;
};

// Fixed-schema CSV: one row per (episode, slot) plus one aggregate row per
// episode. The column set is frozen at construction (it depends only on K),
// and numeric formatting is deterministic.
class MetricsWriter {
 public:
  MetricsWriter(const std::string& path, int num_agents);

  void slot_row(std::uint64_t episode, int slot, const SlotMetrics& m);
  void episode_row(std::uint64_t episode, const std::vector<SlotMetrics>& slots, const LossMetrics& losses);
  void flush() { out_.flush(); }

  static std::string header(int num_agents);

 private:
  void write_common(const SlotMetrics& m);

  std::ofstream out_;
  int num_agents_;
};

struct EvalSummary {
  std::uint64_t episodes = 0;
  std::uint64_t slots = 0;
  double sum_rate_mean = 0.0;
  double sum_rate_stderr = 0.0;
  double violation_rate = 0.0;    // fraction of slots
  double violation_stderr = 0.0;
  double harvested_mean_mw = 0.0;
  double harvested_stderr = 0.0;
  double reward_mean = 0.0;       // per agent per slot
  double offload_rate = 0.0;
  std::string to_json() const;
};

class SummaryAccumulator {
 public:
  void add(const SlotMetrics& m);
  EvalSummary finish(std::uint64_t episodes) const;

 private:
  std::uint64_t n_ = 0;
  double sum_rate_ = 0.0, sum_rate_sq_ = 0.0;
  double viol_ = 0.0;
  double harv_ = 0.0, harv_sq_ = 0.0;
  double reward_ = 0.0;
  double offload_ = 0.0;
};

std::string format_double(double v);

}  // namespace dwm
