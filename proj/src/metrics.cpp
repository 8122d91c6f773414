#include "dwm/metrics.hpp"

#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "dwm/errors.hpp"

namespace dwm {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

SlotMetrics make_slot_metrics(const StepResult& step, const SystemConfig& cfg) {
  const int K = cfg.num_fues, M = cfg.num_sues;
  SlotMetrics m;
  m.rate.resize(K);
  m.harvested.resize(K);
  m.reward.resize(K);
  m.offload.assign(K, 0);
  m.delta.assign(K, std::nullopt);
  for (int k = 0; k < K; ++k) {
    m.rate[k] = step.outcome.fue_rates(k);
    m.harvested[k] = step.outcome.harvested_mw(k);
    m.reward[k] = step.rewards[k];
    m.sum_rate += m.rate[k];
    m.harvested_mean_mw += m.harvested[k];
    m.reward_mean += m.reward[k];
    if (step.outcome.fue_rates(k) < cfg.xi_fue) m.v_fue_qos = 1;
    if (step.outcome.harvested_mw(k) < cfg.phi_fue_mw) m.v_fue_eh = 1;
  }
  for (int s = 0; s < M; ++s) {
    if (step.outcome.sue_rates(s) < cfg.xi_sue) m.v_sue_qos = 1;
  }
  m.violation_any = (m.v_fue_qos || m.v_fue_eh || m.v_sue_qos) ? 1 : 0;
  m.harvested_mean_mw /= K;
  m.reward_mean /= K;
  return m;
}

std::string MetricsWriter::header(int num_agents) {
  std::string h =
      "kind,episode,slot,sum_rate,violation_any,v_fue_qos,v_fue_eh,v_sue_qos,"
      "harvested_mean_mw,reward_mean,offload_rate";
  for (int k = 0; k < num_agents; ++k) h += ",rate_a" + std::to_string(k);
  for (int k = 0; k < num_agents; ++k) h += ",harvested_a" + std::to_string(k);
  for (int k = 0; k < num_agents; ++k) h += ",reward_a" + std::to_string(k);
  for (int k = 0; k < num_agents; ++k) h += ",offload_a" + std::to_string(k);
  for (int k = 0; k < num_agents; ++k) h += ",delta_a" + std::to_string(k);
  h += ",wm_pred,wm_dyn,wm_rep,wm_total,actor_loss,critic_loss,gate_loss";
  return h;
}

MetricsWriter::MetricsWriter(const std::string& path, int num_agents) : num_agents_(num_agents) {
  out_.open(path, std::ios::trunc);
  if (!out_) throw IoError("metrics: cannot open '" + path + "' for writing");
  out_ << header(num_agents) << '\n';
}

void MetricsWriter::write_common(const SlotMetrics& m) {
  out_ << format_double(m.sum_rate) << ',' << m.violation_any << ',' << m.v_fue_qos << ',' << m.v_fue_eh << ','
       << m.v_sue_qos << ',' << format_double(m.harvested_mean_mw) << ',' << format_double(m.reward_mean) << ','
       << format_double(m.offload_rate);
  for (int k = 0; k < num_agents_; ++k) out_ << ',' << format_double(m.rate[k]);
  for (int k = 0; k < num_agents_; ++k) out_ << ',' << format_double(m.harvested[k]);
  for (int k = 0; k < num_agents_; ++k) out_ << ',' << format_double(m.reward[k]);
  for (int k = 0; k < num_agents_; ++k) out_ << ',' << m.offload[k];
  for (int k = 0; k < num_agents_; ++k) {
    out_ << ',';
    if (m.delta[k]) out_ << format_double(*m.delta[k]);
  }
}

void MetricsWriter::slot_row(std::uint64_t episode, int slot, const SlotMetrics& m) {
  out_ << "slot," << episode << ',' << slot << ',';
  write_common(m);
  out_ << ",,,,,,,\n";
}

void MetricsWriter::episode_row(std::uint64_t episode, const std::vector<SlotMetrics>& slots,
                                const LossMetrics& losses) {
  SlotMetrics agg;
  const int K = num_agents_;
  agg.rate.assign(K, 0.0);
  agg.harvested.assign(K, 0.0);
  agg.reward.assign(K, 0.0);
  agg.offload.assign(K, 0);
  agg.delta.assign(K, std::nullopt);
  std::vector<double> offload_frac(K, 0.0);
  for (const SlotMetrics& m : slots) {
    agg.sum_rate += m.sum_rate;
    agg.violation_any += m.violation_any;
    agg.v_fue_qos += m.v_fue_qos;
    agg.v_fue_eh += m.v_fue_eh;
    agg.v_sue_qos += m.v_sue_qos;
    agg.harvested_mean_mw += m.harvested_mean_mw;
    agg.reward_mean += m.reward_mean;
    agg.offload_rate += m.offload_rate;
    for (int k = 0; k < K; ++k) {
      agg.rate[k] += m.rate[k];
      agg.harvested[k] += m.harvested[k];
      agg.reward[k] += m.reward[k];
      offload_frac[k] += m.offload[k];
    }
  }
  const double n = slots.empty() ? 1.0 : static_cast<double>(slots.size());
  agg.sum_rate /= n;
  agg.harvested_mean_mw /= n;
  agg.reward_mean /= n;
  agg.offload_rate /= n;
  for (int k = 0; k < K; ++k) {
    agg.rate[k] /= n;
    agg.harvested[k] /= n;
    agg.reward[k] /= n;
    agg.offload[k] = 0;
  }

  out_ << "episode," << episode << ",,";
  out_ << format_double(agg.sum_rate) << ',' << format_double(agg.violation_any / n) << ','
       << format_double(agg.v_fue_qos / n) << ',' << format_double(agg.v_fue_eh / n) << ','
       << format_double(agg.v_sue_qos / n) << ',' << format_double(agg.harvested_mean_mw) << ','
       << format_double(agg.reward_mean) << ',' << format_double(agg.offload_rate);
  for (int k = 0; k < K; ++k) out_ << ',' << format_double(agg.rate[k]);
  for (int k = 0; k < K; ++k) out_ << ',' << format_double(agg.harvested[k]);
  for (int k = 0; k < K; ++k) out_ << ',' << format_double(agg.reward[k]);
  for (int k = 0; k < K; ++k) out_ << ',' << format_double(offload_frac[k] / n);
  for (int k = 0; k < K; ++k) out_ << ',';
  if (losses.valid) {
    out_ << ',' << format_double(losses.wm_pred) << ',' << format_double(losses.wm_dyn) << ','
         << format_double(losses.wm_rep) << ',' << format_double(losses.wm_total) << ','
         << format_double(losses.actor) << ',' << format_double(losses.critic) << ','
         << format_double(losses.gate);
  } else {
    out_ << ",,,,,,,";
  }
  out_ << '\n';
}

void SummaryAccumulator::add(const SlotMetrics& m) {
  ++n_;
  sum_rate_ += m.sum_rate;
  sum_rate_sq_ += m.sum_rate * m.sum_rate;
  viol_ += m.violation_any;
  harv_ += m.harvested_mean_mw;
  harv_sq_ += m.harvested_mean_mw * m.harvested_mean_mw;
  reward_ += m.reward_mean;
  offload_ += m.offload_rate;
}

EvalSummary SummaryAccumulator::finish(std::uint64_t episodes) const {
  EvalSummary s;
  s.episodes = episodes;
  s.slots = n_;
  if (n_ == 0) return s;
  const double n = static_cast<double>(n_);
  s.sum_rate_mean = sum_rate_ / n;
  s.violation_rate = viol_ / n;
  s.harvested_mean_mw = harv_ / n;
  s.reward_mean = reward_ / n;
  s.offload_rate = offload_ / n;
  if (n_ > 1) {
    const double var_rate = std::max(0.0, sum_rate_sq_ / n - s.sum_rate_mean * s.sum_rate_mean);
    const double var_harv = std::max(0.0, harv_sq_ / n - s.harvested_mean_mw * s.harvested_mean_mw);
    const double var_viol = std::max(0.0, s.violation_rate * (1.0 - s.violation_rate));
    s.sum_rate_stderr = std::sqrt(var_rate / n);
    s.harvested_stderr = std::sqrt(var_harv / n);
    s.violation_stderr = std::sqrt(var_viol / n);
  }
  return s;
}

std::string EvalSummary::to_json() const {
  nlohmann::json j;
  j["episodes"] = episodes;
  j["slots"] = slots;
  j["sum_rate_mean"] = sum_rate_mean;
  j["sum_rate_stderr"] = sum_rate_stderr;
  j["violation_rate"] = violation_rate;
  j["violation_stderr"] = violation_stderr;
  j["harvested_mean_mw"] = harvested_mean_mw;
  j["harvested_stderr"] = harvested_stderr;
  j["reward_mean"] = reward_mean;
  j["offload_rate"] = offload_rate;
  return j.dump(2);
}

}  // namespace dwm
