#include "dwm/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "dwm/bessel.hpp"
#include "dwm/errors.hpp"

namespace dwm {
namespace {

using nlohmann::json;

struct Key {
  const char* section;
  const char* name;
  std::function<void(SystemConfig&, const json&)> set;
  std::function<json(const SystemConfig&)> get;
};

template <typename T, typename F>
json checked_get(const json& v, const char* section, const char* name, F&& ok) {
  (void)ok;
  return v;
}

void assign_int(int& field, const json& v, const std::string& where) {
  if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
  field = v.get<int>();
}

void assign_u64(std::uint64_t& field, const json& v, const std::string& where) {
  if (!v.is_number_integer() && !v.is_number_unsigned()) throw ConfigError(where + ": expected an integer");
  field = v.get<std::uint64_t>();
}

void assign_double(double& field, const json& v, const std::string& where) {
  if (!v.is_number()) throw ConfigError(where + ": expected a number");
  field = v.get<double>();
}

void assign_bool(bool& field, const json& v, const std::string& where) {
  if (!v.is_boolean()) throw ConfigError(where + ": expected a boolean");
  field = v.get<bool>();
}

#define DWM_KEY_INT(sec, key, field)                                                   \
  Key{sec, key, [](SystemConfig& c, const json& v) { assign_int(c.field, v, sec "." key); }, \
      [](const SystemConfig& c) { return json(c.field); }}
#define DWM_KEY_U64(sec, key, field)                                                   \
  Key{sec, key, [](SystemConfig& c, const json& v) { assign_u64(c.field, v, sec "." key); }, \
      [](const SystemConfig& c) { return json(c.field); }}
#define DWM_KEY_NUM(sec, key, field)                                                   \
  Key{sec, key, [](SystemConfig& c, const json& v) { assign_double(c.field, v, sec "." key); }, \
      [](const SystemConfig& c) { return json(c.field); }}
#define DWM_KEY_BOOL(sec, key, field)                                                  \
  Key{sec, key, [](SystemConfig& c, const json& v) { assign_bool(c.field, v, sec "." key); }, \
      [](const SystemConfig& c) { return json(c.field); }}

const std::vector<Key>& key_table() {
  static const std::vector<Key> keys = {
      DWM_KEY_INT("network", "num_sues", num_sues),
      DWM_KEY_INT("network", "num_fues", num_fues),
      DWM_KEY_INT("network", "fbs_antennas", fbs_antennas),
      DWM_KEY_INT("network", "sat_antennas", sat_antennas),

      DWM_KEY_NUM("channel", "doppler_hz", doppler_hz),
      DWM_KEY_NUM("channel", "slot_s", slot_s),
      DWM_KEY_NUM("channel", "rician_k", rician_k),
      DWM_KEY_NUM("channel", "carrier_hz", carrier_hz),
      DWM_KEY_NUM("channel", "sat_distance_m", sat_distance_m),
      DWM_KEY_NUM("channel", "gain_sat", gain_sat),
      DWM_KEY_NUM("channel", "gain_sue", gain_sue),
      DWM_KEY_NUM("channel", "gain_fue", gain_fue),
      DWM_KEY_NUM("channel", "fue_radius_min_m", fue_radius_min_m),
      DWM_KEY_NUM("channel", "fue_radius_max_m", fue_radius_max_m),
      DWM_KEY_NUM("channel", "sue_radius_m", sue_radius_m),
      DWM_KEY_NUM("channel", "terr_pl_offset_db", terr_pl_offset_db),
      DWM_KEY_NUM("channel", "terr_pl_exponent_db", terr_pl_exponent_db),

      DWM_KEY_NUM("power", "p_max_dbm", p_max_dbm),
      DWM_KEY_NUM("power", "p_sat_dbm", p_sat_dbm),
      DWM_KEY_NUM("power", "sigma_a_dbm", sigma_a_dbm),
      DWM_KEY_NUM("power", "sigma_b_dbm", sigma_b_dbm),

      DWM_KEY_NUM("qos", "xi_sue", xi_sue),
      DWM_KEY_NUM("qos", "xi_fue", xi_fue),
      DWM_KEY_NUM("qos", "phi_fue_mw", phi_fue_mw),

      DWM_KEY_NUM("eh", "e_max_mw", e_max_mw),
      DWM_KEY_NUM("eh", "mu_per_mw", eh_mu),
      DWM_KEY_NUM("eh", "nu_mw", eh_nu_mw),

      DWM_KEY_NUM("reward", "omega", omega),
      DWM_KEY_NUM("reward", "lambda1", lambda1),
      DWM_KEY_NUM("reward", "lambda2", lambda2),
      DWM_KEY_NUM("reward", "lambda3", lambda3),

      DWM_KEY_NUM("baselines", "egt_alpha", egt_alpha),

      DWM_KEY_BOOL("coordination", "pure_dwm", pure_dwm),
      DWM_KEY_NUM("coordination", "decorrelation_coef", decorrelation_coef),
      DWM_KEY_NUM("coordination", "gate_cost", gate_cost),
      DWM_KEY_INT("coordination", "gate_hidden_dim", gate_hidden_dim),
      DWM_KEY_NUM("coordination", "gate_lr", gate_lr),
      DWM_KEY_NUM("coordination", "gate_clip", gate_clip),
      DWM_KEY_NUM("coordination", "gate_value_coef", gate_value_coef),
      DWM_KEY_INT("coordination", "gate_update_every", gate_update_every),
      DWM_KEY_INT("coordination", "gate_warmup_episodes", gate_warmup_episodes),

      DWM_KEY_U64("training", "seed", seed),
      DWM_KEY_INT("training", "episodes", episodes),
      DWM_KEY_INT("training", "episode_len", episode_len),
      DWM_KEY_INT("training", "batch_size", batch_size),
      DWM_KEY_INT("training", "horizon", horizon),
      DWM_KEY_NUM("training", "gamma", gamma),
      DWM_KEY_NUM("training", "lambda_return", lambda_return),
      DWM_KEY_NUM("training", "wm_lr", wm_lr),
      DWM_KEY_NUM("training", "actor_lr", actor_lr),
      DWM_KEY_NUM("training", "critic_lr", critic_lr),
      DWM_KEY_INT("training", "det_dim", det_dim),
      DWM_KEY_INT("training", "stoch_dim", stoch_dim),
      DWM_KEY_INT("training", "hidden_dim", hidden_dim),
      DWM_KEY_INT("training", "imagination_starts", imagination_starts),
      DWM_KEY_INT("training", "updates_per_episode", updates_per_episode),
      DWM_KEY_NUM("training", "reward_pred_weight", reward_pred_weight),
      DWM_KEY_INT("training", "replay_capacity", replay_capacity),
      DWM_KEY_NUM("training", "entropy_coef", entropy_coef),
      DWM_KEY_NUM("training", "free_bits", free_bits),
      DWM_KEY_NUM("training", "grad_clip", grad_clip),
      DWM_KEY_INT("training", "checkpoint_every", checkpoint_every),
  };
  return keys;
}

const Key* find_key(const std::string& section, const std::string& name) {
  for (const Key& k : key_table()) {
    if (section == k.section && name == k.name) return &k;
  }
  return nullptr;
}

void apply_env(SystemConfig& cfg) {
  for (const Key& k : key_table()) {
    std::string var = "DWM_";
    for (const char* p = k.section; *p; ++p) var += static_cast<char>(std::toupper(*p));
    var += '_';
    for (const char* p = k.name; *p; ++p) var += static_cast<char>(std::toupper(*p));
    const char* raw = std::getenv(var.c_str());
    if (!raw) continue;
    json v = json::parse(raw, nullptr, false);
    if (v.is_discarded()) throw ConfigError(var + ": cannot parse override value '" + std::string(raw) + "'");
    k.set(cfg, v);
  }
}

void require(bool ok, const char* field, const char* message) {
  if (!ok) throw ConfigError(std::string(field) + ": " + message);
}

}  // namespace

double SystemConfig::jakes_rho() const { return bessel_j0(2.0 * 3.14159265358979323846 * doppler_hz * slot_s); }

std::string SystemConfig::to_json() const {
  json root;
  for (const Key& k : key_table()) root[k.section][k.name] = k.get(*this);
  return root.dump(2);
}

std::uint64_t SystemConfig::hash() const {
  // The hash pins everything a checkpoint depends on structurally; the seed
  // is excluded so evaluation may draw fresh channel realisations.
  json root;
  for (const Key& k : key_table()) root[k.section][k.name] = k.get(*this);
  root["training"].erase("seed");
  const std::string dump = root.dump(2);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

SystemConfig load_config(const std::string& text, bool apply_env_overrides) {
  SystemConfig cfg;
  bool blank = true;
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) {
      blank = false;
      break;
    }
  }
  if (!blank) {
    json root;
    try {
      root = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config parse error: ") + e.what());
    }
    if (!root.is_object()) throw ConfigError("config root must be an object");
    for (auto sec = root.begin(); sec != root.end(); ++sec) {
      if (!sec.value().is_object()) throw ConfigError("unknown key: " + sec.key());
      for (auto it = sec.value().begin(); it != sec.value().end(); ++it) {
        const Key* k = find_key(sec.key(), it.key());
        if (!k) throw ConfigError("unknown key: " + sec.key() + "." + it.key());
        k->set(cfg, it.value());
      }
    }
  }
  if (apply_env_overrides) apply_env(cfg);
  validate(cfg);
  return cfg;
}

SystemConfig load_config_file(const std::string& path, bool apply_env_overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return load_config(ss.str(), apply_env_overrides);
}

void validate(const SystemConfig& c) {
  require(c.num_sues >= 1, "num_sues", "must be >= 1");
  require(c.num_fues >= 1, "num_fues", "must be >= 1");
  require(c.fbs_antennas >= 1, "fbs_antennas", "must be >= 1");
  require(c.sat_antennas >= 1, "sat_antennas", "must be >= 1");
  require(c.slot_s > 0.0, "slot_s", "must be > 0");
  require(c.doppler_hz >= 0.0 && std::isfinite(c.doppler_hz), "doppler_hz", "must be finite and >= 0");
  require(c.rician_k > 0.0 && std::isfinite(c.rician_k), "rician_k", "must be finite and > 0");
  require(c.carrier_hz > 0.0, "carrier_hz", "must be > 0");
  require(c.sat_distance_m > 0.0, "sat_distance_m", "must be > 0");
  require(c.gain_sat > 0.0 && c.gain_sue > 0.0 && c.gain_fue > 0.0, "antenna_gains", "must be > 0");
  require(c.fue_radius_min_m > 0.0 && c.fue_radius_max_m >= c.fue_radius_min_m, "fue_radius",
          "need 0 < min <= max");
  require(c.sue_radius_m > 0.0, "sue_radius_m", "must be > 0");
  require(std::isfinite(c.p_max_dbm), "p_max_dbm", "must be finite");
  require(std::isfinite(c.p_sat_dbm), "p_sat_dbm", "must be finite");
  require(std::isfinite(c.sigma_a_dbm), "sigma_a_dbm", "must be finite");
  require(std::isfinite(c.sigma_b_dbm), "sigma_b_dbm", "must be finite");
  require(c.xi_sue >= 0.0 && c.xi_fue >= 0.0, "qos_rates", "must be >= 0");
  require(c.phi_fue_mw >= 0.0, "phi_fue_mw", "must be >= 0");
  require(c.e_max_mw > 0.0, "e_max_mw", "must be > 0");
  require(c.eh_mu > 0.0, "mu_per_mw", "must be > 0");
  require(c.eh_nu_mw >= 0.0, "nu_mw", "must be >= 0");
  require(c.egt_alpha >= 0.0 && c.egt_alpha <= 1.0, "egt_alpha", "must be in [0, 1]");
  require(c.gate_cost >= 0.0, "gate_cost", "must be >= 0");
  require(c.gate_hidden_dim >= 1, "gate_hidden_dim", "must be >= 1");
  require(c.gate_lr > 0.0, "gate_lr", "must be > 0");
  require(c.gate_clip > 0.0, "gate_clip", "must be > 0");
  require(c.gate_update_every >= 1, "gate_update_every", "must be >= 1");
  require(c.gate_warmup_episodes >= 0, "gate_warmup_episodes", "must be >= 0");
  require(c.episodes >= 1, "episodes", "must be >= 1");
  require(c.episode_len >= 2, "episode_len", "must be >= 2");
  require(c.batch_size >= 1, "batch_size", "must be >= 1");
  require(c.horizon >= 1, "horizon", "must be >= 1");
  require(c.gamma > 0.0 && c.gamma <= 1.0, "gamma", "must be in (0, 1]");
  require(c.lambda_return >= 0.0 && c.lambda_return <= 1.0, "lambda_return", "must be in [0, 1]");
  require(c.wm_lr > 0.0 && c.actor_lr > 0.0 && c.critic_lr > 0.0, "learning_rates", "must be > 0");
  require(c.det_dim >= 1 && c.stoch_dim >= 1 && c.hidden_dim >= 1, "latent_dims", "must be >= 1");
  require(c.imagination_starts >= 0, "imagination_starts", "must be >= 0");
  require(c.updates_per_episode >= 1, "updates_per_episode", "must be >= 1");
  require(c.reward_pred_weight >= 0.0, "reward_pred_weight", "must be >= 0");
  require(c.replay_capacity >= c.batch_size, "replay_capacity", "must be >= batch_size");
  require(c.entropy_coef >= 0.0, "entropy_coef", "must be >= 0");
  require(c.free_bits >= 0.0, "free_bits", "must be >= 0");
  require(c.grad_clip >= 0.0, "grad_clip", "must be >= 0 (0 disables clipping)");
  require(c.checkpoint_every >= 0, "checkpoint_every", "must be >= 0");
}

}  // namespace dwm
