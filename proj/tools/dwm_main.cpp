#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "dwm/checkpoint.hpp"
#include "dwm/errors.hpp"
#include "dwm/trainer.hpp"

namespace {

dwm::SystemConfig load_cfg(const std::string& path) {
  return path.empty() ? dwm::load_config("") : dwm::load_config_file(path);
}

std::vector<int> parse_k_list(const std::string& spec) {
  std::vector<int> ks;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) ks.push_back(std::stoi(item));
  }
  return ks;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SWIPT satellite-terrestrial HetNet lab: decentralized world-model agents with edge offloading"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", sweep_out = "sweep.csv", ckpt_path, k_spec = "2,4,6,8,10";
  std::string policy_name = "ckpt", metrics_path, summary_path, trace_path, channel_trace_path, resume_path;
  std::uint64_t seed = 0;
  bool has_seed = false, pure_dwm = false, verbose = false;
  int train_episodes = 0;  // 0: use the config value
  int eval_episodes = 100;
  int sweep_episodes = 50;

  auto* tr = app.add_subcommand("train", "train agents and stream metrics");
  tr->add_option("--config", config_path, "config file (JSON); defaults apply when omitted");
  tr->add_option("--out", out_dir, "output directory")->required();
  tr->add_option("--seed", seed, "override training.seed")->each([&](const std::string&) { has_seed = true; });
  tr->add_option("--episodes", train_episodes, "override training.episodes");
  tr->add_option("--resume", resume_path, "resume from a checkpoint");
  tr->add_flag("--pure-dwm", pure_dwm, "force all offloading gates closed");
  tr->add_flag("--verbose", verbose, "progress lines on stderr");

  auto* ev = app.add_subcommand("evaluate", "evaluate a checkpoint or baseline policy");
  ev->add_option("--config", config_path, "config file (JSON)");
  ev->add_option("--ckpt", ckpt_path, "checkpoint to evaluate");
  ev->add_option("--episodes", eval_episodes, "evaluation episodes");
  ev->add_option("--policy", policy_name, "ckpt|random|egt|zero");
  ev->add_option("--seed", seed, "override training.seed")->each([&](const std::string&) { has_seed = true; });
  ev->add_option("--metrics", metrics_path, "write per-slot metrics CSV");
  ev->add_option("--summary", summary_path, "write summary JSON");
  ev->add_option("--trace", trace_path, "write per-step JSONL trace");
  ev->add_option("--channel-trace", channel_trace_path, "write per-(slot,link) JSONL channel dump");
  ev->add_flag("--pure-dwm", pure_dwm, "evaluate with gates forced closed");

  auto* sw = app.add_subcommand("sweep", "scalability sweep over the number of FUEs");
  sw->add_option("--k", k_spec, "comma-separated K values");
  sw->add_option("--config", config_path, "config file (JSON)");
  sw->add_option("--ckpt", ckpt_path, "trained checkpoint to clone across K");
  sw->add_option("--episodes", sweep_episodes, "evaluation episodes per K");
  sw->add_option("--out", sweep_out, "output CSV path");
  sw->add_option("--seed", seed, "override training.seed")->each([&](const std::string&) { has_seed = true; });

  auto* in = app.add_subcommand("inspect", "print checkpoint parameter shapes and config hash");
  in->add_option("--ckpt", ckpt_path, "checkpoint file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(tr)) {
      dwm::SystemConfig cfg = load_cfg(config_path);
      if (has_seed) cfg.seed = seed;
      if (pure_dwm) cfg.pure_dwm = true;
      dwm::validate(cfg);
      dwm::TrainOptions opt;
      opt.out_dir = out_dir;
      opt.episodes = train_episodes > 0 ? train_episodes : -1;
      opt.resume_checkpoint = resume_path;
      opt.quiet = !verbose;
      const dwm::TrainResult res = dwm::train(cfg, opt);
      std::cout << "trained " << res.episodes_run << " episodes\nmetrics: " << res.metrics_path
                << "\ncheckpoint: " << res.checkpoint_path << '\n';
    } else if (app.got_subcommand(ev)) {
      dwm::SystemConfig cfg = load_cfg(config_path);
      if (has_seed) cfg.seed = seed;
      if (pure_dwm) cfg.pure_dwm = true;
      dwm::validate(cfg);
      dwm::EvalOptions opt;
      if (policy_name == "ckpt") {
        opt.policy = dwm::EvalPolicy::kCheckpoint;
        if (ckpt_path.empty()) throw dwm::ConfigError("evaluate: --ckpt is required for the ckpt policy");
      } else if (policy_name == "random") {
        opt.policy = dwm::EvalPolicy::kRandom;
      } else if (policy_name == "egt") {
        opt.policy = dwm::EvalPolicy::kEgt;
      } else if (policy_name == "zero") {
        opt.policy = dwm::EvalPolicy::kZero;
      } else {
        throw dwm::ConfigError("evaluate: unknown policy '" + policy_name + "'");
      }
      opt.checkpoint_path = ckpt_path;
      opt.episodes = eval_episodes;
      opt.metrics_path = metrics_path;
      opt.summary_path = summary_path;
      opt.step_trace_path = trace_path;
      opt.channel_trace_path = channel_trace_path;
      const dwm::EvalSummary s = dwm::evaluate(cfg, opt);
      std::cout << s.to_json() << '\n';
    } else if (app.got_subcommand(sw)) {
      dwm::SystemConfig cfg = load_cfg(config_path);
      if (has_seed) cfg.seed = seed;
      dwm::validate(cfg);
      dwm::EvalOptions base;
      base.episodes = sweep_episodes;
      base.checkpoint_path = ckpt_path;
      const auto rows = dwm::sweep_k(cfg, parse_k_list(k_spec), base);
      dwm::write_sweep_csv(sweep_out, rows);
      std::cout << "wrote " << rows.size() << " rows to " << sweep_out << '\n';
    } else if (app.got_subcommand(in)) {
      const dwm::Checkpoint ck = dwm::Checkpoint::load(ckpt_path);
      std::cout << "config_hash: " << std::hex << ck.config_hash << std::dec << '\n';
      for (const auto& [name, block] : ck.blocks()) {
        std::cout << name << " [";
        for (std::size_t i = 0; i < block.dims.size(); ++i) std::cout << (i ? "x" : "") << block.dims[i];
        std::cout << "] " << (block.dtype == dwm::Checkpoint::kF32 ? "f32" : "u64") << '\n';
      }
    }
  } catch (const dwm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const dwm::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 2;
  } catch (const dwm::NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
