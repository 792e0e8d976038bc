#include "seqrl/commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>

#include "seqrl/baselines.hpp"
#include "seqrl/checkpoint.hpp"
#include "seqrl/dt.hpp"
#include "seqrl/dtqn.hpp"
#include "seqrl/error.hpp"
#include "seqrl/metrics.hpp"
#include "seqrl/plot.hpp"
#include "seqrl/tensor.hpp"
#include "seqrl/trajstore.hpp"

namespace seqrl {

namespace fs = std::filesystem;

namespace {

constexpr const char* kConfigFile = "config.txt";
constexpr const char* kMetricsFile = "metrics.csv";
constexpr const char* kCheckpointFile = "checkpoint.drlc";

struct RunDir {
  fs::path path;
  fs::path metrics() const { return path / kMetricsFile; }
  fs::path checkpoint() const { return path / kCheckpointFile; }
};

RunDir open_run_dir(const CommandOptions& options, Config& config, const std::string& agent) {
  config.set("run.agent", agent);
  const auto seed = static_cast<std::uint64_t>(config.get_int("seed"));
  RunDir run{options.run_dir.empty() ? fs::path(default_run_dir(seed, std::time(nullptr))) : fs::path(options.run_dir)};
  fs::create_directories(run.path);
  std::ofstream out(run.path / kConfigFile, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + (run.path / kConfigFile).string() + "'");
  out << config.to_text();
  return run;
}

struct EnvProbe {
  EnvSettings settings;
  ObsShape shape;
  std::size_t actions = 0;
};

EnvProbe probe_env(const Config& config) {
  EnvProbe p;
  p.settings = env_settings_from(config);
  const auto env = make_env(p.settings);
  p.shape = env->observation_shape();
  p.actions = env->action_count();
  return p;
}

std::uint64_t seed_of(const Config& c) { return static_cast<std::uint64_t>(c.get_int("seed")); }

const std::string& required_path(const Config& c, const std::string& key) {
  const std::string& v = c.get_string(key);
  if (v.empty()) throw ConfigError("config key '" + key + "' must name a file", key);
  return v;
}

int train_q(const CommandOptions& options, Config config, const std::string& agent, std::ostream& out) {
  const EnvProbe env = probe_env(config);
  const QLearningConfig q = qlearning_config_from(config, agent);
  std::unique_ptr<QNetwork> net;
  if (agent == "dtqn") {
    net = std::make_unique<DTQN>(dtqn_config_from(config), env.shape, env.actions, seed_of(config));
  } else {
    net = std::make_unique<DRQN>(drqn_config_from(config), env.shape, env.actions, seed_of(config));
  }
  const RunDir run = open_run_dir(options, config, agent);
  MetricsWriter writer(run.metrics().string());
  const QTrainResult result = train_q_network(*net, env.settings, q, [&](const MetricsRow& r) { writer.append(r); });
  write_checkpoint(net->params(), run.checkpoint().string());
  out << "run_dir " << run.path.string() << "\n";
  out << "steps " << result.steps << "\nepisodes " << result.episodes << "\ngradient_steps " << result.gradient_steps
      << "\n";
  return 0;
}

int train_ppo_cmd(const CommandOptions& options, Config config, std::ostream& out) {
  const EnvProbe env = probe_env(config);
  const PPOConfig p = ppo_config_from(config);
  PPOModel model(p.hidden, env.shape, env.actions, seed_of(config));
  const RunDir run = open_run_dir(options, config, "ppo");
  MetricsWriter writer(run.metrics().string());
  const PPOTrainResult result = train_ppo(model, env.settings, p, [&](const MetricsRow& r) { writer.append(r); });
  write_checkpoint(model.params(), run.checkpoint().string());
  out << "run_dir " << run.path.string() << "\n";
  out << "steps " << result.steps << "\nepisodes " << result.episodes << "\n";
  return 0;
}

int train_dt_cmd(const CommandOptions& options, Config config, std::ostream& out) {
  const Dataset dataset = read_dataset(required_path(config, "dt.dataset"));
  const DTConfig d = dt_config_from(config);
  DecisionTransformer model(d, dataset.shape, dataset.action_count, seed_of(config));
  const RunDir run = open_run_dir(options, config, "dt");
  MetricsWriter writer(run.metrics().string());
  const DTTrainResult result = train_dt(model, dataset, d, [&](const MetricsRow& r) { writer.append(r); });
  write_checkpoint(model.params(), run.checkpoint().string());
  out << "run_dir " << run.path.string() << "\n";
  out << "epochs " << result.epoch_losses.size() << "\ngradient_steps " << result.gradient_steps << "\n";
  if (!result.epoch_losses.empty()) out << "final_loss " << format_double(result.epoch_losses.back()) << "\n";
  const std::size_t episodes = config.get_size("dt.eval_episodes");
  if (episodes > 0) {
    const EnvProbe env = probe_env(config);
    if (env.shape != dataset.shape || env.actions != dataset.action_count) {
      throw ConfigError("dataset observation/action shape does not match env.kind '" + config.get_string("env.kind") + "'",
                        "env.kind");
    }
    auto sim = make_env(env.settings);
    Rng seeds(seed_of(config) ^ 0x5eedULL);
    double total = 0.0;
    for (std::size_t i = 0; i < episodes; ++i) {
      total += dt_rollout(*sim, model, config.get_float("dt.target_return"), config.get_size("dt.max_steps"),
                          config.get_size("env.frame_skip"), seeds())
                   .episode_return;
    }
    out << "eval_mean_return " << format_double(total / static_cast<double>(episodes)) << "\n";
  }
  return 0;
}

std::unique_ptr<Policy> make_policy(const std::string& agent, const Config& config, const EnvProbe& env,
                                    const std::string& checkpoint, std::vector<std::shared_ptr<void>>& keep) {
  if (agent == "random") return std::make_unique<RandomPolicy>(env.actions);
  if (agent == "expert") {
    if (env.settings.kind != EnvKind::GridBasic) throw ConfigError("the expert policy exists only for grid_basic", "env.kind");
    return std::make_unique<ExpertPolicy>();
  }
  if (checkpoint.empty()) throw ConfigError("agent '" + agent + "' needs a checkpoint", "eval.checkpoint");
  ParameterStore store = read_checkpoint(checkpoint);
  if (agent == "dtqn" || agent == "drqn") {
    std::shared_ptr<QNetwork> net;
    if (agent == "dtqn") {
      net = std::make_shared<DTQN>(dtqn_config_from(config), env.shape, env.actions, std::move(store));
    } else {
      net = std::make_shared<DRQN>(drqn_config_from(config), env.shape, env.actions, std::move(store));
    }
    keep.push_back(net);
    return std::make_unique<QPolicy>(*net, config.get_float("eval.epsilon"));
  }
  if (agent == "ppo") {
    auto model = std::make_shared<PPOModel>(config.get_size("ppo.hidden"), env.shape, env.actions, std::move(store));
    keep.push_back(model);
    return std::make_unique<PPOPolicy>(*model, config.get_bool("eval.greedy"));
  }
  if (agent == "dt") {
    auto model = std::make_shared<DecisionTransformer>(dt_config_from(config), env.shape, env.actions, std::move(store));
    keep.push_back(model);
    return std::make_unique<DTPolicy>(*model, config.get_float("dt.target_return"));
  }
  throw ConfigError("unknown agent '" + agent + "' (expected dtqn, drqn, ppo, dt, random or expert)", "eval.agent");
}

int eval_cmd(const Config& config, std::ostream& out) {
  const EnvProbe env = probe_env(config);
  std::string agent = config.get_string("eval.agent");
  if (agent.empty()) agent = config.get_string("run.agent");
  if (agent.empty()) throw ConfigError("eval needs eval.agent (or a run directory via --from)", "eval.agent");
  std::vector<std::shared_ptr<void>> keep;
  auto policy = make_policy(agent, config, env, config.get_string("eval.checkpoint"), keep);
  const EvalSummary s = evaluate_policy(env.settings, *policy, config.get_size("eval.episodes"), seed_of(config),
                                        config.get_size("env.frame_skip"));
  out << "agent " << agent << "\n";
  out << "episodes " << s.episodes << "\n";
  out << "mean_return " << format_double(s.mean_return) << "\n";
  out << "success_rate " << format_double(s.success_rate) << "\n";
  out << "kills " << s.kills << "\ndeaths " << s.deaths << "\n";
  out << "kd_ratio " << format_double(s.kd_ratio) << "\n";
  return 0;
}

void print_stats(const DatasetStats& s, std::ostream& out) {
  out << "count " << s.count << "\n";
  out << "mean_return " << format_double(s.mean_return) << "\n";
  out << "min_return " << format_double(s.min_return) << "\n";
  out << "max_return " << format_double(s.max_return) << "\n";
  out << "mean_length " << format_double(s.mean_length) << "\n";
}

int collect_cmd(const Config& config, std::ostream& out) {
  const EnvProbe env = probe_env(config);
  std::vector<std::shared_ptr<void>> keep;
  auto policy = make_policy(config.get_string("collect.policy"), config, env, config.get_string("collect.checkpoint"), keep);
  const Dataset d = collect(*policy, env.settings, config.get_size("collect.episodes"), seed_of(config),
                            config.get_size("env.frame_skip"));
  const std::string& path = required_path(config, "collect.output");
  write_dataset(d, path);
  out << "wrote " << path << "\n";
  print_stats(dataset_stats(d), out);
  return 0;
}

int stats_cmd(const Config& config, std::ostream& out) {
  print_stats(dataset_stats(required_path(config, "stats.input")), out);
  return 0;
}

int plot_cmd(const Config& config, std::ostream& out) {
  const std::string& output = required_path(config, "plot.output");
  plot_metrics(required_path(config, "plot.input"), config.get_string("plot.column"), output,
               config.get_size("plot.window"));
  out << "wrote " << output << "\n";
  return 0;
}

}  // namespace

const std::vector<std::string>& subcommand_names() {
  static const std::vector<std::string> names = {"train-dtqn", "train-drqn", "train-ppo", "train-dt",
                                                 "collect",    "stats",      "eval",      "plot"};
  return names;
}

std::string usage_text() {
  std::string s = "usage: seqrl <subcommand> [--config FILE] [--set key=value ...] [--run-dir DIR] [--from RUN_DIR]\n";
  s += "subcommands:";
  for (const auto& n : subcommand_names()) s += " " + n;
  s += "\n";
  return s;
}

std::string default_run_dir(std::uint64_t seed, std::time_t now) {
  std::tm tm{};
  localtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  return std::string("runs/") + stamp + "-seed" + std::to_string(seed);
}

Config resolve_config(const CommandOptions& options) {
  std::optional<std::string> path = options.config_path;
  std::vector<std::string> flags;
  if (!options.from.empty()) {
    const fs::path dir(options.from);
    if (!path) path = (dir / kConfigFile).string();
    flags.push_back("eval.checkpoint=" + (dir / kCheckpointFile).string());
  }
  flags.insert(flags.end(), options.overrides.begin(), options.overrides.end());
  return parse_config(path, flags);
}

int run_subcommand(const std::string& name, const CommandOptions& options, std::ostream& out, std::ostream& err) {
  const auto& names = subcommand_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    err << "unknown subcommand '" << name << "'\n" << usage_text();
    return 2;
  }
  try {
    Config config = resolve_config(options);
    set_checked(config.get_bool("tensor.checked"));
    if (name == "train-dtqn") return train_q(options, config, "dtqn", out);
    if (name == "train-drqn") return train_q(options, config, "drqn", out);
    if (name == "train-ppo") return train_ppo_cmd(options, config, out);
    if (name == "train-dt") return train_dt_cmd(options, config, out);
    if (name == "collect") return collect_cmd(config, out);
    if (name == "stats") return stats_cmd(config, out);
    if (name == "eval") return eval_cmd(config, out);
    return plot_cmd(config, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
  }
  return 1;
}

}  // namespace seqrl
