// fairdice: dataset generation, training, evaluation, sweeps, forensics and reports.
//
// Exit codes: 0 success, 2 bad arguments or configuration, 3 runtime or numeric failure.

#include "fairdice/harness.hpp"
#include "fairdice/metrics.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>

namespace fs = std::filesystem;
using namespace fairdice;
using namespace fairdice::harness;
using json = nlohmann::json;

namespace {

constexpr int kBadArguments = 2;
constexpr int kRuntimeFailure = 3;

struct BadArguments : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

std::string joined_command(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) s += (i ? " " : "") + std::string(argv[i]);
  return s;
}

// --- shared option plumbing ----------------------------------------------------

/// Flags that may also come from a config file; a flag wins over the file.
struct Overrides {
  std::string config_path;
  std::map<std::string, std::string> values;

  void add(CLI::App* cmd, const std::string& flag, const std::string& section_key, const std::string& help) {
    cmd->add_option(flag, values[section_key], help);
  }

  Config resolve() const {
    Config c = config_path.empty() ? Config{} : Config::load(config_path);
    for (const auto& [sk, v] : values) {
      if (v.empty()) continue;
      const auto dot = sk.find('.');
      c.set(sk.substr(0, dot), sk.substr(dot + 1), v);
    }
    return c;
  }
};

ActionSelection parse_selection(const std::string& s) {
  if (s == "greedy") return ActionSelection::Greedy;
  if (s == "sample") return ActionSelection::Sample;
  throw BadArguments("selection must be greedy or sample, got '" + s + "'");
}

std::vector<std::size_t> parse_widths(const std::string& s) {
  std::vector<std::size_t> out;
  for (double v : parse_double_list(s)) {
    if (v < 1 || v != static_cast<double>(static_cast<std::size_t>(v))) throw BadArguments("bad layer width");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

DataRequest data_request_from(const Config& c) {
  DataRequest r;
  r.env = c.get("data", "env", r.env);
  r.behavior = c.get("data", "behavior", r.env == "group-fair" ? "random" : r.behavior);
  r.stochasticity = c.get_double("data", "stochasticity", r.stochasticity);
  r.optimality = c.get_double("data", "optimality", r.optimality);
  if (c.has("data", "goal_mix")) r.goal_mix = parse_double_list(c.get("data", "goal_mix"));
  const long long default_traj = r.env == "group-fair" ? 5000 : (r.env == "momdp" ? 100 : 1000);
  r.trajectories = static_cast<std::size_t>(
      c.get_int("data", "trajectories", c.get_int("data", "rollouts", default_traj)));
  r.horizon = static_cast<std::size_t>(c.get_int("data", "horizon", r.env == "group-fair" ? 500 : 200));
  r.continue_probability = c.get_double("data", "continue_probability", 1.0);
  r.momdp.n_states = static_cast<int>(c.get_int("data", "states", r.momdp.n_states));
  r.momdp.n_actions = static_cast<int>(c.get_int("data", "actions", r.momdp.n_actions));
  r.momdp.n_goals = static_cast<int>(c.get_int("data", "goals", r.momdp.n_goals));
  r.momdp.sparsity = static_cast<int>(c.get_int("data", "sparsity", r.momdp.sparsity));
  r.momdp.gamma = c.get_double("data", "gamma", r.momdp.gamma);
  r.seed = static_cast<std::uint64_t>(c.get_int("data", "seed", 0));
  return r;
}

void apply_train_section(const Config& c, TrainConfig& t) {
  t.iterations = static_cast<std::size_t>(c.get_int("train", "iterations", static_cast<long long>(t.iterations)));
  t.batch_size = static_cast<std::size_t>(c.get_int("train", "batch", static_cast<long long>(t.batch_size)));
  t.lr = c.get_double("train", "lr", t.lr);
  if (c.has("train", "hidden")) t.hidden = parse_widths(c.get("train", "hidden"));
  const std::string act = c.get("train", "activation", "relu");
  if (act == "relu") {
    t.activation = nn::Activation::ReLU;
  } else if (act == "tanh") {
    t.activation = nn::Activation::Tanh;
  } else {
    throw BadArguments("activation must be relu or tanh");
  }
}

void apply_solver_section(const Config& c, SolveOptions& s) {
  const std::string method = c.get("solver", "method", "newton");
  if (method == "newton") {
    s.method = TabularSolver::Newton;
  } else if (method == "adam") {
    s.method = TabularSolver::Adam;
  } else {
    throw BadArguments("solver method must be newton or adam");
  }
  s.iters = static_cast<std::size_t>(c.get_int("solver", "iters", static_cast<long long>(s.iters)));
  s.lr = c.get_double("solver", "lr", s.lr);
  s.grad_tol = c.get_double("solver", "grad_tol", s.grad_tol);
  s.newton_iters = static_cast<std::size_t>(c.get_int("solver", "newton_iters", static_cast<long long>(s.newton_iters)));
}

SweepSpec sweep_spec_from(const Config& c, const std::vector<LossMode>& default_modes,
                          const std::vector<double>& default_betas) {
  SweepSpec spec;
  if (c.has("data", "path")) {
    spec.dataset = c.get("data", "path");
  } else if (c.has("data", "env")) {
    spec.data_request = data_request_from(c);
  } else {
    throw BadArguments("no dataset: set [data] path, or [data] env to regenerate one per seed");
  }
  spec.modes.clear();
  if (c.has("sweep", "modes")) {
    for (const auto& m : split(c.get("sweep", "modes"), ',')) spec.modes.push_back(parse_loss_mode(m));
  } else {
    spec.modes = default_modes;
  }
  spec.alphas = c.has("sweep", "alphas") ? parse_double_list(c.get("sweep", "alphas")) : std::vector<double>{1.0};
  spec.betas = c.has("sweep", "betas") ? parse_double_list(c.get("sweep", "betas")) : default_betas;
  spec.lambdas = c.has("sweep", "lambdas") ? parse_double_list(c.get("sweep", "lambdas")) : std::vector<double>{1e-4};
  spec.seeds = parse_seed_list(c.get("sweep", "seeds", "0-4"));
  spec.rollouts = static_cast<std::size_t>(c.get_int("sweep", "rollouts", 100));
  spec.selection = parse_selection(c.get("sweep", "selection", "greedy"));
  spec.output_dir = c.get("sweep", "out", "runs/sweep");
  apply_train_section(c, spec.train);
  apply_solver_section(c, spec.solve);
  spec.validate();
  return spec;
}

void add_sweep_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "INI-style config file")->check(CLI::ExistingFile);
  o.add(cmd, "--data", "data.path", "dataset file (JSONL with .meta.json sidecar)");
  o.add(cmd, "--env", "data.env", "regenerate data per seed on this env instead of --data");
  o.add(cmd, "--behavior", "data.behavior", "behaviour policy for regenerated data");
  o.add(cmd, "--trajectories", "data.trajectories", "trajectories per regenerated dataset");
  o.add(cmd, "--modes", "sweep.modes", "comma list of fairdice, buggy, bc");
  o.add(cmd, "--alphas", "sweep.alphas", "comma list of alpha values");
  o.add(cmd, "--betas", "sweep.betas", "comma list of beta values");
  o.add(cmd, "--lambdas", "sweep.lambdas", "comma list of gradient-penalty weights");
  o.add(cmd, "--seeds", "sweep.seeds", "seed list, e.g. 0-9 or 1,3,5");
  o.add(cmd, "--rollouts", "sweep.rollouts", "evaluation rollouts per seed (GroupFair)");
  o.add(cmd, "--selection", "sweep.selection", "greedy or sample action selection at evaluation");
  o.add(cmd, "--out", "sweep.out", "run directory");
  o.add(cmd, "--iterations", "train.iterations", "training iterations");
  o.add(cmd, "--batch", "train.batch", "minibatch size");
  o.add(cmd, "--hidden", "train.hidden", "hidden widths, e.g. 256,256");
  o.add(cmd, "--solver", "solver.method", "tabular solver: newton or adam");
}

void print_row(const RunRow& r) {
  std::printf("%-8s alpha=%-5g beta=%-8g lambda=%-7g seed=%-3llu nsw=%.4f util=%.4f jain=%.4f (%.1fs)\n",
              to_string(r.at.mode).c_str(), r.at.alpha, r.at.beta, r.at.lambda,
              static_cast<unsigned long long>(r.at.seed), r.nsw, r.utilitarian, r.jain, r.wall_seconds);
  std::fflush(stdout);
}

int finish_sweep(const SweepSpec& spec, const SweepResult& res, const std::string& command) {
  auto files = write_report(spec.output_dir);
  files.push_back(spec.output_dir / "results.csv");
  update_manifest(spec.output_dir, command, files);
  std::printf("%zu rows (%zu resumed), %zu failed; report in %s\n", res.rows.size(), res.skipped, res.failed,
              spec.output_dir.string().c_str());
  for (const auto& e : res.errors) std::fprintf(stderr, "failed cell %s\n", e.c_str());
  return res.failed ? kRuntimeFailure : 0;
}

// --- subcommands ---------------------------------------------------------------

int cmd_gen_data(const Config& c, const std::string& out_flag, const std::string& command) {
  const DataRequest r = data_request_from(c);
  fs::path out = out_flag;
  if (out.empty()) {
    out = fs::path("runs/data") / (r.env + "-" + r.behavior + "-" + std::to_string(r.seed) + ".jsonl");
  }
  const auto data = generate_dataset(r);
  write_dataset(data, out);
  const fs::path dir = out.has_parent_path() ? out.parent_path() : fs::path(".");
  update_manifest(dir, command, {out, metadata_path(out)});
  std::printf("%zu transitions in %zu trajectories -> %s\n", data.size(), data.n_trajectories(),
              out.string().c_str());
  return 0;
}

struct TrainFlags {
  std::string data, out, mode = "fairdice", hidden;
  double alpha = 1.0, beta = 1.0, lambda = 1e-4;
  std::size_t iterations = 10000, batch = 256;
  std::uint64_t seed = 0;
  bool flip_sign = false, piecewise_log = false;
  std::string solver = "newton";
};

int cmd_train(const TrainFlags& f, const std::string& command) {
  const auto data = read_dataset(f.data);
  HyperParams hp;
  hp.alpha = f.alpha;
  hp.beta = f.beta;
  hp.lambda_gp = f.lambda;
  hp.gamma = data.meta.gamma;
  if (f.piecewise_log) hp.utility_kind = UtilityKind::PiecewiseLog;
  if (f.flip_sign) hp.regularizer_sign = RegularizerSign::FlippedForTypoTest;
  hp.validate();
  const LossMode mode = parse_loss_mode(f.mode);
  fs::path out = f.out;
  if (data.tabular()) {
    SolveOptions so;
    Config c;
    c.set("solver", "method", f.solver);
    apply_solver_section(c, so);
    const auto art = train_tabular(data, hp, mode, so, f.seed);
    if (out.empty()) out = "runs/train/tabular.json";
    write_tabular_artifact(art, out);
    std::printf("mu =");
    for (double m : art.mu) std::printf(" %.6g", m);
    std::printf("\nsolver %s after %zu iterations (grad %.3g) -> %s\n",
                art.trace.converged ? "converged" : "stopped", art.trace.iterations, art.trace.final_grad_norm,
                out.string().c_str());
  } else {
    TrainConfig cfg;
    cfg.hp = hp;
    cfg.mode = mode;
    cfg.iterations = f.iterations;
    cfg.batch_size = f.batch;
    cfg.seed = f.seed;
    if (!f.hidden.empty()) cfg.hidden = parse_widths(f.hidden);
    cfg.validate();
    const auto art = train(data, cfg);
    if (out.empty()) out = "runs/train/policy.fdart";
    write_artifact(art, out);
    std::printf("trained %zu iterations, final critic loss %.6g, policy loss %.6g -> %s\n", cfg.iterations,
                art.critic_loss.back(), art.policy_loss.back(), out.string().c_str());
  }
  update_manifest(out.has_parent_path() ? out.parent_path() : fs::path("."), command, {out});
  return 0;
}

struct EvalFlags {
  std::string artifact, reference, selection = "greedy", env = "group-fair";
  std::size_t rollouts = 100;
  std::uint64_t seed = 0;
};

json report_json(const EvalReport& rep) {
  const auto n = confidence_interval(rep.nsw);
  const auto u = confidence_interval(rep.utilitarian);
  const auto j = confidence_interval(rep.jain);
  return {{"rollouts", rep.n_rollouts()},
          {"nsw", n.mean},
          {"nsw_ci", n.half_width},
          {"utilitarian", u.mean},
          {"utilitarian_ci", u.half_width},
          {"jain", j.mean},
          {"jain_ci", j.half_width},
          {"nonpositive_rollouts", rep.nonpositive_rollouts}};
}

json tabular_report(const TabularMOMDP& env, const TabularPolicy& pi) {
  const auto j = evaluate_tabular_policy(env, pi, env.gamma);
  const auto v = nsw(j.returns);
  const bool zero = std::all_of(j.returns.begin(), j.returns.end(), [](double x) { return x == 0.0; });
  return {{"returns", j.returns},
          {"nsw", v.nonpositive ? json(nullptr) : json(v.value)},
          {"utilitarian", utilitarian(j.returns)},
          {"jain", zero ? 0.0 : jain_index(j.returns)},
          {"exact", j.exact}};
}

int cmd_eval(const EvalFlags& f) {
  json out;
  if (!f.reference.empty()) {
    if (f.env == "group-fair") {
      auto ev = groupfair_eval_setup(f.rollouts, parse_selection(f.selection));
      Rng rng(f.seed);
      out = report_json(evaluate_reference_policy(ev, parse_reference_policy(f.reference), rng));
    } else {
      if (f.reference != "uniform") throw BadArguments("tabular environments only have the uniform reference");
      DatasetMeta meta;
      meta.env_id = f.env;
      if (f.env == "momdp") meta.env_params = {{"env_seed", static_cast<double>(f.seed)}};
      const auto env = rebuild_tabular_env(meta);
      out = tabular_report(env, TabularPolicy::uniform(env.n_states, env.n_actions));
    }
    out["policy"] = f.reference;
  } else if (is_binary_artifact(f.artifact)) {
    const auto art = read_artifact(f.artifact);
    auto ev = groupfair_eval_setup(f.rollouts, parse_selection(f.selection));
    Rng rng(f.seed);
    out = report_json(evaluate_policy_mc(ev, art, rng));
    out["policy"] = f.artifact;
  } else {
    const auto art = read_tabular_artifact(f.artifact);
    DatasetMeta meta;
    meta.env_id = art.env_id;
    meta.env_params = art.env_params;
    meta.gamma = art.env_gamma;
    out = tabular_report(rebuild_tabular_env(meta), art.policy);
    out["policy"] = f.artifact;
  }
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_sweep(const Config& c, const std::string& command) {
  const auto spec = sweep_spec_from(c, {LossMode::FairDice}, {1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0});
  const auto res = run_sweep(spec, print_row);
  return finish_sweep(spec, res, command);
}

int cmd_forensics(const Config& c, const std::string& command) {
  auto spec = sweep_spec_from(c, {LossMode::FairDice, LossMode::FairDiceBuggy, LossMode::PlainBC},
                              {1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0});
  if (spec.seeds.size() < 5) throw BadArguments("forensics needs at least 5 seeds");
  if (spec.betas.size() < 2) throw BadArguments("forensics needs at least 2 beta values");
  if (spec.alphas.size() != 1 || spec.lambdas.size() != 1) {
    throw BadArguments("forensics compares beta groups at a single alpha and lambda");
  }
  const auto res = run_sweep(spec, print_row);
  const int status = finish_sweep(spec, res, command);
  const auto lines = forensics(res.rows, spec.alphas.front(), spec.lambdas.front());
  const fs::path table = spec.output_dir / "forensics.csv";
  std::ofstream out(table);
  out << "mode,H,p,beta_sensitive\n";
  std::printf("\n%-10s %10s %10s  %s\n", "mode", "H", "p", "beta-sensitive (p < 0.05)");
  for (const auto& l : lines) {
    out << to_string(l.mode) << ',' << l.test.h << ',' << l.test.p << ',' << (l.beta_sensitive() ? 1 : 0) << '\n';
    std::printf("%-10s %10.4f %10.4g  %s\n", to_string(l.mode).c_str(), l.test.h, l.test.p,
                l.beta_sensitive() ? "yes" : "no");
  }
  update_manifest(spec.output_dir, command, {table});
  for (const auto& l : lines) {
    if (l.mode == LossMode::FairDiceBuggy) {
      std::printf("buggy mode %s beta-insensitive\n", l.beta_sensitive() ? "is NOT" : "is");
    } else if (l.mode == LossMode::FairDice) {
      std::printf("fixed mode %s beta-sensitive\n", l.beta_sensitive() ? "is" : "is NOT");
    }
  }
  return status;
}

int cmd_report(const std::string& run_dir, const std::string& command) {
  const auto files = write_report(run_dir);
  update_manifest(run_dir, command, files);
  for (const auto& f : files) std::printf("%s\n", f.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FairDICE offline multi-objective RL: data, training, evaluation and sweeps"};
  app.require_subcommand(1);
  const std::string command = joined_command(argc, argv);

  auto* gen = app.add_subcommand("gen-data", "collect an offline dataset");
  Overrides gen_o;
  std::string gen_out;
  gen->add_option("--config", gen_o.config_path, "INI-style config file ([data] section)")->check(CLI::ExistingFile);
  gen_o.add(gen, "--env", "data.env", "four-rooms, momdp or group-fair");
  gen_o.add(gen, "--behavior", "data.behavior",
            "uniform, optimal-mix, biased (four-rooms); random, biased, util-optim, fair (group-fair)");
  gen_o.add(gen, "--stochasticity", "data.stochasticity", "four-rooms action slip probability");
  gen_o.add(gen, "--optimality", "data.optimality", "probability of the optimal action (optimal-mix)");
  gen_o.add(gen, "--goal-mix", "data.goal_mix", "goal proportions for biased four-rooms data");
  gen_o.add(gen, "--trajectories", "data.trajectories", "number of trajectories");
  gen_o.add(gen, "--rollouts", "data.rollouts", "alias of --trajectories for group-fair");
  gen_o.add(gen, "--horizon", "data.horizon", "maximum episode length");
  gen_o.add(gen, "--continue-prob", "data.continue_probability", "per-step continuation probability");
  gen_o.add(gen, "--states", "data.states", "random MOMDP state count");
  gen_o.add(gen, "--sparsity", "data.sparsity", "random MOMDP successors per state-action");
  gen_o.add(gen, "--seed", "data.seed", "generator seed");
  gen->add_option("--out", gen_out, "output JSONL path");

  auto* tr = app.add_subcommand("train", "train one policy on a dataset");
  TrainFlags tf;
  tr->add_option("--data", tf.data, "dataset file")->required()->check(CLI::ExistingFile);
  tr->add_option("--out", tf.out, "artifact path");
  tr->add_option("--mode", tf.mode, "fairdice, buggy or bc")->capture_default_str();
  tr->add_option("--alpha", tf.alpha, "alpha-fairness exponent")->capture_default_str();
  tr->add_option("--beta", tf.beta, "divergence weight")->capture_default_str();
  tr->add_option("--lambda", tf.lambda, "gradient-penalty weight")->capture_default_str();
  tr->add_option("--iterations", tf.iterations, "training iterations")->capture_default_str();
  tr->add_option("--batch", tf.batch, "minibatch size")->capture_default_str();
  tr->add_option("--hidden", tf.hidden, "hidden widths, e.g. 256,256");
  tr->add_option("--seed", tf.seed, "seed")->capture_default_str();
  tr->add_option("--solver", tf.solver, "tabular solver: newton or adam")->capture_default_str();
  tr->add_flag("--flip-sign", tf.flip_sign, "flip the preference regularizer sign");
  tr->add_flag("--piecewise-log", tf.piecewise_log, "piecewise-log utility instead of alpha-fair");

  auto* ev = app.add_subcommand("eval", "evaluate an artifact or a reference policy");
  EvalFlags ef;
  auto* art_opt = ev->add_option("--artifact", ef.artifact, "trained artifact")->check(CLI::ExistingFile);
  auto* ref_opt = ev->add_option("--reference", ef.reference, "random, biased, util-optim, fair, or uniform");
  art_opt->excludes(ref_opt);
  ev->add_option("--env", ef.env, "environment for --reference")->capture_default_str();
  ev->add_option("--rollouts", ef.rollouts, "evaluation rollouts")->capture_default_str();
  ev->add_option("--selection", ef.selection, "greedy or sample")->capture_default_str();
  ev->add_option("--seed", ef.seed, "evaluation seed")->capture_default_str();

  auto* sw = app.add_subcommand("sweep", "grid over mode, alpha, beta, lambda and seeds");
  Overrides sw_o;
  add_sweep_flags(sw, sw_o);

  auto* fo = app.add_subcommand("forensics", "Kruskal-Wallis across beta for each loss mode");
  Overrides fo_o;
  add_sweep_flags(fo, fo_o);

  auto* rep = app.add_subcommand("report", "rebuild summary table and plots from results.csv");
  std::string run_dir;
  rep->add_option("run_dir", run_dir, "run directory")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kBadArguments;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_o.resolve(), gen_out, command);
    if (tr->parsed()) return cmd_train(tf, command);
    if (ev->parsed()) {
      if (ef.artifact.empty() && ef.reference.empty()) throw BadArguments("give --artifact or --reference");
      return cmd_eval(ef);
    }
    if (sw->parsed()) return cmd_sweep(sw_o.resolve(), command);
    if (fo->parsed()) return cmd_forensics(fo_o.resolve(), command);
    if (rep->parsed()) return cmd_report(run_dir, command);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kBadArguments;
  } catch (const TrainingError& e) {
    std::fprintf(stderr, "numeric failure in %s at iteration %zu: %s\n", e.component().c_str(), e.iteration(),
                 e.what());
    return kRuntimeFailure;
  } catch (const SolverError& e) {
    std::fprintf(stderr, "solver failure at iteration %zu: %s\n", e.iteration(), e.what());
    return kRuntimeFailure;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntimeFailure;
  }
  return 0;
}
