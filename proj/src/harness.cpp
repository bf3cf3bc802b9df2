#include "fairdice/harness.hpp"

#include "fairdice/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

namespace fairdice::harness {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

double to_double(const std::string& s) {
  const std::string t = trim(s);
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size()) throw std::invalid_argument("not a number: '" + s + "'");
  return v;
}

Rng stream(std::uint64_t seed, std::uint32_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), id};
  return Rng(seq);
}

enum Stream : std::uint32_t { kEnvBuild = 11, kCollect = 12, kEval = 13 };

}  // namespace

// --- config ------------------------------------------------------------------

Config Config::parse(const std::string& text) {
  Config c;
  std::istringstream in(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw std::invalid_argument("config line " + std::to_string(line_no) + ": unterminated section");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw std::invalid_argument("config line " + std::to_string(line_no) + ": empty key");
    c.values_[section][key] = trim(line.substr(eq + 1));
  }
  return c;
}

Config Config::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

bool Config::has(const std::string& section, const std::string& key) const {
  const auto it = values_.find(section);
  return it != values_.end() && it->second.count(key) > 0;
}

std::string Config::get(const std::string& section, const std::string& key,
                        const std::string& fallback) const {
  if (!has(section, key)) return fallback;
  return values_.at(section).at(key);
}

double Config::get_double(const std::string& section, const std::string& key, double fallback) const {
  if (!has(section, key)) return fallback;
  return to_double(get(section, key));
}

long long Config::get_int(const std::string& section, const std::string& key, long long fallback) const {
  if (!has(section, key)) return fallback;
  const double v = get_double(section, key, 0.0);
  if (v != std::floor(v)) throw std::invalid_argument(section + "." + key + " must be an integer");
  return static_cast<long long>(v);
}

void Config::set(const std::string& section, const std::string& key, std::string value) {
  values_[section][key] = std::move(value);
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& item : split(text, ',')) out.push_back(to_double(item));
  if (out.empty()) throw std::invalid_argument("empty list '" + text + "'");
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split(text, ',')) {
    const auto dash = item.find('-', 1);
    if (dash != std::string::npos) {
      const double lo = to_double(item.substr(0, dash));
      const double hi = to_double(item.substr(dash + 1));
      if (lo < 0 || hi < lo || lo != std::floor(lo) || hi != std::floor(hi)) {
        throw std::invalid_argument("bad seed range '" + item + "'");
      }
      for (auto s = static_cast<std::uint64_t>(lo); s <= static_cast<std::uint64_t>(hi); ++s) out.push_back(s);
    } else {
      const double v = to_double(item);
      if (v < 0 || v != std::floor(v)) throw std::invalid_argument("bad seed '" + item + "'");
      out.push_back(static_cast<std::uint64_t>(v));
    }
  }
  if (out.empty()) throw std::invalid_argument("empty seed list");
  return out;
}

// --- datasets ----------------------------------------------------------------

void DataRequest::validate() const {
  static const std::set<std::string> envs{"four-rooms", "momdp", "group-fair"};
  if (!envs.count(env)) throw std::invalid_argument("unknown env '" + env + "'");
  if (trajectories < 1) throw std::invalid_argument("need at least one trajectory");
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (!(stochasticity >= 0.0 && stochasticity <= 1.0)) throw std::invalid_argument("stochasticity must lie in [0, 1]");
  if (!(optimality >= 0.0 && optimality <= 1.0)) throw std::invalid_argument("optimality must lie in [0, 1]");
  if (!(continue_probability > 0.0 && continue_probability <= 1.0)) {
    throw std::invalid_argument("continue probability must lie in (0, 1]");
  }
  if (env == "group-fair") {
    parse_reference_policy(behavior);
  } else if (behavior != "uniform" && behavior != "optimal-mix" &&
             !(behavior == "biased" && env == "four-rooms")) {
    throw std::invalid_argument("behavior '" + behavior + "' is not available on " + env);
  }
}

TransitionDataset generate_dataset(const DataRequest& request) {
  request.validate();
  Rng rng = stream(request.seed, kCollect);
  TransitionDataset data;
  if (request.env == "group-fair") {
    auto membership = std::make_shared<const Membership>(groupfair_fixed_membership());
    const GroupFairConfig config;
    data = collect_groupfair(membership, config, parse_reference_policy(request.behavior),
                             request.trajectories, request.horizon, rng);
  } else {
    TabularMOMDP env;
    std::map<std::string, double> params;
    if (request.env == "four-rooms") {
      env = build_four_rooms(request.stochasticity);
      params = {{"stochasticity", request.stochasticity}, {"gamma", env.gamma}};
    } else {
      Rng env_rng = stream(request.seed, kEnvBuild);
      env = generate_random_momdp(request.momdp, env_rng);
      params = {{"n_states", request.momdp.n_states},   {"n_actions", request.momdp.n_actions},
                {"n_goals", request.momdp.n_goals},     {"sparsity", request.momdp.sparsity},
                {"gamma", request.momdp.gamma},         {"env_seed", static_cast<double>(request.seed)}};
    }
    if (request.behavior == "biased") {
      data = collect_biased_four_rooms(env, request.goal_mix, request.trajectories, request.horizon, rng);
    } else if (request.behavior == "optimal-mix") {
      data = collect_dataset(env, OptimalityMix{request.optimality}, request.trajectories, request.horizon,
                             rng, request.continue_probability);
    } else {
      data = collect_dataset(env, UniformRandom{request.stochasticity}, request.trajectories,
                             request.horizon, rng, request.continue_probability);
    }
    data.meta.env_params = params;
  }
  data.meta.seed = request.seed;
  return data;
}

TabularMOMDP rebuild_tabular_env(const DatasetMeta& meta) {
  const auto param = [&](const std::string& key, double fallback) {
    const auto it = meta.env_params.find(key);
    return it == meta.env_params.end() ? fallback : it->second;
  };
  if (meta.env_id == "four-rooms") {
    return build_four_rooms(param("stochasticity", 0.1), param("gamma", meta.gamma));
  }
  if (meta.env_id == "momdp") {
    if (!meta.env_params.count("env_seed")) {
      throw std::invalid_argument("dataset metadata lacks the random MOMDP seed");
    }
    RandomMomdpConfig cfg;
    cfg.n_states = static_cast<int>(param("n_states", cfg.n_states));
    cfg.n_actions = static_cast<int>(param("n_actions", cfg.n_actions));
    cfg.n_goals = static_cast<int>(param("n_goals", cfg.n_goals));
    cfg.sparsity = static_cast<int>(param("sparsity", cfg.sparsity));
    cfg.gamma = param("gamma", cfg.gamma);
    Rng env_rng = stream(static_cast<std::uint64_t>(param("env_seed", 0)), kEnvBuild);
    return generate_random_momdp(cfg, env_rng);
  }
  throw std::invalid_argument("'" + meta.env_id + "' is not a tabular environment");
}

GroupFairEval groupfair_eval_setup(std::size_t n_rollouts, ActionSelection selection) {
  GroupFairEval ev;
  ev.membership = std::make_shared<const Membership>(groupfair_fixed_membership());
  ev.n_rollouts = n_rollouts;
  ev.horizon = static_cast<std::size_t>(ev.config.horizon);
  ev.selection = selection;
  return ev;
}

// --- tabular artifacts -----------------------------------------------------------

TabularArtifact train_tabular(const TransitionDataset& data, const HyperParams& hp, LossMode mode,
                              const SolveOptions& options, std::uint64_t seed) {
  if (!data.tabular()) throw std::invalid_argument("train_tabular: dataset is not tabular");
  TabularArtifact art;
  art.env_id = data.meta.env_id;
  art.env_params = data.meta.env_params;
  art.env_gamma = data.meta.gamma;
  art.hp = hp;
  art.mode = mode;
  art.seed = seed;
  if (mode == LossMode::FairDice) {
    const auto sol = solve_critic_full_batch(data, hp, options);
    art.nu = sol.critic.nu;
    art.mu = sol.mu.mu();
    art.trace = sol.trace;
    art.policy = extract_policy(data, sol.critic, sol.mu, hp);
  } else {
    // The outer-product loss reduces to behaviour cloning, whose tabular optimum is closed-form.
    art.policy = empirical_policy(data);
  }
  return art;
}

void write_tabular_artifact(const TabularArtifact& a, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  json j{{"kind", "tabular"},
         {"env_id", a.env_id},
         {"env_params", a.env_params},
         {"env_gamma", a.env_gamma},
         {"mode", to_string(a.mode)},
         {"seed", a.seed},
         {"hp", {{"alpha", a.hp.alpha}, {"beta", a.hp.beta}, {"gamma", a.hp.gamma},
                 {"piecewise_log", a.hp.utility_kind == UtilityKind::PiecewiseLog},
                 {"flipped_sign", a.hp.regularizer_sign == RegularizerSign::FlippedForTypoTest}}},
         {"nu", a.nu},
         {"mu", a.mu},
         {"n_states", a.policy.n_states},
         {"n_actions", a.policy.n_actions},
         {"policy", a.policy.probs},
         {"solver", {{"iterations", a.trace.iterations},
                     {"converged", a.trace.converged},
                     {"final_grad_norm", a.trace.final_grad_norm}}}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

TabularArtifact read_tabular_artifact(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  const json j = json::parse(in);
  if (j.value("kind", "") != "tabular") throw std::runtime_error(path.string() + " is not a tabular artifact");
  TabularArtifact a;
  a.env_id = j.at("env_id");
  a.env_params = j.value("env_params", std::map<std::string, double>{});
  a.env_gamma = j.value("env_gamma", 0.99);
  a.mode = parse_loss_mode(j.at("mode"));
  a.seed = j.at("seed");
  const auto& hp = j.at("hp");
  a.hp.alpha = hp.at("alpha");
  a.hp.beta = hp.at("beta");
  a.hp.gamma = hp.at("gamma");
  if (hp.value("piecewise_log", false)) a.hp.utility_kind = UtilityKind::PiecewiseLog;
  if (hp.value("flipped_sign", false)) a.hp.regularizer_sign = RegularizerSign::FlippedForTypoTest;
  a.nu = j.at("nu").get<std::vector<double>>();
  a.mu = j.at("mu").get<std::vector<double>>();
  a.policy.n_states = j.at("n_states");
  a.policy.n_actions = j.at("n_actions");
  a.policy.probs = j.at("policy").get<std::vector<double>>();
  a.policy.validate(1e-6);
  const auto& s = j.at("solver");
  a.trace.iterations = s.at("iterations");
  a.trace.converged = s.at("converged");
  a.trace.final_grad_norm = s.at("final_grad_norm");
  return a;
}

bool is_binary_artifact(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  char head[9] = {};
  in.read(head, 8);
  return in.gcount() == 8 && std::string(head) == "FAIRDICE";
}

// --- sweeps --------------------------------------------------------------------

void SweepSpec::validate() const {
  if (modes.empty() || alphas.empty() || betas.empty() || lambdas.empty() || seeds.empty()) {
    throw std::invalid_argument("sweep grids must be nonempty");
  }
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw std::invalid_argument("sweep seeds must be distinct");
  }
  if (rollouts < 1) throw std::invalid_argument("rollouts must be >= 1");
  if (!data_request && dataset.empty()) throw std::invalid_argument("sweep needs a dataset");
  if (data_request) data_request->validate();
  for (double a : alphas) {
    if (!(a >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
  }
  for (double b : betas) {
    if (!(b > 0.0)) throw std::invalid_argument("beta must be > 0");
  }
  for (double l : lambdas) {
    if (!(l >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  }
}

std::string Coordinate::key() const {
  return to_string(mode) + "|" + fmt(alpha) + "|" + fmt(beta) + "|" + fmt(lambda) + "|" + std::to_string(seed);
}

std::vector<Coordinate> sweep_coordinates(const SweepSpec& spec) {
  std::vector<Coordinate> out;
  for (auto seed : spec.seeds) {
    for (auto mode : spec.modes) {
      for (double alpha : spec.alphas) {
        for (double lambda : spec.lambdas) {
          for (double beta : spec.betas) out.push_back({mode, alpha, beta, lambda, seed});
        }
      }
    }
  }
  return out;
}

TransitionDataset sweep_dataset(const SweepSpec& spec, std::uint64_t seed) {
  if (spec.data_request) {
    DataRequest r = *spec.data_request;
    r.seed = seed;
    return generate_dataset(r);
  }
  return read_dataset(spec.dataset);
}

RunRow run_cell(const TransitionDataset& data, const SweepSpec& spec, const Coordinate& at) {
  const auto t0 = std::chrono::steady_clock::now();
  RunRow row;
  row.env = data.meta.env_id;
  row.behavior = data.meta.behavior;
  row.at = at;
  HyperParams hp;
  hp.alpha = at.alpha;
  hp.beta = at.beta;
  hp.lambda_gp = at.lambda;
  hp.gamma = data.meta.gamma;

  if (data.tabular()) {
    const TabularMOMDP env = rebuild_tabular_env(data.meta);
    const auto art = train_tabular(data, hp, at.mode, spec.solve, at.seed);
    EvalOptions eo;
    eo.seed = at.seed;
    const auto j = evaluate_tabular_policy(env, art.policy, env.gamma, eo);
    const auto v = nsw(j.returns);
    row.nsw = v.value;
    row.nonpositive = v.nonpositive ? 1 : 0;
    row.utilitarian = utilitarian(j.returns);
    const bool all_zero = std::all_of(j.returns.begin(), j.returns.end(), [](double x) { return x == 0.0; });
    row.jain = all_zero ? 0.0 : jain_index(j.returns);
    row.returns = j.returns;
  } else {
    TrainConfig cfg = spec.train;
    cfg.hp = hp;
    cfg.mode = at.mode;
    cfg.seed = at.seed;
    const auto art = train(data, cfg);
    auto ev = groupfair_eval_setup(spec.rollouts, spec.selection);
    Rng rng = stream(at.seed, kEval);
    const auto rep = evaluate_policy_mc(ev, art, rng);
    const auto n = confidence_interval(rep.nsw);
    const auto u = confidence_interval(rep.utilitarian);
    const auto jn = confidence_interval(rep.jain);
    row.nsw = n.mean;
    row.nsw_ci = n.half_width;
    row.utilitarian = u.mean;
    row.utilitarian_ci = u.half_width;
    row.jain = jn.mean;
    row.jain_ci = jn.half_width;
    row.nonpositive = rep.nonpositive_rollouts;
    row.returns = rep.mean_returns();
  }
  row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

std::string csv_header() {
  return "env,behavior,mode,alpha,beta,lambda,seed,nsw,nsw_ci,utilitarian,utilitarian_ci,jain,jain_ci,"
         "nonpositive,returns,wall_seconds";
}

namespace {
std::string csv_text(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}
}  // namespace

std::string to_csv(const RunRow& r) {
  std::string returns;
  for (std::size_t i = 0; i < r.returns.size(); ++i) returns += (i ? ";" : "") + fmt(r.returns[i]);
  std::ostringstream out;
  out << csv_text(r.env) << ',' << csv_text(r.behavior) << ',' << to_string(r.at.mode) << ','
      << fmt(r.at.alpha) << ',' << fmt(r.at.beta) << ',' << fmt(r.at.lambda) << ',' << r.at.seed << ','
      << fmt(r.nsw) << ',' << fmt(r.nsw_ci) << ',' << fmt(r.utilitarian) << ',' << fmt(r.utilitarian_ci)
      << ',' << fmt(r.jain) << ',' << fmt(r.jain_ci) << ',' << r.nonpositive << ',' << returns << ','
      << fmt(r.wall_seconds);
  return out.str();
}

RunRow row_from_csv(const std::string& line) {
  std::vector<std::string> f;
  std::string item;
  std::istringstream in(line);
  while (std::getline(in, item, ',')) f.push_back(item);
  if (!line.empty() && line.back() == ',') f.emplace_back();
  if (f.size() != 16) throw std::invalid_argument("csv row has " + std::to_string(f.size()) + " fields");
  RunRow r;
  r.env = f[0];
  r.behavior = f[1];
  r.at.mode = parse_loss_mode(f[2]);
  r.at.alpha = to_double(f[3]);
  r.at.beta = to_double(f[4]);
  r.at.lambda = to_double(f[5]);
  r.at.seed = std::stoull(f[6]);
  r.nsw = to_double(f[7]);
  r.nsw_ci = to_double(f[8]);
  r.utilitarian = to_double(f[9]);
  r.utilitarian_ci = to_double(f[10]);
  r.jain = to_double(f[11]);
  r.jain_ci = to_double(f[12]);
  r.nonpositive = std::stoull(f[13]);
  for (const auto& v : split(f[14], ';')) r.returns.push_back(to_double(v));
  r.wall_seconds = to_double(f[15]);
  return r;
}

std::vector<RunRow> read_rows(const fs::path& csv) {
  std::vector<RunRow> rows;
  std::ifstream in(csv);
  if (!in) return rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first) {
      first = false;
      if (line == csv_header()) continue;
    }
    if (trim(line).empty()) continue;
    try {
      rows.push_back(row_from_csv(line));
    } catch (const std::exception&) {
      // A torn final line from an interrupted run; the cell is simply redone.
    }
  }
  return rows;
}

std::size_t worker_count() {
  if (const char* env = std::getenv("FAIRDICE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

SweepResult run_sweep(const SweepSpec& spec, const std::function<void(const RunRow&)>& on_row) {
  spec.validate();
  fs::create_directories(spec.output_dir);
  const fs::path csv = spec.output_dir / "results.csv";

  SweepResult result;
  result.rows = read_rows(csv);
  std::set<std::string> done;
  for (const auto& r : result.rows) done.insert(r.at.key());
  result.skipped = result.rows.size();

  // Rewrite what survived so a torn line never sits in the middle of the file.
  {
    std::ofstream out(csv, std::ios::trunc);
    out << csv_header() << '\n';
    for (const auto& r : result.rows) out << to_csv(r) << '\n';
  }

  std::vector<Coordinate> todo;
  for (const auto& c : sweep_coordinates(spec)) {
    if (!done.count(c.key())) todo.push_back(c);
  }

  std::mutex data_mutex, write_mutex;
  std::map<std::uint64_t, std::shared_ptr<const TransitionDataset>> datasets;
  const auto dataset_for = [&](std::uint64_t seed) {
    const std::uint64_t key = spec.data_request ? seed : 0;
    {
      std::lock_guard lock(data_mutex);
      if (auto it = datasets.find(key); it != datasets.end()) return it->second;
    }
    auto d = std::make_shared<const TransitionDataset>(sweep_dataset(spec, seed));
    std::lock_guard lock(data_mutex);
    return datasets.emplace(key, std::move(d)).first->second;
  };

  std::ofstream out(csv, std::ios::app);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < todo.size(); i = next++) {
      try {
        const auto data = dataset_for(todo[i].seed);
        RunRow row = run_cell(*data, spec, todo[i]);
        std::lock_guard lock(write_mutex);
        out << to_csv(row) << '\n';
        out.flush();
        result.rows.push_back(row);
        if (on_row) on_row(row);
      } catch (const std::exception& e) {
        std::lock_guard lock(write_mutex);
        ++result.failed;
        result.errors.push_back(todo[i].key() + ": " + e.what());
      }
    }
  };
  const std::size_t n_workers = std::min(worker_count(), std::max<std::size_t>(todo.size(), 1));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return result;
}

// --- forensics -------------------------------------------------------------------

std::vector<ForensicsLine> forensics(const std::vector<RunRow>& rows, double alpha, double lambda) {
  std::map<LossMode, std::map<double, std::map<std::uint64_t, double>>> by_mode;
  for (const auto& r : rows) {
    if (r.at.alpha != alpha || r.at.lambda != lambda) continue;
    by_mode[r.at.mode][r.at.beta][r.at.seed] = r.nsw;
  }
  if (by_mode.empty()) throw std::invalid_argument("forensics: no rows at the requested alpha and lambda");
  std::vector<ForensicsLine> out;
  for (const auto& [mode, by_beta] : by_mode) {
    if (by_beta.size() < 2) throw std::invalid_argument("forensics: need at least two beta values");
    ForensicsLine line;
    line.mode = mode;
    for (const auto& [beta, by_seed] : by_beta) {
      if (by_seed.size() < 5) {
        throw std::invalid_argument("forensics: " + to_string(mode) + " at beta " + short_num(beta) +
                                    " has " + std::to_string(by_seed.size()) + " seeds, need at least 5");
      }
      auto& g = line.groups.emplace_back();
      for (const auto& kv : by_seed) g.push_back(kv.second);
    }
    line.test = kruskal_wallis(line.groups);
    out.push_back(std::move(line));
  }
  return out;
}

// --- SVG ---------------------------------------------------------------------------

namespace {

constexpr double kWidth = 720, kHeight = 440;
constexpr double kLeft = 80, kRight = 200, kTop = 40, kBottom = 60;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::vector<double> nice_ticks(double lo, double hi) {
  if (hi <= lo) hi = lo + 1.0;
  const double raw = (hi - lo) / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  }
  std::vector<double> t;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * step; v += step) t.push_back(std::abs(v) < 1e-12 * step ? 0.0 : v);
  return t;
}

struct Frame {
  double x0, x1, y0, y1;
  [[nodiscard]] double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  [[nodiscard]] double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

void open_svg(std::ostringstream& o, const std::string& title) {
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << num((kWidth - kRight + kLeft) / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
    << xml_escape(title) << "</text>\n";
}

void y_axis(std::ostringstream& o, const Frame& f, const std::string& label) {
  for (double t : nice_ticks(f.y0, f.y1)) {
    o << "<line x1=\"" << num(kLeft) << "\" x2=\"" << num(kWidth - kRight) << "\" y1=\"" << num(f.py(t))
      << "\" y2=\"" << num(f.py(t)) << "\" stroke=\"#e5e5e5\"/>\n"
      << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(f.py(t) + 4) << "\" text-anchor=\"end\">"
      << short_num(t) << "</text>\n";
  }
  o << "<line x1=\"" << num(kLeft) << "\" x2=\"" << num(kLeft) << "\" y1=\"" << num(kTop) << "\" y2=\""
    << num(kHeight - kBottom) << "\" stroke=\"black\"/>\n"
    << "<text transform=\"translate(18," << num((kHeight - kBottom + kTop) / 2)
    << ") rotate(-90)\" text-anchor=\"middle\">" << xml_escape(label) << "</text>\n";
}

std::pair<double, double> padded(double lo, double hi) {
  if (!(hi > lo)) {
    const double pad = std::max(1e-6, std::abs(lo) * 0.05 + 1e-3);
    return {lo - pad, hi + pad};
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

}  // namespace

std::string svg_line_plot(const PlotSpec& plot) {
  const auto tx = [&](double x) { return plot.log_x ? std::log10(x) : x; };
  double xl = std::numeric_limits<double>::infinity(), xh = -xl, yl = xl, yh = -xl;
  for (const auto& s : plot.series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i]) || (plot.log_x && s.x[i] <= 0)) continue;
      const double hw = s.half_width.empty() ? 0.0 : s.half_width[i];
      xl = std::min(xl, tx(s.x[i]));
      xh = std::max(xh, tx(s.x[i]));
      yl = std::min(yl, s.y[i] - hw);
      yh = std::max(yh, s.y[i] + hw);
    }
  }
  if (!std::isfinite(xl)) xl = 0, xh = 1, yl = 0, yh = 1;
  if (xh <= xl) xl -= 0.5, xh += 0.5;
  const auto [y0, y1] = padded(yl, yh);
  const Frame f{xl, xh, y0, y1};

  std::ostringstream o;
  open_svg(o, plot.title);
  y_axis(o, f, plot.y_label);
  std::vector<double> xticks;
  if (plot.log_x) {
    for (double e = std::ceil(xl - 1e-9); e <= xh + 1e-9; e += 1.0) xticks.push_back(e);
  } else {
    xticks = nice_ticks(xl, xh);
  }
  for (double t : xticks) {
    o << "<line x1=\"" << num(f.px(t)) << "\" x2=\"" << num(f.px(t)) << "\" y1=\"" << num(kHeight - kBottom)
      << "\" y2=\"" << num(kHeight - kBottom + 5) << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << num(f.px(t)) << "\" y=\"" << num(kHeight - kBottom + 18) << "\" text-anchor=\"middle\">"
      << (plot.log_x ? "1e" + short_num(t) : short_num(t)) << "</text>\n";
  }
  o << "<line x1=\"" << num(kLeft) << "\" x2=\"" << num(kWidth - kRight) << "\" y1=\"" << num(kHeight - kBottom)
    << "\" y2=\"" << num(kHeight - kBottom) << "\" stroke=\"black\"/>\n"
    << "<text x=\"" << num((kWidth - kRight + kLeft) / 2) << "\" y=\"" << num(kHeight - 18)
    << "\" text-anchor=\"middle\">" << xml_escape(plot.x_label) << "</text>\n";

  for (std::size_t si = 0; si < plot.series.size(); ++si) {
    const auto& s = plot.series[si];
    const char* color = kPalette[si % std::size(kPalette)];
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (std::isfinite(s.y[i]) && !(plot.log_x && s.x[i] <= 0)) idx.push_back(i);
    }
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return s.x[a] < s.x[b]; });
    if (!s.half_width.empty() && idx.size() > 1) {
      o << "<polygon fill=\"" << color << "\" fill-opacity=\"0.18\" stroke=\"none\" points=\"";
      for (auto i : idx) o << num(f.px(tx(s.x[i]))) << ',' << num(f.py(s.y[i] + s.half_width[i])) << ' ';
      for (auto it = idx.rbegin(); it != idx.rend(); ++it) {
        o << num(f.px(tx(s.x[*it]))) << ',' << num(f.py(s.y[*it] - s.half_width[*it])) << ' ';
      }
      o << "\"/>\n";
    }
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (auto i : idx) o << num(f.px(tx(s.x[i]))) << ',' << num(f.py(s.y[i])) << ' ';
    o << "\"/>\n";
    for (auto i : idx) {
      o << "<circle cx=\"" << num(f.px(tx(s.x[i]))) << "\" cy=\"" << num(f.py(s.y[i])) << "\" r=\"3\" fill=\""
        << color << "\"/>\n";
    }
    const double ly = kTop + 10 + 20.0 * static_cast<double>(si);
    o << "<line x1=\"" << num(kWidth - kRight + 15) << "\" x2=\"" << num(kWidth - kRight + 40) << "\" y1=\""
      << num(ly) << "\" y2=\"" << num(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
      << "<text x=\"" << num(kWidth - kRight + 46) << "\" y=\"" << num(ly + 4) << "\">" << xml_escape(s.label)
      << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

namespace {
double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}
}  // namespace

std::string svg_box_plot(const std::string& title, const std::string& y_label,
                         const std::vector<BoxGroup>& groups) {
  double yl = std::numeric_limits<double>::infinity(), yh = -yl;
  for (const auto& g : groups) {
    for (double v : g.values) {
      if (!std::isfinite(v)) continue;
      yl = std::min(yl, v);
      yh = std::max(yh, v);
    }
  }
  if (!std::isfinite(yl)) yl = 0, yh = 1;
  const auto [y0, y1] = padded(yl, yh);
  const Frame f{0.0, static_cast<double>(std::max<std::size_t>(groups.size(), 1)), y0, y1};
  std::ostringstream o;
  open_svg(o, title);
  y_axis(o, f, y_label);
  o << "<line x1=\"" << num(kLeft) << "\" x2=\"" << num(kWidth - kRight) << "\" y1=\"" << num(kHeight - kBottom)
    << "\" y2=\"" << num(kHeight - kBottom) << "\" stroke=\"black\"/>\n";
  const double slot = f.px(1.0) - f.px(0.0);
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    std::vector<double> v;
    for (double x : groups[gi].values) {
      if (std::isfinite(x)) v.push_back(x);
    }
    const double cx = f.px(static_cast<double>(gi) + 0.5);
    const char* color = kPalette[gi % std::size(kPalette)];
    o << "<text transform=\"translate(" << num(cx) << ',' << num(kHeight - kBottom + 14)
      << ") rotate(30)\" font-size=\"10\">" << xml_escape(groups[gi].label) << "</text>\n";
    if (v.empty()) continue;
    const double q1 = quantile(v, 0.25), med = quantile(v, 0.5), q3 = quantile(v, 0.75);
    const double iqr = q3 - q1;
    double lo = q3, hi = q1;
    for (double x : v) {
      if (x >= q1 - 1.5 * iqr) lo = std::min(lo, x);
      if (x <= q3 + 1.5 * iqr) hi = std::max(hi, x);
    }
    const double hw = std::min(18.0, 0.3 * slot);
    o << "<line x1=\"" << num(cx) << "\" x2=\"" << num(cx) << "\" y1=\"" << num(f.py(lo)) << "\" y2=\""
      << num(f.py(hi)) << "\" stroke=\"black\"/>\n"
      << "<rect x=\"" << num(cx - hw) << "\" y=\"" << num(f.py(q3)) << "\" width=\"" << num(2 * hw)
      << "\" height=\"" << num(std::max(0.5, f.py(q1) - f.py(q3))) << "\" fill=\"" << color
      << "\" fill-opacity=\"0.35\" stroke=\"black\"/>\n"
      << "<line x1=\"" << num(cx - hw) << "\" x2=\"" << num(cx + hw) << "\" y1=\"" << num(f.py(med))
      << "\" y2=\"" << num(f.py(med)) << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
    for (double x : v) {
      if (x < lo || x > hi) {
        o << "<circle cx=\"" << num(cx) << "\" cy=\"" << num(f.py(x)) << "\" r=\"2.5\" fill=\"none\" stroke=\"black\"/>\n";
      }
    }
  }
  o << "</svg>\n";
  return o.str();
}

// --- reports -------------------------------------------------------------------------

std::vector<SummaryRow> summarize(const std::vector<RunRow>& rows) {
  using Key = std::tuple<LossMode, double, double, double>;
  std::map<Key, std::array<std::vector<double>, 3>> cells;
  for (const auto& r : rows) {
    auto& c = cells[Key{r.at.mode, r.at.alpha, r.at.lambda, r.at.beta}];
    c[0].push_back(r.nsw);
    c[1].push_back(r.utilitarian);
    c[2].push_back(r.jain);
  }
  std::vector<SummaryRow> out;
  for (const auto& [k, c] : cells) {
    out.push_back({std::get<0>(k), std::get<1>(k), std::get<2>(k), std::get<3>(k), confidence_interval(c[0]),
                   confidence_interval(c[1]), confidence_interval(c[2])});
  }
  return out;
}

std::vector<fs::path> write_report(const fs::path& run_dir) {
  const fs::path csv = run_dir / "results.csv";
  auto rows = read_rows(csv);
  if (rows.empty()) throw std::runtime_error("no rows in " + csv.string());
  std::sort(rows.begin(), rows.end(), [](const RunRow& a, const RunRow& b) { return a.at.key() < b.at.key(); });
  const auto summary = summarize(rows);
  std::vector<fs::path> written;

  const fs::path sum_path = run_dir / "summary.csv";
  {
    std::ofstream out(sum_path);
    out << "mode,alpha,lambda,beta,seeds,nsw,nsw_ci,utilitarian,utilitarian_ci,jain,jain_ci\n";
    for (const auto& s : summary) {
      out << to_string(s.mode) << ',' << fmt(s.alpha) << ',' << fmt(s.lambda) << ',' << fmt(s.beta) << ','
          << s.nsw.n << ',' << fmt(s.nsw.mean) << ',' << fmt(s.nsw.half_width) << ',' << fmt(s.utilitarian.mean)
          << ',' << fmt(s.utilitarian.half_width) << ',' << fmt(s.jain.mean) << ',' << fmt(s.jain.half_width)
          << '\n';
    }
  }
  written.push_back(sum_path);

  const std::string env = rows.front().env;
  const auto emit = [&](const std::string& name, const std::string& metric,
                        const ConfidenceInterval SummaryRow::*field) {
    PlotSpec plot{env + ": " + metric + " vs beta", "beta", metric, true, {}};
    std::map<std::tuple<LossMode, double, double>, std::size_t> index;
    for (const auto& s : summary) {
      const auto key = std::make_tuple(s.mode, s.alpha, s.lambda);
      auto it = index.find(key);
      if (it == index.end()) {
        std::string label = to_string(s.mode) + " alpha=" + short_num(s.alpha);
        if (s.lambda != 0.0) label += " lambda=" + short_num(s.lambda);
        it = index.emplace(key, plot.series.size()).first;
        plot.series.push_back({label, {}, {}, {}});
      }
      auto& series = plot.series[it->second];
      series.x.push_back(s.beta);
      series.y.push_back((s.*field).mean);
      series.half_width.push_back((s.*field).half_width);
    }
    const fs::path p = run_dir / name;
    std::ofstream(p) << svg_line_plot(plot);
    written.push_back(p);
  };
  emit("nsw.svg", "NSW", &SummaryRow::nsw);
  emit("utilitarian.svg", "utilitarian welfare", &SummaryRow::utilitarian);
  emit("jain.svg", "Jain index", &SummaryRow::jain);

  std::vector<BoxGroup> boxes;
  std::map<std::tuple<LossMode, double, double, double>, std::size_t> bindex;
  for (const auto& r : rows) {
    bindex.emplace(std::make_tuple(r.at.mode, r.at.alpha, r.at.lambda, r.at.beta), 0);
  }
  std::size_t gi = 0;
  for (auto& [key, slot] : bindex) {
    slot = gi++;
    boxes.push_back({to_string(std::get<0>(key)) + " a=" + short_num(std::get<1>(key)) + " b=" +
                         short_num(std::get<3>(key)),
                     {}});
  }
  for (const auto& r : rows) {
    boxes[bindex.at(std::make_tuple(r.at.mode, r.at.alpha, r.at.lambda, r.at.beta))].values.push_back(r.nsw);
  }
  const fs::path box = run_dir / "nsw_box.svg";
  std::ofstream(box) << svg_box_plot(env + ": per-seed NSW", "NSW", boxes);
  written.push_back(box);
  return written;
}

void update_manifest(const fs::path& run_dir, const std::string& command, const std::vector<fs::path>& files) {
  fs::create_directories(run_dir);
  const fs::path path = run_dir / "manifest.json";
  json m = json::object();
  if (std::ifstream in(path); in) {
    try {
      m = json::parse(in);
    } catch (const json::parse_error&) {
      m = json::object();
    }
  }
  std::set<std::string> listed;
  if (m.contains("files")) {
    for (const auto& f : m["files"]) listed.insert(f.get<std::string>());
  }
  for (const auto& f : files) listed.insert(fs::relative(f, run_dir).generic_string());
  m["files"] = listed;
  const std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  m["commands"].push_back({{"command", command}, {"utc", stamp}});
  std::ofstream(path) << m.dump(2) << '\n';
}

}  // namespace fairdice::harness
