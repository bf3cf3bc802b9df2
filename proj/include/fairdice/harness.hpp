#pragma once

// Experiment plumbing behind the command-line tool: key-value config files,
// dataset recipes, sweeps over (mode, alpha, beta, lambda, seed) with a
// resumable CSV, Kruskal-Wallis forensics across beta, and SVG reports.

#include "fairdice/dataset.hpp"
#include "fairdice/tabular.hpp"
#include "fairdice/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fairdice::harness {

// --- config files ----------------------------------------------------------

/// INI-style "[section]" + "key = value" text; '#' and ';' start comments.
/// Keys before the first section live in section "".
class Config {
 public:
  static Config parse(const std::string& text);
  static Config load(const std::filesystem::path& path);

  [[nodiscard]] bool has(const std::string& section, const std::string& key) const;
  [[nodiscard]] std::string get(const std::string& section, const std::string& key,
                                const std::string& fallback = "") const;
  [[nodiscard]] double get_double(const std::string& section, const std::string& key,
                                  double fallback) const;
  [[nodiscard]] long long get_int(const std::string& section, const std::string& key,
                                  long long fallback) const;
  void set(const std::string& section, const std::string& key, std::string value);
  [[nodiscard]] const std::map<std::string, std::map<std::string, std::string>>& sections() const {
    return values_;
  }

 private:
  std::map<std::string, std::map<std::string, std::string>> values_;
};

std::vector<double> parse_double_list(const std::string& text);
std::vector<std::uint64_t> parse_seed_list(const std::string& text);  // "0-9" or "1,2,5"
std::vector<std::string> split(const std::string& text, char sep);

// --- datasets --------------------------------------------------------------

struct DataRequest {
  std::string env = "four-rooms";  // four-rooms | momdp | group-fair
  std::string behavior = "uniform";  // uniform | optimal-mix | biased | random | util-optim | fair
  double stochasticity = 0.1;
  double optimality = 0.5;
  std::vector<double> goal_mix{0.8, 0.1, 0.1};
  std::size_t trajectories = 1000;
  std::size_t horizon = 200;
  double continue_probability = 1.0;
  RandomMomdpConfig momdp;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Builds the environment and collects a dataset; env_params in the
/// metadata record everything needed to rebuild the environment.
TransitionDataset generate_dataset(const DataRequest& request);

/// Rebuilds a tabular environment from dataset metadata.
TabularMOMDP rebuild_tabular_env(const DatasetMeta& meta);

GroupFairEval groupfair_eval_setup(std::size_t n_rollouts, ActionSelection selection);

// --- tabular artifacts -----------------------------------------------------

struct TabularArtifact {
  std::string env_id;
  std::map<std::string, double> env_params;
  double env_gamma = 0.99;
  HyperParams hp;
  LossMode mode = LossMode::FairDice;
  std::uint64_t seed = 0;
  std::vector<double> nu;
  std::vector<double> mu;
  TabularPolicy policy;
  SolveTrace trace;
};

TabularArtifact train_tabular(const TransitionDataset& data, const HyperParams& hp, LossMode mode,
                              const SolveOptions& options, std::uint64_t seed);
void write_tabular_artifact(const TabularArtifact& artifact, const std::filesystem::path& path);
TabularArtifact read_tabular_artifact(const std::filesystem::path& path);
/// True when the file starts with the binary artifact magic.
bool is_binary_artifact(const std::filesystem::path& path);

// --- sweeps ----------------------------------------------------------------

struct SweepSpec {
  std::filesystem::path dataset;            // used unless regenerate_per_seed
  std::optional<DataRequest> data_request;  // regenerated for every seed when set
  std::vector<LossMode> modes{LossMode::FairDice};
  std::vector<double> alphas{1.0};
  std::vector<double> betas{1.0};
  std::vector<double> lambdas{1e-4};
  std::vector<std::uint64_t> seeds{0};
  std::size_t rollouts = 100;
  ActionSelection selection = ActionSelection::Greedy;
  TrainConfig train;   // iterations, batch, widths, lr for learned policies
  SolveOptions solve;  // tabular solver settings
  std::filesystem::path output_dir = "runs/sweep";

  void validate() const;
};

struct Coordinate {
  LossMode mode = LossMode::FairDice;
  double alpha = 1.0;
  double beta = 1.0;
  double lambda = 0.0;
  std::uint64_t seed = 0;

  [[nodiscard]] std::string key() const;
};

struct RunRow {
  std::string env;
  std::string behavior;
  Coordinate at;
  double nsw = 0.0;
  double nsw_ci = 0.0;
  double utilitarian = 0.0;
  double utilitarian_ci = 0.0;
  double jain = 0.0;
  double jain_ci = 0.0;
  std::size_t nonpositive = 0;
  std::vector<double> returns;  // mean per-objective return
  double wall_seconds = 0.0;
};

/// Every (mode, alpha, beta, lambda, seed) combination of the spec, in a fixed order.
std::vector<Coordinate> sweep_coordinates(const SweepSpec& spec);

/// Trains and evaluates one cell. Tabular data uses the full-batch solver and
/// exact discounted returns; GroupFair data uses the minibatch trainer and
/// undiscounted rollout returns.
RunRow run_cell(const TransitionDataset& data, const SweepSpec& spec, const Coordinate& at);

/// Seed-specific dataset: the spec's file, or a regenerated one.
TransitionDataset sweep_dataset(const SweepSpec& spec, std::uint64_t seed);

std::string csv_header();
std::string to_csv(const RunRow& row);
RunRow row_from_csv(const std::string& line);
std::vector<RunRow> read_rows(const std::filesystem::path& csv);

/// Worker count from FAIRDICE_THREADS (default: hardware concurrency, at least 1).
std::size_t worker_count();

struct SweepResult {
  std::vector<RunRow> rows;  // completed rows, including those found on disk
  std::size_t skipped = 0;   // rows already present before this call
  std::size_t failed = 0;
  std::vector<std::string> errors;
};

/// Runs every missing cell, appending rows to output_dir/results.csv as they
/// finish. Existing rows are kept, so an interrupted sweep resumes.
SweepResult run_sweep(const SweepSpec& spec, const std::function<void(const RunRow&)>& on_row = {});

// --- forensics -------------------------------------------------------------

struct ForensicsLine {
  LossMode mode = LossMode::FairDice;
  KruskalWallis test;
  std::vector<std::vector<double>> groups;  // NSW per seed, one group per beta
  [[nodiscard]] bool beta_sensitive(double level = 0.05) const { return test.p < level; }
};

/// Kruskal-Wallis across beta groups of per-seed NSW, for each mode.
/// Throws std::invalid_argument with fewer than 5 seeds or 2 betas.
std::vector<ForensicsLine> forensics(const std::vector<RunRow>& rows, double alpha, double lambda);

// --- reports ---------------------------------------------------------------

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> half_width;  // 95% band, may be empty
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  std::vector<Series> series;
};

std::string svg_line_plot(const PlotSpec& plot);

struct BoxGroup {
  std::string label;
  std::vector<double> values;
};
std::string svg_box_plot(const std::string& title, const std::string& y_label,
                         const std::vector<BoxGroup>& groups);

/// One summary line per (mode, alpha, lambda, beta): mean and 95% CI over seeds.
struct SummaryRow {
  LossMode mode;
  double alpha, lambda, beta;
  ConfidenceInterval nsw, utilitarian, jain;
};
std::vector<SummaryRow> summarize(const std::vector<RunRow>& rows);

/// Writes summary.csv, nsw.svg, utilitarian.svg, jain.svg and nsw_box.svg
/// next to results.csv. Output depends only on the CSV contents.
std::vector<std::filesystem::path> write_report(const std::filesystem::path& run_dir);

/// Records a file list and the producing command in run_dir/manifest.json.
void update_manifest(const std::filesystem::path& run_dir, const std::string& command,
                     const std::vector<std::filesystem::path>& files);

}  // namespace fairdice::harness
