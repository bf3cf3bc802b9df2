#include "fairdice/harness.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

using namespace fairdice;
using namespace fairdice::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "fairdice_harness_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string without_time(RunRow row) {
  row.wall_seconds = 0.0;
  return to_csv(row);
}

fs::path four_rooms_dataset(const fs::path& dir) {
  DataRequest req;
  req.env = "four-rooms";
  req.trajectories = 100;
  req.seed = 7;
  const auto path = dir / "data.jsonl";
  write_dataset(generate_dataset(req), path);
  return path;
}

SweepSpec small_sweep(const fs::path& dir) {
  SweepSpec spec;
  spec.dataset = four_rooms_dataset(dir);
  spec.betas = {0.1, 1.0};
  spec.alphas = {0.0, 1.0};
  spec.seeds = {0, 1};
  spec.output_dir = dir / "run";
  return spec;
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("sections, comments and defaults") {
    const auto c = Config::parse(
        "top = 1\n"
        "# comment\n"
        "[sweep]\n"
        "betas = 0.1, 1 ; trailing comment\n"
        "  seeds=0-2  \n"
        "[data]\n"
        "env = group-fair\n");
    CHECK(c.get("", "top") == "1");
    CHECK(c.get("sweep", "betas") == "0.1, 1");
    CHECK(c.get("sweep", "seeds") == "0-2");
    CHECK(c.get("data", "env") == "group-fair");
    CHECK(c.get("data", "missing", "x") == "x");
    CHECK(c.get_double("sweep", "nothing", 2.5) == 2.5);
    CHECK(c.get_int("", "top", 0) == 1);
    CHECK_FALSE(c.has("sweep", "env"));
    CHECK_THROWS_AS(Config::parse("[broken\n"), std::invalid_argument);
    CHECK_THROWS_AS(Config::parse("novalue\n"), std::invalid_argument);
    CHECK_THROWS_AS(Config::parse(" = 3\n"), std::invalid_argument);
  }

  TEST_CASE("lists") {
    CHECK(parse_seed_list("0-3") == std::vector<std::uint64_t>{0, 1, 2, 3});
    CHECK(parse_seed_list("1,5,7-8") == std::vector<std::uint64_t>{1, 5, 7, 8});
    CHECK_THROWS_AS(parse_seed_list("3-1"), std::invalid_argument);
    CHECK_THROWS_AS(parse_seed_list("1.5"), std::invalid_argument);
    CHECK_THROWS_AS(parse_seed_list(""), std::invalid_argument);
    CHECK(parse_double_list("1e-3, 0.5,10") == std::vector<double>{1e-3, 0.5, 10.0});
    CHECK_THROWS_AS(parse_double_list("1, abc"), std::invalid_argument);
  }

  TEST_CASE("worker count honours the environment") {
    setenv("FAIRDICE_THREADS", "3", 1);
    CHECK(worker_count() == 3);
    setenv("FAIRDICE_THREADS", "zero", 1);
    CHECK(worker_count() >= 1);
    unsetenv("FAIRDICE_THREADS");
  }
}

TEST_SUITE("data and artifacts") {
  TEST_CASE("datasets remember how to rebuild their environment") {
    DataRequest req;
    req.env = "momdp";
    req.behavior = "optimal-mix";
    req.trajectories = 20;
    req.momdp.n_states = 12;
    req.seed = 4;
    const auto data = generate_dataset(req);
    const auto env = rebuild_tabular_env(data.meta);
    CHECK(env.n_states == 12);
    const auto again = rebuild_tabular_env(generate_dataset(req).meta);
    CHECK(env.p0 == again.p0);
    for (std::size_t i = 0; i < env.transitions.size(); ++i) {
      REQUIRE(env.transitions[i].size() == again.transitions[i].size());
      for (std::size_t j = 0; j < env.transitions[i].size(); ++j) {
        CHECK(env.transitions[i][j].next == again.transitions[i][j].next);
      }
    }
    req.env = "nowhere";
    CHECK_THROWS_AS(generate_dataset(req), std::invalid_argument);
  }

  TEST_CASE("tabular artifacts round-trip") {
    const auto dir = scratch("artifact");
    const auto data = read_dataset(four_rooms_dataset(dir));
    HyperParams hp;
    hp.beta = 0.5;
    const auto art = train_tabular(data, hp, LossMode::FairDice, {}, 3);
    write_tabular_artifact(art, dir / "a.json");
    CHECK_FALSE(is_binary_artifact(dir / "a.json"));
    const auto back = read_tabular_artifact(dir / "a.json");
    CHECK(back.policy.probs == art.policy.probs);
    CHECK(back.nu == art.nu);
    CHECK(back.mu == art.mu);
    CHECK(back.env_params == art.env_params);
    CHECK(back.hp.beta == 0.5);
  }
}

TEST_SUITE("sweeps") {
  TEST_CASE("csv rows round-trip") {
    RunRow row;
    row.env = "four-rooms";
    row.behavior = "uniform";
    row.at = {LossMode::FairDiceBuggy, 1.25, 1e-3, 1e-4, 9};
    row.nsw = -std::numeric_limits<double>::infinity();
    row.nonpositive = 2;
    row.returns = {0.1, 0.0, 1.0 / 3.0};
    row.wall_seconds = 1.5;
    const auto back = row_from_csv(to_csv(row));
    CHECK(to_csv(back) == to_csv(row));
    CHECK(back.returns[2] == 1.0 / 3.0);
    CHECK(back.at.key() == row.at.key());
  }

  TEST_CASE("interrupted sweeps resume to the same rows") {
    const auto dir = scratch("resume");
    auto spec = small_sweep(dir);
    const auto full = run_sweep(spec);
    CHECK(full.failed == 0);
    REQUIRE(full.rows.size() == 8);
    std::map<std::string, std::string> expected;
    for (const auto& r : full.rows) expected[r.at.key()] = without_time(r);

    // Keep the header and two rows, then a torn line as if the process died mid-write.
    const auto csv = spec.output_dir / "results.csv";
    std::istringstream in(slurp(csv));
    std::string line, kept;
    for (int i = 0; i < 3 && std::getline(in, line); ++i) kept += line + "\n";
    std::getline(in, line);
    kept += line.substr(0, line.size() / 2);
    std::ofstream(csv, std::ios::trunc) << kept;

    const auto resumed = run_sweep(spec);
    CHECK(resumed.skipped == 2);
    REQUIRE(resumed.rows.size() == 8);
    for (const auto& r : resumed.rows) CHECK(expected.at(r.at.key()) == without_time(r));
    CHECK(read_rows(csv).size() == 8);
  }

  TEST_CASE("reports regenerate byte for byte") {
    const auto dir = scratch("report");
    auto spec = small_sweep(dir);
    run_sweep(spec);
    const auto files = write_report(spec.output_dir);
    REQUIRE(files.size() == 5);
    std::map<fs::path, std::string> first;
    for (const auto& f : files) first[f] = slurp(f);
    for (const auto& f : write_report(spec.output_dir)) CHECK(slurp(f) == first.at(f));
    const auto svg = slurp(spec.output_dir / "nsw.svg");
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);

    update_manifest(spec.output_dir, "fairdice report", files);
    const auto manifest = slurp(spec.output_dir / "manifest.json");
    CHECK(manifest.find("summary.csv") != std::string::npos);
    CHECK(manifest.find("fairdice report") != std::string::npos);
  }

  TEST_CASE("forensics needs enough seeds and betas") {
    std::vector<RunRow> rows;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      for (double beta : {0.1, 1.0}) {
        RunRow r;
        r.at = {LossMode::FairDice, 1.0, beta, 1e-4, seed};
        r.nsw = static_cast<double>(seed) + beta;
        rows.push_back(r);
      }
    }
    CHECK_THROWS_AS(forensics(rows, 1.0, 1e-4), std::invalid_argument);
    for (std::uint64_t seed = 3; seed < 6; ++seed) {
      for (double beta : {0.1, 1.0}) {
        RunRow r;
        r.at = {LossMode::FairDice, 1.0, beta, 1e-4, seed};
        r.nsw = beta * 100.0 + static_cast<double>(seed);
        rows.push_back(r);
      }
    }
    const auto lines = forensics(rows, 1.0, 1e-4);
    REQUIRE(lines.size() == 1);
    CHECK(lines[0].groups.size() == 2);
    CHECK(lines[0].groups[0].size() == 6);
  }

  TEST_CASE("svg plots") {
    PlotSpec plot{"NSW", "beta", "nsw", true, {{"a", {0.1, 1, 10}, {1, 2, 3}, {0.1, 0.1, 0.1}}}};
    const auto svg = svg_line_plot(plot);
    CHECK(svg.find("<polyline") != std::string::npos);
    CHECK(svg.find("<polygon") != std::string::npos);
    CHECK(svg.find(">a<") != std::string::npos);
    const auto box = svg_box_plot("t", "y", {{"g1", {1, 2, 3, 4}}, {"g2", {2, 2}}});
    CHECK(box.find("g2") != std::string::npos);
  }
}

#ifdef FAIRDICE_CLI_PATH
TEST_SUITE("command line") {
  int run(const std::string& args) {
    const std::string cmd = std::string(FAIRDICE_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  TEST_CASE("exit codes") {
    const auto dir = scratch("cli");
    const auto data = (dir / "d.jsonl").string();
    CHECK(run("gen-data --env four-rooms --trajectories 50 --seed 1 --out " + data) == 0);
    CHECK(fs::exists(data));
    CHECK(run("train --data " + data + " --beta 0.5 --out " + (dir / "a.json").string()) == 0);
    CHECK(run("eval --artifact " + (dir / "a.json").string()) == 0);
    CHECK(run("gen-data --env mars --out " + data) == 2);
    CHECK(run("train --data " + data + " --beta -1") == 2);
    CHECK(run("train") == 2);
    CHECK(run("sweep --data " + data + " --betas 0.1,1 --seeds 0-2 --out " + (dir / "run").string()) == 0);
    CHECK(run("forensics --data " + data + " --betas 0.1,1 --seeds 0-2 --out " + (dir / "f").string()) == 2);
    CHECK(run("report " + (dir / "run").string()) == 0);
    CHECK(fs::exists(dir / "run" / "summary.csv"));
    CHECK(run("no-such-command") == 2);
  }
}
#endif
