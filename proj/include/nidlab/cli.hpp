#pragma once

// Command-line surface: the run-configuration schema, ASCII rendering, and
// the subcommand driver behind the executable.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "nidlab/env.hpp"
#include "nidlab/harness.hpp"
#include "nidlab/model.hpp"

namespace nidlab {

// Fully expanded run configuration. Parsing bakes every default in, so
// serializing and reparsing an instance reproduces it byte for byte.
struct RunConfig {
  EnvSpec env;
  std::string kind = "nid";
  Hyper hyper;
  int hidden = 128;
  int channels = 16;
  std::vector<std::uint64_t> seeds = {0};
  std::string data_path;  // optional fixed training dataset (episode NDJSON)
  int n_rollouts = 100;
  int eval_horizon = 8;
  std::vector<Split> eval_splits = {Split::Train, Split::Test};
  int gen_episodes = 100;
  int gen_horizon = 8;
  Split gen_split = Split::Train;
  AblationGrid ablate;
  std::string out_dir = "out";

  static RunConfig defaults();
};

// Throws ConfigError naming the offending key path on unknown keys, type
// mismatches, and inconsistent values.
RunConfig config_from_json(const std::string& text);
std::string config_to_json(const RunConfig& c);

// One line per object: '.' cells with the object's initial letter at its
// position.
std::string render_state(const EnvSpec& spec, const GridState& s);

// Distribution rows: a unique argmax cell prints uppercase; every other cell
// holding at least 0.1 mass prints lowercase; ties leave no uppercase.
std::string render_distribution(const EnvSpec& spec, const Tensor& x);

// Dispatches gen | train | eval | embed | ablate | check-grad | render.
// args excludes the program name. Returns 0 on success, 1 on usage or
// configuration errors, 2 on runtime failures.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nidlab
