#include "nidlab/cli.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nidlab/error.hpp"
#include "nidlab/jsonio.hpp"
#include "nidlab/rng.hpp"

namespace nidlab {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string join_key(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

[[noreturn]] void bad_key(const std::string& path, const std::string& what) {
  throw ConfigError("config: \"" + path + "\": " + what);
}

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) known = known || it.key() == k;
    if (!known) throw ConfigError("config: unknown key \"" + join_key(path, it.key()) + "\"");
  }
}

const json& require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError("config: \"" + path + "\" must be an object");
  return j;
}

void read_int(const json& j, const std::string& path, const char* key, int& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_number_integer()) bad_key(join_key(path, key), "expected an integer");
  out = it->get<int>();
}

void read_double(const json& j, const std::string& path, const char* key, double& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_number()) bad_key(join_key(path, key), "expected a number");
  out = it->get<double>();
}

void read_bool(const json& j, const std::string& path, const char* key, bool& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_boolean()) bad_key(join_key(path, key), "expected true or false");
  out = it->get<bool>();
}

void read_string(const json& j, const std::string& path, const char* key, std::string& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_string()) bad_key(join_key(path, key), "expected a string");
  out = it->get<std::string>();
}

// Reruns a name lookup under the key's path so the error points into the file.
template <typename F>
auto lookup(const std::string& path, const std::string& s, F&& f) {
  try {
    return f(s);
  } catch (const ConfigError& e) {
    bad_key(path, e.what());
  }
}

std::vector<ObjectSpec> standard_roster(Orientation o) {
  if (o == Orientation::Flat)
    return {{"mover", false, false, false}, {"blocker", false, false, false}};
  return {{"red", false, false, false},
          {"green", true, false, false},
          {"purple", false, true, false},
          {"yellow", true, true, false}};
}

void parse_env_block(const json& j, RunConfig& c) {
  const json& je = require_object(j, "env");
  check_keys(je, "env", {"orientation", "D", "apex", "objects", "agent", "stochastic"});

  std::string ori = orientation_name(c.env.orientation);
  read_string(je, "env", "orientation", ori);
  c.env.orientation = lookup("env.orientation", ori, orientation_from_name);
  if (c.env.orientation == Orientation::Flat && je.find("apex") == je.end()) c.env.apex = 0;
  read_int(je, "env", "D", c.env.D);
  read_int(je, "env", "apex", c.env.apex);

  c.env.objects = standard_roster(c.env.orientation);
  if (auto it = je.find("objects"); it != je.end()) {
    if (it->is_string()) {
      if (it->get<std::string>() != "standard")
        bad_key("env.objects", "expected \"standard\" or an object list");
    } else if (it->is_array()) {
      c.env.objects.clear();
      for (std::size_t i = 0; i < it->size(); ++i) {
        const std::string path = "env.objects[" + std::to_string(i) + "]";
        const json& jo = require_object((*it)[i], path);
        check_keys(jo, path, {"name", "rollable", "train_left_only"});
        ObjectSpec o{"", false, false, false};
        read_string(jo, path, "name", o.name);
        if (o.name.empty()) bad_key(path + ".name", "every object needs a name");
        read_bool(jo, path, "rollable", o.rollable);
        read_bool(jo, path, "train_left_only", o.train_left_only);
        c.env.objects.push_back(o);
      }
    } else {
      bad_key("env.objects", "expected \"standard\" or an object list");
    }
  }

  bool agent = false;
  read_bool(je, "env", "agent", agent);
  if (agent) c.env.objects.push_back({"agent", false, false, true});

  // Flat grids need a stochastic mover and nothing else does, so the flag
  // defaults to the orientation; the mover is always the first object.
  bool stochastic = c.env.orientation == Orientation::Flat;
  read_bool(je, "env", "stochastic", stochastic);
  c.env.stochastic_mover = stochastic ? std::optional<int>(0) : std::nullopt;
}

void parse_model_block(const json& j, RunConfig& c) {
  const json& jm = require_object(j, "model");
  check_keys(jm, "model",
             {"kind", "K", "m", "d1", "dP", "dR", "S1", "S2", "H", "lambda1", "lambda2", "lr",
              "rho", "eps", "variant", "init", "hidden", "channels"});

  read_string(jm, "model", "kind", c.kind);
  if (c.kind != "nid" && c.kind != "mlp" && c.kind != "conv1" && c.kind != "conv3")
    bad_key("model.kind", "expected nid, mlp, conv1 or conv3");

  read_int(jm, "model", "K", c.hyper.K);
  read_int(jm, "model", "m", c.hyper.m);
  read_int(jm, "model", "d1", c.hyper.d1);
  read_int(jm, "model", "dP", c.hyper.dP);
  read_int(jm, "model", "dR", c.hyper.dR);
  read_int(jm, "model", "S1", c.hyper.S1);
  read_int(jm, "model", "S2", c.hyper.S2);
  read_int(jm, "model", "H", c.hyper.H);
  read_double(jm, "model", "lambda1", c.hyper.lambda1);
  read_double(jm, "model", "lambda2", c.hyper.lambda2);
  read_double(jm, "model", "lr", c.hyper.lr);
  read_double(jm, "model", "rho", c.hyper.rho);
  read_double(jm, "model", "eps", c.hyper.eps);

  std::string variant = variant_name(c.hyper.variant);
  read_string(jm, "model", "variant", variant);
  c.hyper.variant = lookup("model.variant", variant, variant_from_name);
  std::string init = init_name(c.hyper.init);
  read_string(jm, "model", "init", init);
  c.hyper.init = lookup("model.init", init, init_from_name);

  read_int(jm, "model", "hidden", c.hidden);
  read_int(jm, "model", "channels", c.channels);
  if (c.hidden < 1) bad_key("model.hidden", "must be at least 1");
  if (c.channels < 1) bad_key("model.channels", "must be at least 1");
}

void parse_train_block(const json& j, RunConfig& c) {
  const json& jt = require_object(j, "train");
  check_keys(jt, "train", {"steps", "seeds", "data"});
  read_int(jt, "train", "steps", c.hyper.steps);
  if (c.hyper.steps < 0) bad_key("train.steps", "must be nonnegative");
  if (auto it = jt.find("seeds"); it != jt.end()) {
    if (!it->is_array() || it->empty()) bad_key("train.seeds", "expected a nonempty list");
    c.seeds.clear();
    for (const json& s : *it) {
      if (!s.is_number_unsigned()) bad_key("train.seeds", "expected unsigned integers");
      c.seeds.push_back(s.get<std::uint64_t>());
    }
  }
  read_string(jt, "train", "data", c.data_path);
}

void parse_eval_block(const json& j, RunConfig& c) {
  const json& je = require_object(j, "eval");
  check_keys(je, "eval", {"n_rollouts", "horizon", "splits"});
  read_int(je, "eval", "n_rollouts", c.n_rollouts);
  if (c.n_rollouts < 1) bad_key("eval.n_rollouts", "must be at least 1");
  read_int(je, "eval", "horizon", c.eval_horizon);
  if (c.eval_horizon < 1) bad_key("eval.horizon", "must be at least 1");
  if (auto it = je.find("splits"); it != je.end()) {
    if (!it->is_array() || it->empty()) bad_key("eval.splits", "expected a nonempty list");
    c.eval_splits.clear();
    for (const json& s : *it) {
      if (!s.is_string()) bad_key("eval.splits", "expected split names");
      const Split sp = lookup("eval.splits", s.get<std::string>(), split_from_name);
      for (Split seen : c.eval_splits)
        if (seen == sp) bad_key("eval.splits", "duplicate split \"" + s.get<std::string>() + "\"");
      c.eval_splits.push_back(sp);
    }
  }
}

void parse_gen_block(const json& j, RunConfig& c) {
  const json& jg = require_object(j, "gen");
  check_keys(jg, "gen", {"episodes", "horizon", "split"});
  read_int(jg, "gen", "episodes", c.gen_episodes);
  if (c.gen_episodes < 0) bad_key("gen.episodes", "must be nonnegative");
  read_int(jg, "gen", "horizon", c.gen_horizon);
  if (c.gen_horizon < 1) bad_key("gen.horizon", "must be at least 1");
  std::string split = split_name(c.gen_split);
  read_string(jg, "gen", "split", split);
  c.gen_split = lookup("gen.split", split, split_from_name);
}

void parse_ablate_block(const json& j, RunConfig& c) {
  const json& ja = require_object(j, "ablate");
  check_keys(ja, "ablate", {"lambda1", "lambda2", "variants", "cells", "n_rollouts", "horizon"});

  auto read_lambdas = [&](const char* key, std::vector<double>& out) {
    auto it = ja.find(key);
    if (it == ja.end()) return;
    const std::string path = join_key("ablate", key);
    if (!it->is_array() || it->empty()) bad_key(path, "expected a nonempty list");
    out.clear();
    for (const json& v : *it) {
      if (!v.is_number()) bad_key(path, "expected numbers");
      if (v.get<double>() < 0) bad_key(path, "weights must be nonnegative");
      out.push_back(v.get<double>());
    }
  };
  read_lambdas("lambda1", c.ablate.lambda1);
  read_lambdas("lambda2", c.ablate.lambda2);

  if (auto it = ja.find("variants"); it != ja.end()) {
    if (!it->is_array() || it->empty()) bad_key("ablate.variants", "expected a nonempty list");
    c.ablate.variants.clear();
    for (const json& v : *it) {
      if (!v.is_string()) bad_key("ablate.variants", "expected variant names");
      c.ablate.variants.push_back(
          lookup("ablate.variants", v.get<std::string>(), variant_from_name));
    }
  }

  if (auto it = ja.find("cells"); it != ja.end()) {
    if (!it->is_array() || it->empty()) bad_key("ablate.cells", "expected a nonempty list");
    c.ablate.cells.clear();
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string path = "ablate.cells[" + std::to_string(i) + "]";
      const json& jc = require_object((*it)[i], path);
      check_keys(jc, path, {"init", "K", "seeds"});
      AblationCell cell;
      std::string init = init_name(cell.init);
      read_string(jc, path, "init", init);
      cell.init = lookup(path + ".init", init, init_from_name);
      auto kt = jc.find("K");
      if (kt == jc.end() || !kt->is_array() || kt->empty())
        bad_key(path + ".K", "expected a nonempty list of integers");
      for (const json& k : *kt) {
        if (!k.is_number_integer() || k.get<int>() < 1)
          bad_key(path + ".K", "expected positive integers");
        cell.K.push_back(k.get<int>());
      }
      int seeds = 1;
      read_int(jc, path, "seeds", seeds);
      if (seeds < 1) bad_key(path + ".seeds", "must be at least 1");
      cell.seeds = seeds;
      c.ablate.cells.push_back(cell);
    }
  }

  read_int(ja, "ablate", "n_rollouts", c.ablate.n_rollouts);
  if (c.ablate.n_rollouts < 1) bad_key("ablate.n_rollouts", "must be at least 1");
  read_int(ja, "ablate", "horizon", c.ablate.horizon);
  if (c.ablate.horizon < 1) bad_key("ablate.horizon", "must be at least 1");
}

std::string bool_json(bool b) { return b ? "true" : "false"; }

std::string read_text_file(const std::string& path, bool config) {
  std::ifstream f(path);
  if (!f) {
    const std::string msg = (config ? "config: " : "") + std::string("cannot open \"") + path + "\"";
    if (config) throw ConfigError(msg);
    throw Error(msg);
  }
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot write \"" + path + "\"");
  f << content;
  f.flush();
  if (!f) throw Error("short write to \"" + path + "\"");
}

std::string path_in(const RunConfig& c, const std::string& name) {
  return (fs::path(c.out_dir) / name).string();
}

std::string checkpoint_path(const RunConfig& c, std::uint64_t seed) {
  return path_in(c, "checkpoint_" + c.kind + "_seed" + std::to_string(seed) + ".json");
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::uint64_t parse_env_seed(const char* text) {
  const std::string s = text;
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ConfigError("NIDLAB_SEED: expected an unsigned integer, got \"" + s + "\"");
  return v;
}

const char* action_label(Action a) {
  switch (a) {
    case Action::MoveLeftNoGrab: return "left";
    case Action::MoveRightNoGrab: return "right";
    case Action::MoveLeftGrab: return "left+grab";
    case Action::MoveRightGrab: return "right+grab";
    default: return "none";
  }
}

int cmd_gen(const RunConfig& cfg, std::optional<Split> only, std::ostream& out) {
  const Split split = only.value_or(cfg.gen_split);
  const auto eps = generate_episodes(cfg.env, split, cfg.gen_episodes, cfg.seeds.front());
  std::ostringstream ss;
  write_episodes(ss, eps);
  const std::string path = path_in(cfg, std::string("episodes_") + split_name(split) + ".ndjson");
  write_text_file(path, ss.str());
  out << "wrote " << eps.size() << " " << split_name(split) << " episodes of "
      << cfg.env.horizon << " steps to " << path << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  TrainSpec ts;
  ts.kind = cfg.kind;
  ts.hyper = cfg.hyper;
  ts.hidden = cfg.hidden;
  ts.channels = cfg.channels;
  std::vector<Episode> dataset;
  if (!cfg.data_path.empty()) {
    std::ifstream f(cfg.data_path);
    if (!f) throw Error("episodes: cannot open \"" + cfg.data_path + "\"");
    dataset = read_episodes(f);
    ts.dataset = &dataset;
  }
  for (std::uint64_t seed : cfg.seeds) {
    const TrainedModel tm = train_model(ts, cfg.env, seed);
    write_text_file(checkpoint_path(cfg, seed), tm.checkpoint_json() + "\n");
    write_text_file(path_in(cfg, "curve_" + cfg.kind + "_seed" + std::to_string(seed) + ".csv"),
                    curve_csv(tm.curve));
    out << cfg.kind << " seed " << seed << ": " << cfg.hyper.steps << " steps";
    if (!tm.curve.bin_means.empty()) out << ", final bin loss " << fmt6(tm.curve.bin_means.back());
    out << "\n";
  }
  out << "wrote " << cfg.seeds.size() << " checkpoint(s) to " << cfg.out_dir << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, std::optional<Split> only, std::ostream& out) {
  std::vector<TrainedModel> models;
  for (std::uint64_t seed : cfg.seeds) {
    const std::string path = checkpoint_path(cfg, seed);
    models.push_back(checkpoint_from_json(read_text_file(path, false)));
    if (models.back().kind != cfg.kind)
      throw Error("checkpoint: \"" + path + "\" holds a " + models.back().kind + " model");
  }
  std::vector<Split> splits = cfg.eval_splits;
  if (only) splits = {*only};
  for (Split split : splits) {
    std::vector<RolloutReport> reports;
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
      const std::uint64_t stream =
          split == Split::Train ? streams::kEvalTrain : streams::kEvalTest;
      Rng rng(Rng::derive(cfg.seeds[i], stream));
      const auto model = models[i].predictor();
      reports.push_back(
          compound_rollout(*model, cfg.env, split, cfg.n_rollouts, cfg.eval_horizon, rng));
    }
    const std::string path =
        path_in(cfg, "rollout_" + cfg.kind + "_" + split_name(split) + ".csv");
    write_text_file(path, rollout_csv(reports, cfg.seeds, cfg.kind));
    const RolloutReport summary =
        reports.size() > 1 ? aggregate_reports(reports) : reports.front();
    out << cfg.kind << " " << split_name(split) << ": cumulative error "
        << fmt6(summary.mean_cumulative.back()) << " (std " << fmt6(summary.std_cumulative.back())
        << ") after " << cfg.eval_horizon << " steps over " << cfg.n_rollouts << " rollouts\n";
  }
  return 0;
}

int cmd_embed(const RunConfig& cfg, std::ostream& out) {
  if (cfg.kind != "nid")
    throw ConfigError("config: \"model.kind\": embeddings need a nid model, got " + cfg.kind);
  for (std::uint64_t seed : cfg.seeds) {
    const TrainedModel tm = checkpoint_from_json(read_text_file(checkpoint_path(cfg, seed), false));
    if (tm.kind != "nid")
      throw Error("checkpoint: expected a nid model, found " + tm.kind);
    const EmbeddingReport rep = embedding_report(*tm.nid, cfg.env);
    const std::string path = path_in(cfg, "embedding_nid_seed" + std::to_string(seed) + ".json");
    write_text_file(path, embedding_to_json(rep) + "\n");
    out << "seed " << seed << ": silhouette " << fmt6(rep.silhouette) << ", "
        << rep.points.size() << " points -> " << path << "\n";
  }
  return 0;
}

int cmd_ablate(const RunConfig& cfg, int jobs, std::ostream& out) {
  const std::string path = path_in(cfg, "ablation.ndjson");
  std::unordered_set<std::uint64_t> done;
  if (fs::exists(path)) {
    std::ifstream f(path);
    if (!f) throw Error("ablation: cannot open \"" + path + "\"");
    done = read_ablation_hashes(f);
  }
  std::ofstream sink(path, std::ios::app);
  if (!sink) throw Error("ablation: cannot append to \"" + path + "\"");
  if (jobs < 1) jobs = static_cast<int>(std::thread::hardware_concurrency());
  if (jobs < 1) jobs = 1;
  const int total = static_cast<int>(enumerate_grid(cfg.ablate).size());
  const int fresh =
      run_ablation_grid(cfg.ablate, cfg.env, done, jobs, [&](const AblationRecord& r) {
        sink << ablation_record_json(r) << "\n";
        sink.flush();
      });
  if (!sink) throw Error("ablation: short write to \"" + path + "\"");
  out << fresh << " new record(s), " << (total - fresh) << " already present -> " << path << "\n";
  return 0;
}

int cmd_check_grad(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const GradSweepResult res = gradient_sweep(120, cfg.seeds.front());
  out << "checked " << res.n_configs << " configurations: max relative error "
      << fmt6(res.max_rel_error) << "\n";
  if (!(res.max_rel_error <= 1e-4)) {
    err << "gradient check exceeded the 1e-4 budget\n";
    return 2;
  }
  return 0;
}

int cmd_render(const RunConfig& cfg, std::optional<Split> only, std::ostream& out) {
  const Split split = only.value_or(Split::Train);
  const std::uint64_t seed = cfg.seeds.front();
  const Episode ep = generate_episodes(cfg.env, split, 1, seed).front();

  out << "ground truth (" << split_name(split) << ", seed " << seed << ")\n";
  for (std::size_t t = 0; t < ep.states.size(); ++t) {
    out << "t=" << t;
    if (t > 0 && cfg.env.has_agent()) out << " action=" << action_label(ep.actions[t - 1]);
    out << "\n" << render_state(cfg.env, ep.states[t]);
  }

  const std::string cp = checkpoint_path(cfg, seed);
  if (!fs::exists(cp)) {
    out << "no checkpoint at " << cp << "; ground truth only\n";
    return 0;
  }
  const TrainedModel tm = checkpoint_from_json(read_text_file(cp, false));
  const auto model = tm.predictor();
  out << "model rollout (" << tm.kind << ", closed loop)\n";
  Tensor x = to_state_tensor(cfg.env, ep.states.front());
  out << "t=0\n" << render_distribution(cfg.env, x);
  for (std::size_t t = 0; t < ep.actions.size(); ++t) {
    x = model->predict(x, static_cast<int>(ep.actions[t]));
    out << "t=" << t + 1 << "\n" << render_distribution(cfg.env, x);
  }
  return 0;
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.env = EnvSpec::inclined_plane(false);
  c.env.horizon = c.gen_horizon;
  c.ablate = AblationGrid::full_grid();
  c.ablate.base = c.hyper;
  return c;
}

RunConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: the top level must be an object");
  check_keys(j, "", {"env", "model", "train", "eval", "gen", "ablate", "out"});

  RunConfig c = RunConfig::defaults();
  if (auto it = j.find("env"); it != j.end()) parse_env_block(*it, c);
  if (auto it = j.find("model"); it != j.end()) parse_model_block(*it, c);
  if (auto it = j.find("train"); it != j.end()) parse_train_block(*it, c);
  if (auto it = j.find("eval"); it != j.end()) parse_eval_block(*it, c);
  if (auto it = j.find("gen"); it != j.end()) parse_gen_block(*it, c);
  if (auto it = j.find("ablate"); it != j.end()) parse_ablate_block(*it, c);
  if (auto it = j.find("out"); it != j.end()) {
    if (!it->is_string() || it->get<std::string>().empty())
      bad_key("out", "expected a nonempty directory name");
    c.out_dir = it->get<std::string>();
  }

  c.env.horizon = c.gen_horizon;
  c.ablate.base = c.hyper;
  try {
    c.env.validate();
    c.hyper.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

std::string config_to_json(const RunConfig& c) {
  std::string s = "{\"env\":{\"orientation\":" + json_str(orientation_name(c.env.orientation)) +
                  ",\"D\":" + json_num(c.env.D) + ",\"apex\":" + json_num(c.env.apex) +
                  ",\"objects\":[";
  bool first = true;
  for (const ObjectSpec& o : c.env.objects) {
    if (o.is_agent) continue;
    if (!first) s += ",";
    first = false;
    s += "{\"name\":" + json_str(o.name) + ",\"rollable\":" + bool_json(o.rollable) +
         ",\"train_left_only\":" + bool_json(o.train_left_only) + "}";
  }
  s += "],\"agent\":" + bool_json(c.env.has_agent()) +
       ",\"stochastic\":" + bool_json(c.env.stochastic_mover.has_value()) + "}";

  s += ",\"model\":{\"kind\":" + json_str(c.kind) + ",\"K\":" + json_num(c.hyper.K) +
       ",\"m\":" + json_num(c.hyper.m) + ",\"d1\":" + json_num(c.hyper.d1) +
       ",\"dP\":" + json_num(c.hyper.dP) + ",\"dR\":" + json_num(c.hyper.dR) +
       ",\"S1\":" + json_num(c.hyper.S1) + ",\"S2\":" + json_num(c.hyper.S2) +
       ",\"H\":" + json_num(c.hyper.H) + ",\"lambda1\":" + json_num(c.hyper.lambda1) +
       ",\"lambda2\":" + json_num(c.hyper.lambda2) + ",\"lr\":" + json_num(c.hyper.lr) +
       ",\"rho\":" + json_num(c.hyper.rho) + ",\"eps\":" + json_num(c.hyper.eps) +
       ",\"variant\":" + json_str(variant_name(c.hyper.variant)) +
       ",\"init\":" + json_str(init_name(c.hyper.init)) + ",\"hidden\":" + json_num(c.hidden) +
       ",\"channels\":" + json_num(c.channels) + "}";

  s += ",\"train\":{\"steps\":" + json_num(c.hyper.steps) + ",\"seeds\":[";
  for (std::size_t i = 0; i < c.seeds.size(); ++i) {
    if (i) s += ",";
    s += json_num(static_cast<unsigned long long>(c.seeds[i]));
  }
  s += "],\"data\":" + json_str(c.data_path) + "}";

  s += ",\"eval\":{\"n_rollouts\":" + json_num(c.n_rollouts) +
       ",\"horizon\":" + json_num(c.eval_horizon) + ",\"splits\":[";
  for (std::size_t i = 0; i < c.eval_splits.size(); ++i) {
    if (i) s += ",";
    s += json_str(split_name(c.eval_splits[i]));
  }
  s += "]}";

  s += ",\"gen\":{\"episodes\":" + json_num(c.gen_episodes) +
       ",\"horizon\":" + json_num(c.gen_horizon) +
       ",\"split\":" + json_str(split_name(c.gen_split)) + "}";

  s += ",\"ablate\":{\"lambda1\":[";
  for (std::size_t i = 0; i < c.ablate.lambda1.size(); ++i) {
    if (i) s += ",";
    s += json_num(c.ablate.lambda1[i]);
  }
  s += "],\"lambda2\":[";
  for (std::size_t i = 0; i < c.ablate.lambda2.size(); ++i) {
    if (i) s += ",";
    s += json_num(c.ablate.lambda2[i]);
  }
  s += "],\"variants\":[";
  for (std::size_t i = 0; i < c.ablate.variants.size(); ++i) {
    if (i) s += ",";
    s += json_str(variant_name(c.ablate.variants[i]));
  }
  s += "],\"cells\":[";
  for (std::size_t i = 0; i < c.ablate.cells.size(); ++i) {
    const AblationCell& cell = c.ablate.cells[i];
    if (i) s += ",";
    s += "{\"init\":" + json_str(init_name(cell.init)) + ",\"K\":[";
    for (std::size_t k = 0; k < cell.K.size(); ++k) {
      if (k) s += ",";
      s += json_num(cell.K[k]);
    }
    s += "],\"seeds\":" + json_num(cell.seeds) + "}";
  }
  s += "],\"n_rollouts\":" + json_num(c.ablate.n_rollouts) +
       ",\"horizon\":" + json_num(c.ablate.horizon) + "}";

  s += ",\"out\":" + json_str(c.out_dir) + "}";
  return s;
}

std::string render_state(const EnvSpec& spec, const GridState& s) {
  if (static_cast<int>(s.pos.size()) != spec.n_objects())
    throw Error("render: state does not match the roster");
  std::string out;
  for (int o = 0; o < spec.n_objects(); ++o) {
    if (s.pos[o] < 0 || s.pos[o] >= spec.D) throw Error("render: position outside the grid");
    std::string line(static_cast<std::size_t>(spec.D), '.');
    line[static_cast<std::size_t>(s.pos[o])] = spec.objects[o].name.front();
    out += line;
    out += "\n";
  }
  return out;
}

std::string render_distribution(const EnvSpec& spec, const Tensor& x) {
  if (!(x.shape == Shape::mat(static_cast<std::size_t>(spec.n_objects()),
                              static_cast<std::size_t>(spec.D))))
    throw Error("render: distribution does not match the roster");
  std::string out;
  for (int o = 0; o < spec.n_objects(); ++o) {
    double best = x.at(static_cast<std::size_t>(o), 0);
    int ties = 1;
    int arg = 0;
    for (int p = 1; p < spec.D; ++p) {
      const double v = x.at(static_cast<std::size_t>(o), static_cast<std::size_t>(p));
      if (v > best) {
        best = v;
        arg = p;
        ties = 1;
      } else if (v == best) {
        ++ties;
      }
    }
    const char letter = spec.objects[o].name.front();
    const char lower = static_cast<char>(std::tolower(static_cast<unsigned char>(letter)));
    const char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(letter)));
    std::string line(static_cast<std::size_t>(spec.D), '.');
    for (int p = 0; p < spec.D; ++p) {
      const double v = x.at(static_cast<std::size_t>(o), static_cast<std::size_t>(p));
      if (p == arg && ties == 1)
        line[static_cast<std::size_t>(p)] = upper;
      else if (v >= 0.1)
        line[static_cast<std::size_t>(p)] = lower;
    }
    out += line;
    out += "\n";
  }
  return out;
}

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::string config_path;
  std::string out_override;
  std::string split_override;
  std::uint64_t seed_override = 0;
  int jobs = 0;

  CLI::App app{"factored grid-world transition models"};
  app.require_subcommand(1);
  auto add_common = [&](CLI::App* sub, bool with_split) {
    sub->add_option("--config", config_path, "JSON run configuration (defaults when omitted)");
    sub->add_option("--seed", seed_override, "replace the configured seed list with one seed");
    sub->add_option("--out", out_override, "output directory override");
    if (with_split)
      sub->add_option("--split", split_override, "restrict to one split")
          ->check(CLI::IsMember({"train", "test"}));
    return sub;
  };
  add_common(app.add_subcommand("gen", "sample episodes and write NDJSON"), true);
  add_common(app.add_subcommand("train", "train one model per seed"), false);
  add_common(app.add_subcommand("eval", "closed-loop rollout error of stored checkpoints"), true);
  add_common(app.add_subcommand("embed", "export encoder embeddings and cluster scores"), false);
  CLI::App* ablate =
      add_common(app.add_subcommand("ablate", "run the regularizer and capacity grid"), false);
  ablate->add_option("--jobs", jobs, "parallel workers (0 means all cores)");
  add_common(app.add_subcommand("check-grad", "finite-difference audit of all gradients"), false);
  add_common(app.add_subcommand("render", "print an episode and a model rollout as text"), true);

  // CLI11 consumes the argument vector back to front.
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return 1;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    const std::string cmd = sub->get_name();

    RunConfig cfg = RunConfig::defaults();
    if (!config_path.empty()) cfg = config_from_json(read_text_file(config_path, true));
    if (sub->count("--seed") > 0) {
      cfg.seeds = {seed_override};
    } else if (const char* env_seed = std::getenv("NIDLAB_SEED")) {
      cfg.seeds = {parse_env_seed(env_seed)};
    }
    if (!out_override.empty()) cfg.out_dir = out_override;
    std::optional<Split> only;
    if (!split_override.empty()) only = split_from_name(split_override);

    fs::create_directories(cfg.out_dir);
    write_text_file(path_in(cfg, "effective_config.json"), config_to_json(cfg) + "\n");

    if (cmd == "gen") return cmd_gen(cfg, only, out);
    if (cmd == "train") return cmd_train(cfg, out);
    if (cmd == "eval") return cmd_eval(cfg, only, out);
    if (cmd == "embed") return cmd_embed(cfg, out);
    if (cmd == "ablate") return cmd_ablate(cfg, jobs, out);
    if (cmd == "check-grad") return cmd_check_grad(cfg, out, err);
    return cmd_render(cfg, only, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace nidlab
