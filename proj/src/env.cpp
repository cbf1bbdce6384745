#include "nidlab/env.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "nidlab/error.hpp"
#include "nidlab/jsonio.hpp"

namespace nidlab {

std::optional<int> EnvSpec::agent_index() const {
  for (int i = 0; i < n_objects(); ++i)
    if (objects[i].is_agent) return i;
  return std::nullopt;
}

void EnvSpec::validate() const {
  if (D < 2) throw ConfigError("env: D must be at least 2");
  if (horizon < 1) throw ConfigError("env: horizon must be at least 1");
  if (objects.empty()) throw ConfigError("env: needs at least one object");
  const bool flat = orientation == Orientation::Flat;
  if (!flat && (apex <= 0 || apex >= D))
    throw ConfigError("env: apex must lie strictly inside (0, D)");
  if (flat != stochastic_mover.has_value())
    throw ConfigError("env: flat orientation and stochastic_mover go together");
  int agents = 0;
  for (int i = 0; i < n_objects(); ++i) {
    const ObjectSpec& o = objects[i];
    if (o.name.empty()) throw ConfigError("env: object " + std::to_string(i) + " has no name");
    for (int j = 0; j < i; ++j)
      if (objects[j].name == o.name)
        throw ConfigError("env: duplicate object name \"" + o.name + "\"");
    if (o.is_agent) {
      ++agents;
      if (o.rollable) throw ConfigError("env: the agent cannot be rollable");
      if (o.train_left_only)
        throw ConfigError("env: the agent cannot be split-restricted");
    }
    if (flat && o.rollable)
      throw ConfigError("env: flat environments have no roll direction for \"" + o.name + "\"");
    if (flat && o.train_left_only)
      throw ConfigError("env: flat environments have no apex to restrict \"" + o.name + "\"");
  }
  if (agents > 1) throw ConfigError("env: at most one agent");
  if (stochastic_mover) {
    const int m = *stochastic_mover;
    if (m < 0 || m >= n_objects())
      throw ConfigError("env: stochastic_mover index out of range");
    if (objects[m].is_agent) throw ConfigError("env: the agent cannot be the stochastic mover");
  }
}

EnvSpec EnvSpec::inclined_plane(bool with_agent) {
  EnvSpec e;
  e.objects = {
      {"red", false, false, false},
      {"green", true, false, false},
      {"purple", false, true, false},
      {"yellow", true, true, false},
  };
  if (with_agent) e.objects.push_back({"agent", false, false, true});
  return e;
}

EnvSpec EnvSpec::valley_plane(bool with_agent) {
  EnvSpec e = inclined_plane(with_agent);
  e.orientation = Orientation::Valley;
  return e;
}

EnvSpec EnvSpec::stochastic_plane() {
  EnvSpec e;
  e.orientation = Orientation::Flat;
  e.apex = 0;
  e.objects = {
      {"mover", false, false, false},
      {"blocker", false, false, false},
  };
  e.stochastic_mover = 0;
  return e;
}

int direction_of(const EnvSpec& spec, int p) {
  if (p < 0 || p >= spec.D)
    throw Error("direction_of: position " + std::to_string(p) + " outside grid of size " +
                std::to_string(spec.D));
  if (spec.orientation == Orientation::Flat) return 0;
  if (spec.orientation == Orientation::Peak) return p < spec.apex ? -1 : +1;
  return p < spec.apex ? +1 : -1;
}

namespace {

bool occupied_by_other(const EnvSpec& spec, const std::vector<int>& pos, int self, int cell) {
  for (int j = 0; j < spec.n_objects(); ++j)
    if (j != self && !spec.objects[j].is_agent && pos[j] == cell) return true;
  return false;
}

void check_state(const EnvSpec& spec, const GridState& s) {
  if (static_cast<int>(s.pos.size()) != spec.n_objects())
    throw Error("step: state has " + std::to_string(s.pos.size()) + " positions for " +
                std::to_string(spec.n_objects()) + " objects");
  for (int p : s.pos)
    if (p < 0 || p >= spec.D)
      throw Error("step: position " + std::to_string(p) + " outside grid of size " +
                  std::to_string(spec.D));
}

}  // namespace

GridState step_core(const EnvSpec& spec, const GridState& s, Action a, int stoch_dir) {
  check_state(spec, s);
  const std::optional<int> agent = spec.agent_index();
  if (agent.has_value() && a == Action::None)
    throw Error("step: agent environments need an action");
  if (!agent.has_value() && a != Action::None)
    throw Error("step: agent-free environments take Action::None");

  std::vector<int> pos = s.pos;
  std::vector<bool> carried(pos.size(), false);

  if (agent) {
    const int ai = *agent;
    const int dir = (a == Action::MoveLeftNoGrab || a == Action::MoveLeftGrab) ? -1 : +1;
    const bool grab = (a == Action::MoveLeftGrab || a == Action::MoveRightGrab);
    const int from = pos[ai];
    pos[ai] = std::clamp(from + dir, 0, spec.D - 1);
    if (grab) {
      for (int i = 0; i < spec.n_objects(); ++i) {
        if (i == ai || s.pos[i] != from) continue;
        // Carried objects may land on occupied cells.
        pos[i] = pos[ai];
        carried[i] = true;
        break;
      }
    }
  }

  if (spec.orientation != Orientation::Flat) {
    std::vector<int> left, right;
    for (int i = 0; i < spec.n_objects(); ++i) {
      if (!spec.objects[i].rollable || carried[i] || spec.objects[i].is_agent) continue;
      (direction_of(spec, pos[i]) < 0 ? left : right).push_back(i);
    }
    std::stable_sort(left.begin(), left.end(), [&](int x, int y) { return pos[x] < pos[y]; });
    std::stable_sort(right.begin(), right.end(), [&](int x, int y) { return pos[x] > pos[y]; });
    auto roll = [&](int i, int dir) {
      const int dest = pos[i] + dir;
      if (dest >= 0 && dest < spec.D && !occupied_by_other(spec, pos, i, dest)) pos[i] = dest;
    };
    for (int i : left) roll(i, -1);
    for (int i : right) roll(i, +1);
  }

  if (spec.stochastic_mover) {
    const int m = *spec.stochastic_mover;
    if (!carried[m]) {
      if (stoch_dir != -1 && stoch_dir != 1) throw Error("step: stochastic direction must be +-1");
      const int dest = pos[m] + stoch_dir;
      if (dest >= 0 && dest < spec.D && !occupied_by_other(spec, pos, m, dest)) pos[m] = dest;
    }
  }

  return GridState{std::move(pos)};
}

GridState step(const EnvSpec& spec, const GridState& s, Action a, Rng& rng) {
  int dir = 1;
  if (spec.stochastic_mover) dir = rng.coin() ? 1 : -1;
  return step_core(spec, s, a, dir);
}

GridState sample_initial(const EnvSpec& spec, Split split, Rng& rng) {
  std::vector<int> pos(spec.n_objects(), -1);
  std::vector<bool> taken(spec.D, false);
  std::vector<int> allowed;
  for (int i = 0; i < spec.n_objects(); ++i) {
    if (spec.objects[i].is_agent) continue;
    const bool restricted = split == Split::Train && spec.objects[i].train_left_only;
    const int hi = restricted ? spec.apex : spec.D;
    allowed.clear();
    for (int c = 0; c < hi; ++c)
      if (!taken[c]) allowed.push_back(c);
    if (allowed.empty())
      throw Error("sample_initial: no free cell left for object \"" + spec.objects[i].name + "\"");
    const int c = allowed[rng.uniform_int(static_cast<int>(allowed.size()))];
    pos[i] = c;
    taken[c] = true;
  }
  if (auto ai = spec.agent_index()) pos[*ai] = rng.uniform_int(spec.D);
  return GridState{std::move(pos)};
}

Tensor to_state_tensor(const EnvSpec& spec, const GridState& s) {
  check_state(spec, s);
  Tensor t(Shape::mat(spec.n_objects(), spec.D));
  for (int i = 0; i < spec.n_objects(); ++i) t.at(i, s.pos[i]) = 1.0;
  return t;
}

std::vector<Episode> generate_episodes(const EnvSpec& spec, Split split, int n,
                                       std::uint64_t seed) {
  spec.validate();
  if (n < 0) throw Error("generate_episodes: negative episode count");
  const bool agent = spec.has_agent();
  std::vector<Episode> out;
  out.reserve(n);
  for (int k = 0; k < n; ++k) {
    Episode ep;
    ep.seed = Rng::derive(seed, static_cast<std::uint64_t>(k));
    ep.spec = spec;
    ep.split = split;
    Rng rng(ep.seed);
    GridState s = sample_initial(spec, split, rng);
    ep.states.push_back(s);
    for (int t = 0; t < spec.horizon; ++t) {
      const Action a = agent ? static_cast<Action>(rng.uniform_int(4)) : Action::None;
      s = step(spec, s, a, rng);
      ep.actions.push_back(a);
      ep.states.push_back(s);
    }
    out.push_back(std::move(ep));
  }
  return out;
}

std::string env_to_json(const EnvSpec& spec) {
  std::string s = "{\"D\":" + json_num(spec.D) + ",\"apex\":" + json_num(spec.apex) +
                  ",\"orientation\":" + json_str(orientation_name(spec.orientation)) +
                  ",\"objects\":[";
  for (int i = 0; i < spec.n_objects(); ++i) {
    const ObjectSpec& o = spec.objects[i];
    if (i) s += ',';
    s += "{\"id\":" + json_num(i) + ",\"name\":" + json_str(o.name) +
         ",\"rollable\":" + (o.rollable ? "true" : "false") +
         ",\"train_left_only\":" + (o.train_left_only ? "true" : "false") +
         ",\"is_agent\":" + (o.is_agent ? "true" : "false") + "}";
  }
  s += "],\"stochastic_mover\":";
  s += spec.stochastic_mover ? json_num(*spec.stochastic_mover) : "null";
  s += ",\"horizon\":" + json_num(spec.horizon) + "}";
  return s;
}

static EnvSpec env_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error("episode file: env must be an object");
  EnvSpec spec;
  spec.D = j.at("D").get<int>();
  spec.apex = j.at("apex").get<int>();
  spec.orientation = orientation_from_name(j.at("orientation").get<std::string>());
  spec.horizon = j.at("horizon").get<int>();
  if (!j.at("stochastic_mover").is_null())
    spec.stochastic_mover = j.at("stochastic_mover").get<int>();
  for (const auto& jo : j.at("objects")) {
    ObjectSpec o;
    o.name = jo.at("name").get<std::string>();
    o.rollable = jo.at("rollable").get<bool>();
    o.train_left_only = jo.at("train_left_only").get<bool>();
    o.is_agent = jo.at("is_agent").get<bool>();
    spec.objects.push_back(std::move(o));
  }
  spec.validate();
  return spec;
}

void write_episodes(std::ostream& os, const std::vector<Episode>& eps) {
  for (const Episode& ep : eps) {
    os << "{\"seed\":" << json_num(static_cast<unsigned long long>(ep.seed))
       << ",\"env\":" << env_to_json(ep.spec) << ",\"split\":" << json_str(split_name(ep.split))
       << ",\"actions\":[";
    for (std::size_t i = 0; i < ep.actions.size(); ++i) {
      if (i) os << ',';
      os << static_cast<int>(ep.actions[i]);
    }
    os << "],\"positions\":[";
    for (std::size_t t = 0; t < ep.states.size(); ++t) {
      if (t) os << ',';
      os << '[';
      for (std::size_t i = 0; i < ep.states[t].pos.size(); ++i) {
        if (i) os << ',';
        os << ep.states[t].pos[i];
      }
      os << ']';
    }
    os << "]}\n";
  }
}

std::vector<Episode> read_episodes(std::istream& is) {
  std::vector<Episode> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw Error("episode file: bad JSON on line " + std::to_string(lineno));
    Episode ep;
    try {
      ep.seed = j.at("seed").get<std::uint64_t>();
      ep.spec = env_from_json(j.at("env"));
      ep.split = split_from_name(j.at("split").get<std::string>());
      for (const auto& ja : j.at("actions")) {
        const int v = ja.get<int>();
        if (v < -1 || v > 3) throw Error("bad action " + std::to_string(v));
        ep.actions.push_back(static_cast<Action>(v));
      }
      for (const auto& js : j.at("positions")) {
        GridState s;
        for (const auto& jp : js) s.pos.push_back(jp.get<int>());
        ep.states.push_back(std::move(s));
      }
      if (ep.states.size() != ep.actions.size() + 1)
        throw Error("action/state length mismatch");
    } catch (const std::exception& e) {
      throw Error("episode file: line " + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(std::move(ep));
  }
  return out;
}

const char* orientation_name(Orientation o) {
  switch (o) {
    case Orientation::Peak: return "peak";
    case Orientation::Valley: return "valley";
    default: return "flat";
  }
}

Orientation orientation_from_name(const std::string& s) {
  if (s == "peak") return Orientation::Peak;
  if (s == "valley") return Orientation::Valley;
  if (s == "flat") return Orientation::Flat;
  throw ConfigError("unknown orientation \"" + s + "\"");
}

const char* split_name(Split s) { return s == Split::Train ? "train" : "test"; }

Split split_from_name(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw ConfigError("unknown split \"" + s + "\"");
}

}  // namespace nidlab
