#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nidlab/rng.hpp"
#include "nidlab/tensor.hpp"

namespace nidlab {

// Slope layout of the 1-D grid. Peak: cells left of the apex roll left,
// the rest roll right. Valley: the reverse. Flat grids have no slope and
// host the stochastic mover instead.
enum class Orientation { Peak, Valley, Flat };

enum class Split { Train, Test };

// The grab variants carry the object co-located with the agent along with
// the agent's move. None is only legal in agent-free environments.
enum class Action : int {
  MoveLeftNoGrab = 0,
  MoveRightNoGrab = 1,
  MoveLeftGrab = 2,
  MoveRightGrab = 3,
  None = -1,
};

struct ObjectSpec {
  std::string name;
  bool rollable = false;
  // Restricts initial positions to cells left of the apex on the train
  // split; the test split lifts the restriction.
  bool train_left_only = false;
  bool is_agent = false;

  bool operator==(const ObjectSpec&) const = default;
};

struct EnvSpec {
  int D = 12;
  int apex = 6;
  Orientation orientation = Orientation::Peak;
  std::vector<ObjectSpec> objects;
  // Index of the object taking a uniformly random +-1 move each step.
  // Present exactly when the orientation is flat.
  std::optional<int> stochastic_mover;
  int horizon = 8;

  int n_objects() const { return static_cast<int>(objects.size()); }
  std::optional<int> agent_index() const;
  bool has_agent() const { return agent_index().has_value(); }
  int n_actions() const { return has_agent() ? 4 : 0; }

  // Throws ConfigError on an inconsistent specification.
  void validate() const;

  static EnvSpec inclined_plane(bool with_agent = false);
  static EnvSpec valley_plane(bool with_agent = false);
  static EnvSpec stochastic_plane();

  bool operator==(const EnvSpec&) const = default;
};

// One cell index per object, aligned with EnvSpec::objects. Sampled states
// never co-locate two non-agent objects; a grab may create such a state,
// and step() accepts it.
struct GridState {
  std::vector<int> pos;
  bool operator==(const GridState&) const = default;
};

// Roll direction (+1 or -1) at cell p. Flat orientations have no direction.
int direction_of(const EnvSpec& spec, int p);

// One transition. Phases: (1) agent moves one cell, clamped at the walls,
// carrying the lowest-index co-located object if grabbing; (2) every
// non-grabbed rollable object tries one downhill step, committing only onto
// a free in-bounds cell, left-movers in ascending position order first, then
// right-movers in descending order, so chains advance together; (3) the
// stochastic mover tries one step in a uniformly random direction. Carried
// objects skip phases 2 and 3. The agent never blocks a cell.
GridState step(const EnvSpec& spec, const GridState& s, Action a, Rng& rng);

// Deterministic core of step(); stoch_dir (+1 or -1) substitutes for the
// phase-3 direction draw and is ignored without a stochastic mover.
GridState step_core(const EnvSpec& spec, const GridState& s, Action a, int stoch_dir);

// Initial state: non-agent objects draw cells uniformly without replacement
// in index order, each from its own allowed set; the agent draws uniformly
// over the whole grid and may share a cell. Throws when an allowed set is
// exhausted.
GridState sample_initial(const EnvSpec& spec, Split split, Rng& rng);

// [n_objects, D] matrix of one-hot position rows.
Tensor to_state_tensor(const EnvSpec& spec, const GridState& s);

struct Episode {
  std::uint64_t seed = 0;
  EnvSpec spec;
  Split split = Split::Train;
  std::vector<Action> actions;     // length T; None entries iff agent-free
  std::vector<GridState> states;   // length T+1
};

// n episodes of spec.horizon steps. Agent environments draw uniformly random
// actions; agent-free ones record Action::None. Episode k is driven by a
// generator derived from (seed, k), so the list is stable under reordering.
std::vector<Episode> generate_episodes(const EnvSpec& spec, Split split, int n,
                                       std::uint64_t seed);

// Newline-delimited JSON with fixed key order
// {"seed","env","split","actions","positions"}; byte-stable output.
void write_episodes(std::ostream& os, const std::vector<Episode>& eps);
std::vector<Episode> read_episodes(std::istream& is);

std::string env_to_json(const EnvSpec& spec);

const char* orientation_name(Orientation o);
Orientation orientation_from_name(const std::string& s);
const char* split_name(Split s);
Split split_from_name(const std::string& s);

}  // namespace nidlab
