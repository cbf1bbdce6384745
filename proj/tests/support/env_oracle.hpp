#pragma once

// Brute-force reference for one environment transition, kept deliberately
// independent of the library's step(): the rolling phase is solved by
// enumerating every subset of candidate movers and keeping the unique subset
// consistent with the ordered commitment rules, instead of committing moves
// in place.

#include <cstddef>
#include <vector>

#include "nidlab/env.hpp"
#include "nidlab/error.hpp"

namespace nidlab::testing {

inline GridState oracle_step(const EnvSpec& spec, const GridState& s, Action a, int stoch_dir) {
  const int n = spec.n_objects();
  std::vector<int> pos = s.pos;
  std::vector<bool> carried(n, false);

  int ai = -1;
  for (int i = 0; i < n; ++i)
    if (spec.objects[i].is_agent) ai = i;

  if (ai >= 0) {
    const int dir = (a == Action::MoveLeftNoGrab || a == Action::MoveLeftGrab) ? -1 : 1;
    const int from = pos[ai];
    int to = from + dir;
    if (to < 0) to = 0;
    if (to > spec.D - 1) to = spec.D - 1;
    pos[ai] = to;
    if (a == Action::MoveLeftGrab || a == Action::MoveRightGrab) {
      for (int i = 0; i < n; ++i) {
        if (i == ai || s.pos[i] != from) continue;
        pos[i] = to;
        carried[i] = true;
        break;
      }
    }
  }

  auto blocked = [&](const std::vector<int>& cur, int self, int cell) {
    for (int j = 0; j < n; ++j)
      if (j != self && !spec.objects[j].is_agent && cur[j] == cell) return true;
    return false;
  };

  if (spec.orientation != Orientation::Flat) {
    std::vector<int> order;
    std::vector<int> dir(n, 0);
    for (int i = 0; i < n; ++i) {
      if (spec.objects[i].is_agent || !spec.objects[i].rollable || carried[i]) continue;
      dir[i] = direction_of(spec, pos[i]);
    }
    // Left movers by ascending position, then right movers by descending.
    for (int c = 0; c < spec.D; ++c)
      for (int i = 0; i < n; ++i)
        if (dir[i] == -1 && pos[i] == c) order.push_back(i);
    for (int c = spec.D - 1; c >= 0; --c)
      for (int i = 0; i < n; ++i)
        if (dir[i] == +1 && pos[i] == c) order.push_back(i);

    const std::size_t count = order.size();
    if (count > 20) throw Error("oracle_step: too many movers to enumerate");
    std::vector<int> solution;
    int found = 0;
    for (std::size_t mask = 0; mask < (std::size_t{1} << count); ++mask) {
      std::vector<int> cur = pos;
      bool ok = true;
      for (std::size_t k = 0; k < count && ok; ++k) {
        const int i = order[k];
        const int dest = cur[i] + dir[i];
        const bool can = dest >= 0 && dest < spec.D && !blocked(cur, i, dest);
        const bool claimed = (mask >> k) & 1;
        if (can != claimed) ok = false;
        if (ok && claimed) cur[i] = dest;
      }
      if (ok) {
        ++found;
        solution = cur;
      }
    }
    if (found != 1)
      throw Error("oracle_step: " + std::to_string(found) + " consistent commitment sets");
    pos = solution;
  }

  if (spec.stochastic_mover) {
    const int m = *spec.stochastic_mover;
    if (!carried[m]) {
      const int dest = pos[m] + stoch_dir;
      if (dest >= 0 && dest < spec.D && !blocked(pos, m, dest)) pos[m] = dest;
    }
  }

  return GridState{pos};
}

}  // namespace nidlab::testing
