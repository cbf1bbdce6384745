#pragma once

// Comparison predictors sharing the one-step prediction contract: a 3-hidden-
// layer MLP over the flattened state, a single shared width-3 row convolution,
// and a 3-layer channel-mixing convolution stack.

#include <cstdint>
#include <string>
#include <vector>

#include "nidlab/rng.hpp"
#include "nidlab/tape.hpp"
#include "nidlab/tensor.hpp"

namespace nidlab {

enum class BaselineKind { Mlp, Conv1, Conv3 };

const char* baseline_name(BaselineKind k);
BaselineKind baseline_from_name(const std::string& s);

// Parameter layout per kind:
//   Mlp   W1..W4 with biases; input |O|*D plus the action one-hot, three
//         tanh layers of width `hidden`, linear output |O|*D.
//   Conv1 a single length-3 kernel shared by every object row. Actions have
//         no pathway into the output.
//   Conv3 three width-3 convolutions with channel mixing, |O|+|A| broadcast
//         action channels -> `channels` -> `channels` -> |O|, tanh between.
//         Row c_in*3+j of a weight matrix multiplies channel c_in at offset
//         j-1 around the output position.
struct BaselineModel {
  BaselineKind kind = BaselineKind::Mlp;
  int n_objects = 0;
  int D = 0;
  int n_actions = 0;
  int hidden = 128;
  int channels = 16;
  std::vector<std::string> names;
  std::vector<Tensor> ts;

  std::vector<Tensor*> params();
  std::vector<const Tensor*> params() const;
  void check_dims() const;
};

BaselineModel init_baseline(BaselineKind kind, int n_objects, int D, int n_actions, Rng& rng,
                            int hidden = 128, int channels = 16);

Tensor baseline_predict(const BaselineModel& m, const Tensor& x, int action = -1);

// Kind-checked entry points.
Tensor mlp_predict(const BaselineModel& m, const Tensor& x, int action = -1);
Tensor conv1_predict(const BaselineModel& m, const Tensor& x, int action = -1);
Tensor conv3_predict(const BaselineModel& m, const Tensor& x, int action = -1);

std::vector<Ref> stage_baseline(Tape& t, const BaselineModel& m);
Ref build_baseline_prediction(Tape& t, const BaselineModel& m, const std::vector<Ref>& p, Ref x,
                              int action = -1);
// Mean binary cross entropy of the prediction against a one-hot target.
Ref build_baseline_loss(Tape& t, const BaselineModel& m, const std::vector<Ref>& p, Ref x, Ref y,
                        int action = -1, Ref* pred_out = nullptr);

std::string baseline_to_json(const BaselineModel& m);
BaselineModel baseline_from_json(const std::string& text);

}  // namespace nidlab
