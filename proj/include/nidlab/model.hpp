#pragma once

// Factored transition predictor: a property encoder with attention over K
// learned rows, a pairwise edge function, a per-position outcome selector,
// and m shared convolution kernels that move probability mass along the grid.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nidlab/rng.hpp"
#include "nidlab/tape.hpp"
#include "nidlab/tensor.hpp"

namespace nidlab {

enum class AttentionVariant { SampleDependent, SampleIndependent };
enum class InitScheme { Random, FixedRows };

const char* variant_name(AttentionVariant v);
AttentionVariant variant_from_name(const std::string& s);
const char* init_name(InitScheme s);
InitScheme init_from_name(const std::string& s);

struct Hyper {
  int K = 4;
  int m = 3;
  int d1 = 2;
  int dP = 4;
  int dR = 4;
  int S1 = 1;
  int S2 = 1;
  int H = 16;
  double lambda1 = 5e-7;
  double lambda2 = 5e-6;
  double lr = 1e-2;
  double rho = 0.99;
  double eps = 1e-8;
  int steps = 20000;
  AttentionVariant variant = AttentionVariant::SampleDependent;
  InitScheme init = InitScheme::Random;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const Hyper&) const = default;
};

struct NidModel {
  Hyper hyper;
  int n_objects = 0;
  int D = 0;
  int n_actions = 0;

  Tensor Q;  // (|O|+D) x K attention logits, rows = object then position slots
  Tensor V;  // K x d1
  Tensor W;  // d1 x dP
  Tensor A;  // dR x 2*(2*S1+1), applied to (other window, own window)
  Tensor b;  // dR
  Tensor W1;  // (dP+dR+n_actions) x H
  Tensor b1;  // H
  Tensor W2;  // H x m
  Tensor b2;  // m
  Tensor kernels;  // m x (2*S2+1)

  std::vector<Tensor*> params();
  std::vector<const Tensor*> params() const;
  static const std::vector<std::string>& param_names();
  int decoder_in() const { return hyper.dP + hyper.dR + n_actions; }
  void check_dims() const;
};

NidModel init_params(const Hyper& hyper, int n_objects, int D, int n_actions, Rng& rng);

// Uniform draws with the fan-based bound sqrt(6/(rows+cols)), row-major order.
void fill_glorot(Tensor& t, Rng& rng);

// Throws when a row of x is not a distribution within tol.
void validate_state_rows(const Tensor& x, int n_objects, int D, double tol = 1e-6);

// attn has one row (sample-dependent) or the two attended rows o and |O|+p
// (sample-independent diagnostics); h is the d1 bottleneck, theta the dP
// property vector.
struct Encoding {
  Tensor attn;
  Tensor h;
  Tensor theta;
};

// Plain-arithmetic reference path, also the fast path for rollouts.
Encoding encode(const NidModel& m, int o, int p);
Tensor edge_aggregate(const NidModel& m, const Tensor& x, int o);
Tensor select_transition(const NidModel& m, const Tensor& x, int o, int p, int action = -1);
std::vector<Tensor> apply_outcomes(const NidModel& m, const Tensor& x);
Tensor predict_next(const NidModel& m, const Tensor& x, int action = -1);
std::pair<double, double> entropy_terms(const Tensor& Q);
double loss_value(const NidModel& m, const Tensor& x, const Tensor& x_next, int action = -1);

// Differentiable path. stage_params returns refs in params() order; the
// builders assume those refs and an already-staged state input.
std::vector<Ref> stage_params(Tape& t, const NidModel& m);
Ref build_prediction(Tape& t, const NidModel& m, const std::vector<Ref>& p, Ref x,
                     int action = -1);
Ref build_loss(Tape& t, const NidModel& m, const std::vector<Ref>& p, Ref x, Ref y,
               int action = -1, Ref* pred_out = nullptr, bool entropy = true);

std::string nid_to_json(const NidModel& m);
NidModel nid_from_json(const std::string& text);

}  // namespace nidlab
