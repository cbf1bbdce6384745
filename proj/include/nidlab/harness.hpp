#pragma once

// Experiment drivers: the online training loop, closed-loop rollout
// evaluation, embedding clustering with the silhouette score, the
// finite-difference gradient sweep, and the resumable ablation grid.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "nidlab/baselines.hpp"
#include "nidlab/env.hpp"
#include "nidlab/model.hpp"
#include "nidlab/tensor.hpp"

namespace nidlab {

// Sub-stream ids carved from one master seed via Rng::derive. Keeping the
// streams apart makes initialization, data order, and each evaluation split
// independent draws of the same seed.
namespace streams {
inline constexpr std::uint64_t kInit = 0;
inline constexpr std::uint64_t kData = 1;
inline constexpr std::uint64_t kEvalTrain = 2;
inline constexpr std::uint64_t kEvalTest = 3;
}  // namespace streams

// Per-step training losses averaged over consecutive windows of kBinWidth
// steps; the last bin may cover fewer steps. bin count = ceil(steps / width).
struct LearningCurve {
  static constexpr int kBinWidth = 500;
  int steps = 0;
  std::vector<double> bin_means;
};

// Closed-loop evaluation summary. Entry t-1 holds the cumulative BCE after
// step t averaged across series, with the population standard deviation as
// spread. A per-model report averages across rollouts (n_series = rollout
// count); aggregate_reports averages the per-seed means (n_series = seeds).
struct RolloutReport {
  Split split = Split::Train;
  int n_series = 0;
  int horizon = 0;
  std::vector<double> mean_cumulative;
  std::vector<double> std_cumulative;
};

// Closed-loop next-state estimator: consumes a row-stochastic [|O|,D] state
// estimate plus an action index (-1 in agent-free environments) and returns
// the same shape. Implementations own their model copies.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual Tensor predict(const Tensor& x, int action) const = 0;
};

class NidPredictor : public Predictor {
 public:
  explicit NidPredictor(NidModel m) : m_(std::move(m)) {}
  Tensor predict(const Tensor& x, int action) const override;

 private:
  NidModel m_;
};

class BaselinePredictor : public Predictor {
 public:
  explicit BaselinePredictor(BaselineModel m) : m_(std::move(m)) {}
  Tensor predict(const Tensor& x, int action) const override;

 private:
  BaselineModel m_;
};

// Replays the exact environment rules on the argmax state; outputs are exact
// one-hot rows. Only defined for deterministic environments.
class OraclePredictor : public Predictor {
 public:
  explicit OraclePredictor(EnvSpec spec);
  Tensor predict(const Tensor& x, int action) const override;

 private:
  EnvSpec spec_;
};

// Ignores its input: every row is the flat 1/D distribution.
class UniformPredictor : public Predictor {
 public:
  Tensor predict(const Tensor& x, int action) const override;
};

// One training transition; action is -1 in agent-free environments.
struct Transition {
  Tensor x;
  int action = -1;
  Tensor y;
};

// Fresh draw from the split's transition distribution: initial state, then a
// uniform action where an agent exists, then one environment step.
Transition sample_transition(const EnvSpec& env, Split split, Rng& rng);

struct TrainSpec {
  std::string kind = "nid";  // nid | mlp | conv1 | conv3
  Hyper hyper;               // architecture and optimizer settings; step count = hyper.steps
  int hidden = 128;          // baseline widths
  int channels = 16;
  // When set, training walks this fixed dataset cyclically instead of
  // sampling fresh transitions. Must outlive the call.
  const std::vector<Episode>* dataset = nullptr;
};

struct TrainedModel {
  std::string kind;
  std::optional<NidModel> nid;
  std::optional<BaselineModel> baseline;
  LearningCurve curve;

  std::unique_ptr<Predictor> predictor() const;
  std::string checkpoint_json() const;
};

// Online loop: every step draws one training transition, evaluates the loss
// on it, and applies one RMSProp update (batch of one). Deterministic in
// seed: initialization consumes stream kInit, data order stream kData.
// Throws on a non-finite loss, naming the step index and the loss value.
TrainedModel train_model(const TrainSpec& ts, const EnvSpec& env, std::uint64_t seed);

// Loads either checkpoint family from its JSON text, keyed by "kind".
TrainedModel checkpoint_from_json(const std::string& text);

// n_rollouts closed-loop episodes: the ground truth advances with the real
// rules while the model consumes its own previous output; actions are shared.
// Cumulative per-step BCE is averaged across rollouts.
RolloutReport compound_rollout(const Predictor& model, const EnvSpec& env, Split split,
                               int n_rollouts, int horizon, Rng& rng);

// Step-wise mean of the per-seed means and population std across seeds.
RolloutReport aggregate_reports(const std::vector<RolloutReport>& per_seed);

// Rows `step,mean_cumulative_bce,std_cumulative_bce,split,model,seed`: one
// block per seed, then a seed="all" aggregate block once two or more seeds
// are present.
std::string rollout_csv(const std::vector<RolloutReport>& per_seed,
                        const std::vector<std::uint64_t>& seeds, const std::string& model_name);

std::string curve_csv(const LearningCurve& curve);

// 1 = never rolls, 2 = rolls on the left slope, 3 = rolls on the right slope
// (the apex cell is grouped right: it shares that slope's motion direction in
// both orientations). One label per non-agent (object, position) pair,
// positions fastest. Flat environments have no slopes to label.
std::vector<int> cluster_labels(const EnvSpec& env);

// Mean silhouette with Euclidean distances. Singleton clusters and
// zero-distance ties score 0; fewer than two distinct labels is an error.
double silhouette(const std::vector<std::vector<double>>& points,
                  const std::vector<int>& labels);

struct EmbeddingReport {
  std::vector<std::string> object_names;  // aligned with points
  std::vector<int> positions;
  std::vector<std::vector<double>> points;  // encoder bottleneck h, d1 dims
  std::vector<int> labels;
  double silhouette = 0.0;
};

// Encoder bottleneck h for every non-agent (object, position) pair, with
// slope cluster labels and their silhouette score.
EmbeddingReport embedding_report(const NidModel& m, const EnvSpec& env);
std::string embedding_to_json(const EmbeddingReport& r);

struct GradSweepResult {
  int n_configs = 0;
  double max_rel_error = 0.0;
};

// Randomized finite-difference audit over small random shapes, cycling
// through both attention variants and the three baselines, each with and
// without an action input. Central differences with step h.
GradSweepResult gradient_sweep(int n_configs, std::uint64_t seed, double h = 1e-5);

struct AblationCell {
  InitScheme init = InitScheme::FixedRows;
  std::vector<int> K;
  int seeds = 1;
};

struct AblationGrid {
  std::vector<double> lambda1;
  std::vector<double> lambda2;
  std::vector<AttentionVariant> variants;
  std::vector<AblationCell> cells;
  Hyper base;  // shared by every run; lambda/K/init/variant are overridden per cell
  int n_rollouts = 100;
  int horizon = 8;

  // The 720-run comparison grid: lambda lists {5e-8,5e-7,5e-6,5e-5} squared,
  // fixed-row K in {4,8,16} with 10 seeds, random K in {4,9,14} with 5 seeds.
  static AblationGrid full_grid();
};

struct AblationRecord {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  int K = 0;
  InitScheme init = InitScheme::Random;
  AttentionVariant variant = AttentionVariant::SampleDependent;
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;             // set when ok is false
  double final_test_error = 0.0;  // cumulative test BCE at the last horizon step
  double silhouette = 0.0;
};

// FNV-1a over the canonical config string; identifies a grid entry across
// runs regardless of metrics or outcome.
std::uint64_t ablation_hash(const AblationRecord& r);
std::uint64_t fnv1a(const std::string& s);

// Single line, fixed key order {"hash","lambda1","lambda2","K","init",
// "variant","seed","ok",...}; failed records carry "error" instead of the
// metric fields.
std::string ablation_record_json(const AblationRecord& r);

// Hashes of the records already present in an ablation NDJSON stream.
std::unordered_set<std::uint64_t> read_ablation_hashes(std::istream& is);

// Grid entries in enumeration order (variants, cells, lambda1, lambda2, K,
// seed; innermost fastest), config fields only.
std::vector<AblationRecord> enumerate_grid(const AblationGrid& grid);

// Trains and evaluates every entry not in `done`, jobs at a time, and hands
// finished records to sink strictly in enumeration order. A run failure
// becomes an ok=false record; the grid continues. Returns the number of
// fresh records.
int run_ablation_grid(const AblationGrid& grid, const EnvSpec& env,
                      const std::unordered_set<std::uint64_t>& done, int jobs,
                      const std::function<void(const AblationRecord&)>& sink);

}  // namespace nidlab
