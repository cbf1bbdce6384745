#include "nidlab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <istream>
#include <mutex>
#include <sstream>
#include <thread>
#include <utility>

#include "json.hpp"
#include "nidlab/error.hpp"
#include "nidlab/jsonio.hpp"
#include "nidlab/optim.hpp"
#include "nidlab/tape.hpp"

namespace nidlab {

namespace {

Action to_action(int a) { return static_cast<Action>(a); }

// Population standard deviation around a precomputed mean.
double population_std(const std::vector<double>& xs, double mean) {
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(xs.size()));
}

}  // namespace

Tensor NidPredictor::predict(const Tensor& x, int action) const {
  return predict_next(m_, x, action);
}

Tensor BaselinePredictor::predict(const Tensor& x, int action) const {
  return baseline_predict(m_, x, action);
}

OraclePredictor::OraclePredictor(EnvSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  if (spec_.stochastic_mover)
    throw Error("oracle predictor: stochastic environments have no deterministic replay");
}

Tensor OraclePredictor::predict(const Tensor& x, int action) const {
  const int n = spec_.n_objects();
  if (x.shape != Shape::mat(n, spec_.D))
    throw Error("oracle predictor: state shape " + x.shape.str() + " does not match the environment");
  GridState s;
  s.pos.resize(n);
  for (int o = 0; o < n; ++o) {
    int best = 0;
    for (int p = 1; p < spec_.D; ++p)
      if (x.at(o, p) > x.at(o, best)) best = p;
    s.pos[o] = best;
  }
  const GridState s1 = step_core(spec_, s, to_action(action), +1);
  return to_state_tensor(spec_, s1);
}

Tensor UniformPredictor::predict(const Tensor& x, int /*action*/) const {
  Tensor out(x.shape);
  const double u = 1.0 / static_cast<double>(x.cols());
  for (auto& v : out.data) v = u;
  return out;
}

Transition sample_transition(const EnvSpec& env, Split split, Rng& rng) {
  const GridState s = sample_initial(env, split, rng);
  const int action = env.has_agent() ? rng.uniform_int(env.n_actions()) : -1;
  const GridState s1 = step(env, s, to_action(action), rng);
  return {to_state_tensor(env, s), action, to_state_tensor(env, s1)};
}

namespace {

// Cyclic walk over the transitions of a fixed episode list.
class DatasetCursor {
 public:
  DatasetCursor(const std::vector<Episode>& eps, const EnvSpec& env) : eps_(eps) {
    int total = 0;
    for (const Episode& e : eps_) {
      if (e.spec.n_objects() != env.n_objects() || e.spec.D != env.D ||
          e.spec.has_agent() != env.has_agent())
        throw ConfigError("training dataset does not match the configured environment");
      total += static_cast<int>(e.actions.size());
    }
    if (total == 0) throw ConfigError("training dataset holds no transitions");
    while (eps_[ep_].actions.empty()) ++ep_;
  }

  Transition next() {
    const Episode& e = eps_[ep_];
    Transition tr{to_state_tensor(e.spec, e.states[t_]), static_cast<int>(e.actions[t_]),
                  to_state_tensor(e.spec, e.states[t_ + 1])};
    if (++t_ >= static_cast<int>(e.actions.size())) {
      t_ = 0;
      do {
        ep_ = (ep_ + 1) % eps_.size();
      } while (eps_[ep_].actions.empty());
    }
    return tr;
  }

 private:
  const std::vector<Episode>& eps_;
  std::size_t ep_ = 0;
  int t_ = 0;
};

}  // namespace

std::unique_ptr<Predictor> TrainedModel::predictor() const {
  if (nid) return std::make_unique<NidPredictor>(*nid);
  if (baseline) return std::make_unique<BaselinePredictor>(*baseline);
  throw Error("predictor: no trained model present");
}

std::string TrainedModel::checkpoint_json() const {
  if (nid) return nid_to_json(*nid);
  if (baseline) return baseline_to_json(*baseline);
  throw Error("checkpoint: no trained model present");
}

TrainedModel train_model(const TrainSpec& ts, const EnvSpec& env, std::uint64_t seed) {
  env.validate();
  Hyper hyper = ts.hyper;
  hyper.validate();
  Rng init_rng(Rng::derive(seed, streams::kInit));
  Rng data_rng(Rng::derive(seed, streams::kData));

  TrainedModel out;
  out.kind = ts.kind;
  std::vector<Tensor*> params;
  if (ts.kind == "nid") {
    out.nid = init_params(hyper, env.n_objects(), env.D, env.n_actions(), init_rng);
    params = out.nid->params();
  } else {
    out.baseline = init_baseline(baseline_from_name(ts.kind), env.n_objects(), env.D,
                                 env.n_actions(), init_rng, ts.hidden, ts.channels);
    params = out.baseline->params();
  }

  std::optional<DatasetCursor> data;
  if (ts.dataset) data.emplace(*ts.dataset, env);

  RmsProp opt({hyper.lr, hyper.rho, hyper.eps}, params);
  Tape t;
  out.curve.steps = hyper.steps;
  double bin_acc = 0.0;
  int bin_n = 0;

  // The entropy terms sit out the first quarter of training. Active from step
  // one, their small but one-sided gradients outpace the still-diffuse data
  // gradient under per-parameter normalization and merge every attention row
  // into a single cluster; they may only refine rows the data term has shaped.
  const int entropy_start = hyper.steps / 4;

  for (int stepi = 0; stepi < hyper.steps; ++stepi) {
    const Transition tr = data ? data->next() : sample_transition(env, Split::Train, data_rng);
    t.reset();
    Ref loss;
    std::vector<Tensor> grads;
    if (out.nid) {
      const std::vector<Ref> pr = stage_params(t, *out.nid);
      loss = build_loss(t, *out.nid, pr, t.input(tr.x), t.input(tr.y), tr.action, nullptr,
                        stepi >= entropy_start);
      grads = t.gradients(loss, pr);
    } else {
      const std::vector<Ref> pr = stage_baseline(t, *out.baseline);
      loss = build_baseline_loss(t, *out.baseline, pr, t.input(tr.x), t.input(tr.y), tr.action);
      grads = t.gradients(loss, pr);
    }
    const double L = t.val(loss).data[0];
    if (!std::isfinite(L))
      throw Error("training: non-finite loss " + json_num(L) + " at step " +
                  std::to_string(stepi));
    try {
      opt.step(params, grads);
    } catch (const Error& e) {
      throw Error("training: step " + std::to_string(stepi) + ": " + e.what());
    }

    bin_acc += L;
    if (++bin_n == LearningCurve::kBinWidth || stepi + 1 == hyper.steps) {
      out.curve.bin_means.push_back(bin_acc / bin_n);
      bin_acc = 0.0;
      bin_n = 0;
    }
  }
  return out;
}

TrainedModel checkpoint_from_json(const std::string& text) {
  std::string kind;
  try {
    kind = nlohmann::json::parse(text).at("kind").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint: ") + e.what());
  }
  TrainedModel out;
  out.kind = kind;
  if (kind == "nid")
    out.nid = nid_from_json(text);
  else
    out.baseline = baseline_from_json(text);
  return out;
}

RolloutReport compound_rollout(const Predictor& model, const EnvSpec& env, Split split,
                               int n_rollouts, int horizon, Rng& rng) {
  env.validate();
  if (n_rollouts < 1) throw ConfigError("rollout: need at least one rollout");
  if (horizon < 1) throw ConfigError("rollout: need a positive horizon");

  // cum[t] collects the cumulative error after step t+1 of every rollout.
  std::vector<std::vector<double>> cum(horizon);
  for (auto& c : cum) c.reserve(n_rollouts);

  for (int r = 0; r < n_rollouts; ++r) {
    GridState s = sample_initial(env, split, rng);
    Tensor xhat = to_state_tensor(env, s);
    double running = 0.0;
    for (int t = 0; t < horizon; ++t) {
      const int action = env.has_agent() ? rng.uniform_int(env.n_actions()) : -1;
      const GridState s1 = step(env, s, to_action(action), rng);
      const Tensor y = to_state_tensor(env, s1);
      xhat = model.predict(xhat, action);
      running += bce_mean(y.data.data(), xhat.data.data(), y.numel(), kLogEps);
      cum[t].push_back(running);
      s = s1;
    }
  }

  RolloutReport rep;
  rep.split = split;
  rep.n_series = n_rollouts;
  rep.horizon = horizon;
  for (int t = 0; t < horizon; ++t) {
    double mean = 0.0;
    for (double v : cum[t]) mean += v;
    mean /= n_rollouts;
    rep.mean_cumulative.push_back(mean);
    rep.std_cumulative.push_back(population_std(cum[t], mean));
  }
  return rep;
}

RolloutReport aggregate_reports(const std::vector<RolloutReport>& per_seed) {
  if (per_seed.empty()) throw Error("aggregate: no reports");
  RolloutReport agg;
  agg.split = per_seed.front().split;
  agg.horizon = per_seed.front().horizon;
  agg.n_series = static_cast<int>(per_seed.size());
  for (const RolloutReport& r : per_seed)
    if (r.horizon != agg.horizon || r.split != agg.split)
      throw Error("aggregate: reports disagree on split or horizon");
  for (int t = 0; t < agg.horizon; ++t) {
    std::vector<double> means;
    means.reserve(per_seed.size());
    for (const RolloutReport& r : per_seed) means.push_back(r.mean_cumulative[t]);
    double mean = 0.0;
    for (double v : means) mean += v;
    mean /= static_cast<double>(means.size());
    agg.mean_cumulative.push_back(mean);
    agg.std_cumulative.push_back(population_std(means, mean));
  }
  return agg;
}

std::string rollout_csv(const std::vector<RolloutReport>& per_seed,
                        const std::vector<std::uint64_t>& seeds, const std::string& model_name) {
  if (per_seed.size() != seeds.size()) throw Error("rollout csv: one seed per report required");
  if (per_seed.empty()) throw Error("rollout csv: no reports");
  std::string out = "step,mean_cumulative_bce,std_cumulative_bce,split,model,seed\n";
  auto block = [&](const RolloutReport& r, const std::string& seed_tag) {
    for (int t = 0; t < r.horizon; ++t) {
      out += std::to_string(t + 1) + ',' + json_num(r.mean_cumulative[t]) + ',' +
             json_num(r.std_cumulative[t]) + ',' + split_name(r.split) + ',' + model_name + ',' +
             seed_tag + '\n';
    }
  };
  for (std::size_t i = 0; i < per_seed.size(); ++i)
    block(per_seed[i], std::to_string(seeds[i]));
  if (per_seed.size() >= 2) block(aggregate_reports(per_seed), "all");
  return out;
}

std::string curve_csv(const LearningCurve& curve) {
  std::string out = "bin_index,step_begin,step_end,mean_loss\n";
  for (std::size_t i = 0; i < curve.bin_means.size(); ++i) {
    const int begin = static_cast<int>(i) * LearningCurve::kBinWidth;
    const int end = std::min(begin + LearningCurve::kBinWidth, curve.steps);
    out += std::to_string(i) + ',' + std::to_string(begin) + ',' + std::to_string(end) + ',' +
           json_num(curve.bin_means[i]) + '\n';
  }
  return out;
}

std::vector<int> cluster_labels(const EnvSpec& env) {
  env.validate();
  if (env.orientation == Orientation::Flat)
    throw Error("cluster labels: a flat grid has no slopes to label");
  std::vector<int> labels;
  for (int o = 0; o < env.n_objects(); ++o) {
    if (env.objects[o].is_agent) continue;
    for (int p = 0; p < env.D; ++p) {
      if (!env.objects[o].rollable)
        labels.push_back(1);
      else
        labels.push_back(p < env.apex ? 2 : 3);
    }
  }
  return labels;
}

double silhouette(const std::vector<std::vector<double>>& points,
                  const std::vector<int>& labels) {
  const std::size_t n = points.size();
  if (labels.size() != n) throw Error("silhouette: one label per point required");
  if (n == 0) throw Error("silhouette: no points");
  const std::size_t dim = points.front().size();
  for (const auto& p : points)
    if (p.size() != dim) throw Error("silhouette: points of mixed dimension");

  std::vector<int> clusters;
  for (int l : labels)
    if (std::find(clusters.begin(), clusters.end(), l) == clusters.end()) clusters.push_back(l);
  if (clusters.size() < 2) throw Error("silhouette: fewer than two clusters");

  auto dist = [&](std::size_t i, std::size_t j) {
    double acc = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = points[i][d] - points[j][d];
      acc += diff * diff;
    }
    return std::sqrt(acc);
  };

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t same_n = 0;
    double same_sum = 0.0;
    double best_other = -1.0;
    for (int c : clusters) {
      if (c == labels[i]) continue;
      double sum = 0.0;
      std::size_t cn = 0;
      for (std::size_t j = 0; j < n; ++j)
        if (labels[j] == c) {
          sum += dist(i, j);
          ++cn;
        }
      const double mean = sum / static_cast<double>(cn);
      if (best_other < 0.0 || mean < best_other) best_other = mean;
    }
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && labels[j] == labels[i]) {
        same_sum += dist(i, j);
        ++same_n;
      }
    if (same_n == 0) continue;  // singleton scores 0
    const double a = same_sum / static_cast<double>(same_n);
    const double b = best_other;
    const double m = std::max(a, b);
    if (m > 0.0) total += (b - a) / m;  // zero-distance tie scores 0
  }
  return total / static_cast<double>(n);
}

EmbeddingReport embedding_report(const NidModel& m, const EnvSpec& env) {
  env.validate();
  m.check_dims();
  if (m.n_objects != env.n_objects() || m.D != env.D)
    throw Error("embedding: model shape does not match the environment");
  EmbeddingReport rep;
  rep.labels = cluster_labels(env);
  for (int o = 0; o < env.n_objects(); ++o) {
    if (env.objects[o].is_agent) continue;
    for (int p = 0; p < env.D; ++p) {
      const Encoding e = encode(m, o, p);
      rep.object_names.push_back(env.objects[o].name);
      rep.positions.push_back(p);
      rep.points.push_back(e.h.data);
    }
  }
  rep.silhouette = silhouette(rep.points, rep.labels);
  return rep;
}

std::string embedding_to_json(const EmbeddingReport& r) {
  std::string out = "{\"kind\":\"embedding\",\"silhouette\":" + json_num(r.silhouette);
  out += ",\"d1\":" + json_num(static_cast<int>(r.points.empty() ? 0 : r.points.front().size()));
  out += ",\"points\":[";
  for (std::size_t i = 0; i < r.points.size(); ++i) {
    if (i) out += ',';
    out += "{\"object\":" + json_str(r.object_names[i]);
    out += ",\"position\":" + json_num(r.positions[i]);
    out += ",\"label\":\"C" + std::to_string(r.labels[i]) + '"';
    out += ",\"h\":[";
    for (std::size_t d = 0; d < r.points[i].size(); ++d) {
      if (d) out += ',';
      out += json_num(r.points[i][d]);
    }
    out += "]}";
  }
  out += "]}";
  return out;
}

namespace {

Tensor random_distribution_rows(int rows, int cols, Rng& rng) {
  Tensor x(Shape::mat(rows, cols));
  for (int r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (int c = 0; c < cols; ++c) {
      const double v = rng.uniform(0.1, 1.0);
      x.at(r, c) = v;
      sum += v;
    }
    for (int c = 0; c < cols; ++c) x.at(r, c) /= sum;
  }
  return x;
}

Tensor random_one_hot_rows(int rows, int cols, Rng& rng) {
  Tensor y(Shape::mat(rows, cols));
  for (int r = 0; r < rows; ++r) y.at(r, rng.uniform_int(cols)) = 1.0;
  return y;
}

}  // namespace

GradSweepResult gradient_sweep(int n_configs, std::uint64_t seed, double h) {
  if (n_configs < 1) throw ConfigError("gradient sweep: need at least one configuration");

  struct Combo {
    int family;  // 0 nid, 1 mlp, 2 conv1, 3 conv3
    AttentionVariant variant;
    bool actions;
  };
  const Combo combos[] = {
      {0, AttentionVariant::SampleDependent, false},
      {0, AttentionVariant::SampleDependent, true},
      {0, AttentionVariant::SampleIndependent, false},
      {0, AttentionVariant::SampleIndependent, true},
      {1, AttentionVariant::SampleDependent, false},
      {1, AttentionVariant::SampleDependent, true},
      {2, AttentionVariant::SampleDependent, false},
      {2, AttentionVariant::SampleDependent, true},
      {3, AttentionVariant::SampleDependent, false},
      {3, AttentionVariant::SampleDependent, true},
  };
  constexpr int kNumCombos = static_cast<int>(sizeof(combos) / sizeof(combos[0]));

  GradSweepResult res;
  res.n_configs = n_configs;
  for (int i = 0; i < n_configs; ++i) {
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(i)));
    const Combo combo = combos[i % kNumCombos];
    const int O = 1 + rng.uniform_int(3);
    const int D = 3 + rng.uniform_int(4);
    const int n_act = combo.actions ? 2 + rng.uniform_int(3) : 0;
    const int action = combo.actions ? rng.uniform_int(n_act) : -1;
    const Tensor x = random_distribution_rows(O, D, rng);
    const Tensor y = random_one_hot_rows(O, D, rng);

    double err = 0.0;
    if (combo.family == 0) {
      Hyper hy;
      hy.K = 2 + rng.uniform_int(3);
      hy.m = 1 + rng.uniform_int(3);
      hy.d1 = 1 + rng.uniform_int(2);
      hy.dP = 1 + rng.uniform_int(3);
      hy.dR = 1 + rng.uniform_int(3);
      hy.S1 = rng.uniform_int(3);
      hy.S2 = rng.uniform_int(3);
      hy.H = 2 + rng.uniform_int(3);
      hy.lambda1 = rng.uniform(0.0, 2e-3);
      hy.lambda2 = rng.uniform(0.0, 2e-3);
      hy.variant = combo.variant;
      const NidModel model = init_params(hy, O, D, n_act, rng);

      Tape t;
      const std::vector<Ref> pr = stage_params(t, model);
      const Ref loss = build_loss(t, model, pr, t.input(x), t.input(y), action);
      const std::vector<Tensor> grads = t.gradients(loss, pr);
      std::vector<Tensor> vals;
      for (const Tensor* p : model.params()) vals.push_back(*p);
      auto f = [&](const std::vector<Tensor>& pv) {
        NidModel probe = model;
        const std::vector<Tensor*> tgt = probe.params();
        for (std::size_t k = 0; k < tgt.size(); ++k) *tgt[k] = pv[k];
        return loss_value(probe, x, y, action);
      };
      err = fd_max_rel_error(f, vals, grads, h);
    } else {
      const BaselineKind kinds[] = {BaselineKind::Mlp, BaselineKind::Conv1, BaselineKind::Conv3};
      const int hidden = 2 + rng.uniform_int(4);
      const int channels = 2 + rng.uniform_int(3);
      const BaselineModel model =
          init_baseline(kinds[combo.family - 1], O, D, n_act, rng, hidden, channels);

      Tape t;
      const std::vector<Ref> pr = stage_baseline(t, model);
      const Ref loss = build_baseline_loss(t, model, pr, t.input(x), t.input(y), action);
      const std::vector<Tensor> grads = t.gradients(loss, pr);
      std::vector<Tensor> vals;
      for (const Tensor* p : model.params()) vals.push_back(*p);
      auto f = [&](const std::vector<Tensor>& pv) {
        BaselineModel probe = model;
        const std::vector<Tensor*> tgt = probe.params();
        for (std::size_t k = 0; k < tgt.size(); ++k) *tgt[k] = pv[k];
        const Tensor pred = baseline_predict(probe, x, action);
        return bce_mean(y.data.data(), pred.data.data(), y.numel(), kLogEps);
      };
      err = fd_max_rel_error(f, vals, grads, h);
    }
    res.max_rel_error = std::max(res.max_rel_error, err);
  }
  return res;
}

AblationGrid AblationGrid::full_grid() {
  AblationGrid g;
  g.lambda1 = {5e-8, 5e-7, 5e-6, 5e-5};
  g.lambda2 = {5e-8, 5e-7, 5e-6, 5e-5};
  g.variants = {AttentionVariant::SampleDependent};
  g.cells = {{InitScheme::FixedRows, {4, 8, 16}, 10}, {InitScheme::Random, {4, 9, 14}, 5}};
  return g;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    hash ^= c;
    hash *= 0x100000001b3ull;
  }
  return hash;
}

std::uint64_t ablation_hash(const AblationRecord& r) {
  const std::string key = "lambda1=" + json_num(r.lambda1) + ";lambda2=" + json_num(r.lambda2) +
                          ";K=" + json_num(r.K) + ";init=" + init_name(r.init) +
                          ";variant=" + variant_name(r.variant) +
                          ";seed=" + std::to_string(r.seed);
  return fnv1a(key);
}

namespace {

std::string hash_hex(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

std::string ablation_record_json(const AblationRecord& r) {
  std::string out = "{\"hash\":\"" + hash_hex(ablation_hash(r)) + '"';
  out += ",\"lambda1\":" + json_num(r.lambda1);
  out += ",\"lambda2\":" + json_num(r.lambda2);
  out += ",\"K\":" + json_num(r.K);
  out += ",\"init\":" + json_str(init_name(r.init));
  out += ",\"variant\":" + json_str(variant_name(r.variant));
  out += ",\"seed\":" + json_num(static_cast<unsigned long long>(r.seed));
  out += ",\"ok\":";
  out += r.ok ? "true" : "false";
  if (r.ok) {
    out += ",\"final_test_error\":" + json_num(r.final_test_error);
    out += ",\"silhouette\":" + json_num(r.silhouette);
  } else {
    out += ",\"error\":" + json_str(r.error);
  }
  out += '}';
  return out;
}

std::unordered_set<std::uint64_t> read_ablation_hashes(std::istream& is) {
  std::unordered_set<std::uint64_t> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.insert(std::stoull(j.at("hash").get<std::string>(), nullptr, 16));
    } catch (const std::exception& e) {
      throw Error("ablation file: line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<AblationRecord> enumerate_grid(const AblationGrid& grid) {
  if (grid.lambda1.empty() || grid.lambda2.empty() || grid.variants.empty() ||
      grid.cells.empty())
    throw ConfigError("ablation grid: every value list needs at least one entry");
  std::vector<AblationRecord> out;
  for (const AttentionVariant v : grid.variants) {
    for (const AblationCell& cell : grid.cells) {
      if (cell.K.empty()) throw ConfigError("ablation grid: a cell lists no K values");
      if (cell.seeds < 1) throw ConfigError("ablation grid: a cell needs at least one seed");
      for (const double l1 : grid.lambda1) {
        for (const double l2 : grid.lambda2) {
          for (const int K : cell.K) {
            for (int s = 0; s < cell.seeds; ++s) {
              AblationRecord r;
              r.lambda1 = l1;
              r.lambda2 = l2;
              r.K = K;
              r.init = cell.init;
              r.variant = v;
              r.seed = static_cast<std::uint64_t>(s);
              out.push_back(r);
            }
          }
        }
      }
    }
  }
  return out;
}

namespace {

AblationRecord run_ablation_entry(AblationRecord cfg, const AblationGrid& grid,
                                  const EnvSpec& env) {
  try {
    TrainSpec ts;
    ts.kind = "nid";
    ts.hyper = grid.base;
    ts.hyper.lambda1 = cfg.lambda1;
    ts.hyper.lambda2 = cfg.lambda2;
    ts.hyper.K = cfg.K;
    ts.hyper.init = cfg.init;
    ts.hyper.variant = cfg.variant;
    const TrainedModel tm = train_model(ts, env, cfg.seed);
    Rng eval_rng(Rng::derive(cfg.seed, streams::kEvalTest));
    const RolloutReport rep = compound_rollout(*tm.predictor(), env, Split::Test,
                                               grid.n_rollouts, grid.horizon, eval_rng);
    cfg.final_test_error = rep.mean_cumulative.back();
    cfg.silhouette = embedding_report(*tm.nid, env).silhouette;
    cfg.ok = true;
  } catch (const std::exception& e) {
    cfg.ok = false;
    cfg.error = e.what();
    cfg.final_test_error = 0.0;
    cfg.silhouette = 0.0;
  }
  return cfg;
}

}  // namespace

int run_ablation_grid(const AblationGrid& grid, const EnvSpec& env,
                      const std::unordered_set<std::uint64_t>& done, int jobs,
                      const std::function<void(const AblationRecord&)>& sink) {
  const std::vector<AblationRecord> entries = enumerate_grid(grid);
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (!done.count(ablation_hash(entries[i]))) todo.push_back(i);
  if (todo.empty()) return 0;

  if (jobs < 1) jobs = 1;
  if (jobs == 1) {
    for (const std::size_t i : todo) sink(run_ablation_entry(entries[i], grid, env));
    return static_cast<int>(todo.size());
  }

  // Workers claim entries in order; the main thread releases finished records
  // to the sink strictly in enumeration order so output bytes are independent
  // of scheduling.
  std::vector<std::optional<AblationRecord>> results(todo.size());
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::condition_variable cv;
  auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= todo.size()) return;
      AblationRecord rec = run_ablation_entry(entries[todo[k]], grid, env);
      {
        const std::lock_guard<std::mutex> lock(mu);
        results[k] = std::move(rec);
      }
      cv.notify_all();
    }
  };
  std::vector<std::thread> pool;
  const std::size_t n_threads = std::min<std::size_t>(jobs, todo.size());
  pool.reserve(n_threads);
  for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);

  std::size_t flushed = 0;
  std::unique_lock<std::mutex> lock(mu);
  while (flushed < todo.size()) {
    cv.wait(lock, [&] { return results[flushed].has_value(); });
    while (flushed < todo.size() && results[flushed].has_value()) {
      sink(*results[flushed]);
      ++flushed;
    }
  }
  lock.unlock();
  for (std::thread& th : pool) th.join();
  return static_cast<int>(todo.size());
}

}  // namespace nidlab
