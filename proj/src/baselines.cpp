#include "nidlab/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "checkpoint_util.hpp"
#include "json.hpp"
#include "nidlab/error.hpp"
#include "nidlab/jsonio.hpp"
#include "nidlab/model.hpp"

namespace nidlab {

const char* baseline_name(BaselineKind k) {
  switch (k) {
    case BaselineKind::Mlp: return "mlp";
    case BaselineKind::Conv1: return "conv1";
    default: return "conv3";
  }
}

BaselineKind baseline_from_name(const std::string& s) {
  if (s == "mlp") return BaselineKind::Mlp;
  if (s == "conv1") return BaselineKind::Conv1;
  if (s == "conv3") return BaselineKind::Conv3;
  throw ConfigError("unknown baseline \"" + s + "\"");
}

std::vector<Tensor*> BaselineModel::params() {
  std::vector<Tensor*> out;
  for (Tensor& t : ts) out.push_back(&t);
  return out;
}

std::vector<const Tensor*> BaselineModel::params() const {
  std::vector<const Tensor*> out;
  for (const Tensor& t : ts) out.push_back(&t);
  return out;
}

namespace {

struct LayerSpec {
  std::string name;
  Shape shape;
};

std::vector<LayerSpec> layout(const BaselineModel& m) {
  const std::size_t flat = static_cast<std::size_t>(m.n_objects) * m.D;
  const std::size_t h = m.hidden;
  const std::size_t ch = m.channels;
  switch (m.kind) {
    case BaselineKind::Mlp:
      return {{"W1", Shape::mat(flat + m.n_actions, h)}, {"b1", Shape::vec(h)},
              {"W2", Shape::mat(h, h)},                  {"b2", Shape::vec(h)},
              {"W3", Shape::mat(h, h)},                  {"b3", Shape::vec(h)},
              {"W4", Shape::mat(h, flat)},               {"b4", Shape::vec(flat)}};
    case BaselineKind::Conv1:
      return {{"kernel", Shape::vec(3)}};
    default: {
      const std::size_t c0 = m.n_objects + m.n_actions;
      return {{"W1", Shape::mat(3 * c0, ch)}, {"b1", Shape::vec(ch)},
              {"W2", Shape::mat(3 * ch, ch)}, {"b2", Shape::vec(ch)},
              {"W3", Shape::mat(3 * ch, m.n_objects)}, {"b3", Shape::vec(m.n_objects)}};
    }
  }
}

void check_action(const BaselineModel& m, int action, const char* who) {
  if (m.n_actions == 0) {
    if (action != -1) throw Error(std::string(who) + ": this model takes no actions");
  } else if (action < 0 || action >= m.n_actions) {
    throw Error(std::string(who) + ": action " + std::to_string(action) +
                " out of range for " + std::to_string(m.n_actions) + " actions");
  }
}

void check_state_shape(const BaselineModel& m, const Tensor& x, const char* who) {
  const Shape want = Shape::mat(m.n_objects, m.D);
  if (x.shape != want)
    throw Error(std::string(who) + ": state has shape " + x.shape.str() + ", expected " +
                want.str());
}

// One channel-mixing convolution layer. in: cin rows of length D; weight row
// cin*3+j multiplies channel cin at offset j-1.
void conv_layer(const std::vector<std::vector<double>>& in, const Tensor& w, const Tensor& bias,
                bool squash, std::vector<std::vector<double>>& out) {
  const int cin = static_cast<int>(in.size());
  const int d = static_cast<int>(in[0].size());
  const int cout = static_cast<int>(w.cols());
  out.assign(cout, std::vector<double>(d, 0.0));
  for (int c = 0; c < cout; ++c) {
    for (int p = 0; p < d; ++p) {
      double s = bias.at(c);
      for (int ci = 0; ci < cin; ++ci)
        for (int j = 0; j < 3; ++j) {
          const int q = p - 1 + j;
          if (q >= 0 && q < d) s += w.at(ci * 3 + j, c) * in[ci][q];
        }
      out[c][p] = squash ? std::tanh(s) : s;
    }
  }
}

}  // namespace

void BaselineModel::check_dims() const {
  if (n_objects < 1) throw Error("baseline: needs at least one object");
  if (D < 2) throw Error("baseline: needs a grid of at least two cells");
  if (n_actions < 0) throw Error("baseline: negative action count");
  if (hidden < 1 || channels < 1) throw Error("baseline: widths must be at least 1");
  const auto want = layout(*this);
  if (ts.size() != want.size() || names.size() != want.size())
    throw Error("baseline: expected " + std::to_string(want.size()) + " parameters, have " +
                std::to_string(ts.size()));
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (names[i] != want[i].name)
      throw Error("baseline: parameter " + std::to_string(i) + " is \"" + names[i] +
                  "\", expected \"" + want[i].name + "\"");
    if (ts[i].shape != want[i].shape)
      throw Error("baseline: " + names[i] + " has shape " + ts[i].shape.str() + ", expected " +
                  want[i].shape.str());
    if (!ts[i].all_finite())
      throw Error("baseline: " + names[i] + " has non-finite entries");
  }
}

BaselineModel init_baseline(BaselineKind kind, int n_objects, int D, int n_actions, Rng& rng,
                            int hidden, int channels) {
  BaselineModel m;
  m.kind = kind;
  m.n_objects = n_objects;
  m.D = D;
  m.n_actions = n_actions;
  m.hidden = hidden;
  m.channels = channels;
  if (n_objects < 1 || D < 2 || n_actions < 0 || hidden < 1 || channels < 1)
    throw Error("init_baseline: bad dimensions");
  for (const LayerSpec& spec : layout(m)) {
    m.names.push_back(spec.name);
    Tensor t(spec.shape);
    if (spec.name[0] != 'b') fill_glorot(t, rng);
    m.ts.push_back(std::move(t));
  }
  m.check_dims();
  return m;
}

Tensor baseline_predict(const BaselineModel& m, const Tensor& x, int action) {
  m.check_dims();
  check_action(m, action, "baseline_predict");
  check_state_shape(m, x, "baseline_predict");
  const int O = m.n_objects;
  const int D = m.D;
  Tensor out(Shape::mat(O, D));

  if (m.kind == BaselineKind::Mlp) {
    std::vector<double> cur(O * D + m.n_actions, 0.0);
    std::copy(x.data.begin(), x.data.end(), cur.begin());
    if (m.n_actions > 0) cur[O * D + action] = 1.0;
    for (int layer = 0; layer < 4; ++layer) {
      const Tensor& w = m.ts[2 * layer];
      const Tensor& bias = m.ts[2 * layer + 1];
      std::vector<double> next(w.cols());
      for (std::size_t j = 0; j < w.cols(); ++j) {
        double s = bias.at(j);
        for (std::size_t i = 0; i < cur.size(); ++i) s += cur[i] * w.at(i, j);
        next[j] = layer < 3 ? std::tanh(s) : s;
      }
      cur = std::move(next);
    }
    std::copy(cur.begin(), cur.end(), out.data.begin());
  } else if (m.kind == BaselineKind::Conv1) {
    const Tensor& k = m.ts[0];
    for (int o = 0; o < O; ++o) conv1d_same(&x.data[o * D], D, k.data.data(), 3, &out.data[o * D]);
  } else {
    std::vector<std::vector<double>> chans(O + m.n_actions, std::vector<double>(D, 0.0));
    for (int o = 0; o < O; ++o)
      for (int p = 0; p < D; ++p) chans[o][p] = x.at(o, p);
    if (m.n_actions > 0) std::fill(chans[O + action].begin(), chans[O + action].end(), 1.0);
    std::vector<std::vector<double>> h1, h2, h3;
    conv_layer(chans, m.ts[0], m.ts[1], true, h1);
    conv_layer(h1, m.ts[2], m.ts[3], true, h2);
    conv_layer(h2, m.ts[4], m.ts[5], false, h3);
    for (int o = 0; o < O; ++o)
      std::copy(h3[o].begin(), h3[o].end(), &out.data[o * D]);
  }

  for (int o = 0; o < O; ++o) softmax_row_inplace(&out.data[o * D], D);
  return out;
}

Tensor mlp_predict(const BaselineModel& m, const Tensor& x, int action) {
  if (m.kind != BaselineKind::Mlp) throw Error("mlp_predict: model kind is not \"mlp\"");
  return baseline_predict(m, x, action);
}

Tensor conv1_predict(const BaselineModel& m, const Tensor& x, int action) {
  if (m.kind != BaselineKind::Conv1) throw Error("conv1_predict: model kind is not \"conv1\"");
  return baseline_predict(m, x, action);
}

Tensor conv3_predict(const BaselineModel& m, const Tensor& x, int action) {
  if (m.kind != BaselineKind::Conv3) throw Error("conv3_predict: model kind is not \"conv3\"");
  return baseline_predict(m, x, action);
}

std::vector<Ref> stage_baseline(Tape& t, const BaselineModel& m) {
  m.check_dims();
  std::vector<Ref> out;
  for (const Tensor& p : m.ts) out.push_back(t.input(p));
  return out;
}

Ref build_baseline_prediction(Tape& t, const BaselineModel& m, const std::vector<Ref>& p, Ref x,
                              int action) {
  m.check_dims();
  check_action(m, action, "build_baseline_prediction");
  check_state_shape(m, t.val(x), "build_baseline_prediction");
  if (p.size() != m.ts.size())
    throw Error("build_baseline_prediction: expected " + std::to_string(m.ts.size()) +
                " parameter refs");
  const int O = m.n_objects;
  const int D = m.D;

  if (m.kind == BaselineKind::Mlp) {
    Ref cur = t.reshape(x, Shape::vec(static_cast<std::size_t>(O) * D));
    if (m.n_actions > 0)
      cur = t.concat_vec({cur, t.input(Tensor::one_hot(m.n_actions, action))});
    for (int layer = 0; layer < 4; ++layer) {
      cur = t.add(t.matmul(cur, p[2 * layer]), p[2 * layer + 1]);
      if (layer < 3) cur = t.tanh(cur);
    }
    return t.softmax_rows(t.reshape(cur, Shape::mat(O, D)));
  }

  if (m.kind == BaselineKind::Conv1) return t.softmax_rows(t.conv1d(x, p[0]));

  std::vector<Ref> chans;
  for (int o = 0; o < O; ++o) chans.push_back(t.row(x, o));
  for (int a = 0; a < m.n_actions; ++a)
    chans.push_back(t.input(Tensor::full(Shape::vec(D), a == action ? 1.0 : 0.0)));
  Ref cur = -1;
  for (int layer = 0; layer < 3; ++layer) {
    std::vector<Ref> wins;
    if (layer == 0) {
      for (Ref c : chans) wins.push_back(t.unfold1d(c, 1));
    } else {
      const int width = static_cast<int>(t.val(cur).cols());
      for (int c = 0; c < width; ++c) wins.push_back(t.unfold1d(t.col(cur, c), 1));
    }
    cur = t.add_rowvec(t.matmul(t.concat_cols(wins), p[2 * layer]), p[2 * layer + 1]);
    if (layer < 2) cur = t.tanh(cur);
  }
  return t.softmax_rows(t.transpose(cur));
}

Ref build_baseline_loss(Tape& t, const BaselineModel& m, const std::vector<Ref>& p, Ref x, Ref y,
                        int action, Ref* pred_out) {
  const Ref pred = build_baseline_prediction(t, m, p, x, action);
  if (pred_out) *pred_out = pred;
  check_state_shape(m, t.val(y), "build_baseline_loss");
  return t.bce(y, pred);
}

std::string baseline_to_json(const BaselineModel& m) {
  m.check_dims();
  return std::string("{\"kind\":") + json_str(baseline_name(m.kind)) +
         ",\"n_objects\":" + json_num(m.n_objects) + ",\"D\":" + json_num(m.D) +
         ",\"n_actions\":" + json_num(m.n_actions) + ",\"hidden\":" + json_num(m.hidden) +
         ",\"channels\":" + json_num(m.channels) +
         ",\"params\":" + detail::params_json(m.names, m.params()) + "}";
}

BaselineModel baseline_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error("checkpoint: not valid JSON");
  try {
    BaselineModel m;
    m.kind = baseline_from_name(j.at("kind").get<std::string>());
    m.n_objects = j.at("n_objects").get<int>();
    m.D = j.at("D").get<int>();
    m.n_actions = j.at("n_actions").get<int>();
    m.hidden = j.at("hidden").get<int>();
    m.channels = j.at("channels").get<int>();
    if (m.n_objects < 1 || m.D < 2 || m.n_actions < 0 || m.hidden < 1 || m.channels < 1)
      throw Error("checkpoint: bad baseline dimensions");
    for (const LayerSpec& spec : layout(m)) {
      m.names.push_back(spec.name);
      m.ts.emplace_back(spec.shape);
    }
    detail::load_params(j.at("params"), m.names, m.params());
    m.check_dims();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    // A bad value inside a checkpoint file is runtime data, not usage.
    throw Error(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace nidlab
