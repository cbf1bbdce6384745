#include "nidlab/model.hpp"

#include <algorithm>
#include <cmath>

#include "checkpoint_util.hpp"
#include "json.hpp"
#include "nidlab/error.hpp"
#include "nidlab/jsonio.hpp"

namespace nidlab {

const char* variant_name(AttentionVariant v) {
  return v == AttentionVariant::SampleDependent ? "sample_dependent" : "sample_independent";
}

AttentionVariant variant_from_name(const std::string& s) {
  if (s == "sample_dependent") return AttentionVariant::SampleDependent;
  if (s == "sample_independent") return AttentionVariant::SampleIndependent;
  throw ConfigError("unknown attention variant \"" + s + "\"");
}

const char* init_name(InitScheme s) {
  return s == InitScheme::Random ? "random" : "fixed_rows";
}

InitScheme init_from_name(const std::string& s) {
  if (s == "random") return InitScheme::Random;
  if (s == "fixed_rows") return InitScheme::FixedRows;
  throw ConfigError("unknown init scheme \"" + s + "\"");
}

void Hyper::validate() const {
  if (K < 1 || m < 1 || d1 < 1 || dP < 1 || dR < 1 || H < 1)
    throw ConfigError("hyper: K, m, d1, dP, dR and H must be at least 1");
  if (S1 < 0 || S2 < 0) throw ConfigError("hyper: kernel half-widths must be nonnegative");
  if (lambda1 < 0 || lambda2 < 0) throw ConfigError("hyper: entropy weights must be nonnegative");
  if (!(lr > 0)) throw ConfigError("hyper: lr must be positive");
  if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("hyper: rho must lie in [0, 1)");
  if (!(eps > 0)) throw ConfigError("hyper: eps must be positive");
  if (steps < 0) throw ConfigError("hyper: steps must be nonnegative");
}

std::vector<Tensor*> NidModel::params() {
  return {&Q, &V, &W, &A, &b, &W1, &b1, &W2, &b2, &kernels};
}

std::vector<const Tensor*> NidModel::params() const {
  return {&Q, &V, &W, &A, &b, &W1, &b1, &W2, &b2, &kernels};
}

const std::vector<std::string>& NidModel::param_names() {
  static const std::vector<std::string> names = {"Q",  "V",  "W",  "A",  "b",
                                                 "W1", "b1", "W2", "b2", "kernels"};
  return names;
}

void NidModel::check_dims() const {
  hyper.validate();
  if (n_objects < 1) throw Error("model: needs at least one object");
  if (D < 2) throw Error("model: needs a grid of at least two cells");
  if (n_actions < 0) throw Error("model: negative action count");
  auto want = [](const Tensor& t, Shape s, const char* name) {
    if (t.shape != s)
      throw Error(std::string("model: ") + name + " has shape " + t.shape.str() + ", expected " +
                  s.str());
    if (!t.all_finite())
      throw Error(std::string("model: ") + name + " has non-finite entries");
  };
  const std::size_t n = n_objects + D;
  const std::size_t win = 2 * (2 * hyper.S1 + 1);
  want(Q, Shape::mat(n, hyper.K), "Q");
  want(V, Shape::mat(hyper.K, hyper.d1), "V");
  want(W, Shape::mat(hyper.d1, hyper.dP), "W");
  want(A, Shape::mat(hyper.dR, win), "A");
  want(b, Shape::vec(hyper.dR), "b");
  want(W1, Shape::mat(decoder_in(), hyper.H), "W1");
  want(b1, Shape::vec(hyper.H), "b1");
  want(W2, Shape::mat(hyper.H, hyper.m), "W2");
  want(b2, Shape::vec(hyper.m), "b2");
  want(kernels, Shape::mat(hyper.m, 2 * hyper.S2 + 1), "kernels");
}

void fill_glorot(Tensor& t, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(t.shape.d0 + t.shape.d1));
  for (double& v : t.data) v = rng.uniform(-bound, bound);
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void allocate(NidModel& m) {
  const std::size_t n = m.n_objects + m.D;
  const std::size_t win = 2 * (2 * m.hyper.S1 + 1);
  m.Q = Tensor(Shape::mat(n, m.hyper.K));
  m.V = Tensor(Shape::mat(m.hyper.K, m.hyper.d1));
  m.W = Tensor(Shape::mat(m.hyper.d1, m.hyper.dP));
  m.A = Tensor(Shape::mat(m.hyper.dR, win));
  m.b = Tensor(Shape::vec(m.hyper.dR));
  m.W1 = Tensor(Shape::mat(m.decoder_in(), m.hyper.H));
  m.b1 = Tensor(Shape::vec(m.hyper.H));
  m.W2 = Tensor(Shape::mat(m.hyper.H, m.hyper.m));
  m.b2 = Tensor(Shape::vec(m.hyper.m));
  m.kernels = Tensor(Shape::mat(m.hyper.m, 2 * m.hyper.S2 + 1));
}

// Sign-pattern rows: row k, coordinate j carries (-1)^bit / sqrt(d1) where
// bit is the j-th binary digit of k mod 2^d1. Rows repeat past 2^d1.
void fill_sign_rows(Tensor& v, int K, int d1) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(d1));
  const int period = d1 < 30 ? (1 << d1) : (1 << 30);
  for (int k = 0; k < K; ++k) {
    const int kk = k % period;
    for (int j = 0; j < d1; ++j) {
      const int shift = d1 - 1 - j;
      const int bit = shift < 30 ? ((kk >> shift) & 1) : 0;
      v.at(k, j) = bit ? -scale : scale;
    }
  }
}

void check_action(const NidModel& m, int action, const char* who) {
  if (m.n_actions == 0) {
    if (action != -1) throw Error(std::string(who) + ": this model takes no actions");
  } else if (action < 0 || action >= m.n_actions) {
    throw Error(std::string(who) + ": action " + std::to_string(action) +
                " out of range for " + std::to_string(m.n_actions) + " actions");
  }
}

// h and theta must hold d1 and dP doubles; attn may be null or hold K
// (sample-dependent) or 2K (sample-independent) doubles.
void encode_raw(const NidModel& m, int o, int p, double* attn, double* h, double* theta) {
  const int K = m.hyper.K;
  const int d1 = m.hyper.d1;
  std::vector<double> buf(2 * K);
  if (m.hyper.variant == AttentionVariant::SampleDependent) {
    for (int k = 0; k < K; ++k) buf[k] = m.Q.at(o, k) + m.Q.at(m.n_objects + p, k);
    softmax_row_inplace(buf.data(), K);
    if (attn) std::copy(buf.begin(), buf.begin() + K, attn);
    for (int j = 0; j < d1; ++j) {
      double s = 0.0;
      for (int k = 0; k < K; ++k) s += buf[k] * m.V.at(k, j);
      h[j] = sigmoid(s);
    }
  } else {
    double* ro = buf.data();
    double* rp = buf.data() + K;
    for (int k = 0; k < K; ++k) ro[k] = m.Q.at(o, k);
    softmax_row_inplace(ro, K);
    for (int k = 0; k < K; ++k) rp[k] = m.Q.at(m.n_objects + p, k);
    softmax_row_inplace(rp, K);
    if (attn) std::copy(buf.begin(), buf.end(), attn);
    for (int j = 0; j < d1; ++j) {
      double s = 0.0;
      for (int k = 0; k < K; ++k) s += (ro[k] + rp[k]) * m.V.at(k, j);
      h[j] = sigmoid(s);
    }
  }
  for (int q = 0; q < m.hyper.dP; ++q) {
    double s = 0.0;
    for (int j = 0; j < d1; ++j) s += h[j] * m.W.at(j, q);
    theta[q] = s;
  }
}

// out must hold D x dR doubles, row-major, pre-zeroed by the caller.
void edge_aggregate_raw(const NidModel& m, const Tensor& x, int o, double* out) {
  const int S1 = m.hyper.S1;
  const int wlen = 2 * S1 + 1;
  const int dR = m.hyper.dR;
  std::vector<double> cat(2 * wlen);
  for (int other = 0; other < m.n_objects; ++other) {
    if (other == o) continue;
    for (int p = 0; p < m.D; ++p) {
      for (int l = -S1; l <= S1; ++l) {
        const int q = p + l;
        const bool in = q >= 0 && q < m.D;
        cat[l + S1] = in ? x.at(other, q) : 0.0;
        cat[wlen + l + S1] = in ? x.at(o, q) : 0.0;
      }
      for (int r = 0; r < dR; ++r) {
        double s = m.b.at(r);
        for (int c = 0; c < 2 * wlen; ++c) s += m.A.at(r, c) * cat[c];
        out[p * dR + r] += std::tanh(s);
      }
    }
  }
}

// Decoder on one node feature vector; out receives the m-simplex.
void decode_raw(const NidModel& m, const double* theta, const double* edge_row, int action,
                double* out) {
  const int dP = m.hyper.dP;
  const int dR = m.hyper.dR;
  const int H = m.hyper.H;
  std::vector<double> feat(m.decoder_in(), 0.0);
  std::copy(theta, theta + dP, feat.begin());
  std::copy(edge_row, edge_row + dR, feat.begin() + dP);
  if (m.n_actions > 0) feat[dP + dR + action] = 1.0;
  std::vector<double> h1(H);
  for (int j = 0; j < H; ++j) {
    double s = m.b1.at(j);
    for (std::size_t i = 0; i < feat.size(); ++i) s += feat[i] * m.W1.at(i, j);
    h1[j] = std::tanh(s);
  }
  for (int z = 0; z < m.hyper.m; ++z) {
    double s = m.b2.at(z);
    for (int j = 0; j < H; ++j) s += h1[j] * m.W2.at(j, z);
    out[z] = s;
  }
  softmax_row_inplace(out, m.hyper.m);
}

}  // namespace

NidModel init_params(const Hyper& hyper, int n_objects, int D, int n_actions, Rng& rng) {
  hyper.validate();
  if (n_objects < 1) throw Error("init_params: needs at least one object");
  if (D < 2) throw Error("init_params: needs a grid of at least two cells");
  if (n_actions < 0) throw Error("init_params: negative action count");
  NidModel m;
  m.hyper = hyper;
  m.n_objects = n_objects;
  m.D = D;
  m.n_actions = n_actions;
  allocate(m);
  if (hyper.init == InitScheme::Random) {
    fill_glorot(m.Q, rng);
    fill_glorot(m.V, rng);
  } else {
    // Q stays zero; V gets the deterministic sign pattern.
    fill_sign_rows(m.V, hyper.K, hyper.d1);
  }
  fill_glorot(m.W, rng);
  fill_glorot(m.A, rng);
  fill_glorot(m.W1, rng);
  fill_glorot(m.W2, rng);
  fill_glorot(m.kernels, rng);
  m.check_dims();
  return m;
}

void validate_state_rows(const Tensor& x, int n_objects, int D, double tol) {
  const Shape want = Shape::mat(n_objects, D);
  if (x.shape != want)
    throw Error("state tensor has shape " + x.shape.str() + ", expected " + want.str());
  for (int i = 0; i < n_objects; ++i) {
    double s = 0.0;
    for (int j = 0; j < D; ++j) s += x.at(i, j);
    if (!(std::abs(s - 1.0) <= tol))
      throw Error("state row " + std::to_string(i) + " sums to " + std::to_string(s) +
                  ", expected 1");
  }
}

Encoding encode(const NidModel& m, int o, int p) {
  m.check_dims();
  if (o < 0 || o >= m.n_objects)
    throw Error("encode: object index " + std::to_string(o) + " out of range");
  if (p < 0 || p >= m.D) throw Error("encode: position " + std::to_string(p) + " out of range");
  Encoding out;
  const bool dep = m.hyper.variant == AttentionVariant::SampleDependent;
  out.attn = Tensor(Shape::mat(dep ? 1 : 2, m.hyper.K));
  out.h = Tensor(Shape::vec(m.hyper.d1));
  out.theta = Tensor(Shape::vec(m.hyper.dP));
  encode_raw(m, o, p, out.attn.data.data(), out.h.data.data(), out.theta.data.data());
  return out;
}

Tensor edge_aggregate(const NidModel& m, const Tensor& x, int o) {
  m.check_dims();
  if (o < 0 || o >= m.n_objects)
    throw Error("edge_aggregate: object index " + std::to_string(o) + " out of range");
  const Shape want = Shape::mat(m.n_objects, m.D);
  if (x.shape != want)
    throw Error("edge_aggregate: state has shape " + x.shape.str() + ", expected " + want.str());
  Tensor out(Shape::mat(m.D, m.hyper.dR));
  edge_aggregate_raw(m, x, o, out.data.data());
  return out;
}

Tensor select_transition(const NidModel& m, const Tensor& x, int o, int p, int action) {
  m.check_dims();
  check_action(m, action, "select_transition");
  if (p < 0 || p >= m.D)
    throw Error("select_transition: position " + std::to_string(p) + " out of range");
  const Tensor edge = edge_aggregate(m, x, o);
  Encoding enc = encode(m, o, p);
  Tensor out(Shape::vec(m.hyper.m));
  decode_raw(m, enc.theta.data.data(), &edge.data[p * m.hyper.dR], action, out.data.data());
  return out;
}

std::vector<Tensor> apply_outcomes(const NidModel& m, const Tensor& x) {
  m.check_dims();
  const Shape want = Shape::mat(m.n_objects, m.D);
  if (x.shape != want)
    throw Error("apply_outcomes: state has shape " + x.shape.str() + ", expected " + want.str());
  const int klen = 2 * m.hyper.S2 + 1;
  std::vector<Tensor> out;
  out.reserve(m.hyper.m);
  for (int z = 0; z < m.hyper.m; ++z) {
    Tensor t(want);
    for (int o = 0; o < m.n_objects; ++o)
      conv1d_same(&x.data[o * m.D], m.D, &m.kernels.data[z * klen], klen, &t.data[o * m.D]);
    out.push_back(std::move(t));
  }
  return out;
}

Tensor predict_next(const NidModel& m, const Tensor& x, int action) {
  m.check_dims();
  check_action(m, action, "predict_next");
  validate_state_rows(x, m.n_objects, m.D);
  const int D = m.D;
  const int dR = m.hyper.dR;
  const int S2 = m.hyper.S2;
  Tensor out(Shape::mat(m.n_objects, D));
  std::vector<double> edge(D * dR);
  std::vector<double> h(m.hyper.d1);
  std::vector<double> theta(m.hyper.dP);
  std::vector<double> sel(m.hyper.m);
  std::vector<double> tilde(D);
  for (int o = 0; o < m.n_objects; ++o) {
    std::fill(edge.begin(), edge.end(), 0.0);
    edge_aggregate_raw(m, x, o, edge.data());
    std::fill(tilde.begin(), tilde.end(), 0.0);
    for (int p = 0; p < D; ++p) {
      const double mass = x.at(o, p);
      encode_raw(m, o, p, nullptr, h.data(), theta.data());
      decode_raw(m, theta.data(), &edge[p * dR], action, sel.data());
      for (int z = 0; z < m.hyper.m; ++z) {
        const double gated = sel[z] * mass;
        for (int l = -S2; l <= S2; ++l) {
          const int dest = p + l;
          if (dest >= 0 && dest < D) tilde[dest] += m.kernels.at(z, l + S2) * gated;
        }
      }
    }
    softmax_row_inplace(tilde.data(), D);
    std::copy(tilde.begin(), tilde.end(), &out.data[o * D]);
  }
  return out;
}

std::pair<double, double> entropy_terms(const Tensor& Q) {
  if (Q.shape.rank != 2) throw Error("entropy_terms: Q must be a matrix");
  const int n = static_cast<int>(Q.rows());
  const int K = static_cast<int>(Q.cols());
  std::vector<double> row(K);
  std::vector<double> pk(K, 0.0);
  double r1 = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < K; ++k) row[k] = Q.at(i, k);
    softmax_row_inplace(row.data(), K);
    for (int k = 0; k < K; ++k) {
      r1 -= row[k] * std::log(std::max(row[k], kLogEps));
      pk[k] += row[k];
    }
  }
  r1 /= n;
  double r2 = 0.0;
  for (int k = 0; k < K; ++k) {
    const double p = pk[k] / n;
    r2 -= p * std::log(std::max(p, kLogEps));
  }
  return {r1, r2};
}

double loss_value(const NidModel& m, const Tensor& x, const Tensor& x_next, int action) {
  const Tensor pred = predict_next(m, x, action);
  const Shape want = Shape::mat(m.n_objects, m.D);
  if (x_next.shape != want)
    throw Error("loss: target has shape " + x_next.shape.str() + ", expected " + want.str());
  double L = bce_mean(x_next.data.data(), pred.data.data(), pred.numel(), kLogEps);
  if (m.hyper.lambda1 > 0 || m.hyper.lambda2 > 0) {
    const auto [r1, r2] = entropy_terms(m.Q);
    L += m.hyper.lambda1 * r1 + m.hyper.lambda2 * r2;
  }
  return L;
}

std::vector<Ref> stage_params(Tape& t, const NidModel& m) {
  m.check_dims();
  std::vector<Ref> out;
  for (const Tensor* p : m.params()) out.push_back(t.input(*p));
  return out;
}

Ref build_prediction(Tape& t, const NidModel& m, const std::vector<Ref>& p, Ref x, int action) {
  m.check_dims();
  check_action(m, action, "build_prediction");
  if (p.size() != m.params().size())
    throw Error("build_prediction: expected " + std::to_string(m.params().size()) +
                " parameter refs");
  validate_state_rows(t.val(x), m.n_objects, m.D);
  const Ref Q = p[0], V = p[1], W = p[2], A = p[3], b = p[4];
  const Ref W1 = p[5], b1 = p[6], W2 = p[7], b2 = p[8], ker = p[9];
  const int O = m.n_objects;
  const int D = m.D;

  // Position slots of the attention logits, shared across objects.
  const Ref pos_rows = t.rows(Q, O, D);
  Ref w1mat = -1;
  if (m.hyper.variant == AttentionVariant::SampleIndependent)
    w1mat = t.matmul(t.softmax_rows(Q), V);

  Ref act_cols = -1;
  if (m.n_actions > 0) {
    Tensor acts(Shape::mat(D, m.n_actions));
    for (int i = 0; i < D; ++i) acts.at(i, action) = 1.0;
    act_cols = t.input(acts);
  }

  const Ref At = t.transpose(A);
  std::vector<Ref> tilde_rows;
  tilde_rows.reserve(O);
  for (int o = 0; o < O; ++o) {
    Ref h;
    if (m.hyper.variant == AttentionVariant::SampleDependent) {
      const Ref logits = t.add_rowvec(pos_rows, t.row(Q, o));
      h = t.sigmoid(t.matmul(t.softmax_rows(logits), V));
    } else {
      h = t.sigmoid(t.add_rowvec(t.rows(w1mat, O, D), t.row(w1mat, o)));
    }
    const Ref theta = t.matmul(h, W);

    const Ref own = t.unfold1d(t.row(x, o), m.hyper.S1);
    Ref edge = -1;
    for (int other = 0; other < O; ++other) {
      if (other == o) continue;
      const Ref pair = t.concat_cols({t.unfold1d(t.row(x, other), m.hyper.S1), own});
      const Ref phi = t.tanh(t.add_rowvec(t.matmul(pair, At), b));
      edge = edge < 0 ? phi : t.add(edge, phi);
    }
    if (edge < 0) edge = t.input(Tensor(Shape::mat(D, m.hyper.dR)));

    const Ref feats = act_cols >= 0 ? t.concat_cols({theta, edge, act_cols})
                                    : t.concat_cols({theta, edge});
    const Ref h1 = t.tanh(t.add_rowvec(t.matmul(feats, W1), b1));
    const Ref sel = t.softmax_rows(t.add_rowvec(t.matmul(h1, W2), b2));

    const Ref xrow = t.row(x, o);
    Ref tilde = -1;
    for (int z = 0; z < m.hyper.m; ++z) {
      const Ref moved = t.conv1d(t.mul(t.col(sel, z), xrow), t.row(ker, z));
      tilde = tilde < 0 ? moved : t.add(tilde, moved);
    }
    tilde_rows.push_back(tilde);
  }
  return t.softmax_rows(t.stack_rows(tilde_rows));
}

Ref build_loss(Tape& t, const NidModel& m, const std::vector<Ref>& p, Ref x, Ref y, int action,
               Ref* pred_out, bool entropy) {
  const Ref pred = build_prediction(t, m, p, x, action);
  if (pred_out) *pred_out = pred;
  validate_state_rows(t.val(y), m.n_objects, m.D);
  Ref L = t.bce(y, pred);
  if (entropy && (m.hyper.lambda1 > 0 || m.hyper.lambda2 > 0)) {
    const int n = m.n_objects + m.D;
    const Ref P = t.softmax_rows(p[0]);
    const Ref r1 = t.scale(t.sum(t.mul(P, t.log(P))), -1.0 / n);
    const Ref ones = t.input(Tensor::full(Shape::vec(n), 1.0));
    const Ref pk = t.scale(t.matmul(t.transpose(P), ones), 1.0 / n);
    const Ref r2 = t.scale(t.sum(t.mul(pk, t.log(pk))), -1.0);
    L = t.add(L, t.add(t.scale(r1, m.hyper.lambda1), t.scale(r2, m.hyper.lambda2)));
  }
  return L;
}

namespace {

std::string hyper_to_json(const Hyper& h) {
  return std::string("{\"K\":") + json_num(h.K) + ",\"m\":" + json_num(h.m) +
         ",\"d1\":" + json_num(h.d1) + ",\"dP\":" + json_num(h.dP) + ",\"dR\":" + json_num(h.dR) +
         ",\"S1\":" + json_num(h.S1) + ",\"S2\":" + json_num(h.S2) + ",\"H\":" + json_num(h.H) +
         ",\"lambda1\":" + json_num(h.lambda1) + ",\"lambda2\":" + json_num(h.lambda2) +
         ",\"lr\":" + json_num(h.lr) + ",\"rho\":" + json_num(h.rho) +
         ",\"eps\":" + json_num(h.eps) + ",\"steps\":" + json_num(h.steps) +
         ",\"variant\":" + json_str(variant_name(h.variant)) +
         ",\"init\":" + json_str(init_name(h.init)) +
         ",\"seed\":" + json_num(static_cast<unsigned long long>(h.seed)) + "}";
}

Hyper hyper_from_json(const nlohmann::json& j) {
  Hyper h;
  h.K = j.at("K").get<int>();
  h.m = j.at("m").get<int>();
  h.d1 = j.at("d1").get<int>();
  h.dP = j.at("dP").get<int>();
  h.dR = j.at("dR").get<int>();
  h.S1 = j.at("S1").get<int>();
  h.S2 = j.at("S2").get<int>();
  h.H = j.at("H").get<int>();
  h.lambda1 = j.at("lambda1").get<double>();
  h.lambda2 = j.at("lambda2").get<double>();
  h.lr = j.at("lr").get<double>();
  h.rho = j.at("rho").get<double>();
  h.eps = j.at("eps").get<double>();
  h.steps = j.at("steps").get<int>();
  h.variant = variant_from_name(j.at("variant").get<std::string>());
  h.init = init_from_name(j.at("init").get<std::string>());
  h.seed = j.at("seed").get<std::uint64_t>();
  h.validate();
  return h;
}

}  // namespace

std::string nid_to_json(const NidModel& m) {
  m.check_dims();
  return std::string("{\"kind\":\"nid\",\"hyper\":") + hyper_to_json(m.hyper) +
         ",\"n_objects\":" + json_num(m.n_objects) + ",\"D\":" + json_num(m.D) +
         ",\"n_actions\":" + json_num(m.n_actions) +
         ",\"params\":" + detail::params_json(NidModel::param_names(), m.params()) + "}";
}

NidModel nid_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error("checkpoint: not valid JSON");
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind != "nid") throw Error("checkpoint: kind \"" + kind + "\" is not \"nid\"");
    NidModel m;
    m.hyper = hyper_from_json(j.at("hyper"));
    m.n_objects = j.at("n_objects").get<int>();
    m.D = j.at("D").get<int>();
    m.n_actions = j.at("n_actions").get<int>();
    if (m.n_objects < 1 || m.D < 2 || m.n_actions < 0)
      throw Error("checkpoint: bad environment dimensions");
    allocate(m);
    detail::load_params(j.at("params"), NidModel::param_names(), m.params());
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
