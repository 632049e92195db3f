// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#include "perm/model/perm_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "perm/error.hpp"

namespace perm::model {
namespace {

using ad::Tape;
using ad::Tensor;
using ad::Var;

struct Head {
  Var mean;
  Var stddev;
};

Var constant_row(Tape& t, std::size_t width, double value) {
  return t.constant(Tensor::filled({1, width}, value));
}

// Splits [B x 2k] into a mean and a floored softplus stddev.
Head gaussian_head(Tape& t, Var out, std::size_t k) {
  const Var mean = t.slice(out, 0, k);
  const Var raw = t.slice(out, k, 2 * k);
  return {mean, t.broadcast_add_row(t.softplus(raw), constant_row(t, k, irt::kStddevFloor))};
}

Var sigmoid(Tape& t, Var x, std::size_t width) {
  const Var half = t.scalar_mul(t.tanh(t.scalar_mul(x, 0.5)), 0.5);
  return t.broadcast_add_row(half, constant_row(t, width, 0.5));
}

// Wires the four sub-networks over a fixed set of weight nodes.
class Graph {
 public:
  Graph(Tape& t, std::span<const Var> w, const PermConfig& c, const PermLayout& l)
      : t_(t), w_(w), c_(c), l_(l) {}

  Head enc_d(Var x_r, Var x_l) {
    const Var out = mlp_forward(t_, range(l_.enc_d_begin, l_.enc_a_begin), t_.concat({x_r, x_l}));
    return gaussian_head(t_, out, c_.latent_dim);
  }

  Head enc_a(Var d, Var x_r, Var x_l) {
    const Var out =
        mlp_forward(t_, range(l_.enc_a_begin, l_.dec_r_begin), t_.concat({d, x_r, x_l}));
    return gaussian_head(t_, out, c_.latent_dim);
  }

  Head dec_r(Var a, Var d, std::size_t batch) {
    if (c_.response_link == ResponseLink::mlp) {
      const Var out = mlp_forward(t_, range(l_.dec_r_begin, l_.dec_lambda_begin), t_.concat({a, d}));
      return gaussian_head(t_, out, 1);
    }
    const Var w = w_[l_.dec_r_begin];
    const Var b = w_[l_.dec_r_begin + 1];
    const Var s = w_[l_.dec_r_begin + 2];
    const Var ones_n = t_.constant(Tensor::filled({c_.latent_dim, 1}, 1.0));
    const Var margin = t_.matmul(t_.sub(a, d), ones_n);
    const Var mean = t_.broadcast_add_row(t_.matmul(margin, w), b);
    const Var ones_b = t_.constant(Tensor::filled({batch, 1}, 1.0));
    const Var sd = t_.broadcast_add_row(t_.matmul(ones_b, t_.softplus(s)),
                                        constant_row(t_, 1, irt::kStddevFloor));
    return {mean, sd};
  }

  Head dec_lambda(Var d, std::size_t p) {
    const Var out = mlp_forward(t_, range(l_.dec_lambda_begin, l_.end), d);
    const Head h = gaussian_head(t_, out, p);
    return {sigmoid(t_, h.mean, p), h.stddev};
  }

 private:
  std::span<const Var> range(std::size_t b, std::size_t e) const { return w_.subspan(b, e - b); }

  Tape& t_;
  std::span<const Var> w_;
  const PermConfig& c_;
  const PermLayout& l_;
};

struct Inputs {
  Tensor r;       // [B x 1] raw normalized response
  Tensor x_r;     // [B x 1] standardized encoder input
  Tensor lambda;  // [B x P] in [0,1]
  Tensor x_l;     // [B x P] centered encoder input
};

Inputs make_inputs(std::span<const Observation> batch, std::size_t p, double r_mean,
                   double r_std) {
  if (batch.empty()) throw InvalidArgument("PERM: empty batch");
  std::vector<double> r, xr, lam, xl;
  for (const auto& o : batch) {
    if (o.lambda.size() != p) {
      throw ShapeError("PERM: observation has " + std::to_string(o.lambda.size()) +
                       " parameters, model expects " + std::to_string(p));
    }
    if (!std::isfinite(o.r)) throw NonFiniteError("PERM: non-finite response");
    r.push_back(o.r);
    xr.push_back((o.r - r_mean) / r_std);
    for (double v : o.lambda) {
      if (!std::isfinite(v)) throw NonFiniteError("PERM: non-finite parameter");
      lam.push_back(v);
      xl.push_back(2.0 * v - 1.0);
    }
  }
  const std::size_t b = batch.size();
  return {Tensor::matrix(b, 1, r), Tensor::matrix(b, 1, xr), Tensor::matrix(b, p, lam),
          Tensor::matrix(b, p, xl)};
}

std::vector<Var> constants(Tape& t, const std::vector<Tensor>& ws) {
  std::vector<Var> vars;
  vars.reserve(ws.size());
  for (const auto& w : ws) vars.push_back(t.constant(w));
  return vars;
}

Gaussian row_gaussian(const Tape& t, const Head& h, std::size_t row) {
  const auto& m = t.value(h.mean);
  const auto& s = t.value(h.stddev);
  std::vector<double> mean(m.cols()), sd(s.cols());
  for (std::size_t j = 0; j < m.cols(); ++j) mean[j] = m.at(row, j);
  for (std::size_t j = 0; j < s.cols(); ++j) sd[j] = s.at(row, j);
  return Gaussian(std::move(mean), std::move(sd));
}

Tensor repeat_row(std::span<const double> v, std::size_t rows) {
  std::vector<double> out;
  out.reserve(rows * v.size());
  for (std::size_t i = 0; i < rows; ++i) out.insert(out.end(), v.begin(), v.end());
  return Tensor::matrix(rows, v.size(), std::move(out));
}

void require_dim(std::span<const double> v, std::size_t n, const char* what) {
  if (v.size() != n) {
    throw ShapeError(std::string(what) + ": got dimension " + std::to_string(v.size()) +
                     ", expected " + std::to_string(n));
  }
}

}  // namespace

std::string to_string(ResponseLink link) {
  return link == ResponseLink::mlp ? "mlp" : "linear-margin";
}

ResponseLink response_link_from_string(const std::string& s) {
  if (s == "mlp") return ResponseLink::mlp;
  if (s == "linear-margin") return ResponseLink::linear_margin;
  throw InvalidArgument("unknown response link '" + s + "' (expected mlp or linear-margin)");
}

void PermConfig::validate() const {
  if (latent_dim == 0) throw InvalidArgument("perm.latent_dim must be >= 1");
  if (hidden.empty()) throw InvalidArgument("perm.hidden must list at least one width");
  for (auto h : hidden) {
    if (h == 0) throw InvalidArgument("perm.hidden widths must be positive");
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidArgument("perm.learning_rate must be finite and >= 0");
  }
  if (batch_size == 0) throw InvalidArgument("perm.batch_size must be >= 1");
  if (mc_samples == 0) throw InvalidArgument("perm.mc_samples must be >= 1");
}

store::Json to_json(const PermConfig& c) {
  store::Json j;
  j["latent_dim"] = c.latent_dim;
  j["hidden"] = c.hidden;
  j["response_link"] = to_string(c.response_link);
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["mc_samples"] = c.mc_samples;
  j["seed"] = c.seed;
  return j;
}

PermConfig perm_config_from_json(const store::Json& j) {
  if (!j.is_object()) throw InvalidArgument("perm config must be an object");
  PermConfig c;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "latent_dim") c.latent_dim = v.get<std::size_t>();
      else if (key == "hidden") c.hidden = v.get<std::vector<std::size_t>>();
      else if (key == "response_link") c.response_link = response_link_from_string(v.get<std::string>());
      else if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "mc_samples") c.mc_samples = v.get<std::size_t>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else throw InvalidArgument("unknown key 'perm." + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument("bad value for 'perm." + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

Observation observation_of(const store::InteractionRecord& rec) {
  return {rec.normalized_response, rec.lambda_normalized};
}

std::vector<Observation> observations_of(std::span<const store::InteractionRecord> recs) {
  std::vector<Observation> out;
  out.reserve(recs.size());
  for (const auto& r : recs) out.push_back(observation_of(r));
  return out;
}

PermLayout PermLayout::make(const PermConfig& c, std::size_t p) {
  const std::size_t n = c.latent_dim;
  PermLayout l;
  l.enc_d = {1 + p, c.hidden, 2 * n};
  l.enc_a = {n + 1 + p, c.hidden, 2 * n};
  l.dec_r = {2 * n, c.hidden, 2};
  l.dec_lambda = {n, c.hidden, 2 * p};
  l.enc_d_begin = 0;
  l.enc_a_begin = l.enc_d.tensor_count();
  l.dec_r_begin = l.enc_a_begin + l.enc_a.tensor_count();
  const std::size_t dec_r_count =
      c.response_link == ResponseLink::mlp ? l.dec_r.tensor_count() : std::size_t{3};
  l.dec_lambda_begin = l.dec_r_begin + dec_r_count;
  l.end = l.dec_lambda_begin + l.dec_lambda.tensor_count();
  return l;
}

ElboNoise ElboNoise::draw(std::size_t batch, std::size_t n, NoiseSource& noise) {
  std::vector<double> d(batch * n), a(batch * n);
  for (auto& v : d) v = noise.standard_normal();
  for (auto& v : a) v = noise.standard_normal();
  return {Tensor::matrix(batch, n, std::move(d)), Tensor::matrix(batch, n, std::move(a))};
}

Var elbo_on_tape(Tape& t, std::span<const Var> w, const PermConfig& c, const PermLayout& l,
                 double r_mean, double r_std, std::span<const Observation> batch,
                 const ElboNoise& noise, ElboTerms* terms) {
  const std::size_t b = batch.size();
  const std::size_t p = l.dec_lambda.out / 2;
  const Inputs in = make_inputs(batch, p, r_mean, r_std);
  if (noise.d.shape() != ad::Shape{b, c.latent_dim} || noise.a.shape() != noise.d.shape()) {
    throw ShapeError("elbo: noise shape " + ad::to_string(noise.d.shape()) + " does not match [" +
                     std::to_string(b) + ", " + std::to_string(c.latent_dim) + "]");
  }
  Graph g(t, w, c, l);
  const Var r = t.constant(in.r);
  const Var x_r = t.constant(in.x_r);
  const Var lam = t.constant(in.lambda);
  const Var x_l = t.constant(in.x_l);

  const Head qd = g.enc_d(x_r, x_l);
  const Var d = irt::tape_ops::reparam_sample(t, qd.mean, qd.stddev, noise.d);
  const Head qa = g.enc_a(d, x_r, x_l);
  const Var a = irt::tape_ops::reparam_sample(t, qa.mean, qa.stddev, noise.a);

  const Head pr = g.dec_r(a, d, b);
  const Head pl = g.dec_lambda(d, p);
  const Var recon_r = irt::tape_ops::gaussian_log_pdf_sum(t, r, pr.mean, pr.stddev);
  const Var recon_l = irt::tape_ops::gaussian_log_pdf_sum(t, lam, pl.mean, pl.stddev);
  const Var kl_a = irt::tape_ops::kl_to_standard_sum(t, qa.mean, qa.stddev);
  const Var kl_d = irt::tape_ops::kl_to_standard_sum(t, qd.mean, qd.stddev);

  const Var total = t.scalar_mul(t.sub(t.add(recon_r, recon_l), t.add(kl_a, kl_d)),
                                 1.0 / static_cast<double>(b));
  if (terms) {
    const double inv = 1.0 / static_cast<double>(b);
    terms->recon_r = t.value(recon_r).item() * inv;
    terms->recon_lambda = t.value(recon_l).item() * inv;
    terms->kl_a = t.value(kl_a).item() * inv;
    terms->kl_d = t.value(kl_d).item() * inv;
    terms->total = t.value(total).item();
  }
  return total;
}

PermModel::PermModel(PermConfig config, env::ParamSpace space)
    : config_(std::move(config)), space_(std::move(space)) {
  config_.validate();
  if (space_.dim() == 0) throw InvalidArgument("PermModel: empty parameter space");
  layout_ = PermLayout::make(config_, space_.dim());

  Rng rng = Rng(config_.seed).fork("perm-init");
  auto append = [this](const std::string& prefix, const MlpShape& shape, Rng& r) {
    auto ts = init_mlp(shape, r);
    auto ns = mlp_tensor_names(prefix, shape);
    for (std::size_t i = 0; i < ts.size(); ++i) {
      weights_.names.push_back(ns[i]);
      weights_.tensors.push_back(std::move(ts[i]));
    }
  };
  Rng r_enc_d = rng.fork("enc_d"), r_enc_a = rng.fork("enc_a"), r_dec_r = rng.fork("dec_r"),
      r_dec_l = rng.fork("dec_lambda");
  append("enc_d", layout_.enc_d, r_enc_d);
  append("enc_a", layout_.enc_a, r_enc_a);
  if (config_.response_link == ResponseLink::mlp) {
    append("dec_r", layout_.dec_r, r_dec_r);
  } else {
    weights_.names.insert(weights_.names.end(), {"dec_r.w", "dec_r.b", "dec_r.s"});
    weights_.tensors.push_back(Tensor::matrix(1, 1, {1.0}));
    weights_.tensors.push_back(Tensor::matrix(1, 1, {0.0}));
    weights_.tensors.push_back(Tensor::matrix(1, 1, {0.0}));
  }
  append("dec_lambda", layout_.dec_lambda, r_dec_l);
  adam_ = ad::Adam(weights_.tensors, {.lr = config_.learning_rate});
}

void PermModel::set_weights(PermWeights w) {
  if (w.tensors.size() != weights_.tensors.size()) {
    throw ShapeError("PermModel::set_weights: " + std::to_string(w.tensors.size()) +
                     " tensors, expected " + std::to_string(weights_.tensors.size()));
  }
  for (std::size_t i = 0; i < w.tensors.size(); ++i) {
    if (w.tensors[i].shape() != weights_.tensors[i].shape()) {
      throw ShapeError("PermModel::set_weights: tensor '" + weights_.names[i] + "' shape " +
                       ad::to_string(w.tensors[i].shape()) + ", expected " +
                       ad::to_string(weights_.tensors[i].shape()));
    }
  }
  if (!(w.r_std > 0.0) || !std::isfinite(w.r_mean)) {
    throw InvalidArgument("PermModel::set_weights: bad response statistics");
  }
  w.names = weights_.names;
  weights_ = std::move(w);
  adam_ = ad::Adam(weights_.tensors, {.lr = config_.learning_rate});
}

void PermModel::set_response_stats(double mean, double stddev) {
  if (!std::isfinite(mean) || !(stddev > 0.0) || !std::isfinite(stddev)) {
    throw InvalidArgument("PermModel: response statistics must be finite with stddev > 0");
  }
  weights_.r_mean = mean;
  weights_.r_std = stddev;
}

void PermModel::set_learning_rate(double lr) {
  config_.learning_rate = lr;
  adam_.set_lr(lr);
}

Gaussian PermModel::encode_difficulty(double r, std::span<const double> lambda_norm) const {
  const Observation o{r, {lambda_norm.begin(), lambda_norm.end()}};
  const Inputs in = make_inputs({&o, 1}, space_.dim(), weights_.r_mean, weights_.r_std);
  Tape t;
  const auto w = constants(t, weights_.tensors);
  Graph g(t, w, config_, layout_);
  return row_gaussian(t, g.enc_d(t.constant(in.x_r), t.constant(in.x_l)), 0);
}

Gaussian PermModel::encode_ability(std::span<const double> d, double r,
                                   std::span<const double> lambda_norm) const {
  require_dim(d, config_.latent_dim, "encode_ability");
  const Observation o{r, {lambda_norm.begin(), lambda_norm.end()}};
  const Inputs in = make_inputs({&o, 1}, space_.dim(), weights_.r_mean, weights_.r_std);
  Tape t;
  const auto w = constants(t, weights_.tensors);
  Graph g(t, w, config_, layout_);
  const Var dv = t.constant(Tensor::matrix(1, d.size(), {d.begin(), d.end()}));
  return row_gaussian(t, g.enc_a(dv, t.constant(in.x_r), t.constant(in.x_l)), 0);
}

Gaussian PermModel::decode_response(std::span<const double> a, std::span<const double> d) const {
  require_dim(a, config_.latent_dim, "decode_response");
  require_dim(d, config_.latent_dim, "decode_response");
  Tape t;
  const auto w = constants(t, weights_.tensors);
  Graph g(t, w, config_, layout_);
  const Var av = t.constant(Tensor::matrix(1, a.size(), {a.begin(), a.end()}));
  const Var dv = t.constant(Tensor::matrix(1, d.size(), {d.begin(), d.end()}));
  return row_gaussian(t, g.dec_r(av, dv, 1), 0);
}

Gaussian PermModel::decode_params(std::span<const double> d) const {
  require_dim(d, config_.latent_dim, "decode_params");
  Tape t;
  const auto w = constants(t, weights_.tensors);
  Graph g(t, w, config_, layout_);
  const Var dv = t.constant(Tensor::matrix(1, d.size(), {d.begin(), d.end()}));
  return row_gaussian(t, g.dec_lambda(dv, space_.dim()), 0);
}

ElboTerms PermModel::elbo(std::span<const Observation> batch, NoiseSource& noise) const {
  if (batch.empty()) throw InvalidArgument("elbo: empty batch");
  const auto eps = ElboNoise::draw(batch.size(), config_.latent_dim, noise);
  Tape t;
  const auto w = constants(t, weights_.tensors);
  ElboTerms terms;
  elbo_on_tape(t, w, config_, layout_, weights_.r_mean, weights_.r_std, batch, eps, &terms);
  return terms;
}

ElboTerms PermModel::train_step(std::span<const Observation> batch, NoiseSource& noise,
                                std::uint64_t batch_id) {
  if (batch.empty()) throw InvalidArgument("train_step: empty batch");
  const auto eps = ElboNoise::draw(batch.size(), config_.latent_dim, noise);
  ElboTerms terms;
  std::vector<Tensor> ascent;
  try {
    Tape t;
    std::vector<Var> w;
    w.reserve(weights_.tensors.size());
    for (const auto& x : weights_.tensors) w.push_back(t.parameter(x));
    const Var total =
        elbo_on_tape(t, w, config_, layout_, weights_.r_mean, weights_.r_std, batch, eps, &terms);
    const auto grads = t.backward(total);
    ascent.reserve(w.size());
    for (const Var v : w) {
      const auto& gr = grads[v];
      std::vector<double> neg(gr.values().begin(), gr.values().end());
      for (auto& x : neg) x = -x;
      ascent.emplace_back(gr.shape(), std::move(neg));
    }
  } catch (const NonFiniteError& e) {
    throw NonFiniteError("train_step aborted on batch " + std::to_string(batch_id) + ": " +
                         e.what());
  }
  if (terms.kl_a < 0.0 || terms.kl_d < 0.0) {
    throw Error("train_step: negative KL on batch " + std::to_string(batch_id));
  }
  auto updated = weights_.tensors;
  try {
    adam_.step(updated, ascent);
  } catch (const NonFiniteError& e) {
    throw NonFiniteError("train_step aborted on batch " + std::to_string(batch_id) + ": " +
                         e.what());
  }
  weights_.tensors = std::move(updated);
  return terms;
}

Gaussian PermModel::infer_ability(double r, std::span<const double> lambda_norm,
                                  NoiseSource& noise) const {
  const std::size_t s = config_.mc_samples;
  const std::size_t n = config_.latent_dim;
  const Observation o{r, {lambda_norm.begin(), lambda_norm.end()}};
  const Inputs one = make_inputs({&o, 1}, space_.dim(), weights_.r_mean, weights_.r_std);

  Tape t;
  const auto w = constants(t, weights_.tensors);
  Graph g(t, w, config_, layout_);
  const Var x_r = t.constant(repeat_row(one.x_r.values(), s));
  const Var x_l = t.constant(repeat_row(one.x_l.values(), s));
  const Head qd = g.enc_d(x_r, x_l);
  std::vector<double> z(s * n);
  for (auto& v : z) v = noise.standard_normal();
  const Var d = irt::tape_ops::reparam_sample(t, qd.mean, qd.stddev, Tensor::matrix(s, n, z));
  const Head qa = g.enc_a(d, x_r, x_l);
  if (s == 1) return row_gaussian(t, qa, 0);

  const auto& m = t.value(qa.mean);
  const auto& sd = t.value(qa.stddev);
  std::vector<double> mean(n, 0.0), var(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < s; ++i) mean[j] += m.at(i, j);
    mean[j] /= static_cast<double>(s);
    for (std::size_t i = 0; i < s; ++i) {
      const double dev = m.at(i, j) - mean[j];
      var[j] += sd.at(i, j) * sd.at(i, j) + dev * dev;
    }
    var[j] = std::sqrt(var[j] / static_cast<double>(s));
  }
  return Gaussian(std::move(mean), std::move(var));
}

std::vector<double> PermModel::generate_lambda(std::span<const double> d_target,
                                               NoiseSource& noise) const {
  const Gaussian g = decode_params(d_target);
  std::vector<double> unit(g.dim());
  for (std::size_t i = 0; i < unit.size(); ++i) {
    unit[i] = std::clamp(g.mean()[i] + g.stddev()[i] * noise.standard_normal(), 0.0, 1.0);
  }
  return space_.clamp(space_.denormalize(unit));
}

std::vector<double> PermModel::generate_lambda_mean(std::span<const double> d_target) const {
  const Gaussian g = decode_params(d_target);
  std::vector<double> unit(g.mean());
  for (auto& u : unit) u = std::clamp(u, 0.0, 1.0);
  return space_.clamp(space_.denormalize(unit));
}

double PermModel::iw_log_evidence(std::span<const Observation> batch, std::size_t k,
                                  NoiseSource& noise) const {
  if (k == 0) throw InvalidArgument("iw_log_evidence: K must be >= 1");
  if (batch.empty()) throw InvalidArgument("iw_log_evidence: empty batch");
  const std::size_t n = config_.latent_dim;
  const std::size_t p = space_.dim();

  // Row i*k + j holds sample j of record i.
  std::vector<Observation> rows;
  rows.reserve(batch.size() * k);
  for (const auto& o : batch) {
    for (std::size_t j = 0; j < k; ++j) rows.push_back(o);
  }
  const Inputs in = make_inputs(rows, p, weights_.r_mean, weights_.r_std);
  const auto eps = ElboNoise::draw(rows.size(), n, noise);

  Tape t;
  const auto w = constants(t, weights_.tensors);
  Graph g(t, w, config_, layout_);
  const Var x_r = t.constant(in.x_r);
  const Var x_l = t.constant(in.x_l);
  const Head qd = g.enc_d(x_r, x_l);
  const Var d = irt::tape_ops::reparam_sample(t, qd.mean, qd.stddev, eps.d);
  const Head qa = g.enc_a(d, x_r, x_l);
  const Var a = irt::tape_ops::reparam_sample(t, qa.mean, qa.stddev, eps.a);
  const Head pr = g.dec_r(a, d, rows.size());
  const Head pl = g.dec_lambda(d, p);

  const auto row = [&t](Var v, std::size_t i) {
    const auto& x = t.value(v);
    return std::vector<double>(x.values().begin() + static_cast<std::ptrdiff_t>(i * x.cols()),
                               x.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * x.cols()));
  };
  const Gaussian prior = Gaussian::standard(n);
  double total = 0.0;
  std::vector<double> logw(k);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t q = i * k + j;
      const auto ds = row(d, q);
      const auto as = row(a, q);
      const double r_obs[1] = {batch[i].r};
      logw[j] = irt::gaussian_log_pdf(r_obs, row_gaussian(t, pr, q)) +
                irt::gaussian_log_pdf(batch[i].lambda, row_gaussian(t, pl, q)) +
                irt::gaussian_log_pdf(as, prior) + irt::gaussian_log_pdf(ds, prior) -
                irt::gaussian_log_pdf(ds, row_gaussian(t, qd, q)) -
                irt::gaussian_log_pdf(as, row_gaussian(t, qa, q));
    }
    const double mx = *std::max_element(logw.begin(), logw.end());
    double acc = 0.0;
    for (double lw : logw) acc += std::exp(lw - mx);
    total += mx + std::log(acc) - std::log(static_cast<double>(k));
  }
  return total / static_cast<double>(batch.size());
}

store::Json to_json(const env::ParamSpace& s) {
  store::Json j;
  j["names"] = s.names();
  j["lower"] = s.lower();
  j["upper"] = s.upper();
  return j;
}

env::ParamSpace param_space_from_json(const store::Json& j) {
  try {
    return env::ParamSpace(j.at("names").get<std::vector<std::string>>(),
                           j.at("lower").get<std::vector<double>>(),
                           j.at("upper").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("bad parameter space: ") + e.what());
  }
}

store::Checkpoint PermModel::to_checkpoint() const {
  store::Checkpoint c;
  c.kind = kPermCheckpointKind;
  c.meta["config"] = to_json(config_);
  c.meta["space"] = to_json(space_);
  for (std::size_t i = 0; i < weights_.tensors.size(); ++i) {
    c.add(weights_.names[i], weights_.tensors[i]);
  }
  c.add("response_stats", Tensor::row({weights_.r_mean, weights_.r_std}));
  // Space bounds stored as exact binary too; JSON carries them for humans.
  std::vector<double> bounds(space_.lower());
  bounds.insert(bounds.end(), space_.upper().begin(), space_.upper().end());
  c.add("space_bounds", Tensor::matrix(2, space_.dim(), bounds));
  return c;
}

PermModel PermModel::from_checkpoint(const store::Checkpoint& c,
                                     std::optional<std::size_t> expected_latent_dim) {
  if (c.kind != kPermCheckpointKind) {
    throw store::CorruptError("checkpoint kind '" + c.kind + "', expected '" +
                              kPermCheckpointKind + "'");
  }
  PermConfig config;
  env::ParamSpace stored;
  try {
    config = perm_config_from_json(c.meta.at("config"));
    stored = param_space_from_json(c.meta.at("space"));
  } catch (const nlohmann::json::exception& e) {
    throw store::CorruptError(std::string("checkpoint metadata: ") + e.what());
  }
  if (expected_latent_dim && *expected_latent_dim != config.latent_dim) {
    throw store::ShapeMismatch("latent dimension mismatch: checkpoint has " +
                               std::to_string(config.latent_dim) + ", expected " +
                               std::to_string(*expected_latent_dim));
  }
  const std::size_t p = stored.dim();
  const auto bounds = c.tensor("space_bounds", {2, p});
  env::ParamSpace space(stored.names(),
                        {bounds.values().begin(), bounds.values().begin() + static_cast<long>(p)},
                        {bounds.values().begin() + static_cast<long>(p), bounds.values().end()});
  PermModel m(config, space);
  PermWeights w;
  for (std::size_t i = 0; i < m.weights_.tensors.size(); ++i) {
    w.tensors.push_back(c.tensor(m.weights_.names[i], m.weights_.tensors[i].shape()));
  }
  const auto stats = c.tensor("response_stats", {1, 2});
  w.r_mean = stats[0];
  w.r_std = stats[1];
  m.set_weights(std::move(w));
  return m;
}

void PermModel::save(const std::filesystem::path& path) const {
  store::write_checkpoint(path, to_checkpoint());
}

PermModel PermModel::load(const std::filesystem::path& path,
                          std::optional<std::size_t> expected_latent_dim) {
  return from_checkpoint(store::read_checkpoint(path), expected_latent_dim);
}

}  // namespace perm::model

namespace perm::model {

FitResult fit(PermModel& model, std::span<const Observation> train,
              std::span<const Observation> holdout, const FitOptions& options) {
  if (train.empty()) throw InvalidArgument("fit: empty training set");
  if (options.fit_response_stats) {
    double mean = 0.0, ss = 0.0;
    for (const auto& o : train) mean += o.r;
    mean /= static_cast<double>(train.size());
    for (const auto& o : train) ss += (o.r - mean) * (o.r - mean);
    model.set_response_stats(mean, std::max(std::sqrt(ss / static_cast<double>(train.size())), 1e-6));
  }
  const Rng root(options.seed);
  Rng order = root.fork("batch-order");
  Rng noise = root.fork("elbo-noise");
  const std::uint64_t eval_seed = fork_seed(options.seed, "holdout-noise");

  FitResult result;
  const std::size_t bs = std::min(model.config().batch_size, train.size());
  std::vector<std::size_t> idx(train.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::size_t cursor = idx.size();
  double best = -std::numeric_limits<double>::infinity();
  PermWeights best_weights = model.weights();
  std::size_t stale = 0;
  std::vector<Observation> batch;

  auto evaluate_holdout = [&]() {
    Rng r(eval_seed);
    const double v = model.elbo(holdout, r).total;
    result.holdout_elbo.push_back(v);
    if (v > best) {
      best = v;
      best_weights = model.weights();
      stale = 0;
    } else {
      ++stale;
    }
  };

  for (std::size_t step = 0; step < options.steps; ++step) {
    if (cursor + bs > idx.size()) {
      std::shuffle(idx.begin(), idx.end(), order.engine());
      cursor = 0;
    }
    batch.clear();
    for (std::size_t i = 0; i < bs; ++i) batch.push_back(train[idx[cursor + i]]);
    cursor += bs;
    result.train_trace.push_back(model.train_step(batch, noise, step));
    ++result.steps_run;
    if (!holdout.empty() && options.eval_every > 0 && (step + 1) % options.eval_every == 0) {
      evaluate_holdout();
      if (options.patience > 0 && stale >= options.patience) {
        result.early_stopped = true;
        break;
      }
    }
  }
  if (!holdout.empty() && !result.holdout_elbo.empty()) model.set_weights(best_weights);
  return result;
}

}  // namespace perm::model
