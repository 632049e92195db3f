// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#include "perm/students/policy_gradient.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "perm/error.hpp"
#include "perm/grad/tape.hpp"

namespace perm::students {

using ad::Tape;
using ad::Tensor;
using ad::Var;

void PgHyper::validate() const {
  if (hidden.empty()) throw InvalidArgument("pg.hidden must list at least one width");
  for (auto h : hidden) {
    if (h == 0) throw InvalidArgument("pg.hidden widths must be positive");
  }
  auto unit = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument(std::string(name) + " must lie in [0, 1]");
  };
  unit(discount, "pg.discount");
  unit(advantage_mixing, "pg.advantage_mixing");
  if (!(clip > 0.0 && clip < 1.0)) throw InvalidArgument("pg.clip must lie in (0, 1)");
  if (epochs == 0) throw InvalidArgument("pg.epochs must be >= 1");
  if (minibatch == 0) throw InvalidArgument("pg.minibatch must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw InvalidArgument("pg.lr must be finite and >= 0");
  if (!(entropy_coef >= 0.0) || !std::isfinite(entropy_coef)) {
    throw InvalidArgument("pg.entropy_coef must be finite and >= 0");
  }
  if (!(shaping >= 0.0) || !std::isfinite(shaping)) {
    throw InvalidArgument("pg.shaping must be finite and >= 0");
  }
}

store::Json to_json(const PgHyper& h) {
  store::Json j;
  j["hidden"] = h.hidden;
  j["discount"] = h.discount;
  j["advantage_mixing"] = h.advantage_mixing;
  j["clip"] = h.clip;
  j["epochs"] = h.epochs;
  j["minibatch"] = h.minibatch;
  j["lr"] = h.lr;
  j["entropy_coef"] = h.entropy_coef;
  j["shaping"] = h.shaping;
  j["seed"] = h.seed;
  return j;
}

PgHyper pg_hyper_from_json(const store::Json& j) {
  if (!j.is_object()) throw InvalidArgument("pg config must be an object");
  PgHyper h;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "hidden") h.hidden = v.get<std::vector<std::size_t>>();
      else if (key == "discount") h.discount = v.get<double>();
      else if (key == "advantage_mixing") h.advantage_mixing = v.get<double>();
      else if (key == "clip") h.clip = v.get<double>();
      else if (key == "epochs") h.epochs = v.get<std::size_t>();
      else if (key == "minibatch") h.minibatch = v.get<std::size_t>();
      else if (key == "lr") h.lr = v.get<double>();
      else if (key == "entropy_coef") h.entropy_coef = v.get<double>();
      else if (key == "shaping") h.shaping = v.get<double>();
      else if (key == "seed") h.seed = v.get<std::uint64_t>();
      else throw InvalidArgument("unknown key 'pg." + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument("bad value for 'pg." + key + "': " + e.what());
    }
  }
  h.validate();
  return h;
}

std::vector<double> compute_advantages(std::span<const double> rewards,
                                       std::span<const double> values, double discount,
                                       double mixing) {
  if (rewards.size() != values.size()) {
    throw ShapeError("compute_advantages: rewards and values differ in length");
  }
  std::vector<double> adv(rewards.size());
  double next_value = 0.0, running = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    const double delta = rewards[i] + discount * next_value - values[i];
    running = delta + discount * mixing * running;
    adv[i] = running;
    next_value = values[i];
  }
  return adv;
}

std::array<double, kActionCount> log_softmax(std::span<const double> logits) {
  if (logits.size() != kActionCount) throw ShapeError("log_softmax: expected 4 logits");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  const double lse = mx + std::log(z);
  std::array<double, kActionCount> out{};
  for (std::size_t i = 0; i < kActionCount; ++i) out[i] = logits[i] - lse;
  return out;
}

PolicyGradientStudent::PolicyGradientStudent(PgHyper hyper) : hyper_(std::move(hyper)) {
  hyper_.validate();
  policy_shape_ = {env::kLanderObsDim, hyper_.hidden, kActionCount};
  value_shape_ = {env::kLanderObsDim, hyper_.hidden, 1};
  Rng root(hyper_.seed);
  Rng rp = root.fork("policy-init"), rv = root.fork("value-init");
  // Small policy output layer keeps the initial policy near uniform.
  policy_ = model::init_mlp(policy_shape_, rp, 0.01);
  value_ = model::init_mlp(value_shape_, rv, 1.0);
  policy_opt_ = ad::Adam(policy_, {.lr = hyper_.lr});
  value_opt_ = ad::Adam(value_, {.lr = hyper_.lr});
}

std::array<double, 7> PolicyGradientStudent::features(const env::LanderObservation& obs) {
  for (double v : obs) {
    if (!std::isfinite(v)) throw NonFiniteError("policy: non-finite observation");
  }
  return {obs[0] / 10.0, obs[1] / 10.0, obs[2] / 10.0, obs[3] / 10.0,
          obs[4] / 100.0, obs[5], obs[6]};
}

double PolicyGradientStudent::potential(const env::LanderObservation& obs) {
  return -(std::abs(obs[1]) + std::abs(obs[3]) + 0.5 * std::abs(obs[2]) + 0.5 * obs[0]);
}

std::array<double, kActionCount> PolicyGradientStudent::action_probabilities(
    const env::LanderObservation& obs) const {
  const auto f = features(obs);
  const auto logits = model::mlp_eval(policy_, f);
  const auto lp = log_softmax(logits);
  std::array<double, kActionCount> p{};
  for (std::size_t i = 0; i < kActionCount; ++i) p[i] = std::exp(lp[i]);
  return p;
}

double PolicyGradientStudent::value(const env::LanderObservation& obs) const {
  return model::mlp_eval(value_, features(obs))[0];
}

namespace {
std::size_t draw(const std::array<double, kActionCount>& p, double u) {
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < kActionCount; ++i) {
    acc += p[i];
    if (u < acc) return i;
  }
  return kActionCount - 1;
}
}  // namespace

env::LanderAction PolicyGradientStudent::sample(const env::LanderObservation& obs,
                                                Rng& rng) const {
  return static_cast<env::LanderAction>(draw(action_probabilities(obs), rng.uniform()));
}

env::LanderAction PolicyGradientStudent::act(const env::LanderObservation& obs, Rng& rng) {
  const auto f = features(obs);
  const auto lp = log_softmax(model::mlp_eval(policy_, f));
  std::array<double, kActionCount> p{};
  for (std::size_t i = 0; i < kActionCount; ++i) p[i] = std::exp(lp[i]);
  const std::size_t a = draw(p, rng.uniform());
  obs_.push_back(f);
  actions_.push_back(a);
  logp_.push_back(lp[a]);
  values_.push_back(model::mlp_eval(value_, f)[0]);
  return static_cast<env::LanderAction>(a);
}

env::LanderAction PolicyGradientStudent::act_greedy(const env::LanderObservation& obs) const {
  const auto logits = model::mlp_eval(policy_, features(obs));
  return static_cast<env::LanderAction>(std::max_element(logits.begin(), logits.end()) -
                                        logits.begin());
}

void PolicyGradientStudent::observe(double reward, bool done) {
  if (rewards_.size() >= obs_.size()) throw InvalidArgument("observe: no pending action");
  if (!std::isfinite(reward)) throw NonFiniteError("observe: non-finite reward");
  rewards_.push_back(reward);
  if (done) episode_ends_.push_back(rewards_.size());
}

void PolicyGradientStudent::clear_buffer() {
  obs_.clear();
  actions_.clear();
  logp_.clear();
  values_.clear();
  rewards_.clear();
  episode_ends_.clear();
}

PgLossSummary PolicyGradientStudent::update() {
  if (episode_ends_.empty()) throw InvalidArgument("pg_update: no complete episode in buffer");
  // Only complete episodes are used; a trailing partial one is discarded.
  const std::size_t n = episode_ends_.back();

  std::vector<double> adv(n), returns(n);
  std::size_t begin = 0;
  for (std::size_t end : episode_ends_) {
    const auto a = compute_advantages(std::span(rewards_).subspan(begin, end - begin),
                                      std::span(values_).subspan(begin, end - begin),
                                      hyper_.discount, hyper_.advantage_mixing);
    for (std::size_t i = begin; i < end; ++i) {
      adv[i] = a[i - begin];
      returns[i] = adv[i] + values_[i];
    }
    begin = end;
  }
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / static_cast<double>(n));
  if (sd > 1e-8) {
    for (auto& a : adv) a = (a - mean) / sd;
  }

  Rng rng = Rng(hyper_.seed).fork(policy_opt_.states().empty() ? 0 : policy_opt_.states()[0].step);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  PgLossSummary summary;
  summary.transitions = n;
  std::size_t batches = 0, clipped = 0, seen = 0;
  for (std::size_t epoch = 0; epoch < hyper_.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (std::size_t start = 0; start < n; start += hyper_.minibatch) {
      const std::size_t b = std::min(hyper_.minibatch, n - start);
      std::vector<double> x, onehot(b * kActionCount, 0.0), old_logp(b), ret(b);
      x.reserve(b * env::kLanderObsDim);
      for (std::size_t i = 0; i < b; ++i) {
        const std::size_t k = order[start + i];
        x.insert(x.end(), obs_[k].begin(), obs_[k].end());
        onehot[i * kActionCount + actions_[k]] = 1.0;
        old_logp[i] = logp_[k];
        ret[i] = returns[k];
      }
      const Tensor xt = Tensor::matrix(b, env::kLanderObsDim, x);

      // Policy: clipped surrogate. The clip decision is a constant mask,
      // which has the same gradient as the min/clip formulation.
      Tape tp;
      std::vector<Var> pv;
      for (const auto& p : policy_) pv.push_back(tp.parameter(p));
      const Var logits = model::mlp_forward(tp, pv, tp.constant(xt));
      std::vector<double> row_max(b * kActionCount);
      for (std::size_t i = 0; i < b; ++i) {
        double mx = tp.value(logits).at(i, 0);
        for (std::size_t j = 1; j < kActionCount; ++j) mx = std::max(mx, tp.value(logits).at(i, j));
        for (std::size_t j = 0; j < kActionCount; ++j) row_max[i * kActionCount + j] = mx;
      }
      const Var shifted = tp.sub(logits, tp.constant(Tensor::matrix(b, kActionCount, row_max)));
      const Var ones_a = tp.constant(Tensor::filled({kActionCount, 1}, 1.0));
      const Var lse = tp.log(tp.matmul(tp.exp(shifted), ones_a));
      const Var logp_all =
          tp.sub(shifted, tp.matmul(lse, tp.constant(Tensor::filled({1, kActionCount}, 1.0))));
      const Var logp = tp.matmul(tp.mul(logp_all, tp.constant(Tensor::matrix(b, kActionCount, onehot))),
                                 ones_a);
      const Var ratio = tp.exp(tp.sub(logp, tp.constant(Tensor::matrix(b, 1, old_logp))));
      std::vector<double> coef(b);
      double surrogate = 0.0;
      for (std::size_t i = 0; i < b; ++i) {
        const double r = tp.value(ratio)[i];
        const double a = adv[order[start + i]];
        const double rc = std::clamp(r, 1.0 - hyper_.clip, 1.0 + hyper_.clip);
        const bool active = (a >= 0.0) ? r <= 1.0 + hyper_.clip : r >= 1.0 - hyper_.clip;
        surrogate += std::min(r * a, rc * a);
        coef[i] = active ? a / static_cast<double>(b) : 0.0;
        if (!active) ++clipped;
      }
      Var objective = tp.sum(tp.mul(ratio, tp.constant(Tensor::matrix(b, 1, coef))));
      const Var entropy =
          tp.scalar_mul(tp.sum(tp.mul(tp.exp(logp_all), logp_all)), -1.0 / static_cast<double>(b));
      if (hyper_.entropy_coef > 0.0) {
        objective = tp.add(objective, tp.scalar_mul(entropy, hyper_.entropy_coef));
      }
      const auto pg = tp.backward(objective);
      std::vector<Tensor> pgrad;
      for (const Var v : pv) {
        std::vector<double> g(pg[v].values().begin(), pg[v].values().end());
        for (auto& e : g) e = -e;
        pgrad.emplace_back(pg[v].shape(), std::move(g));
      }
      policy_opt_.step(policy_, pgrad);

      // Value: mean squared error to the advantage-mixed returns.
      Tape tv;
      std::vector<Var> vv;
      for (const auto& p : value_) vv.push_back(tv.parameter(p));
      const Var pred = model::mlp_forward(tv, vv, tv.constant(xt));
      const Var loss = tv.mean(tv.square(tv.sub(pred, tv.constant(Tensor::matrix(b, 1, ret)))));
      const auto vg = tv.backward(loss);
      std::vector<Tensor> vgrad;
      for (const Var v : vv) vgrad.push_back(vg[v]);
      value_opt_.step(value_, vgrad);

      summary.policy_objective += surrogate / static_cast<double>(b);
      summary.value_loss += tv.value(loss).item();
      summary.entropy += tp.value(entropy).item();
      seen += b;
      ++batches;
    }
  }
  summary.policy_objective /= static_cast<double>(batches);
  summary.value_loss /= static_cast<double>(batches);
  summary.entropy /= static_cast<double>(batches);
  summary.clip_fraction = static_cast<double>(clipped) / static_cast<double>(seen);
  clear_buffer();
  return summary;
}

env::EpisodeResult PolicyGradientStudent::run_episode(env::Lander& lander,
                                                      std::span<const double> lambda_raw,
                                                      std::uint64_t seed) {
  Rng rng(seed);
  auto obs = lander.reset(lambda_raw, seed);
  while (!lander.done()) {
    const auto a = act(obs, rng);
    const auto step = lander.step(a);
    const double shaped =
        step.reward + hyper_.shaping * (potential(step.observation) - potential(obs));
    observe(shaped, step.done);
    obs = step.observation;
  }
  return {lander.episode_return(), lander.steps(), lander.terminal()};
}

env::EpisodeResult PolicyGradientStudent::evaluate_episode(std::span<const double> lambda_raw,
                                                           std::uint64_t seed, bool greedy) const {
  env::Lander lander;
  Rng rng(seed);
  auto obs = lander.reset(lambda_raw, seed);
  while (!lander.done()) {
    const auto a = greedy ? act_greedy(obs) : sample(obs, rng);
    obs = lander.step(a).observation;
  }
  return {lander.episode_return(), lander.steps(), lander.terminal()};
}

std::string PolicyGradientStudent::digest() const {
  std::vector<unsigned char> bytes;
  auto feed = [&bytes](const std::vector<Tensor>& ts) {
    for (const auto& t : ts) {
      const auto* p = reinterpret_cast<const unsigned char*>(t.values().data());
      bytes.insert(bytes.end(), p, p + t.size() * sizeof(double));
    }
  };
  feed(policy_);
  feed(value_);
  return store::sha256_hex(bytes);
}

store::Checkpoint PolicyGradientStudent::to_checkpoint() const {
  store::Checkpoint c;
  c.kind = kPgCheckpointKind;
  c.meta["hyper"] = to_json(hyper_);
  const auto pn = model::mlp_tensor_names("policy", policy_shape_);
  const auto vn = model::mlp_tensor_names("value", value_shape_);
  for (std::size_t i = 0; i < policy_.size(); ++i) c.add(pn[i], policy_[i]);
  for (std::size_t i = 0; i < value_.size(); ++i) c.add(vn[i], value_[i]);
  return c;
}

PolicyGradientStudent PolicyGradientStudent::from_checkpoint(const store::Checkpoint& c) {
  if (c.kind != kPgCheckpointKind) {
    throw store::CorruptError("checkpoint kind '" + c.kind + "', expected '" + kPgCheckpointKind +
                              "'");
  }
  PolicyGradientStudent s(pg_hyper_from_json(c.meta.at("hyper")));
  const auto pn = model::mlp_tensor_names("policy", s.policy_shape_);
  const auto vn = model::mlp_tensor_names("value", s.value_shape_);
  for (std::size_t i = 0; i < s.policy_.size(); ++i) {
    s.policy_[i] = c.tensor(pn[i], s.policy_[i].shape());
  }
  for (std::size_t i = 0; i < s.value_.size(); ++i) s.value_[i] = c.tensor(vn[i], s.value_[i].shape());
  s.policy_opt_ = ad::Adam(s.policy_, {.lr = s.hyper_.lr});
  s.value_opt_ = ad::Adam(s.value_, {.lr = s.hyper_.lr});
  return s;
}

}  // namespace perm::students
