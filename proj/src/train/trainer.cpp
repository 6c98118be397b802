#include "fainr/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace fainr::train {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kProbeStream = ~std::uint64_t{0};

}  // namespace

void TrainConfig::validate() const {
  FAINR_REQUIRE(batch_size >= 1, ContractError, "train config: batch_size must be >= 1");
  FAINR_REQUIRE(steps >= 0, ContractError, "train config: steps must be >= 0");
  FAINR_REQUIRE(learning_rate > 0, ContractError, "train config: learning_rate must be > 0");
  FAINR_REQUIRE(decay_factor > 0 && decay_factor <= 1, ContractError,
                "train config: decay_factor must lie in (0, 1]");
  for (std::size_t i = 1; i < decay_milestones.size(); ++i)
    FAINR_REQUIRE(decay_milestones[i] > decay_milestones[i - 1], ContractError,
                  "train config: decay milestones must be strictly increasing");
  FAINR_REQUIRE(validation_interval >= 1, ContractError,
                "train config: validation_interval must be >= 1");
  FAINR_REQUIRE(checkpoint_interval >= 0, ContractError,
                "train config: checkpoint_interval must be >= 0");
  FAINR_REQUIRE(divergence_factor > 1, ContractError,
                "train config: divergence_factor must be > 1");
  FAINR_REQUIRE(max_grad_norm >= 0, ContractError, "train config: max_grad_norm must be >= 0");
  FAINR_REQUIRE(probe_size >= 1, ContractError, "train config: probe_size must be >= 1");
}

std::vector<long> TrainConfig::milestones() const {
  if (!decay_milestones.empty()) return decay_milestones;
  std::vector<long> out;
  for (int k = 1; k < 5; ++k) {
    const long s = steps * k / 5;
    if (s > 0 && (out.empty() || s > out.back())) out.push_back(s);
  }
  return out;
}

double TrainConfig::lr_at(long step) const {
  double lr = learning_rate;
  for (long m : milestones())
    if (step >= m) lr *= decay_factor;
  return lr;
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"batch_size", c.batch_size},
       {"steps", c.steps},
       {"learning_rate", c.learning_rate},
       {"decay_factor", c.decay_factor},
       {"decay_milestones", c.milestones()},
       {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}}},
       {"seed", c.seed},
       {"validation_interval", c.validation_interval},
       {"checkpoint_interval", c.checkpoint_interval},
       {"divergence_factor", c.divergence_factor},
       {"max_grad_norm", c.max_grad_norm},
       {"probe_size", c.probe_size}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  FAINR_REQUIRE(j.is_object(), ContractError, "train config must be an object");
  for (const auto& [k, v] : j.items()) {
    if (k == "batch_size") c.batch_size = v.get<int>();
    else if (k == "steps") c.steps = v.get<long>();
    else if (k == "learning_rate") c.learning_rate = v.get<double>();
    else if (k == "decay_factor") c.decay_factor = v.get<double>();
    else if (k == "decay_milestones") c.decay_milestones = v.get<std::vector<long>>();
    else if (k == "adam") {
      c.adam.beta1 = v.value("beta1", c.adam.beta1);
      c.adam.beta2 = v.value("beta2", c.adam.beta2);
      c.adam.epsilon = v.value("epsilon", c.adam.epsilon);
    } else if (k == "seed") c.seed = v.get<std::uint64_t>();
    else if (k == "validation_interval") c.validation_interval = v.get<long>();
    else if (k == "checkpoint_interval") c.checkpoint_interval = v.get<long>();
    else if (k == "divergence_factor") c.divergence_factor = v.get<double>();
    else if (k == "max_grad_norm") c.max_grad_norm = v.get<double>();
    else if (k == "probe_size") c.probe_size = v.get<int>();
    else throw ContractError("train config: unknown key '" + k + "'");
  }
}

SampleDomain training_domain(const data::NormalizedEnsemble& data) {
  SampleDomain d;
  d.members = data.train_members;
  return d;
}

template <class T>
Batch<T> sample_batch(const data::NormalizedEnsemble& data, const SampleDomain& domain,
                      int batch_size, std::mt19937_64& rng) {
  FAINR_REQUIRE(!domain.members.empty(), ContractError, "sample_batch: no members to draw from");
  FAINR_REQUIRE(batch_size >= 1, ContractError, "sample_batch: batch size must be >= 1");
  const std::size_t n_coords =
      domain.coords.empty() ? static_cast<std::size_t>(data.coords.rows()) : domain.coords.size();
  FAINR_REQUIRE(n_coords >= 1, ContractError, "sample_batch: no coordinates to draw from");
  std::uniform_int_distribution<std::size_t> pick_member(0, domain.members.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_coord(0, n_coords - 1);
  std::vector<std::pair<std::size_t, std::size_t>> draws(static_cast<std::size_t>(batch_size));
  for (auto& [j, i] : draws) {
    j = domain.members[pick_member(rng)];
    const std::size_t c = pick_coord(rng);
    i = domain.coords.empty() ? c : domain.coords[c];
  }
  std::stable_sort(draws.begin(), draws.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });

  Batch<T> b;
  const Eigen::Index d = data.coords.cols();
  b.coords.resize(batch_size, d);
  b.targets.resize(batch_size, 1);
  b.member.resize(static_cast<std::size_t>(batch_size));
  for (std::size_t k = 0; k < draws.size(); ++k) {
    const auto [j, i] = draws[k];
    if (b.member_ids.empty() || b.member_ids.back() != j) b.member_ids.push_back(j);
    b.member[k] = static_cast<int>(b.member_ids.size()) - 1;
    const auto row = static_cast<Eigen::Index>(k);
    b.coords.row(row) = data.coords.row(static_cast<Eigen::Index>(i)).template cast<T>();
    b.targets(row, 0) = static_cast<T>(data.values[j][i]);
  }
  b.params.resize(static_cast<Eigen::Index>(b.member_ids.size()), data.params.cols());
  for (std::size_t r = 0; r < b.member_ids.size(); ++r)
    b.params.row(static_cast<Eigen::Index>(r)) =
        data.params.row(static_cast<Eigen::Index>(b.member_ids[r])).template cast<T>();
  return b;
}

template <class T>
ad::Var<T> batch_loss(const model::Surrogate<T>& model, ad::Tape<T>& tape,
                      const std::vector<ad::Var<T>>& bound, const Batch<T>& batch) {
  auto out = model.build(tape, bound, batch.coords, batch.member, tape.constant(batch.params));
  ad::Var<T> loss = mse_loss(out.prediction, tape.constant(batch.targets));
  if (out.auxiliary.valid()) loss = ad::add(loss, out.auxiliary);
  return loss;
}

namespace {

template <class T>
double probe_mse(const model::Surrogate<T>& model, const Batch<T>& probe) {
  ad::Tape<T> tape;
  auto bound = tape.bind(model.parameters(), false);
  auto out = model.build(tape, bound, probe.coords, probe.member, tape.constant(probe.params));
  const auto diff = (out.prediction.value() - probe.targets).template cast<double>();
  return diff.squaredNorm() / static_cast<double>(diff.size());
}

double psnr_unit(double mse) {
  return mse > 0 ? 10.0 * std::log10(1.0 / mse) : std::numeric_limits<double>::infinity();
}

}  // namespace

template <class T>
TrainReport train(model::Surrogate<T>& model, const data::NormalizedEnsemble& data,
                  const TrainConfig& cfg, const SampleDomain& domain, const TrainHooks<T>& hooks,
                  AdamState<T>* state) {
  cfg.validate();
  FAINR_REQUIRE(model.coord_dim() == data.coords.cols() && model.param_dim() == data.params.cols(),
                DimensionError, "train: model and dataset dimensions differ");
  AdamState<T> local;
  if (!state) {
    local = make_adam_state(model.parameters());
    state = &local;
  }
  FAINR_REQUIRE(state->first.size() == model.parameters().size(), DimensionError,
                "train: optimizer state does not match the model");

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  std::mt19937_64 probe_rng(mix_seed(cfg.seed, kProbeStream));
  const Batch<T> probe = sample_batch<T>(data, domain, cfg.probe_size, probe_rng);

  TrainReport report;
  report.initial_probe_loss = probe_mse(model, probe);
  double first_loss = std::numeric_limits<double>::quiet_NaN();
  double last_loss = std::numeric_limits<double>::quiet_NaN();

  while (state->step < cfg.steps) {
    const long step = state->step;
    const double lr = cfg.lr_at(step);
    std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(step)));
    const Batch<T> batch = sample_batch<T>(data, domain, cfg.batch_size, rng);

    ad::Tape<T> tape;
    auto bound = tape.bind(model.parameters());
    ad::Var<T> loss = batch_loss(model, tape, bound, batch);
    const double lv = static_cast<double>(loss.value()(0, 0));
    FAINR_REQUIRE(std::isfinite(lv), NumericError,
                  "training loss became non-finite at step " + std::to_string(step));
    if (std::isnan(first_loss)) first_loss = lv;
    FAINR_REQUIRE(lv <= cfg.divergence_factor * first_loss, NumericError,
                  "training diverged at step " + std::to_string(step) + ": loss " +
                      std::to_string(lv) + " exceeds " + std::to_string(cfg.divergence_factor) +
                      "x the initial loss " + std::to_string(first_loss));
    last_loss = lv;
    auto grads = ad::backward(loss, bound);
    if (cfg.max_grad_norm > 0) {
      double sq = 0;
      for (const auto& g : grads) sq += static_cast<double>(g.squaredNorm());
      const double norm = std::sqrt(sq);
      if (norm > cfg.max_grad_norm)
        for (auto& g : grads) g *= static_cast<T>(cfg.max_grad_norm / norm);
    }
    adam_step(model.parameters(), grads, *state, lr, cfg.adam);

    const long done = state->step;
    if (done % cfg.validation_interval == 0 || done == cfg.steps) {
      LogRow row{done, lv, lr, psnr_unit(probe_mse(model, probe)), elapsed()};
      report.log.push_back(row);
      if (hooks.on_log) hooks.on_log(row);
    }
    if (cfg.checkpoint_interval > 0 && done % cfg.checkpoint_interval == 0 && hooks.on_checkpoint)
      hooks.on_checkpoint(done, *state);
  }

  report.final_probe_loss = probe_mse(model, probe);
  report.final_loss = last_loss;
  report.final_step = state->step;
  if (const auto* fa = dynamic_cast<const model::FaInrModel<T>*>(&model))
    report.keys = key_utilization(*fa, data, domain, 4096, mix_seed(cfg.seed, kProbeStream - 1));
  report.elapsed_s = elapsed();
  return report;
}

std::vector<double> KeyUtilization::histogram(int expert) const {
  std::vector<double> h = mass.at(static_cast<std::size_t>(expert));
  const double total = std::accumulate(h.begin(), h.end(), 0.0);
  if (total > 0)
    for (double& v : h) v /= total;
  return h;
}

double KeyUtilization::mean_entropy() const {
  return entropy.empty() ? 0.0
                         : std::accumulate(entropy.begin(), entropy.end(), 0.0) / entropy.size();
}

double KeyUtilization::mean_normalized_entropy() const {
  return normalized_entropy.empty()
             ? 0.0
             : std::accumulate(normalized_entropy.begin(), normalized_entropy.end(), 0.0) /
                   normalized_entropy.size();
}

template <class T>
KeyUtilization key_utilization(const model::FaInrModel<T>& model,
                               const data::NormalizedEnsemble& data, const SampleDomain& domain,
                               std::size_t sample_count, std::uint64_t seed) {
  const auto& cfg = model.config();
  KeyUtilization out;
  out.mass.assign(static_cast<std::size_t>(cfg.experts),
                  std::vector<double>(static_cast<std::size_t>(cfg.memory_slots), 0.0));
  std::mt19937_64 rng(seed);
  std::size_t remaining = sample_count;
  while (remaining > 0) {
    const int chunk = static_cast<int>(std::min<std::size_t>(remaining, 4096));
    remaining -= static_cast<std::size_t>(chunk);
    const Batch<T> batch = sample_batch<T>(data, domain, chunk, rng);
    ad::Tape<T> tape;
    auto bound = tape.bind(model.parameters(), false);
    model::ForwardDiagnostics<T> diag;
    model.build(tape, bound, batch.coords, batch.member, tape.constant(batch.params), &diag);
    for (int e = 0; e < cfg.experts; ++e) {
      const auto& a = diag.attention[static_cast<std::size_t>(e)];
      if (a.size() == 0) continue;
      const Eigen::Matrix<double, 1, Eigen::Dynamic> cols = a.template cast<double>().colwise().sum();
      for (int k = 0; k < cfg.memory_slots; ++k) out.mass[static_cast<std::size_t>(e)][static_cast<std::size_t>(k)] += cols(k);
    }
    out.queries += static_cast<std::size_t>(chunk);
  }
  for (int e = 0; e < cfg.experts; ++e) {
    const auto h = out.histogram(e);
    double ent = 0;
    for (double p : h)
      if (p > 0) ent -= p * std::log(p);
    out.entropy.push_back(ent);
    out.normalized_entropy.push_back(cfg.memory_slots > 1 ? ent / std::log(double(cfg.memory_slots)) : 1.0);
    out.total_mass += std::accumulate(out.mass[static_cast<std::size_t>(e)].begin(),
                                      out.mass[static_cast<std::size_t>(e)].end(), 0.0);
  }
  return out;
}

template <class T>
std::vector<float> predict_member(const model::Surrogate<T>& model,
                                  const data::NormalizedEnsemble& data, std::size_t member,
                                  std::size_t chunk) {
  FAINR_REQUIRE(member < static_cast<std::size_t>(data.params.rows()), ContractError,
                "predict_member: member index out of range");
  const auto n = static_cast<std::size_t>(data.coords.rows());
  const ad::Tensor<T> p = data.params.row(static_cast<Eigen::Index>(member)).template cast<T>();
  std::vector<float> out(n);
  for (std::size_t start = 0; start < n; start += chunk) {
    const auto len = static_cast<Eigen::Index>(std::min(chunk, n - start));
    const ad::Tensor<T> coords =
        data.coords.middleRows(static_cast<Eigen::Index>(start), len).template cast<T>();
    const ad::Tensor<T> y = model.predict(coords, p);
    for (Eigen::Index i = 0; i < len; ++i) out[start + static_cast<std::size_t>(i)] = static_cast<float>(y(i, 0));
  }
  return out;
}

#define FAINR_INSTANTIATE(T)                                                                  \
  template Batch<T> sample_batch<T>(const data::NormalizedEnsemble&, const SampleDomain&, int, \
                                    std::mt19937_64&);                                        \
  template ad::Var<T> batch_loss<T>(const model::Surrogate<T>&, ad::Tape<T>&,                 \
                                    const std::vector<ad::Var<T>>&, const Batch<T>&);         \
  template TrainReport train<T>(model::Surrogate<T>&, const data::NormalizedEnsemble&,        \
                                const TrainConfig&, const SampleDomain&, const TrainHooks<T>&, \
                                AdamState<T>*);                                               \
  template KeyUtilization key_utilization<T>(const model::FaInrModel<T>&,                     \
                                             const data::NormalizedEnsemble&,                 \
                                             const SampleDomain&, std::size_t, std::uint64_t); \
  template std::vector<float> predict_member<T>(const model::Surrogate<T>&,                   \
                                                const data::NormalizedEnsemble&, std::size_t, \
                                                std::size_t);

FAINR_INSTANTIATE(float)
FAINR_INSTANTIATE(double)

}  // namespace fainr::train
