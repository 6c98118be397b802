#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "fainr/data/dataset.hpp"
#include "fainr/model/fa_inr.hpp"
#include "fainr/train/optim.hpp"

namespace fainr::train {

struct TrainConfig {
  int batch_size = 2048;  // coordinate-member pairs per step
  long steps = 1000;
  double learning_rate = 1e-4;
  double decay_factor = 0.9;
  std::vector<long> decay_milestones;  // empty: every 20% of `steps`
  AdamConfig adam;
  std::uint64_t seed = 0;
  long validation_interval = 100;
  long checkpoint_interval = 0;   // 0 disables checkpoint callbacks
  double divergence_factor = 1e3; // abort when loss exceeds this multiple of the first loss
  double max_grad_norm = 0.0;     // 0 disables clipping
  int probe_size = 2048;

  void validate() const;
  std::vector<long> milestones() const;
  double lr_at(long step) const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// Queries drawn for one step, sorted so that equal members are adjacent.
template <class T>
struct Batch {
  ad::Tensor<T> coords;    // B×d
  ad::Tensor<T> params;    // J'×m, distinct members in the batch
  std::vector<int> member; // B, row into params
  std::vector<std::size_t> member_ids;  // J', dataset member index per params row
  ad::Tensor<T> targets;   // B×1
};

// Which (member, coordinate) pairs training may draw from.
struct SampleDomain {
  std::vector<std::size_t> members;
  std::vector<std::size_t> coords;  // empty = all coordinates
};

// Uniform with replacement over members × coordinates of `domain`.
template <class T>
Batch<T> sample_batch(const data::NormalizedEnsemble& data, const SampleDomain& domain,
                      int batch_size, std::mt19937_64& rng);

struct LogRow {
  long step = 0;
  double loss = 0;
  double lr = 0;
  double val_psnr = 0;
  double elapsed_s = 0;
};

struct KeyUtilization {
  std::vector<std::vector<double>> mass;  // per expert, raw attention mass per key
  std::vector<double> entropy;            // per expert, natural log
  std::vector<double> normalized_entropy; // entropy / ln(M)
  double total_mass = 0;
  std::size_t queries = 0;

  std::vector<double> histogram(int expert) const;  // mass normalized to sum 1
  double mean_entropy() const;
  double mean_normalized_entropy() const;
};

struct TrainReport {
  std::vector<LogRow> log;
  double initial_probe_loss = 0;
  double final_probe_loss = 0;
  double final_loss = 0;
  long final_step = 0;
  double elapsed_s = 0;
  KeyUtilization keys;  // empty for non-memory-bank models
};

template <class T>
struct TrainHooks {
  std::function<void(const LogRow&)> on_log;
  std::function<void(long step, const AdamState<T>&)> on_checkpoint;
};

// Optimizes `model` on the training members of `data`. When `state` is given
// training resumes from state->step and the state is updated in place.
template <class T>
TrainReport train(model::Surrogate<T>& model, const data::NormalizedEnsemble& data,
                  const TrainConfig& cfg, const SampleDomain& domain,
                  const TrainHooks<T>& hooks = {}, AdamState<T>* state = nullptr);

// Attention mass per key accumulated over `sample_count` random queries
// drawn from `domain`; every query contributes top_k units.
template <class T>
KeyUtilization key_utilization(const model::FaInrModel<T>& model,
                               const data::NormalizedEnsemble& data, const SampleDomain& domain,
                               std::size_t sample_count, std::uint64_t seed);

// Loss and gradients of one batch (used by train and by gradient checks).
template <class T>
ad::Var<T> batch_loss(const model::Surrogate<T>& model, ad::Tape<T>& tape,
                      const std::vector<ad::Var<T>>& bound, const Batch<T>& batch);

SampleDomain training_domain(const data::NormalizedEnsemble& data);

// Normalized predictions for all coordinates of one member.
template <class T>
std::vector<float> predict_member(const model::Surrogate<T>& model,
                                  const data::NormalizedEnsemble& data, std::size_t member,
                                  std::size_t chunk = 8192);

}  // namespace fainr::train
