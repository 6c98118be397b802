#pragma once

#include <span>
#include <string>
#include <vector>

#include "fainr/autodiff/tape.hpp"

namespace fainr::model {

template <class T>
struct GraphOutput {
  ad::Var<T> prediction;  // B×1
  ad::Var<T> auxiliary;   // optional scalar added to the training loss
};

// A learnable map (x, p) -> y over a batch of queries. `member[b]` selects the
// row of `params` (J×m) that query b is conditioned on.
template <class T>
class Surrogate {
 public:
  virtual ~Surrogate() = default;

  virtual const ad::ParameterSet<T>& parameters() const = 0;
  virtual ad::ParameterSet<T>& parameters() = 0;
  virtual int coord_dim() const = 0;
  virtual int param_dim() const = 0;
  virtual std::string kind() const = 0;

  virtual GraphOutput<T> build(ad::Tape<T>& tape, const std::vector<ad::Var<T>>& bound,
                               const ad::Tensor<T>& coords, std::span<const int> member,
                               ad::Var<T> params) const = 0;

  // Predictions for B coordinates under a single parameter vector (1×m).
  ad::Tensor<T> predict(const ad::Tensor<T>& coords, const ad::Tensor<T>& p) const {
    ad::Tape<T> tape;
    auto bound = tape.bind(parameters(), false);
    std::vector<int> member(static_cast<std::size_t>(coords.rows()), 0);
    return build(tape, bound, coords, member, tape.constant(p)).prediction.value();
  }
};

}  // namespace fainr::model
