#pragma once

#include <unsupported/Eigen/SpecialFunctions>

#include <cmath>
#include <numbers>
#include <vector>

#include "fainr/autodiff/tape.hpp"

namespace fainr::ad {

namespace detail {

template <class T>
void require_same_tape(Var<T> a, Var<T> b) {
  FAINR_REQUIRE(a.tape == b.tape && a.tape != nullptr, ContractError,
                "operands recorded on different tapes");
}

template <class T>
void require_same_shape(const char* op, Var<T> a, Var<T> b) {
  FAINR_REQUIRE(a.rows() == b.rows() && a.cols() == b.cols(), DimensionError,
                std::string(op) + ": shape mismatch " + shape_string(a.value()) + " vs " +
                    shape_string(b.value()));
}

}  // namespace detail

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  FAINR_REQUIRE(a.cols() == b.rows(), DimensionError,
                "matmul: inner extents differ " + shape_string(a.value()) + " x " +
                    shape_string(b.value()));
  Tape<T>& t = *a.tape;
  Tensor<T> out = a.value() * b.value();
  const int ia = a.id, ib = b.id;
  return t.push("matmul", std::move(out), t.needs_grad(a) || t.needs_grad(b),
                [ia, ib](Tape<T>& t, int self) {
                  const Tensor<T>& g = t.node(self).grad;
                  if (t.needs_grad(ia)) t.grad_ref(ia).noalias() += g * t.node(ib).value.transpose();
                  if (t.needs_grad(ib)) t.grad_ref(ib).noalias() += t.node(ia).value.transpose() * g;
                });
}

// a · bᵀ
template <class T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  FAINR_REQUIRE(a.cols() == b.cols(), DimensionError,
                "matmul_nt: inner extents differ " + shape_string(a.value()) + " x " +
                    shape_string(b.value()) + "^T");
  Tape<T>& t = *a.tape;
  Tensor<T> out = a.value() * b.value().transpose();
  const int ia = a.id, ib = b.id;
  return t.push("matmul_nt", std::move(out), t.needs_grad(a) || t.needs_grad(b),
                [ia, ib](Tape<T>& t, int self) {
                  const Tensor<T>& g = t.node(self).grad;
                  if (t.needs_grad(ia)) t.grad_ref(ia).noalias() += g * t.node(ib).value;
                  if (t.needs_grad(ib)) t.grad_ref(ib).noalias() += g.transpose() * t.node(ia).value;
                });
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  detail::require_same_shape("add", a, b);
  Tape<T>& t = *a.tape;
  const int ia = a.id, ib = b.id;
  return t.push("add", a.value() + b.value(), t.needs_grad(a) || t.needs_grad(b),
                [ia, ib](Tape<T>& t, int self) {
                  const Tensor<T>& g = t.node(self).grad;
                  if (t.needs_grad(ia)) t.grad_ref(ia) += g;
                  if (t.needs_grad(ib)) t.grad_ref(ib) += g;
                });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  detail::require_same_shape("sub", a, b);
  Tape<T>& t = *a.tape;
  const int ia = a.id, ib = b.id;
  return t.push("sub", a.value() - b.value(), t.needs_grad(a) || t.needs_grad(b),
                [ia, ib](Tape<T>& t, int self) {
                  const Tensor<T>& g = t.node(self).grad;
                  if (t.needs_grad(ia)) t.grad_ref(ia) += g;
                  if (t.needs_grad(ib)) t.grad_ref(ib) -= g;
                });
}

// Element-wise (Hadamard) product.
template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  detail::require_same_shape("mul", a, b);
  Tape<T>& t = *a.tape;
  const int ia = a.id, ib = b.id;
  Tensor<T> out = a.value().cwiseProduct(b.value());
  return t.push("mul", std::move(out), t.needs_grad(a) || t.needs_grad(b),
                [ia, ib](Tape<T>& t, int self) {
                  const Tensor<T>& g = t.node(self).grad;
                  if (t.needs_grad(ia)) t.grad_ref(ia) += g.cwiseProduct(t.node(ib).value);
                  if (t.needs_grad(ib)) t.grad_ref(ib) += g.cwiseProduct(t.node(ia).value);
                });
}

template <class T>
Var<T> scale(Var<T> a, T factor) {
  Tape<T>& t = *a.tape;
  const int ia = a.id;
  return t.push("scale", a.value() * factor, t.needs_grad(a), [ia, factor](Tape<T>& t, int self) {
    t.grad_ref(ia) += t.node(self).grad * factor;
  });
}

template <class T>
Var<T> add_scalar(Var<T> a, T offset) {
  Tape<T>& t = *a.tape;
  const int ia = a.id;
  Tensor<T> out = a.value().array() + offset;
  return t.push("add_scalar", std::move(out), t.needs_grad(a),
                [ia](Tape<T>& t, int self) { t.grad_ref(ia) += t.node(self).grad; });
}

// a (n×k) + bias (1×k) broadcast over rows.
template <class T>
Var<T> add_row(Var<T> a, Var<T> bias) {
  detail::require_same_tape(a, bias);
  FAINR_REQUIRE(bias.rows() == 1 && bias.cols() == a.cols(), DimensionError,
                "add_row: bias " + shape_string(bias.value()) + " does not fit " +
                    shape_string(a.value()));
  Tape<T>& t = *a.tape;
  Tensor<T> out = a.value();
  out.rowwise() += bias.value().row(0);
  const int ia = a.id, ib = bias.id;
  return t.push("add_row", std::move(out), t.needs_grad(a) || t.needs_grad(bias),
                [ia, ib](Tape<T>& t, int self) {
                  const Tensor<T>& g = t.node(self).grad;
                  if (t.needs_grad(ia)) t.grad_ref(ia) += g;
                  if (t.needs_grad(ib)) t.grad_ref(ib) += g.colwise().sum();
                });
}

// Row i of a (n×k) scaled by w(i) where w is n×1.
template <class T>
Var<T> mul_col(Var<T> a, Var<T> w) {
  detail::require_same_tape(a, w);
  FAINR_REQUIRE(w.cols() == 1 && w.rows() == a.rows(), DimensionError,
                "mul_col: weights " + shape_string(w.value()) + " do not fit " +
                    shape_string(a.value()));
  Tape<T>& t = *a.tape;
  Tensor<T> out = a.value().array().colwise() * w.value().col(0).array();
  const int ia = a.id, iw = w.id;
  return t.push("mul_col", std::move(out), t.needs_grad(a) || t.needs_grad(w),
                [ia, iw](Tape<T>& t, int self) {
                  const Tensor<T>& g = t.node(self).grad;
                  if (t.needs_grad(ia))
                    t.grad_ref(ia).array() += g.array().colwise() * t.node(iw).value.col(0).array();
                  if (t.needs_grad(iw))
                    t.grad_ref(iw).col(0) += g.cwiseProduct(t.node(ia).value).rowwise().sum();
                });
}

// Gaussian error linear unit, exact erf form.
template <class T>
Var<T> gelu(Var<T> a) {
  Tape<T>& t = *a.tape;
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  const auto x = a.value().array();
  Tensor<T> out = (T(0.5) * x * (T(1) + (x * inv_sqrt2).erf())).matrix();
  const int ia = a.id;
  return t.push("gelu", std::move(out), t.needs_grad(a), [ia](Tape<T>& t, int self) {
    constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
    constexpr T inv_sqrt2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
    const auto x = t.node(ia).value.array();
    const auto cdf = T(0.5) * (T(1) + (x * inv_sqrt2).erf());
    const auto pdf = (T(-0.5) * x.square()).exp() * inv_sqrt2pi;
    t.grad_ref(ia).array() += t.node(self).grad.array() * (cdf + x * pdf);
  });
}

template <class T>
Var<T> abs(Var<T> a) {
  Tape<T>& t = *a.tape;
  const int ia = a.id;
  Tensor<T> out = a.value().cwiseAbs();
  return t.push("abs", std::move(out), t.needs_grad(a), [ia](Tape<T>& t, int self) {
    t.grad_ref(ia).array() += t.node(self).grad.array() * t.node(ia).value.array().sign();
  });
}

template <class T>
Var<T> square(Var<T> a) {
  Tape<T>& t = *a.tape;
  const int ia = a.id;
  Tensor<T> out = a.value().array().square().matrix();
  return t.push("square", std::move(out), t.needs_grad(a), [ia](Tape<T>& t, int self) {
    t.grad_ref(ia).array() += T(2) * t.node(self).grad.array() * t.node(ia).value.array();
  });
}

// Softmax along each row, max-subtracted.
template <class T>
Tensor<T> softmax_rows_value(const Tensor<T>& x) {
  FAINR_REQUIRE(x.cols() >= 1, DimensionError, "softmax over an empty axis");
  Tensor<T> y = (x.colwise() - x.rowwise().maxCoeff()).array().exp().matrix();
  y.array().colwise() /= y.rowwise().sum().array();
  return y;
}

template <class T>
Var<T> softmax_rows(Var<T> a) {
  Tape<T>& t = *a.tape;
  const int ia = a.id;
  return t.push("softmax_rows", softmax_rows_value(a.value()), t.needs_grad(a),
                [ia](Tape<T>& t, int self) {
                  const Tensor<T>& y = t.node(self).value;
                  const Tensor<T>& g = t.node(self).grad;
                  Eigen::Matrix<T, Eigen::Dynamic, 1> dot = g.cwiseProduct(y).rowwise().sum();
                  t.grad_ref(ia).array() += y.array() * (g.colwise() - dot).array();
                });
}

// Divides each row by its sum. Rows must have nonzero sums.
template <class T>
Var<T> normalize_rows(Var<T> a) {
  Tape<T>& t = *a.tape;
  const int ia = a.id;
  Eigen::Matrix<T, Eigen::Dynamic, 1> s = a.value().rowwise().sum();
  FAINR_REQUIRE((s.array() != T(0)).all(), ContractError, "normalize_rows: zero row sum");
  Tensor<T> out = a.value().array().colwise() / s.array();
  return t.push("normalize_rows", std::move(out), t.needs_grad(a),
                [ia, s = std::move(s)](Tape<T>& t, int self) {
                  const Tensor<T>& y = t.node(self).value;
                  const Tensor<T>& g = t.node(self).grad;
                  Eigen::Matrix<T, Eigen::Dynamic, 1> dot = g.cwiseProduct(y).rowwise().sum();
                  t.grad_ref(ia).array() += (g.colwise() - dot).array().colwise() / s.array();
                });
}

template <class T>
Var<T> concat_cols(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  FAINR_REQUIRE(a.rows() == b.rows(), DimensionError,
                "concat_cols: row counts differ " + shape_string(a.value()) + " vs " +
                    shape_string(b.value()));
  Tape<T>& t = *a.tape;
  Tensor<T> out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const int ia = a.id, ib = b.id;
  const Eigen::Index ca = a.cols(), cb = b.cols();
  return t.push("concat_cols", std::move(out), t.needs_grad(a) || t.needs_grad(b),
                [ia, ib, ca, cb](Tape<T>& t, int self) {
                  const Tensor<T>& g = t.node(self).grad;
                  if (t.needs_grad(ia)) t.grad_ref(ia) += g.leftCols(ca);
                  if (t.needs_grad(ib)) t.grad_ref(ib) += g.rightCols(cb);
                });
}

// Column j as an n×1 tensor.
template <class T>
Var<T> column(Var<T> a, Eigen::Index j) {
  FAINR_REQUIRE(j >= 0 && j < a.cols(), DimensionError,
                "column " + std::to_string(j) + " out of range for " + shape_string(a.value()));
  Tape<T>& t = *a.tape;
  const int ia = a.id;
  Tensor<T> out = a.value().col(j);
  return t.push("column", std::move(out), t.needs_grad(a), [ia, j](Tape<T>& t, int self) {
    t.grad_ref(ia).col(j) += t.node(self).grad.col(0);
  });
}

// out.row(i) = a.row(index[i]). Indices may repeat.
template <class T>
Var<T> gather_rows(Var<T> a, std::vector<int> index) {
  Tape<T>& t = *a.tape;
  const Tensor<T>& av = a.value();
  Tensor<T> out(static_cast<Eigen::Index>(index.size()), av.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    FAINR_REQUIRE(index[i] >= 0 && index[i] < av.rows(), DimensionError,
                  "gather_rows: index " + std::to_string(index[i]) + " out of range for " +
                      shape_string(av));
    out.row(static_cast<Eigen::Index>(i)) = av.row(index[i]);
  }
  const int ia = a.id;
  return t.push("gather_rows", std::move(out), t.needs_grad(a),
                [ia, index = std::move(index)](Tape<T>& t, int self) {
                  const Tensor<T>& g = t.node(self).grad;
                  Tensor<T>& ga = t.grad_ref(ia);
                  for (std::size_t i = 0; i < index.size(); ++i)
                    ga.row(index[i]) += g.row(static_cast<Eigen::Index>(i));
                });
}

// Inverse of gather_rows: out (rows×k) is zero except out.row(index[i]) += a.row(i).
template <class T>
Var<T> scatter_rows(Var<T> a, std::vector<int> index, Eigen::Index rows) {
  FAINR_REQUIRE(static_cast<Eigen::Index>(index.size()) == a.rows(), DimensionError,
                "scatter_rows: " + std::to_string(index.size()) + " indices for " +
                    shape_string(a.value()));
  Tape<T>& t = *a.tape;
  const Tensor<T>& av = a.value();
  Tensor<T> out = Tensor<T>::Zero(rows, av.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    FAINR_REQUIRE(index[i] >= 0 && index[i] < rows, DimensionError,
                  "scatter_rows: index " + std::to_string(index[i]) + " out of range");
    out.row(index[i]) += av.row(static_cast<Eigen::Index>(i));
  }
  const int ia = a.id;
  return t.push("scatter_rows", std::move(out), t.needs_grad(a),
                [ia, index = std::move(index)](Tape<T>& t, int self) {
                  const Tensor<T>& g = t.node(self).grad;
                  Tensor<T>& ga = t.grad_ref(ia);
                  for (std::size_t i = 0; i < index.size(); ++i)
                    ga.row(static_cast<Eigen::Index>(i)) += g.row(index[i]);
                });
}

// Rows [begin, end) of `a` multiply block `block` of a vertically stacked
// right operand whose blocks are `block_rows` tall.
struct Segment {
  Eigen::Index begin = 0;
  Eigen::Index end = 0;
  Eigen::Index block = 0;
};

template <class T>
Var<T> segmented_matmul(Var<T> a, Var<T> stacked, std::vector<Segment> segments,
                        Eigen::Index block_rows) {
  detail::require_same_tape(a, stacked);
  FAINR_REQUIRE(a.cols() == block_rows && block_rows > 0 && stacked.rows() % block_rows == 0,
                DimensionError,
                "segmented_matmul: " + shape_string(a.value()) + " against blocks of " +
                    std::to_string(block_rows) + " rows in " + shape_string(stacked.value()));
  const Eigen::Index blocks = stacked.rows() / block_rows;
  Tape<T>& t = *a.tape;
  Tensor<T> out = Tensor<T>::Zero(a.rows(), stacked.cols());
  for (const auto& s : segments) {
    FAINR_REQUIRE(s.begin >= 0 && s.begin <= s.end && s.end <= a.rows() && s.block >= 0 &&
                      s.block < blocks,
                  DimensionError, "segmented_matmul: segment out of range");
    out.middleRows(s.begin, s.end - s.begin).noalias() =
        a.value().middleRows(s.begin, s.end - s.begin) *
        stacked.value().middleRows(s.block * block_rows, block_rows);
  }
  const int ia = a.id, ib = stacked.id;
  return t.push("segmented_matmul", std::move(out), t.needs_grad(a) || t.needs_grad(stacked),
                [ia, ib, block_rows, segments = std::move(segments)](Tape<T>& t, int self) {
                  const Tensor<T>& g = t.node(self).grad;
                  const Tensor<T>& av = t.node(ia).value;
                  const Tensor<T>& bv = t.node(ib).value;
                  const bool ga_needed = t.needs_grad(ia), gb_needed = t.needs_grad(ib);
                  for (const auto& s : segments) {
                    const Eigen::Index n = s.end - s.begin;
                    if (n == 0) continue;
                    if (ga_needed)
                      t.grad_ref(ia).middleRows(s.begin, n).noalias() +=
                          g.middleRows(s.begin, n) *
                          bv.middleRows(s.block * block_rows, block_rows).transpose();
                    if (gb_needed)
                      t.grad_ref(ib).middleRows(s.block * block_rows, block_rows).noalias() +=
                          av.middleRows(s.begin, n).transpose() * g.middleRows(s.begin, n);
                  }
                });
}

// out.row(b) = sum_c weight(b,c) * table.row(index(b,c)); weights are constants.
template <class T>
Var<T> weighted_gather(Var<T> table, Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> index,
                       Tensor<T> weight) {
  FAINR_REQUIRE(index.rows() == weight.rows() && index.cols() == weight.cols(), DimensionError,
                "weighted_gather: index and weight shapes differ");
  Tape<T>& t = *table.tape;
  const Tensor<T>& tv = table.value();
  Tensor<T> out = Tensor<T>::Zero(index.rows(), tv.cols());
  for (Eigen::Index b = 0; b < index.rows(); ++b)
    for (Eigen::Index c = 0; c < index.cols(); ++c) {
      FAINR_REQUIRE(index(b, c) >= 0 && index(b, c) < tv.rows(), DimensionError,
                    "weighted_gather: index out of range");
      out.row(b) += weight(b, c) * tv.row(index(b, c));
    }
  const int it = table.id;
  return t.push("weighted_gather", std::move(out), t.needs_grad(table),
                [it, index = std::move(index), weight = std::move(weight)](Tape<T>& t, int self) {
                  const Tensor<T>& g = t.node(self).grad;
                  Tensor<T>& gt = t.grad_ref(it);
                  for (Eigen::Index b = 0; b < index.rows(); ++b)
                    for (Eigen::Index c = 0; c < index.cols(); ++c)
                      gt.row(index(b, c)) += weight(b, c) * g.row(b);
                });
}

// Sum of all entries as a 1×1 tensor.
template <class T>
Var<T> sum(Var<T> a) {
  Tape<T>& t = *a.tape;
  const int ia = a.id;
  Tensor<T> out(1, 1);
  out(0, 0) = a.value().sum();
  return t.push("sum", std::move(out), t.needs_grad(a), [ia](Tape<T>& t, int self) {
    t.grad_ref(ia).array() += t.node(self).grad(0, 0);
  });
}

template <class T>
Var<T> mean(Var<T> a) {
  FAINR_REQUIRE(a.value().size() > 0, ContractError, "mean of an empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(a.value().size()));
}

// Column means as a 1×k tensor.
template <class T>
Var<T> mean_rows(Var<T> a) {
  FAINR_REQUIRE(a.rows() > 0, ContractError, "mean_rows of an empty tensor");
  Tape<T>& t = *a.tape;
  const int ia = a.id;
  const T inv = T(1) / static_cast<T>(a.rows());
  Tensor<T> out = a.value().colwise().sum() * inv;
  return t.push("mean_rows", std::move(out), t.needs_grad(a), [ia, inv](Tape<T>& t, int self) {
    t.grad_ref(ia).rowwise() += t.node(self).grad.row(0) * inv;
  });
}

}  // namespace fainr::ad
