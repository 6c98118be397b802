#pragma once

#include <cmath>

namespace fainr::ad {

// Forward-mode dual number carrying one directional derivative.
template <class T>
struct Dual {
  T v{};
  T d{};

  Dual() = default;
  Dual(T value) : v(value) {}  // NOLINT: implicit lift of constants
  Dual(T value, T deriv) : v(value), d(deriv) {}

  friend Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
  friend Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
  friend Dual operator-(Dual a) { return {-a.v, -a.d}; }
  friend Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
  friend Dual operator/(Dual a, Dual b) {
    return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)};
  }
  Dual& operator+=(Dual o) { return *this = *this + o; }
  Dual& operator-=(Dual o) { return *this = *this - o; }
  Dual& operator*=(Dual o) { return *this = *this * o; }
};

template <class T>
Dual<T> exp(Dual<T> a) {
  const T e = std::exp(a.v);
  return {e, e * a.d};
}

template <class T>
Dual<T> cos(Dual<T> a) {
  return {std::cos(a.v), -std::sin(a.v) * a.d};
}

template <class T>
Dual<T> abs(Dual<T> a) {
  return a.v < T(0) ? -a : a;
}

}  // namespace fainr::ad
