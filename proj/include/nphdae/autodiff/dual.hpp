#pragma once

// Forward-mode numbers. A Dual<T> carries a value and an optional tangent of the
// same type; a missing tangent means "zero" and is skipped in arithmetic. T can be
// a plain Array, a tape Tensor, or another Dual (second order).

#include "nphdae/autodiff/array_ops.hpp"
#include "nphdae/autodiff/tape.hpp"

#include <optional>
#include <type_traits>
#include <vector>

namespace nphdae::ad {

template <class T>
struct Dual {
  T v;
  std::optional<T> d;

  Dual() = default;
  explicit Dual(T value) : v(std::move(value)) {}
  Dual(T value, std::optional<T> tangent) : v(std::move(value)), d(std::move(tangent)) {}

  bool has_tangent() const { return d.has_value(); }
};

template <class T>
struct is_dual : std::false_type {};
template <class T>
struct is_dual<Dual<T>> : std::true_type {};
template <class T>
inline constexpr bool is_dual_v = is_dual<T>::value;

// Innermost numeric type of a (possibly nested) dual.
template <class T>
struct base_type {
  using type = T;
};
template <class T>
struct base_type<Dual<T>> {
  using type = typename base_type<T>::type;
};
template <class T>
using base_type_t = typename base_type<T>::type;

template <class T>
inline constexpr bool on_tape_v = std::is_same_v<base_type_t<T>, Tensor>;

template <class T>
Index rows(const Dual<T>& a) {
  return rows(a.v);
}
template <class T>
Index cols(const Dual<T>& a) {
  return cols(a.v);
}
template <class T>
const Array& value_of(const Dual<T>& a) {
  return value_of(a.v);
}
template <class T>
Dual<T> lift(const Dual<T>& like, Array v) {
  return Dual<T>(lift(like.v, std::move(v)));
}

// Tangent of a dual as a full value, materializing zeros when absent.
template <class T>
T tangent_or_zero(const Dual<T>& a) {
  if (a.d) return *a.d;
  return lift(a.v, Array::Zero(rows(a), cols(a)));
}

namespace detail {

template <class T, class F>
std::optional<T> map_tangent(const std::optional<T>& d, F&& f) {
  if (!d) return std::nullopt;
  return T(f(*d));
}

template <class T>
std::optional<T> add_tangents(const std::optional<T>& a, const std::optional<T>& b) {
  if (a && b) return T(*a + *b);
  if (a) return a;
  return b;
}

}  // namespace detail

template <class T>
Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) {
  return Dual<T>(T(a.v + b.v), detail::add_tangents(a.d, b.d));
}

template <class T>
Dual<T> operator-(const Dual<T>& a) {
  return Dual<T>(T(-a.v), detail::map_tangent(a.d, [](const T& x) { return T(-x); }));
}

template <class T>
Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) {
  std::optional<T> nb = detail::map_tangent(b.d, [](const T& x) { return T(-x); });
  if (a.d && b.d) return Dual<T>(T(a.v - b.v), T(*a.d - *b.d));
  return Dual<T>(T(a.v - b.v), a.d ? a.d : nb);
}

template <class T>
Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
  std::optional<T> da = detail::map_tangent(a.d, [&](const T& x) { return T(x * b.v); });
  std::optional<T> db = detail::map_tangent(b.d, [&](const T& x) { return T(a.v * x); });
  return Dual<T>(T(a.v * b.v), detail::add_tangents(da, db));
}

template <class T>
Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
  T q = T(a.v / b.v);
  std::optional<T> da = detail::map_tangent(a.d, [&](const T& x) { return T(x / b.v); });
  std::optional<T> db = detail::map_tangent(b.d, [&](const T& x) { return T(-(q * x) / b.v); });
  return Dual<T>(std::move(q), detail::add_tangents(da, db));
}

template <class T>
Dual<T> operator+(const Dual<T>& a, double s) {
  return Dual<T>(T(a.v + s), a.d);
}
template <class T>
Dual<T> operator+(double s, const Dual<T>& a) {
  return a + s;
}
template <class T>
Dual<T> operator-(const Dual<T>& a, double s) {
  return Dual<T>(T(a.v - s), a.d);
}
template <class T>
Dual<T> operator-(double s, const Dual<T>& a) {
  return Dual<T>(T(s - a.v), detail::map_tangent(a.d, [](const T& x) { return T(-x); }));
}
template <class T>
Dual<T> operator*(const Dual<T>& a, double s) {
  return Dual<T>(T(a.v * s), detail::map_tangent(a.d, [s](const T& x) { return T(x * s); }));
}
template <class T>
Dual<T> operator*(double s, const Dual<T>& a) {
  return a * s;
}
template <class T>
Dual<T> operator/(const Dual<T>& a, double s) {
  return Dual<T>(T(a.v / s), detail::map_tangent(a.d, [s](const T& x) { return T(x / s); }));
}

template <class T>
Dual<T> tanh(const Dual<T>& a) {
  T y = tanh(a.v);
  auto d = detail::map_tangent(a.d, [&](const T& x) { return T(x * T(1.0 - y * y)); });
  return Dual<T>(std::move(y), std::move(d));
}

template <class T>
Dual<T> relu(const Dual<T>& a) {
  auto d = detail::map_tangent(a.d, [&](const T& x) { return T(x * step(a.v)); });
  return Dual<T>(relu(a.v), std::move(d));
}

// Second derivative of relu is taken as zero.
template <class T>
Dual<T> step(const Dual<T>& a) {
  return Dual<T>(step(a.v));
}

template <class T>
Dual<T> exp(const Dual<T>& a) {
  T y = exp(a.v);
  auto d = detail::map_tangent(a.d, [&](const T& x) { return T(x * y); });
  return Dual<T>(std::move(y), std::move(d));
}

template <class T>
Dual<T> pow(const Dual<T>& a, double p) {
  auto d = detail::map_tangent(a.d, [&](const T& x) { return T(x * T(pow(a.v, p - 1.0) * p)); });
  return Dual<T>(pow(a.v, p), std::move(d));
}

// Linear maps by a coefficient that is constant along the tangent direction
// (a Matrix, a Tensor parameter, or a lower-order dual).
template <class W, class T>
Dual<T> matmul(const W& w, const Dual<T>& x) {
  auto d = detail::map_tangent(x.d, [&](const T& t) { return T(matmul(w, t)); });
  return Dual<T>(T(matmul(w, x.v)), std::move(d));
}

template <class T, class B>
Dual<T> add_bias(const Dual<T>& x, const B& b) {
  return Dual<T>(T(add_bias(x.v, b)), x.d);
}

template <class T>
Dual<T> block_rows(const Dual<T>& a, Index start, Index count) {
  auto d = detail::map_tangent(a.d, [&](const T& t) { return T(block_rows(t, start, count)); });
  return Dual<T>(T(block_rows(a.v, start, count)), std::move(d));
}

template <class T>
Dual<T> vstack(std::span<const Dual<T>> parts) {
  std::vector<T> vs;
  vs.reserve(parts.size());
  bool any = false;
  for (const auto& p : parts) {
    vs.push_back(p.v);
    any = any || p.d.has_value();
  }
  Dual<T> out{T(vstack(std::span<const T>(vs)))};
  if (any) {
    std::vector<T> ds;
    ds.reserve(parts.size());
    for (const auto& p : parts) ds.push_back(tangent_or_zero(p));
    out.d = T(vstack(std::span<const T>(ds)));
  }
  return out;
}

template <class T>
Dual<T> vstack(std::initializer_list<Dual<T>> parts) {
  return vstack(std::span<const Dual<T>>(parts.begin(), parts.size()));
}

template <class T>
Dual<T> colsum(const Dual<T>& a) {
  auto d = detail::map_tangent(a.d, [](const T& t) { return T(colsum(t)); });
  return Dual<T>(T(colsum(a.v)), std::move(d));
}

template <class T>
Dual<T> sum(const Dual<T>& a) {
  auto d = detail::map_tangent(a.d, [](const T& t) { return T(sum(t)); });
  return Dual<T>(T(sum(a.v)), std::move(d));
}

// Strips derivative information down to the innermost plain array.
template <class T>
Array plain(const T& x) {
  return Array(value_of(x));
}

}  // namespace nphdae::ad
