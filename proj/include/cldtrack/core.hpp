#pragma once

#include "cldtrack/types.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>

namespace cldt {

/// v / ||v||_2. Zero-norm or non-finite input is a data error: every caller
/// in the pipeline expects unit vectors and silent garbage would poison all
/// downstream similarities.
template <typename Derived>
typename Derived::PlainObject l2_normalize(const Eigen::MatrixBase<Derived>& v) {
  if (v.size() == 0) throw DataError("l2_normalize: empty input");
  if (!v.allFinite()) throw DataError("l2_normalize: non-finite input");
  const double n = v.norm();
  if (n == 0.0) throw DataError("l2_normalize: zero vector has no direction");
  return v.derived() / n;
}

/// Cosine similarity in [-1, 1] (up to rounding).
template <typename DerivedA, typename DerivedB>
double cosine_sim(const Eigen::MatrixBase<DerivedA>& a,
                  const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size())
    throw DataError("cosine_sim: dimension mismatch (" + std::to_string(a.size()) +
                    " vs " + std::to_string(b.size()) + ")");
  if (a.size() == 0) throw DataError("cosine_sim: empty input");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw DataError("cosine_sim: zero-norm input");
  return a.derived().dot(b.derived()) / (na * nb);
}

/// Numerically stable softmax with optional temperature. Subtracts the max
/// before exponentiating so large scores cannot overflow.
template <typename Derived>
typename Derived::PlainObject softmax(const Eigen::MatrixBase<Derived>& scores,
                                      double temperature = 1.0) {
  if (scores.size() == 0) throw DataError("softmax: empty input");
  if (!(temperature > 0.0)) throw DataError("softmax: temperature must be positive");
  if (!scores.allFinite()) throw DataError("softmax: non-finite input");
  typename Derived::PlainObject out(scores.rows(), scores.cols());
  out.array() =
      ((scores.derived().array() - scores.derived().maxCoeff()) / temperature).exp();
  out.array() /= out.array().sum();
  return out;
}

/// Index of the largest entry; ties resolve to the lowest index.
template <typename Derived>
Index argmax(const Eigen::MatrixBase<Derived>& scores) {
  if (scores.size() == 0) throw DataError("argmax: empty input");
  Index best = 0;
  for (Index i = 1; i < scores.size(); ++i)
    if (scores(i) > scores(best)) best = i;
  return best;
}

/// True when the entries form a probability vector: non-negative and summing
/// to one within the given tolerance.
template <typename Derived>
bool is_probability_vector(const Eigen::MatrixBase<Derived>& v, double tol = 1e-6) {
  if (v.size() == 0) return false;
  if (!v.allFinite()) return false;
  if ((v.derived().array() < 0.0).any()) return false;
  return std::abs(v.derived().sum() - 1.0) <= tol;
}

}  // namespace cldt
