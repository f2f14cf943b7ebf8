#pragma once

#include <deque>
#include <functional>
#include <stdexcept>

#include "hyperstab/numerics.hpp"

namespace hyperstab {

class HistoryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Uniformly sampled vector signal, trimmed to a retention span.
/// Reads interpolate linearly and never extrapolate.
class HistoryBuffer {
 public:
  HistoryBuffer() = default;
  HistoryBuffer(int dim, double dt, double span);

  void push(double t, const Vector& v);
  /// Replace the newest sample.
  void set_last(const Vector& v);

  int dim() const { return dim_; }
  bool empty() const { return values_.empty(); }
  std::size_t size() const { return values_.size(); }
  double first_time() const { return t0_; }
  double last_time() const { return t0_ + dt_ * static_cast<double>(values_.size() - 1); }
  const Vector& last() const { return values_.back(); }
  bool covers(double a, double b) const;

  Vector at(double t) const;
  /// Fill from a function on [t_begin, t_end] at the buffer spacing.
  void prefill(double t_begin, double t_end, const std::function<Vector(double)>& f);

 private:
  int dim_ = 0;
  double dt_ = 0.0;
  double span_ = 0.0;
  double t0_ = 0.0;
  std::deque<Vector> values_;
};

/// A signal's recorded past plus an optional value at the evaluation time
/// that has not been committed yet.
struct SignalView {
  const HistoryBuffer* history = nullptr;
  const Vector* current = nullptr;

  Vector at(double t_query, double t_now) const;
};

}  // namespace hyperstab
