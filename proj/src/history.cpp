#include "hyperstab/history.hpp"

#include <cmath>
#include <string>

namespace hyperstab {

HistoryBuffer::HistoryBuffer(int dim, double dt, double span) : dim_(dim), dt_(dt), span_(span) {
  if (!(dt > 0.0)) throw std::invalid_argument("HistoryBuffer: dt must be positive");
}

void HistoryBuffer::push(double t, const Vector& v) {
  if (v.size() != dim_) throw DimensionError("HistoryBuffer: sample dimension mismatch");
  if (values_.empty()) {
    t0_ = t;
  } else if (std::abs(t - (last_time() + dt_)) > 1e-6 * dt_) {
    throw HistoryError("HistoryBuffer: samples must be uniformly spaced");
  }
  values_.push_back(v);
  while (values_.size() > 2 && last_time() - (t0_ + dt_) >= span_ + dt_) {
    values_.pop_front();
    t0_ += dt_;
  }
}

void HistoryBuffer::set_last(const Vector& v) {
  if (values_.empty()) throw HistoryError("HistoryBuffer: no sample to replace");
  values_.back() = v;
}

bool HistoryBuffer::covers(double a, double b) const {
  if (values_.empty()) return false;
  const double eps = 1e-9 * dt_;
  return a >= t0_ - eps && b <= last_time() + eps;
}

Vector HistoryBuffer::at(double t) const {
  if (!covers(t, t))
    throw HistoryError("history read at t=" + std::to_string(t) + " outside [" + std::to_string(t0_) + ", " +
                       std::to_string(values_.empty() ? t0_ : last_time()) + "]");
  const double s = (t - t0_) / dt_;
  const int last = static_cast<int>(values_.size()) - 1;
  if (last == 0) return values_[0];
  int i = static_cast<int>(std::floor(s));
  i = std::clamp(i, 0, last - 1);
  const double f = std::clamp(s - i, 0.0, 1.0);
  if (f == 0.0) return values_[i];
  return (1.0 - f) * values_[i] + f * values_[i + 1];
}

void HistoryBuffer::prefill(double t_begin, double t_end, const std::function<Vector(double)>& f) {
  values_.clear();
  const int steps = static_cast<int>(std::llround((t_end - t_begin) / dt_));
  for (int k = 0; k <= steps; ++k) push(t_begin + k * dt_, f(t_begin + k * dt_));
}

Vector SignalView::at(double tq, double tnow) const {
  if (current && (!history || history->empty() || tq > history->last_time())) {
    if (!history || history->empty() || tnow <= history->last_time()) return *current;
    const double t1 = history->last_time();
    const double f = std::clamp((tq - t1) / (tnow - t1), 0.0, 1.0);
    return (1.0 - f) * history->last() + f * *current;
  }
  if (!history) throw HistoryError("signal has no history");
  return history->at(tq);
}

}  // namespace hyperstab
