#pragma once

#include <array>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace rie {

/// Error type thrown by all numeric operations in this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Fixed-capacity vector of doubles. State vectors hold 1 or 2 components,
/// parameter vectors up to a handful; no heap traffic in per-sample loops.
template <std::size_t MaxN>
class SmallVec {
 public:
  SmallVec() = default;

  SmallVec(std::initializer_list<double> xs) {
    if (xs.size() > MaxN) throw Error("SmallVec: too many components");
    for (double x : xs) v_[n_++] = x;
  }

  static SmallVec filled(std::size_t n, double value) {
    SmallVec out;
    if (n > MaxN) throw Error("SmallVec: too many components");
    out.n_ = n;
    for (std::size_t i = 0; i < n; ++i) out.v_[i] = value;
    return out;
  }

  std::size_t size() const { return n_; }
  bool empty() const { return n_ == 0; }

  double& operator[](std::size_t i) { return v_[i]; }
  double operator[](std::size_t i) const { return v_[i]; }

  void push_back(double x) {
    if (n_ == MaxN) throw Error("SmallVec: capacity exceeded");
    v_[n_++] = x;
  }

  const double* begin() const { return v_.data(); }
  const double* end() const { return v_.data() + n_; }

  friend bool operator==(const SmallVec& a, const SmallVec& b) {
    if (a.n_ != b.n_) return false;
    for (std::size_t i = 0; i < a.n_; ++i)
      if (a.v_[i] != b.v_[i]) return false;
    return true;
  }

 private:
  std::array<double, MaxN> v_{};
  std::size_t n_ = 0;
};

using StateVec = SmallVec<2>;  // state dimension R is 1 or 2
using ParamVec = SmallVec<8>;  // parameter dimension K

/// Half-open index range assigned to one worker.
struct WorkerRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t count() const { return end - begin; }
};

inline WorkerRange worker_range(std::size_t total, int n_workers, int worker) {
  const std::size_t w = static_cast<std::size_t>(n_workers);
  const std::size_t base = total / w;
  const std::size_t rem = total % w;
  const std::size_t k = static_cast<std::size_t>(worker);
  WorkerRange r;
  r.begin = k * base + std::min<std::size_t>(k, rem);
  r.end = r.begin + base + (k < rem ? 1 : 0);
  return r;
}

/// Runs fn(worker_index) on n_workers threads and joins them all.
/// Results must be combined by the caller in worker order; that fixed
/// reduction order is what makes multi-worker runs reproducible.
template <class Fn>
void run_workers(int n_workers, Fn&& fn) {
  if (n_workers <= 1) {
    fn(0);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(n_workers));
  for (int w = 0; w < n_workers; ++w) threads.emplace_back([&fn, w] { fn(w); });
  for (auto& t : threads) t.join();
}

/// Compensated (Kahan) sum; keeps grid-normalization error near machine eps.
inline double kahan_sum(const std::vector<double>& xs) {
  double sum = 0.0;
  double carry = 0.0;
  for (double x : xs) {
    const double y = x - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
  return sum;
}

}  // namespace rie
