#ifndef CORRMVS_PARALLEL_HPP_
#define CORRMVS_PARALLEL_HPP_

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace corrmvs
{

namespace detail
{
inline std::atomic<unsigned> & thread_setting()
{
  static std::atomic<unsigned> n{0};
  return n;
}
}  // namespace detail

/// Number of worker threads used by parallel_for; 0 selects hardware concurrency.
inline void set_thread_count(unsigned n) { detail::thread_setting().store(n); }

inline unsigned thread_count()
{
  const unsigned n = detail::thread_setting().load();
  if (n != 0) { return n; }
  return std::max(1u, std::thread::hardware_concurrency());
}

/**
 * Run fn(i) for i in [begin, end) over contiguous static chunks. Callers only
 * write to disjoint outputs per index, so results never depend on the number
 * of threads.
 */
template<typename F>
void parallel_for(std::size_t begin, std::size_t end, F && fn)
{
  if (end <= begin) { return; }
  const std::size_t n = end - begin;
  const std::size_t workers = std::min<std::size_t>(thread_count(), n);
  if (workers <= 1) {
    for (std::size_t i = begin; i < end; ++i) { fn(i); }
    return;
  }

  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = begin + w * chunk;
    const std::size_t hi = std::min(end, lo + chunk);
    pool.emplace_back([&, lo, hi, w]() {
      try {
        for (std::size_t i = lo; i < hi; ++i) { fn(i); }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto & t : pool) { t.join(); }
  for (auto & e : errors) {
    if (e) { std::rethrow_exception(e); }
  }
}

}  // namespace corrmvs

#endif  // CORRMVS_PARALLEL_HPP_
