#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace microcurl {

inline constexpr std::size_t kReduceBlock = 1024;

template <class F>
double deterministic_sum(std::size_t n, F f)
{
    const std::size_t nb = (n + kReduceBlock - 1) / kReduceBlock;
    std::vector<double> part(nb, 0.0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(nb); ++b) {
        const std::size_t lo = std::size_t(b) * kReduceBlock;
        const std::size_t hi = std::min(n, lo + kReduceBlock);
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += f(i);
        part[b] = s;
    }
    double s = 0.0;
    for (double v : part) s += v;
    return s;
}

template <class F>
void parallel_for(std::size_t n, F f)
{
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) f(std::size_t(i));
}

}  // namespace microcurl
