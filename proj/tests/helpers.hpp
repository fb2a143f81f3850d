#ifndef IDFLOW_TESTS_HELPERS_HPP
#define IDFLOW_TESTS_HELPERS_HPP

#include <idflow/rng.hpp>
#include <idflow/tensor.hpp>

namespace idflow::test {

// Independent triple-loop product; the oracle the matmul kernel is checked
// against. Kept deliberately naive.
inline Tensor naive_matmul(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    Tensor c({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a.at(i, p) * b.at(p, j);
            c.at(i, j) = s;
        }
    }
    return c;
}

inline Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, double stddev = 1.0) {
    return rng.normal_tensor(std::move(shape), stddev);
}

}  // namespace idflow::test

#endif
