// Benchmark: OpenMP-parallel Gram construction vs the serial reference.
// Usage: bench_kernels [n] [dim] [repeats]
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <random>

#include <omp.h>

#include "poolforge/kernels.hpp"

using namespace poolforge;
using clock_type = std::chrono::steady_clock;

namespace {

FeatureMatrix make_features(int n, int dim, unsigned seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> normal;
    FeatureMatrix f;
    f.data.resize(n, dim);
    for (int i = 0; i < n; ++i) {
        f.ids.push_back("b" + std::to_string(i));
        for (int k = 0; k < dim; ++k) f.data(i, k) = normal(rng);
    }
    return f;
}

template <typename Fn>
double best_seconds(int repeats, Fn&& fn) {
    double best = 1e300;
    for (int r = 0; r < repeats; ++r) {
        const auto t0 = clock_type::now();
        fn();
        const auto t1 = clock_type::now();
        best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    }
    return best;
}

} // namespace

int main(int argc, char** argv) {
    const int n = argc > 1 ? std::atoi(argv[1]) : 2000;
    const int dim = argc > 2 ? std::atoi(argv[2]) : 128;
    const int repeats = argc > 3 ? std::atoi(argv[3]) : 3;

    const auto features = make_features(n, dim, 1);

    volatile double sink = 0;
    const double serial = best_seconds(repeats, [&] {
        const auto view = detail::gram_matrix_serial(features);
        sink = sink + view.gram(n - 1, 0);
    });
    const double parallel = best_seconds(repeats, [&] {
        const auto view = gram_matrix(features);
        sink = sink + view.gram(n - 1, 0);
    });

    std::printf("gram %d x %d (dim %d), best of %d\n", n, n, dim, repeats);
    std::printf("  threads:  %d\n", omp_get_max_threads());
    std::printf("  serial:   %.4f s\n", serial);
    std::printf("  parallel: %.4f s\n", parallel);
    std::printf("  speedup:  %.2fx\n", serial / parallel);

    // correctness cross-check while we are here
    const auto a = gram_matrix(features);
    const auto b = detail::gram_matrix_serial(features);
    if (a.gram != b.gram) {
        std::printf("MISMATCH between parallel and serial gram\n");
        return 1;
    }
    std::printf("  parallel == serial: yes\n");
    return 0;
}
