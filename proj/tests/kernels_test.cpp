#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "soupkit/kernels.hpp"
#include "soupkit/rng.hpp"

using namespace soupkit;

namespace {

std::vector<float> random_vec(std::size_t n, uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    std::vector<float> v(n);
    for (float& x : v) x = static_cast<float>(scale * rng.normal());
    return v;
}

bool bitwise_equal(const std::vector<float>& a, const std::vector<float>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

struct ThreadCountGuard {
#ifdef _OPENMP
    int saved = omp_get_max_threads();
    ~ThreadCountGuard() { omp_set_num_threads(saved); }
    void set(int n) { omp_set_num_threads(n); }
#else
    void set(int) {}
#endif
};

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("axpby matches a double-precision loop") {
    auto x = random_vec(1000, 1);
    auto y = random_vec(1000, 2);
    std::vector<float> out(1000);
    kernels::ref::axpby(0.3, x.data(), 0.7, y.data(), out.data(), x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        float expect = static_cast<float>(0.3 * (double)x[i] + 0.7 * (double)y[i]);
        CHECK(out[i] == expect);
    }
}

TEST_CASE("axpby (1,0) and (0,1) copy inputs bit for bit, including -0.0") {
    std::vector<float> x = {-0.0f, 1.5f, -3.25f};
    std::vector<float> y = {2.0f, -0.0f, 7.0f};
    std::vector<float> out(3);

    kernels::ref::axpby(1.0, x.data(), 0.0, y.data(), out.data(), 3);
    CHECK(bitwise_equal(out, x));
    CHECK(std::signbit(out[0]));

    kernels::ref::axpby(0.0, x.data(), 1.0, y.data(), out.data(), 3);
    CHECK(bitwise_equal(out, y));
    CHECK(std::signbit(out[1]));
}

TEST_CASE("pool_mean of identical inputs returns the input bitwise") {
    auto x = random_vec(513, 3);
    std::vector<const float*> ptrs(7, x.data());
    std::vector<float> out(x.size());
    kernels::ref::pool_mean(ptrs.data(), ptrs.size(), out.data(), x.size());
    CHECK(bitwise_equal(out, x));
    kernels::pool_mean(ptrs.data(), ptrs.size(), out.data(), x.size());
    CHECK(bitwise_equal(out, x));
}

TEST_CASE("pool_mean averages in double precision") {
    std::vector<float> a = {1.0f, 1e8f};
    std::vector<float> b = {2.0f, -1e8f};
    std::vector<float> c = {3.0f, 1.0f};
    const float* ptrs[] = {a.data(), b.data(), c.data()};
    std::vector<float> out(2);
    kernels::ref::pool_mean(ptrs, 3, out.data(), 2);
    CHECK(out[0] == 2.0f);
    CHECK(out[1] == doctest::Approx(1.0f / 3.0f).epsilon(1e-6));
}

TEST_CASE("dense_forward computes act(x W^T + b)") {
    // 2 rows, 3 inputs, 2 outputs, hand-computed
    std::vector<float> x = {1, 2, 3, 0, -1, 1};
    std::vector<float> w = {1, 0, 1,   // unit row sums x0 + x2
                            -1, 1, 0};
    std::vector<float> b = {0.5f, -0.5f};
    std::vector<float> y(4);
    kernels::ref::dense_forward(x.data(), 2, 3, w.data(), b.data(), 2, y.data(),
                                kernels::Activation::Identity);
    CHECK(y[0] == 4.5f);   // 1+3+0.5
    CHECK(y[1] == 0.5f);   // -1+2-0.5
    CHECK(y[2] == 1.5f);   // 0+1+0.5
    CHECK(y[3] == -1.5f);  // 0-1-0.5

    kernels::ref::dense_forward(x.data(), 2, 3, w.data(), b.data(), 2, y.data(),
                                kernels::Activation::Tanh);
    CHECK(y[0] == static_cast<float>(std::tanh(4.5)));
    CHECK(y[3] == static_cast<float>(std::tanh(-1.5)));
}

TEST_CASE("count_correct ties resolve to the lowest class index") {
    std::vector<float> logits = {1.0f, 1.0f,    // tie -> class 0
                                 0.0f, 2.0f};   // class 1
    std::vector<int32_t> labels = {0, 1};
    CHECK(kernels::ref::count_correct(logits.data(), 2, 2, labels.data()) == 2);
    labels = {1, 0};
    CHECK(kernels::ref::count_correct(logits.data(), 2, 2, labels.data()) == 0);
}

TEST_CASE("parallel kernels are bit-identical to reference across thread counts") {
    // sizes straddle the parallelization grain on both sides
    const std::size_t sizes[] = {1, 7, 8191, 8192, 40000};
    ThreadCountGuard guard;

    for (std::size_t n : sizes) {
        auto x = random_vec(n, 10 + n);
        auto y = random_vec(n, 20 + n);
        std::vector<float> expect(n), got(n);
        kernels::ref::axpby(0.37, x.data(), 0.63, y.data(), expect.data(), n);

        std::vector<std::vector<float>> pool;
        std::vector<const float*> ptrs;
        for (int j = 0; j < 5; ++j) pool.push_back(random_vec(n, 100 + j));
        for (const auto& p : pool) ptrs.push_back(p.data());
        std::vector<float> mean_expect(n), mean_got(n);
        kernels::ref::pool_mean(ptrs.data(), ptrs.size(), mean_expect.data(), n);

        for (int threads : {1, 2, 3, 8}) {
            guard.set(threads);
            kernels::axpby(0.37, x.data(), 0.63, y.data(), got.data(), n);
            CHECK(bitwise_equal(got, expect));
            kernels::pool_mean(ptrs.data(), ptrs.size(), mean_got.data(), n);
            CHECK(bitwise_equal(mean_got, mean_expect));
        }
    }
}

TEST_CASE("parallel dense_forward and count_correct match reference across thread counts") {
    const std::size_t rows_list[] = {1, 7, 8, 1000};
    const std::size_t in_dim = 17, out_dim = 9;
    ThreadCountGuard guard;

    for (std::size_t rows : rows_list) {
        auto x = random_vec(rows * in_dim, rows);
        auto w = random_vec(out_dim * in_dim, 5);
        auto b = random_vec(out_dim, 6);
        std::vector<float> expect(rows * out_dim), got(rows * out_dim);
        kernels::ref::dense_forward(x.data(), rows, in_dim, w.data(), b.data(), out_dim,
                                    expect.data(), kernels::Activation::Tanh);

        std::vector<int32_t> labels(rows);
        Rng rng(7);
        for (auto& l : labels) l = static_cast<int32_t>(rng.below(out_dim));
        std::size_t correct_expect =
            kernels::ref::count_correct(expect.data(), rows, out_dim, labels.data());

        for (int threads : {1, 2, 3, 8}) {
            guard.set(threads);
            kernels::dense_forward(x.data(), rows, in_dim, w.data(), b.data(), out_dim,
                                   got.data(), kernels::Activation::Tanh);
            CHECK(bitwise_equal(got, expect));
            CHECK(kernels::count_correct(got.data(), rows, out_dim, labels.data()) ==
                  correct_expect);
        }
    }
}

}  // TEST_SUITE
