#include <catch2/catch_amalgamated.hpp>

#include <thread>

#include "advbench/ops.hpp"
#include "advbench/rng.hpp"
#include "support/finite_diff.hpp"

using namespace advbench;
using namespace advbench::autodiff;
using testsupport::central_diff;
using testsupport::rel_error;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo = -2.0, double hi = 2.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

// keep random inputs away from relu/clamp kinks so the FD stencil stays on
// one side of the nondifferentiable point
std::vector<double> random_vec_off_kinks(Rng& rng, std::size_t n, std::vector<double> kinks) {
    std::vector<double> v(n);
    for (auto& x : v) {
        do {
            x = rng.uniform(-2.0, 2.0);
            bool ok = true;
            for (double k : kinks) ok = ok && std::abs(x - k) > 1e-3;
            if (ok) break;
        } while (true);
    }
    return v;
}

}  // namespace

TEST_CASE("matmul identity") {
    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor out = matmul(a, Tensor::identity(2));
    REQUIRE(out.data() == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("relu definition") {
    Tensor out = relu(Tensor({3}, {-1, 0, 2}));
    REQUIRE(out.data() == std::vector<double>{0, 0, 2});
}

TEST_CASE("softmax symmetry") {
    Tensor out = softmax(Tensor({2}, {0, 0}));
    REQUIRE(out.data()[0] == Catch::Approx(0.5));
    REQUIRE(out.data()[1] == Catch::Approx(0.5));
}

TEST_CASE("shape mismatch names both shapes") {
    Tensor a({2, 3}, std::vector<double>(6, 0.0));
    Tensor b({2, 2}, std::vector<double>(4, 0.0));
    REQUIRE_THROWS_WITH(add(a, b), Catch::Matchers::ContainsSubstring("[2 x 3]") &&
                                       Catch::Matchers::ContainsSubstring("[2 x 2]"));
    REQUIRE_THROWS_WITH(matmul(a, a), Catch::Matchers::ContainsSubstring("[2 x 3]"));
}

TEST_CASE("cross_entropy label range checked") {
    Tensor logits({1, 3}, {0.1, 0.2, 0.3});
    REQUIRE_THROWS_AS(cross_entropy(logits, {3}), std::out_of_range);
    REQUIRE_THROWS_AS(cross_entropy(logits, {-1}), std::out_of_range);
}

TEST_CASE("backward of sum(x*x)") {
    Tensor x({3}, {1, 2, 3}, true);
    backward(sum(mul(x, x)));
    REQUIRE(x.grad() == std::vector<double>{2, 4, 6});
}

TEST_CASE("cross_entropy gradient is softmax minus onehot") {
    Tensor logits({1, 2}, {0, 0}, true);
    backward(cross_entropy(logits, {0}));
    REQUIRE(logits.grad()[0] == Catch::Approx(-0.5));
    REQUIRE(logits.grad()[1] == Catch::Approx(0.5));
}

TEST_CASE("backward rejects non-scalar and empty tape") {
    Tensor x({2}, {1, 2}, true);
    Tensor y = mul(x, x);
    REQUIRE_THROWS_AS(backward(y), std::invalid_argument);
    Tensor c({1}, {3.0});
    REQUIRE_THROWS_AS(backward(c), std::invalid_argument);
}

TEST_CASE("backward twice without rebuilding errors") {
    Tensor x({2}, {1, 2}, true);
    Tensor loss = sum(mul(x, x));
    backward(loss);
    REQUIRE_THROWS_AS(backward(loss), std::logic_error);
}

TEST_CASE("gradients accumulate across multiple uses") {
    Tensor x({2}, {3, 4}, true);
    // loss = sum(x) + sum(x) -> grad 2 everywhere
    backward(add(sum(x), sum(x)));
    REQUIRE(x.grad() == std::vector<double>{2, 2});
}

TEST_CASE("gradient of a sum of losses equals sum of gradients") {
    Rng rng(17);
    Tensor x({4}, random_vec(rng, 4), true);
    Tensor w({4}, random_vec(rng, 4));

    Tensor l1 = sum(mul(x, w));
    Tensor l2 = l2_norm(x);
    backward(add(l1, l2));
    auto combined = x.grad();

    Tensor xa = x.detached(true);
    backward(sum(mul(xa, w)));
    Tensor xb = x.detached(true);
    backward(l2_norm(xb));
    for (std::size_t i = 0; i < 4; ++i)
        REQUIRE(combined[i] == Catch::Approx(xa.grad()[i] + xb.grad()[i]).margin(1e-12));
}

TEST_CASE("clamp backward: identity inside, zero outside") {
    Tensor x({4}, {-2.0, 0.25, 0.75, 3.0}, true);
    backward(sum(clamp(x, 0.0, 1.0)));
    REQUIRE(x.grad() == std::vector<double>{0, 1, 1, 0});
}

TEST_CASE("primitive gradients match central finite differences") {
    Rng rng(42);
    const double tol = 1e-5;

    auto check = [&](const char* name, std::size_t n,
                     const std::function<Tensor(const Tensor&)>& build,
                     std::vector<double> kinks = {}) {
        for (int rep = 0; rep < 5; ++rep) {
            auto x0 = kinks.empty() ? random_vec(rng, n) : random_vec_off_kinks(rng, n, kinks);
            Tensor x({n}, x0, true);
            backward(build(x));
            auto fd = central_diff([&](const std::vector<double>& v) {
                return build(Tensor({n}, v)).item();
            }, x0);
            INFO(name << " rep " << rep);
            REQUIRE(rel_error(x.grad(), fd) <= tol);
        }
    };

    Tensor w({4}, random_vec(rng, 4));
    Tensor m({4, 4}, random_vec(rng, 16));
    std::vector<int> labels{1, 3};

    check("add", 4, [&](const Tensor& x) { return sum(add(x, w)); });
    check("sub", 4, [&](const Tensor& x) { return sum(sub(w, x)); });
    check("mul", 4, [&](const Tensor& x) { return sum(mul(x, x)); });
    check("mul_scalar_broadcast", 4, [&](const Tensor& x) {
        return sum(mul(Tensor::scalar(1.7), x));
    });
    check("matmul", 8, [&](const Tensor& x) { return sum(matmul(reshape(x, {2, 4}), m)); });
    check("transpose", 8, [&](const Tensor& x) { return sum(matmul(m, transpose(reshape(x, {2, 4})))); });
    Tensor c24({2, 4}, random_vec(rng, 8));

    check("relu", 6, [&](const Tensor& x) { return sum(relu(x)); }, {0.0});
    check("sigmoid", 6, [&](const Tensor& x) { return sum(mul(sigmoid(x), sigmoid(x))); });
    check("tanh", 6, [&](const Tensor& x) { return l2_norm(autodiff::tanh(x)); });
    check("softmax", 8, [&](const Tensor& x) { return sum(mul(softmax(reshape(x, {2, 4})), c24)); });
    check("log_softmax", 8, [&](const Tensor& x) { return sum(mul(log_softmax(reshape(x, {2, 4})), c24)); });
    check("cross_entropy", 8, [&](const Tensor& x) { return cross_entropy(reshape(x, {2, 4}), labels); });
    check("kl_divergence", 8, [&](const Tensor& x) { return kl_divergence(reshape(x, {2, 4}), c24); });
    check("kl_divergence_q", 8, [&](const Tensor& x) { return kl_divergence(c24, reshape(x, {2, 4})); });
    check("sum", 5, [&](const Tensor& x) { return sum(x); });
    check("mean", 5, [&](const Tensor& x) { return mean(x); });
    check("clamp", 6, [&](const Tensor& x) { return sum(mul(clamp(x, -1.0, 1.0), x)); }, {-1.0, 1.0});
    check("l2_norm", 5, [&](const Tensor& x) { return l2_norm(x); });
    check("pow", 5, [&](const Tensor& x) {
        return sum(pow_scalar(add_scalar(mul(x, x), 1.0), -0.5));
    });
    check("select_rows", 8, [&](const Tensor& x) {
        return sum(select_rows(reshape(x, {4, 2}), {0, 2, 2}));
    });
    check("at", 5, [&](const Tensor& x) { return at(mul(x, x), 3); });
}

TEST_CASE("deep MLP gradient matches finite differences") {
    Rng rng(7);
    // 5 random affine+tanh layers built from primitives
    const std::size_t d = 4;
    std::vector<Tensor> weights;
    for (int l = 0; l < 5; ++l) weights.emplace_back(Shape{d, d}, random_vec(rng, d * d, -0.8, 0.8));

    auto net = [&](const Tensor& x) {
        Tensor h = reshape(x, {1, d});
        for (const auto& W : weights) h = autodiff::tanh(matmul(h, W));
        return cross_entropy(h, {2});
    };

    auto x0 = random_vec(rng, d);
    Tensor x({d}, x0, true);
    backward(net(x));
    auto fd = central_diff([&](const std::vector<double>& v) { return net(Tensor({d}, v)).item(); }, x0);
    REQUIRE(rel_error(x.grad(), fd) <= 1e-5);
}

TEST_CASE("softmax and log_softmax stay finite on extreme logits") {
    Tensor big({1, 3}, {1e4, -1e4, 0.0});
    for (double v : softmax(big).data()) REQUIRE(std::isfinite(v));
    for (double v : log_softmax(big).data()) REQUIRE(std::isfinite(v));
    REQUIRE(softmax(big).data()[0] == Catch::Approx(1.0));
}

TEST_CASE("independent graphs on distinct threads") {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor x({8}, std::vector<double>(8, 0.5), true);
        for (int i = 0; i < 50; ++i) {
            Tensor loss = l2_norm(mul(x, x));
            backward(loss);
            x = x.detached(true);
        }
        return x.data()[0];
    };
    std::vector<std::thread> threads;
    std::vector<double> results(4, 0.0);
    for (int t = 0; t < 4; ++t) threads.emplace_back([&, t] { results[t] = run(t + 1); });
    for (auto& th : threads) th.join();
    for (double r : results) REQUIRE(r == 0.5);
}
