#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "../test_util.hpp"
#include "videdit/autograd.hpp"
#include "videdit/rng.hpp"
#include "videdit/tensor.hpp"

using namespace videdit;
namespace ag = videdit::ag;
using testutil::grad_check;

TEST_CASE("tensor basics") {
    Tensor t({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.sum() == 0.0);
    t.at(1, 2) = 4.0;
    CHECK(t[5] == 4.0);
    Tensor r = t.reshaped({3, 2});
    CHECK(r.at(2, 1) == 4.0);
    CHECK_THROWS(t.reshaped({4, 2}));

    Tensor a = Tensor::full({2, 2}, 1.5);
    Tensor b = Tensor::full({2, 2}, 0.5);
    CHECK((a + b).sum() == doctest::Approx(8.0));
    CHECK((a - b).sum() == doctest::Approx(4.0));
    CHECK(max_abs_diff(a, b) == doctest::Approx(1.0));
    CHECK(bitwise_equal(a, a));
    CHECK(!bitwise_equal(a, b));
    CHECK_THROWS(a += Tensor({3}));
}

TEST_CASE("rng determinism and moments") {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) {
        double va = a.normal();
        CHECK(va == b.normal());
    }
    CHECK(a.normal() != c.normal());

    Rng r(7);
    double mean = 0.0, var = 0.0;
    const int n = 20000;
    std::vector<double> xs(n);
    for (int i = 0; i < n; ++i) {
        xs[i] = r.normal();
        mean += xs[i];
    }
    mean /= n;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= n;
    CHECK(std::fabs(mean) < 0.05);
    CHECK(var == doctest::Approx(1.0).epsilon(0.05));

    // uniform_int covers bounds
    Rng u(3);
    bool lo = false, hi = false;
    for (int i = 0; i < 1000; ++i) {
        int v = u.uniform_int(2, 5);
        CHECK(v >= 2);
        CHECK(v <= 5);
        lo |= v == 2;
        hi |= v == 5;
    }
    CHECK(lo);
    CHECK(hi);
}

TEST_CASE("gemm against hand computation") {
    Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b({3, 2}, {7, 8, 9, 10, 11, 12});
    Tensor c;
    ag::gemm(a, false, b, false, c);
    CHECK(c.at(0, 0) == doctest::Approx(58));
    CHECK(c.at(1, 1) == doctest::Approx(154));
    Tensor d;
    ag::gemm(a, true, a, false, d);  // [3,3]
    CHECK(d.dim(0) == 3);
    CHECK(d.at(0, 0) == doctest::Approx(17));
}

TEST_CASE("softmax rows sum to one and backward matches finite differences") {
    Rng rng(5);
    Tensor x = rng.normal_tensor({4, 6});
    Tensor s = x;
    ag::softmax_rows(s);
    for (int i = 0; i < 4; ++i) {
        double row = 0.0;
        for (int j = 0; j < 6; ++j) row += s.at(i, j);
        CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
    }

    // softmax backward via the identity used in attention
    Tensor da = rng.normal_tensor({4, 6});
    Tensor ds;
    ag::softmax_rows_backward(s, da, ds);
    double h = 1e-6;
    for (int j = 0; j < 6; ++j) {
        Tensor xp = x, xm = x;
        xp.at(1, j) += h;
        xm.at(1, j) -= h;
        ag::softmax_rows(xp);
        ag::softmax_rows(xm);
        double num = 0.0;
        for (int k = 0; k < 6; ++k) num += da.at(1, k) * (xp.at(1, k) - xm.at(1, k)) / (2 * h);
        CHECK(ds.at(1, j) == doctest::Approx(num).epsilon(1e-4));
    }
}

TEST_CASE("autograd elementwise ops") {
    Rng rng(11);
    Tensor a = rng.normal_tensor({3, 4});
    Tensor b = rng.normal_tensor({3, 4});
    Tensor tgt = rng.normal_tensor({3, 4});

    auto loss_of = [&](const std::function<ag::Var(ag::Graph&, std::vector<ag::Var>&)>& f) { return f; };

    CHECK(grad_check({a, b}, [&](ag::Graph& g, std::vector<ag::Var>& v) {
              return ag::mse_loss(g, ag::add(g, v[0], v[1]), tgt);
          }) < 1e-6);
    CHECK(grad_check({a, b}, [&](ag::Graph& g, std::vector<ag::Var>& v) {
              return ag::mse_loss(g, ag::sub(g, v[0], v[1]), tgt);
          }) < 1e-6);
    CHECK(grad_check({a, b}, [&](ag::Graph& g, std::vector<ag::Var>& v) {
              return ag::mse_loss(g, ag::mul(g, v[0], v[1]), tgt);
          }) < 1e-6);
    CHECK(grad_check({a}, [&](ag::Graph& g, std::vector<ag::Var>& v) {
              return ag::mse_loss(g, ag::scale(g, v[0], -1.7), tgt);
          }) < 1e-6);
    CHECK(grad_check({a, b}, [&](ag::Graph& g, std::vector<ag::Var>& v) {
              return ag::mse_loss(g, ag::add_scaled(g, v[0], 0.3, v[1], -2.0), tgt);
          }) < 1e-6);
    CHECK(grad_check({a}, [&](ag::Graph& g, std::vector<ag::Var>& v) {
              return ag::mse_loss(g, ag::silu(g, v[0]), tgt);
          }) < 1e-6);
    (void)loss_of;
}

TEST_CASE("autograd matmul in all transpose modes") {
    Rng rng(13);
    Tensor a = rng.normal_tensor({3, 5});
    Tensor b = rng.normal_tensor({5, 4});
    Tensor at = rng.normal_tensor({5, 3});
    Tensor bt = rng.normal_tensor({4, 5});
    Tensor tgt = rng.normal_tensor({3, 4});

    CHECK(grad_check({a, b}, [&](ag::Graph& g, std::vector<ag::Var>& v) {
              return ag::mse_loss(g, ag::matmul(g, v[0], v[1]), tgt);
          }) < 1e-6);
    CHECK(grad_check({at, b}, [&](ag::Graph& g, std::vector<ag::Var>& v) {
              return ag::mse_loss(g, ag::matmul(g, v[0], v[1], true, false), tgt);
          }) < 1e-6);
    CHECK(grad_check({a, bt}, [&](ag::Graph& g, std::vector<ag::Var>& v) {
              return ag::mse_loss(g, ag::matmul(g, v[0], v[1], false, true), tgt);
          }) < 1e-6);
    CHECK(grad_check({at, bt}, [&](ag::Graph& g, std::vector<ag::Var>& v) {
              return ag::mse_loss(g, ag::matmul(g, v[0], v[1], true, true), tgt);
          }) < 1e-6);
}

TEST_CASE("autograd affine and gather") {
    Rng rng(17);
    Tensor x = rng.normal_tensor({4, 3});
    Tensor w = rng.normal_tensor({3, 5});
    Tensor b = rng.normal_tensor({5});
    Tensor tgt = rng.normal_tensor({4, 5});
    CHECK(grad_check({x, w, b}, [&](ag::Graph& g, std::vector<ag::Var>& v) {
              return ag::mse_loss(g, ag::affine(g, v[0], v[1], v[2]), tgt);
          }) < 1e-6);

    Tensor table = rng.normal_tensor({6, 3});
    Tensor tgt2 = rng.normal_tensor({4, 3});
    std::vector<int> ids = {0, 5, 5, 2};  // repeated id accumulates
    CHECK(grad_check({table}, [&](ag::Graph& g, std::vector<ag::Var>& v) {
              return ag::mse_loss(g, ag::gather_rows(g, v[0], ids), tgt2);
          }) < 1e-6);
}

TEST_CASE("autograd image ops") {
    Rng rng(19);
    SUBCASE("conv2d stride 1") {
        Tensor x = rng.normal_tensor({2, 3, 5, 5});
        Tensor w = rng.normal_tensor({4, 3, 3, 3});
        Tensor b = rng.normal_tensor({4});
        Tensor tgt = rng.normal_tensor({2, 4, 5, 5});
        CHECK(grad_check({x, w, b}, [&](ag::Graph& g, std::vector<ag::Var>& v) {
                  return ag::mse_loss(g, ag::conv2d(g, v[0], v[1], v[2], 1, 1), tgt);
              }) < 1e-6);
    }
    SUBCASE("conv2d stride 2") {
        Tensor x = rng.normal_tensor({1, 2, 6, 6});
        Tensor w = rng.normal_tensor({3, 2, 3, 3});
        Tensor b = rng.normal_tensor({3});
        Tensor tgt = rng.normal_tensor({1, 3, 3, 3});
        CHECK(grad_check({x, w, b}, [&](ag::Graph& g, std::vector<ag::Var>& v) {
                  return ag::mse_loss(g, ag::conv2d(g, v[0], v[1], v[2], 2, 1), tgt);
              }) < 1e-6);
    }
    SUBCASE("conv2d 1x1") {
        Tensor x = rng.normal_tensor({2, 4, 3, 3});
        Tensor w = rng.normal_tensor({2, 4, 1, 1});
        Tensor b = rng.normal_tensor({2});
        Tensor tgt = rng.normal_tensor({2, 2, 3, 3});
        CHECK(grad_check({x, w, b}, [&](ag::Graph& g, std::vector<ag::Var>& v) {
                  return ag::mse_loss(g, ag::conv2d(g, v[0], v[1], v[2], 1, 0), tgt);
              }) < 1e-6);
    }
    SUBCASE("upsample and concat") {
        Tensor x = rng.normal_tensor({2, 3, 3, 3});
        Tensor y = rng.normal_tensor({2, 2, 6, 6});
        Tensor tgt = rng.normal_tensor({2, 5, 6, 6});
        CHECK(grad_check({x, y}, [&](ag::Graph& g, std::vector<ag::Var>& v) {
                  return ag::mse_loss(g, ag::concat_channels(g, ag::upsample_nearest2x(g, v[0]), v[1]), tgt);
              }) < 1e-6);
    }
    SUBCASE("channel bias") {
        Tensor x = rng.normal_tensor({2, 3, 4, 4});
        Tensor rows = rng.normal_tensor({2, 3});
        Tensor tgt = rng.normal_tensor({2, 3, 4, 4});
        CHECK(grad_check({x, rows}, [&](ag::Graph& g, std::vector<ag::Var>& v) {
                  return ag::mse_loss(g, ag::add_channel_bias(g, v[0], v[1]), tgt);
              }) < 1e-6);
    }
    SUBCASE("group norm") {
        Tensor x = rng.normal_tensor({2, 4, 3, 3});
        Tensor gamma = rng.normal_tensor({4});
        Tensor beta = rng.normal_tensor({4});
        Tensor tgt = rng.normal_tensor({2, 4, 3, 3});
        CHECK(grad_check({x, gamma, beta}, [&](ag::Graph& g, std::vector<ag::Var>& v) {
                  return ag::mse_loss(g, ag::group_norm(g, v[0], v[1], v[2], 2), tgt);
              }, 1e-5) < 1e-5);
    }
}

TEST_CASE("no-grad graphs skip the tape") {
    ag::Graph g(false);
    Rng rng(3);
    ag::Var a = g.leaf(rng.normal_tensor({2, 2}), true);
    ag::Var b = ag::scale(g, a, 2.0);
    CHECK(!b->requires_grad);
    CHECK_THROWS(g.backward(b));
}
