#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "crvos/autograd.hpp"
#include "crvos/errors.hpp"
#include "crvos/nn_ops.hpp"
#include "test_util.hpp"

using namespace crvos;
using testutil::TestRng;

namespace {

// Central finite differences of a scalar-valued graph w.r.t. one leaf tensor,
// compared against the analytic gradient from backward().
void check_gradient(const std::function<nn::Var(const std::vector<nn::Var>&)>& f,
                    std::vector<Tensor> inputs, double h = 1e-6, double tol = 1e-6) {
    std::vector<nn::Var> vars;
    for (auto& t : inputs) vars.push_back(nn::leaf(t, true));
    nn::Var out = f(vars);
    nn::backward(out);

    for (size_t vi = 0; vi < vars.size(); ++vi) {
        for (size_t i = 0; i < inputs[vi].size(); ++i) {
            const double saved = inputs[vi].data()[i];
            inputs[vi].data()[i] = saved + h;
            std::vector<nn::Var> vp;
            for (auto& t : inputs) vp.push_back(nn::leaf(t, false));
            const double lp = f(vp)->value.data()[0];
            inputs[vi].data()[i] = saved - h;
            std::vector<nn::Var> vm;
            for (auto& t : inputs) vm.push_back(nn::leaf(t, false));
            const double lm = f(vm)->value.data()[0];
            inputs[vi].data()[i] = saved;

            const double fd = (lp - lm) / (2.0 * h);
            const double an = vars[vi]->grad.data()[i];
            CHECK(std::abs(fd - an) < tol * std::max({1.0, std::abs(fd), std::abs(an)}));
        }
    }
}

}  // namespace

TEST_CASE("tensor basics") {
    Tensor t(2, 3, 4);
    CHECK(t.size() == 24);
    t.at(1, 2, 3) = 5.0;
    CHECK(t.at(1, 2, 3) == 5.0);
    CHECK(t.channel(1)[2 * 4 + 3] == 5.0);
    Tensor u = t;
    CHECK(u == t);
    u.at(0, 0, 0) = 1.0;
    CHECK(!(u == t));
}

TEST_CASE("backward accumulates over a reused node (diamond graph)") {
    Tensor x(1, 1, 1);
    x.data()[0] = 3.0;
    nn::Var xv = nn::leaf(x, true);
    nn::Var y = nn::add(xv, xv);        // y = 2x
    nn::Var z = nn::scale(y, 0.5);      // z = x
    nn::backward(z);
    CHECK(xv->grad.data()[0] == doctest::Approx(1.0));
}

TEST_CASE("parameter gradients accumulate across backward calls") {
    Tensor x(1, 1, 1);
    x.data()[0] = 2.0;
    nn::Var p = nn::parameter(x);
    nn::backward(nn::scale(p, 3.0));
    nn::backward(nn::scale(p, 3.0));
    CHECK(p->grad.data()[0] == doctest::Approx(6.0));
}

TEST_CASE("conv2d forward: identity kernel") {
    TestRng rng(1);
    Tensor x = testutil::random_image(6, 6, rng);
    Tensor w(3, 3, 9);  // 3x3 kernels; center tap copies the matching channel
    for (int oc = 0; oc < 3; ++oc) w.at(oc, oc, 4) = 1.0;
    Tensor b(3, 1, 1);
    Tensor y = nn::conv2d_fwd(x, w, b, 3, 1, 1);
    CHECK(y == x);
}

TEST_CASE("conv2d gradient check (stride 1 and 2)") {
    TestRng rng(2);
    for (int stride : {1, 2}) {
        Tensor x(2, 4, 4);
        for (size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);
        Tensor w(2, 2, 9);
        for (size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-1, 1);
        Tensor b(2, 1, 1);
        for (size_t i = 0; i < b.size(); ++i) b.data()[i] = rng.uniform(-1, 1);
        check_gradient(
            [stride](const std::vector<nn::Var>& v) {
                nn::Var y = nn::conv2d(v[0], v[1], v[2], 3, stride, 1);
                y = nn::relu(y);
                // collapse: 1x1 conv to one channel, then full-kernel conv to scalar
                const int c = y->value.c(), hh = y->value.h(), ww = y->value.w();
                Tensor kw(1, c, hh * ww);
                for (size_t i = 0; i < kw.size(); ++i) kw.data()[i] = 0.05 * (1.0 + (i % 5));
                return nn::conv2d(y, nn::leaf(std::move(kw)), nn::leaf(Tensor(1, 1, 1)),
                                  hh, 1, 0);
            },
            {x, w, b});
    }
}

TEST_CASE("deconv2d forward: exact 2x size, zero params give zeros") {
    TestRng rng(3);
    Tensor x(3, 5, 7);
    for (size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);
    Tensor w(3, 2, 16);
    Tensor b(2, 1, 1);
    Tensor y = nn::deconv2d_fwd(x, w, b);
    CHECK(y.c() == 2);
    CHECK(y.h() == 10);
    CHECK(y.w() == 14);
    for (size_t i = 0; i < y.size(); ++i) CHECK(y.data()[i] == 0.0);
}

TEST_CASE("deconv2d gradient check") {
    TestRng rng(4);
    Tensor x(2, 3, 3);
    for (size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);
    Tensor w(2, 2, 16);
    for (size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-1, 1);
    Tensor b(2, 1, 1);
    for (size_t i = 0; i < b.size(); ++i) b.data()[i] = rng.uniform(-1, 1);
    check_gradient(
        [](const std::vector<nn::Var>& v) {
            nn::Var y = nn::relu(nn::deconv2d(v[0], v[1], v[2]));
            const int c = y->value.c(), hh = y->value.h(), ww = y->value.w();
            Tensor kw(1, c, hh * ww);
            for (size_t i = 0; i < kw.size(); ++i) kw.data()[i] = 0.03 * (1.0 + (i % 4));
            return nn::conv2d(y, nn::leaf(std::move(kw)), nn::leaf(Tensor(1, 1, 1)), hh, 1, 0);
        },
        {x, w, b});
}

TEST_CASE("bilinear upsample: constant map stays constant; gradcheck") {
    Tensor c(1, 3, 3, 2.5);
    Tensor up = nn::upsample_bilinear_fwd(c, 2);
    CHECK(up.h() == 6);
    for (size_t i = 0; i < up.size(); ++i) CHECK(up.data()[i] == doctest::Approx(2.5));

    TestRng rng(5);
    Tensor x(2, 3, 3);
    for (size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);
    for (int factor : {2, 4}) {
        check_gradient(
            [factor](const std::vector<nn::Var>& v) {
                nn::Var y = nn::upsample_bilinear(v[0], factor);
                const int c2 = y->value.c(), hh = y->value.h(), ww = y->value.w();
                Tensor kw(1, c2, hh * ww);
                for (size_t i = 0; i < kw.size(); ++i) kw.data()[i] = 0.02 * (1.0 + (i % 3));
                return nn::conv2d(y, nn::leaf(std::move(kw)), nn::leaf(Tensor(1, 1, 1)), hh, 1,
                                  0);
            },
            {x});
    }
}

TEST_CASE("avgpool gradcheck and softmax gradcheck") {
    TestRng rng(6);
    Tensor x(2, 4, 4);
    for (size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-2, 2);
    check_gradient(
        [](const std::vector<nn::Var>& v) {
            nn::Var y = nn::avgpool(v[0], 2);
            const int c = y->value.c(), hh = y->value.h(), ww = y->value.w();
            Tensor kw(1, c, hh * ww);
            for (size_t i = 0; i < kw.size(); ++i) kw.data()[i] = 0.1 * (1.0 + (i % 3));
            return nn::conv2d(y, nn::leaf(std::move(kw)), nn::leaf(Tensor(1, 1, 1)), hh, 1, 0);
        },
        {x});

    MaskMap target(4, 4);
    for (int y = 0; y < 4; ++y)
        for (int xx = 0; xx < 4; ++xx) target.at(y, xx) = (y + xx) % 2;
    check_gradient(
        [&target](const std::vector<nn::Var>& v) {
            return nn::nll_loss_graph(nn::softmax_channels(v[0]), target);
        },
        {x});
}

TEST_CASE("concat splits gradient correctly") {
    TestRng rng(7);
    Tensor a(1, 2, 2), b(2, 2, 2);
    for (size_t i = 0; i < a.size(); ++i) a.data()[i] = rng.uniform(-1, 1);
    for (size_t i = 0; i < b.size(); ++i) b.data()[i] = rng.uniform(-1, 1);
    check_gradient(
        [](const std::vector<nn::Var>& v) {
            nn::Var y = nn::concat_channels({v[0], v[1]});
            const int c = y->value.c(), hh = y->value.h(), ww = y->value.w();
            Tensor kw(1, c, hh * ww);
            for (size_t i = 0; i < kw.size(); ++i) kw.data()[i] = 0.2 * (1.0 + (i % 2));
            return nn::conv2d(y, nn::leaf(std::move(kw)), nn::leaf(Tensor(1, 1, 1)), hh, 1, 0);
        },
        {a, b});
}

TEST_CASE("detach blocks gradient flow") {
    Tensor x(1, 1, 1);
    x.data()[0] = 2.0;
    nn::Var xv = nn::leaf(x, true);
    nn::Var d = nn::detach(nn::scale(xv, 5.0));
    CHECK_FALSE(d->requires_grad);
    nn::Var y = nn::add(nn::scale(xv, 1.0), d);
    nn::backward(y);
    CHECK(xv->grad.data()[0] == doctest::Approx(1.0));  // only the direct path
}

TEST_CASE("softmax output normalizes") {
    TestRng rng(8);
    Tensor x(2, 5, 5);
    for (size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-10, 10);
    Tensor y = nn::softmax_channels_fwd(x);
    for (size_t i = 0; i < y.plane(); ++i)
        CHECK(y.data()[i] + y.data()[y.plane() + i] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("nll numeric guard") {
    Tensor p(2, 2, 2, 0.5);
    p.data()[0] = std::nan("");
    MaskMap t(2, 2);
    CHECK_THROWS_AS(nn::nll_loss_graph(nn::leaf(p), t), NumericError);
}
