#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "crvos/errors.hpp"
#include "crvos/geometry.hpp"
#include "crvos/model.hpp"
#include "crvos/nn_ops.hpp"
#include "test_util.hpp"

using namespace crvos;
using testutil::TestRng;

namespace {

constexpr double kDeskScale = 0.125;  // width-8 desk model

Clue clue_for(const Tensor& prev_mask) {
    return build_clue(prev_mask, make_coord_channels(prev_mask.h() / 16, prev_mask.w() / 16));
}

}  // namespace

TEST_CASE("encode: stride arithmetic at paper resolutions") {
    Network net(ModelConfig::for_variant(Variant::III, kDeskScale), 1);
    TestRng rng(1);

    auto p64 = net.encode(testutil::random_image(64, 64, rng));
    CHECK(p64.f4.h() == 16);
    CHECK(p64.f8.h() == 8);
    CHECK(p64.f16.h() == 4);

    auto p240 = net.encode(testutil::random_image(240, 432, rng));
    CHECK(p240.f16.h() == 15);
    CHECK(p240.f16.w() == 27);

    auto p480 = net.encode(testutil::random_image(480, 864, rng));
    CHECK(p480.f16.h() == 30);
    CHECK(p480.f16.w() == 54);
}

TEST_CASE("encode rejects non-divisible shapes") {
    Network net(ModelConfig::for_variant(Variant::III, kDeskScale), 1);
    TestRng rng(2);
    CHECK_THROWS_AS(net.encode(testutil::random_image(60, 64, rng)), ShapeError);
}

TEST_CASE("decode: output shape equals input shape, fg+bg normalized") {
    TestRng rng(3);
    for (Variant v : {Variant::I, Variant::II, Variant::III, Variant::IV}) {
        Network net(ModelConfig::for_variant(v, kDeskScale), 7);
        const int h = 16 * rng.uniform_int(4, 8), w = 16 * rng.uniform_int(4, 8);
        const Tensor img = testutil::random_image(h, w, rng);
        const Tensor prev = testutil::random_soft_mask(h, w, rng);
        Specifier spec;
        if (v == Variant::II)
            spec = downsample_mask(prev);
        else if (v != Variant::I)
            spec = clue_for(prev);
        const Tensor mask = net.decode(net.encode(img), spec);
        CHECK(mask.c() == 2);
        CHECK(mask.h() == h);
        CHECK(mask.w() == w);
        for (size_t i = 0; i < mask.plane(); ++i)
            CHECK(std::abs(mask.data()[i] + mask.data()[mask.plane() + i] - 1.0) < 1e-5);
    }
}

TEST_CASE("decode rejects specifier/variant mismatches") {
    TestRng rng(4);
    const Tensor img = testutil::random_image(64, 64, rng);
    const Tensor prev = testutil::random_soft_mask(64, 64, rng);

    Network net3(ModelConfig::for_variant(Variant::III, kDeskScale), 7);
    auto pyr = net3.encode(img);
    CHECK_THROWS_AS(net3.decode(pyr, Specifier{}), ConfigError);
    CHECK_THROWS_AS(net3.decode(pyr, Specifier{downsample_mask(prev)}), ConfigError);

    Network net1(ModelConfig::for_variant(Variant::I, kDeskScale), 7);
    auto pyr1 = net1.encode(img);
    CHECK_THROWS_AS(net1.decode(pyr1, Specifier{clue_for(prev)}), ConfigError);
    CHECK_NOTHROW(net1.decode(pyr1, Specifier{}));
}

TEST_CASE("architecture audit: deconv/bilinear counts per variant") {
    Network net3(ModelConfig::for_variant(Variant::III, kDeskScale), 1);
    auto a3 = net3.audit();
    CHECK(a3.deconv_in_refine_modules == 3);
    CHECK(a3.bilinear_in_refine_modules == 0);

    Network net4(ModelConfig::for_variant(Variant::IV, kDeskScale), 1);
    auto a4 = net4.audit();
    CHECK(a4.deconv_in_refine_modules == 0);
    CHECK(a4.bilinear_in_refine_modules == 3);

    Network net1(ModelConfig::for_variant(Variant::I, kDeskScale), 1);
    auto a1 = net1.audit();
    CHECK(a3.rm1_fuse_in_channels - a1.rm1_fuse_in_channels == 5);

    Network net2(ModelConfig::for_variant(Variant::II, kDeskScale), 1);
    auto a2 = net2.audit();
    CHECK(a3.rm1_fuse_in_channels - a2.rm1_fuse_in_channels == 3);
}

TEST_CASE("parameter counts: variant I < III; bilinear module smaller than deconv") {
    Network net1(ModelConfig::for_variant(Variant::I, kDeskScale), 1);
    Network net3(ModelConfig::for_variant(Variant::III, kDeskScale), 1);
    Network net4(ModelConfig::for_variant(Variant::IV, kDeskScale), 1);
    CHECK(net1.parameter_count() < net3.parameter_count());
    CHECK(net4.parameter_count() < net3.parameter_count());
}

TEST_CASE("zeroed upscale parameters give logits that softmax to uniform") {
    Network net(ModelConfig::for_variant(Variant::III, kDeskScale), 5);
    for (auto& p : net.parameters())
        if (p.name.find(".up.") != std::string::npos) p.var->value.fill(0.0);
    TestRng rng(5);
    const Tensor img = testutil::random_image(64, 64, rng);
    const Tensor prev = testutil::random_soft_mask(64, 64, rng);
    const Tensor mask = net.decode(net.encode(img), Specifier{clue_for(prev)});
    // all refine outputs are zero -> logits zero -> softmax = (0.5, 0.5)
    for (size_t i = 0; i < mask.size(); ++i) CHECK(mask.data()[i] == doctest::Approx(0.5));
}

TEST_CASE("forward determinism: identical runs are bitwise equal") {
    Network net(ModelConfig::for_variant(Variant::III, kDeskScale), 11);
    TestRng rng(6);
    const Tensor img = testutil::random_image(64, 64, rng);
    const Tensor prev = testutil::random_soft_mask(64, 64, rng);
    const Tensor a = net.decode(net.encode(img), Specifier{clue_for(prev)});
    const Tensor b = net.decode(net.encode(img), Specifier{clue_for(prev)});
    CHECK(a == b);

    // same seed, fresh instance: same parameters, same output
    Network net2(ModelConfig::for_variant(Variant::III, kDeskScale), 11);
    const Tensor c = net2.decode(net2.encode(img), Specifier{clue_for(prev)});
    CHECK(a == c);
}

TEST_CASE("clone yields independent parameters with equal values") {
    Network net(ModelConfig::for_variant(Variant::II, kDeskScale), 3);
    Network copy = net.clone();
    CHECK(copy.parameter_count() == net.parameter_count());
    for (size_t i = 0; i < net.parameters().size(); ++i)
        CHECK(copy.parameters()[i].var->value == net.parameters()[i].var->value);
    copy.parameters()[0].var->value.fill(42.0);
    CHECK(!(copy.parameters()[0].var->value == net.parameters()[0].var->value));
}

TEST_CASE("gradients reach every trainable parameter") {
    Network net(ModelConfig::for_variant(Variant::III, kDeskScale), 17);
    TestRng rng(7);
    const Tensor img = testutil::random_image(32, 32, rng);
    const Tensor prev = testutil::random_soft_mask(32, 32, rng);
    MaskMap target = testutil::random_binary_mask(32, 32, 0.4, rng);

    net.zero_grad();
    auto pyr = net.encode_graph(nn::leaf(img));
    auto spec = nn::leaf(clue_for(prev).channels);
    auto out = net.decode_graph(pyr, spec);
    nn::backward(nn::nll_loss_graph(out, target));

    for (auto& p : net.parameters()) {
        double norm = 0.0;
        for (size_t i = 0; i < p.var->grad.size(); ++i)
            norm += p.var->grad.data()[i] * p.var->grad.data()[i];
        INFO("parameter ", p.name);
        CHECK(norm > 0.0);
    }
}

TEST_CASE("gradient check: analytic vs central differences on a width-8 model") {
    Network net(ModelConfig::for_variant(Variant::III, kDeskScale), 29);
    TestRng rng(8);
    const int side = 16;
    const Tensor img = testutil::random_image(side, side, rng);
    const Tensor prev = testutil::random_soft_mask(side, side, rng);
    MaskMap target = testutil::random_binary_mask(side, side, 0.5, rng);
    const Tensor clue = clue_for(prev).channels;

    auto loss_value = [&]() {
        auto pyr = net.encode_graph(nn::leaf(img));
        auto out = net.decode_graph(pyr, nn::leaf(clue));
        return nn::nll_loss_graph(out, target)->value.data()[0];
    };

    net.zero_grad();
    {
        auto pyr = net.encode_graph(nn::leaf(img));
        auto out = net.decode_graph(pyr, nn::leaf(clue));
        nn::backward(nn::nll_loss_graph(out, target));
    }

    const double h = 1e-5;
    size_t checked = 0;
    for (auto& p : net.parameters()) {
        // sample a few entries per tensor (~1% of a 100k-param model overall)
        const size_t stride = std::max<size_t>(1, p.var->value.size() / 8);
        for (size_t i = 0; i < p.var->value.size(); i += stride) {
            double* w = &p.var->value.data()[i];
            const double saved = *w;
            *w = saved + h;
            const double lp = loss_value();
            *w = saved - h;
            const double lm = loss_value();
            *w = saved;
            const double fd = (lp - lm) / (2.0 * h);
            const double an = p.var->grad.data()[i];
            const double denom = std::max(std::abs(fd), std::abs(an));
            INFO("param ", p.name, " index ", i, " fd ", fd, " an ", an);
            if (denom > 1e-7) CHECK(std::abs(fd - an) / denom < 1e-3);
            ++checked;
        }
    }
    CHECK(checked > 50);
}

TEST_CASE("checkpoint round-trip is bit-exact and echoes config") {
    testutil::TempDir dir("ckpt");
    Network net(ModelConfig::for_variant(Variant::IV, kDeskScale), 41);
    const std::string path = dir.str() + "/model.ckpt";
    std::vector<NamedTensor> extra;
    Tensor t(1, 2, 3);
    for (size_t i = 0; i < t.size(); ++i) t.data()[i] = std::sqrt(2.0) * (i + 1);
    extra.push_back({"opt.test", t});
    net.save_checkpoint(path, 123, extra);

    Network::CheckpointMeta meta;
    Network loaded = Network::load_checkpoint(path, &meta);
    CHECK(meta.step == 123);
    CHECK(loaded.config().variant == Variant::IV);
    CHECK_FALSE(loaded.config().use_deconv);
    REQUIRE(meta.extra.size() == 1);
    CHECK(meta.extra[0].t == t);
    for (size_t i = 0; i < net.parameters().size(); ++i) {
        CHECK(loaded.parameters()[i].name == net.parameters()[i].name);
        CHECK(loaded.parameters()[i].var->value == net.parameters()[i].var->value);
    }
}

TEST_CASE("malformed checkpoint files raise LoadError") {
    testutil::TempDir dir("badckpt");
    const std::string path = dir.str() + "/bad.ckpt";
    {
        std::ofstream f(path, std::ios::binary);
        f << "not a checkpoint at all";
    }
    CHECK_THROWS_AS(Network::load_checkpoint(path), LoadError);
    CHECK_THROWS_AS(Network::load_checkpoint(dir.str() + "/missing.ckpt"), LoadError);

    ModelConfig cfg = ModelConfig::for_variant(Variant::III, kDeskScale);
    cfg.backbone_init = path;
    CHECK_THROWS_AS(Network(cfg, 1), LoadError);
}

TEST_CASE("backbone init loads encoder arrays from a checkpoint") {
    testutil::TempDir dir("backbone");
    Network donor(ModelConfig::for_variant(Variant::III, kDeskScale), 77);
    const std::string path = dir.str() + "/donor.ckpt";
    donor.save_checkpoint(path);

    ModelConfig cfg = ModelConfig::for_variant(Variant::III, kDeskScale);
    cfg.backbone_init = path;
    Network net(cfg, 99);  // different seed; encoder must still match the donor
    for (size_t i = 0; i < net.parameters().size(); ++i) {
        const auto& name = net.parameters()[i].name;
        if (name.rfind("encoder.", 0) == 0)
            CHECK(net.parameters()[i].var->value == donor.parameters()[i].var->value);
    }
    // width mismatch must be rejected
    ModelConfig narrow = ModelConfig::for_variant(Variant::III, kDeskScale / 2);
    narrow.backbone_init = path;
    CHECK_THROWS_AS(Network(narrow, 1), LoadError);
}
