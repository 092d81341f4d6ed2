#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <set>

#include "crvos/data.hpp"
#include "crvos/errors.hpp"
#include "crvos/image_io.hpp"
#include "test_util.hpp"

using namespace crvos;
using testutil::TestRng;
namespace fs = std::filesystem;

namespace {

std::pair<double, double> centroid(const MaskMap& m, int label) {
    double sy = 0, sx = 0;
    size_t n = 0;
    for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x)
            if (m.at(y, x) == label) {
                sy += y;
                sx += x;
                ++n;
            }
    return {sy / n, sx / n};
}

void write_davis_tree(const fs::path& root, const std::string& seq, int frames, int targets,
                      bool png_masks, int missing_annotations = 0) {
    const fs::path img_dir = root / "JPEGImages" / seq;
    const fs::path ann_dir = root / "Annotations" / seq;
    fs::create_directories(img_dir);
    fs::create_directories(ann_dir);
    TestRng rng(5);
    for (int f = 0; f < frames; ++f) {
        char name[16];
        std::snprintf(name, sizeof(name), "%05d", f);
        write_frame_image((img_dir / (std::string(name) + ".ppm")).string(),
                          testutil::random_image(32, 48, rng));
        if (f >= frames - missing_annotations) continue;
        MaskMap m(32, 48);
        for (int k = 1; k <= targets; ++k)
            for (int y = k * 4; y < k * 4 + 4; ++y)
                for (int x = 8; x < 16; ++x) m.at(y, x) = k;
        write_mask_image((ann_dir / (std::string(name) + (png_masks ? ".png" : ".pgm"))).string(),
                         m);
    }
}

}  // namespace

TEST_CASE("synthetic: zero motion keeps masks identical; seed reproducibility") {
    SyntheticSpec spec;
    spec.translate_x = 0;
    spec.translate_y = 0;
    spec.length = 5;
    spec.seed = 9;
    auto rec = generate_synthetic(spec);
    CHECK(rec.length() == 5);
    for (int i = 1; i < 5; ++i) CHECK(rec.masks[i] == rec.masks[0]);

    auto rec2 = generate_synthetic(spec);
    for (int i = 0; i < 5; ++i) {
        CHECK(rec2.masks[i] == rec.masks[i]);
        CHECK(rec2.frames[i].rgb == rec.frames[i].rgb);
    }
}

TEST_CASE("synthetic: centroid drifts exactly with integer translation") {
    SyntheticSpec spec;
    spec.height = 64;
    spec.width = 64;
    spec.translate_x = 2;
    spec.translate_y = 0;
    spec.length = 10;
    spec.target_size = 12;
    spec.starts = {{32.0, 20.0}};
    auto rec = generate_synthetic(spec);
    const auto [y0, x0] = centroid(rec.masks.front(), 1);
    const auto [y9, x9] = centroid(rec.masks.back(), 1);
    CHECK(x9 - x0 == doctest::Approx(18.0));
    CHECK(y9 - y0 == doctest::Approx(0.0));
}

TEST_CASE("synthetic: targets stay on canvas and labels stay in range") {
    SyntheticSpec spec;
    spec.num_targets = 3;
    spec.shapes = {ShapeKind::Square, ShapeKind::Disk};
    spec.translate_x = 5;
    spec.translate_y = 3;
    spec.length = 40;
    spec.seed = 123;
    auto rec = generate_synthetic(spec);
    CHECK(rec.num_targets == 3);
    for (const auto& m : rec.masks) {
        std::set<int32_t> seen(m.labels.begin(), m.labels.end());
        for (int32_t v : seen) {
            CHECK(v >= 0);
            CHECK(v <= 3);
        }
        size_t fg = 0;
        for (int32_t v : m.labels) fg += v != 0;
        CHECK(fg > 0);  // never fully exits
    }
}

TEST_CASE("synthetic rejects oversized targets") {
    SyntheticSpec spec;
    spec.target_size = 100;
    CHECK_THROWS_AS(generate_synthetic(spec), std::invalid_argument);
}

TEST_CASE("davis layout: 2017-style labels and K from annotations") {
    testutil::TempDir dir("davis17");
    write_davis_tree(dir.path, "seq_a", 4, 2, /*png_masks=*/true);
    auto records = load_davis_layout(dir.str(), 2017);
    REQUIRE(records.size() == 1);
    CHECK(records[0].name == "seq_a");
    CHECK(records[0].num_targets == 2);
    CHECK(records[0].length() == 4);
    const MaskMap m = records[0].load_mask(0);
    CHECK(max_label(m) == 2);
    const Frame f = records[0].load_frame(2);
    CHECK(f.rgb.c() == 3);
    CHECK(f.rgb.h() == 32);
}

TEST_CASE("davis layout: 2016-style coerces nonzero labels to 1") {
    testutil::TempDir dir("davis16");
    const fs::path img_dir = dir.path / "JPEGImages" / "seq_b";
    const fs::path ann_dir = dir.path / "Annotations" / "seq_b";
    fs::create_directories(img_dir);
    fs::create_directories(ann_dir);
    TestRng rng(6);
    write_frame_image((img_dir / "00000.ppm").string(), testutil::random_image(16, 16, rng));
    MaskMap m(16, 16);
    for (int x = 0; x < 8; ++x) m.at(4, x) = 255;  // binary mask stored as 0/255
    write_mask_image((ann_dir / "00000.png").string(), m);

    auto records = load_davis_layout(dir.str(), 2016);
    REQUIRE(records.size() == 1);
    const MaskMap loaded = records[0].load_mask(0);
    CHECK(max_label(loaded) == 1);
    CHECK(records[0].num_targets == 1);
}

TEST_CASE("davis layout: empty root warns, missing frame-0 annotation errors") {
    testutil::TempDir dir("davisempty");
    fs::create_directories(dir.path / "JPEGImages");
    std::vector<std::string> warnings;
    auto records = load_davis_layout(dir.str(), 2017, &warnings);
    CHECK(records.empty());
    CHECK(!warnings.empty());

    testutil::TempDir dir2("davismissing");
    const fs::path img_dir = dir2.path / "JPEGImages" / "seq_c";
    fs::create_directories(img_dir);
    fs::create_directories(dir2.path / "Annotations" / "seq_c");
    TestRng rng(7);
    write_frame_image((img_dir / "00000.ppm").string(), testutil::random_image(16, 16, rng));
    CHECK_THROWS_AS(load_davis_layout(dir2.str(), 2017), DataError);
}

TEST_CASE("davis layout: resolution level directory (480p) is resolved") {
    testutil::TempDir dir("davis480");
    const fs::path img_dir = dir.path / "JPEGImages" / "480p" / "seq_d";
    const fs::path ann_dir = dir.path / "Annotations" / "480p" / "seq_d";
    fs::create_directories(img_dir);
    fs::create_directories(ann_dir);
    TestRng rng(8);
    write_frame_image((img_dir / "00000.ppm").string(), testutil::random_image(16, 16, rng));
    MaskMap m(16, 16);
    m.at(2, 2) = 1;
    write_mask_image((ann_dir / "00000.png").string(), m);
    auto records = load_davis_layout(dir.str(), 2017);
    REQUIRE(records.size() == 1);
    CHECK(records[0].name == "seq_d");
}

TEST_CASE("mask image round-trip is label-exact (pgm and png)") {
    testutil::TempDir dir("maskio");
    TestRng rng(9);
    MaskMap m(24, 40);
    for (auto& v : m.labels) v = rng.uniform_int(0, 5);
    for (const char* ext : {"pgm", "png"}) {
        const std::string path = dir.str() + "/m." + ext;
        write_mask_image(path, m);
        const MaskMap back = read_mask_image(path);
        CHECK(back == m);
    }
}

TEST_CASE("frame image round-trip within 8-bit quantization (ppm and png)") {
    testutil::TempDir dir("frameio");
    TestRng rng(10);
    const Tensor img = testutil::random_image(20, 30, rng);
    for (const char* ext : {"ppm", "png"}) {
        const std::string path = dir.str() + "/f." + ext;
        write_frame_image(path, img);
        const Tensor back = read_frame_image(path);
        REQUIRE(back.same_shape(img));
        for (size_t i = 0; i < img.size(); ++i)
            CHECK(std::abs(back.data()[i] - img.data()[i]) <= 0.5 / 255.0 + 1e-12);
    }
}

TEST_CASE("resize policy: halving, passthrough, label-set never grows") {
    TestRng rng(11);
    Frame f;
    f.rgb = testutil::random_image(480, 864, rng);
    MaskMap m(480, 864);
    for (auto& v : m.labels) v = rng.uniform_int(0, 3);
    auto [rf, rm] = resize_policy(f, m, 240, 432);
    CHECK(rf.rgb.h() == 240);
    CHECK(rf.rgb.w() == 432);
    CHECK(rm.h == 240);

    // passthrough leaves masks untouched
    auto [sf, sm] = resize_policy(f, m, 480, 864);
    CHECK(sm == m);

    CHECK_THROWS_AS(resize_policy(f, m, 100, 100), ConfigError);

    for (int trial = 0; trial < 10; ++trial) {
        MaskMap src(64, 64);
        for (auto& v : src.labels) v = rng.uniform_int(0, 4);
        const MaskMap dst = resize_nearest(src, 32, 48);
        std::set<int32_t> src_labels(src.labels.begin(), src.labels.end());
        std::set<int32_t> dst_labels(dst.labels.begin(), dst.labels.end());
        for (int32_t v : dst_labels) CHECK(src_labels.count(v) == 1);
    }
}
