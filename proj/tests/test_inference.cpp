#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>

#include "fovsr/inference.hpp"
#include "fovsr/training.hpp"
#include "test_helpers.hpp"

using namespace fovsr;
namespace fs = std::filesystem;

namespace {

TrainConfig toy_config(int r = 2) {
    TrainConfig cfg;
    cfg.gen.d = 8;
    cfg.gen.n_blocks = 1;
    cfg.gen.r = r;
    cfg.gen.narrow_channels = 8;
    cfg.seed = 9;
    return cfg;
}

fs::path make_temp_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("fovsr_" + tag + "_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("enhance output contract") {
    Trainer<float> t(toy_config());
    const auto narrow = fovsr::testing::synthetic_scene<float>(64, 64, 1);
    const auto wide = fovsr::testing::synthetic_scene<float>(64, 64, 2);

    const auto out = enhance(narrow, wide, t.generator(), t.backbone());
    CHECK(out.height() == 128);
    CHECK(out.width() == 128);
    for (int c = 0; c < 3; ++c) {
        CHECK(out.chan[c].minCoeff() >= 0.0f);
        CHECK(out.chan[c].maxCoeff() <= 1.0f);
    }

    SUBCASE("deterministic: identical inputs give bitwise-identical outputs") {
        const auto again = enhance(narrow, wide, t.generator(), t.backbone());
        for (int c = 0; c < 3; ++c) CHECK((out.chan[c] - again.chan[c]).abs().maxCoeff() == 0.0f);
    }

    SUBCASE("non-multiple inputs snap up to the 64 grid before the r x scaling") {
        const auto odd = fovsr::testing::synthetic_scene<float>(70, 130, 3);
        const auto o = enhance(narrow, odd, t.generator(), t.backbone());
        CHECK(o.height() == 256);  // 70 -> 128, x2
        CHECK(o.width() == 384);   // 130 -> 192, x2
    }

    SUBCASE("r=1 keeps the snapped wide dimensions") {
        Trainer<float> t1(toy_config(1));
        const auto o = enhance(narrow, wide, t1.generator(), t1.backbone());
        CHECK(o.height() == 64);
        CHECK(o.width() == 64);
    }

    SUBCASE("uninitialized generator and empty images are rejected") {
        GeneratorParams<float> empty;
        empty.cfg = toy_config().gen;
        CHECK_THROWS_AS(enhance(narrow, wide, empty, t.backbone()), StateError);
        Image<float> none;
        CHECK_THROWS_AS(enhance(none, wide, t.generator(), t.backbone()), std::invalid_argument);
    }
}

TEST_CASE("identical constant inputs collapse to one repeated patch") {
    Trainer<float> t(toy_config());
    const auto flat = Image<float>::constant(64, 64, 0.4f, 0.4f, 0.4f);
    // blend 0 so the stitched output exposes the raw per-patch results
    const auto out = enhance(flat, flat, t.generator(), t.backbone(), 0.7, 0);
    const auto patches = partition(out);
    for (std::size_t i = 1; i < patches.size(); ++i)
        for (int c = 0; c < 3; ++c)
            CHECK((patches[i].pixels.chan[c] - patches[0].pixels.chan[c]).abs().maxCoeff() == 0.0f);
}

TEST_CASE("match dump carries one record per wide patch") {
    Trainer<float> t(toy_config());
    const auto narrow = fovsr::testing::synthetic_scene<float>(64, 64, 4);
    const auto wide = fovsr::testing::synthetic_scene<float>(64, 64, 5);
    nlohmann::json dump;
    enhance(narrow, wide, t.generator(), t.backbone(), 0.7, 4, &dump);
    REQUIRE(dump.is_array());
    REQUIRE(dump.size() == 64);
    for (const auto& rec : dump) {
        CHECK(rec.contains("wide"));
        CHECK(rec.contains("narrow"));
        CHECK(rec.contains("score"));
        CHECK(rec.contains("above_threshold"));
        CHECK(rec.at("narrow_cues").size() == 6);
        CHECK(rec.at("score").get<double>() <= 1.0);
        CHECK(rec.at("score").get<double>() >= -1.0);
    }
    // records enumerate the wide grid row-major
    CHECK(dump[0].at("wide").at("row") == 0);
    CHECK(dump[0].at("wide").at("col") == 0);
    CHECK(dump[63].at("wide").at("row") == 7);
    CHECK(dump[63].at("wide").at("col") == 7);
}

TEST_CASE("lens stack validation") {
    LensStack<float> stack;
    auto img = fovsr::testing::synthetic_scene<float>(64, 64, 6);
    stack.shots.push_back({5.0, img});
    CHECK_THROWS_AS(stack.validate(), std::invalid_argument); // one shot is not a stack
    stack.shots.push_back({3.0, img});
    CHECK_NOTHROW(stack.validate());
    stack.shots.push_back({3.0, img}); // not strictly decreasing
    CHECK_THROWS_AS(stack.validate(), std::invalid_argument);
    stack.shots.back().zoom = 1.0;
    stack.shots.push_back({0.5, Image<float>{}});
    CHECK_THROWS_AS(stack.validate(), std::invalid_argument); // empty image
}

TEST_CASE("cascade walks the stack narrowest to widest") {
    Trainer<float> t(toy_config());
    LensStack<float> stack;
    stack.shots.push_back({5.0, fovsr::testing::synthetic_scene<float>(64, 64, 7)});
    stack.shots.push_back({3.0, fovsr::testing::synthetic_scene<float>(64, 64, 8)});
    stack.shots.push_back({1.0, fovsr::testing::synthetic_scene<float>(64, 64, 9)});
    stack.shots.push_back({0.5, fovsr::testing::synthetic_scene<float>(64, 64, 10)});

    std::vector<CascadeStage> stages;
    const auto out = cascade(stack, t.generator(), t.backbone(), 0.7, 4, &stages);

    REQUIRE(stages.size() == 3); // always shots-1 calls
    CHECK(stages[0].from_zoom == 5.0);
    CHECK(stages[0].to_zoom == 3.0);
    CHECK(stages[1].from_zoom == 3.0);
    CHECK(stages[1].to_zoom == 1.0);
    CHECK(stages[2].from_zoom == 1.0);
    CHECK(stages[2].to_zoom == 0.5);
    for (const auto& s : stages) {
        CHECK(s.out_h == 128); // every shot is 64x64, so every stage emits 2x
        CHECK(s.out_w == 128);
    }
    CHECK(out.height() == 128);
    CHECK(out.width() == 128);

    SUBCASE("two shots mean exactly one call") {
        LensStack<float> two;
        two.shots = {stack.shots[0], stack.shots[1]};
        std::vector<CascadeStage> st;
        cascade(two, t.generator(), t.backbone(), 0.7, 4, &st);
        CHECK(st.size() == 1);
    }
}

TEST_CASE("lens stack json loading") {
    const fs::path dir = make_temp_dir("stack");
    const auto a = fovsr::testing::synthetic_scene<float>(64, 64, 11);
    const auto b = fovsr::testing::synthetic_scene<float>(64, 64, 12);
    save_png((dir / "a.png").string(), a);
    save_png((dir / "b.png").string(), b);

    SUBCASE("well-formed stack") {
        const fs::path sp = dir / "stack.json";
        {
            std::ofstream f(sp);
            f << R"([{"zoom": 5.0, "path": ")" << (dir / "a.png").string() << R"("},)"
              << R"({"zoom": 1.0, "path": ")" << (dir / "b.png").string() << R"("}])";
        }
        const auto stack = load_lens_stack<float>(sp.string());
        REQUIRE(stack.shots.size() == 2);
        CHECK(stack.shots[0].zoom == 5.0);
        CHECK(stack.shots[1].image.width() == 64);
    }

    SUBCASE("missing file, bad json, wrong shape") {
        CHECK_THROWS_AS(load_lens_stack<float>((dir / "none.json").string()), LoadError);
        const fs::path bad = dir / "bad.json";
        {
            std::ofstream f(bad);
            f << "{not json";
        }
        CHECK_THROWS_AS(load_lens_stack<float>(bad.string()), LoadError);
        const fs::path obj = dir / "obj.json";
        {
            std::ofstream f(obj);
            f << R"({"zoom": 1})";
        }
        CHECK_THROWS_AS(load_lens_stack<float>(obj.string()), LoadError);
    }

    fs::remove_all(dir);
}
