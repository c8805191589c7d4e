#include <gtest/gtest.h>

#include "ripelab.hpp"
#include "support.hpp"

using namespace ripelab;
using testing_support::TempDir;

namespace {

std::vector<GrayPatchSample> six_patches() {
    std::vector<GrayPatchSample> p;
    for (double ref : {243.0, 200.0, 160.0, 122.0, 85.0, 52.0}) p.push_back({{ref, ref, ref}, ref});
    return p;
}

InstanceMaskSet two_instance_masks() {
    InstanceMaskSet set;
    set.frame_id = "f00";
    set.width = 8;
    set.height = 6;
    set.instances.push_back({1, canonical_runs({{0, 0, 3}, {1, 0, 3}})});
    set.instances.push_back({2, canonical_runs({{4, 5, 2}, {5, 4, 4}})});
    return set;
}

}  // namespace

TEST(Manifest, MinimalWithoutCard) {
    TempDir dir("m");
    write_png(dir / "img.png", RgbImage(4, 4));
    write_text_file(dir / "m.json",
                    R"({"session_id":"s1","bog_id":"A5","variety":"Stevens","capture_date":"2023-08-02","image_paths":["img.png"]})");
    const auto m = load_manifest(dir / "m.json");
    EXPECT_EQ(m.session_id, "s1");
    EXPECT_FALSE(m.card_patches.has_value());
    EXPECT_EQ(m.role, CaptureRole::ground);
    ASSERT_EQ(m.image_paths.size(), 1u);
    EXPECT_TRUE(std::filesystem::exists(m.image_paths[0]));
}

TEST(Manifest, FiveCardPatchesRejected) {
    TempDir dir("m");
    write_png(dir / "img.png", RgbImage(4, 4));
    nlohmann::json j{{"session_id", "s1"}, {"bog_id", "A5"}, {"capture_date", "2023-08-02"}, {"image_paths", {"img.png"}}};
    auto patches = nlohmann::json::array();
    for (double v : {243.0, 200.0, 160.0, 122.0, 85.0}) patches.push_back({{"measured_rgb", {v, v, v}}, {"reference_value", v}});
    j["card_patches"] = patches;
    write_text_file(dir / "m.json", j.dump());
    try {
        load_manifest(dir / "m.json");
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("card_patches must have 6 entries"), std::string::npos);
    }
}

TEST(Manifest, MissingImageIsIoErrorListingPath) {
    TempDir dir("m");
    write_text_file(dir / "m.json",
                    R"({"session_id":"s1","bog_id":"A5","capture_date":"2023-08-02","image_paths":["nope.png"]})");
    try {
        load_manifest(dir / "m.json");
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("nope.png"), std::string::npos);
    }
}

TEST(Manifest, SchemaViolationNamesField) {
    TempDir dir("m");
    write_text_file(dir / "m.json", R"({"session_id":"s1","capture_date":"2023-08-02","image_paths":[]})");
    try {
        load_manifest(dir / "m.json");
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("bog_id"), std::string::npos);
    }
}

TEST(Manifest, PatchesMustDecrease) {
    auto p = six_patches();
    std::swap(p[1], p[2]);
    EXPECT_THROW(validate_card_patches(p), ValidationError);
}

TEST(Manifest, SynthManifestRoundTrips) {
    TempDir dir("m");
    SynthConfig cfg;
    cfg.n_frames = 2;
    cfg.n_berries = 3;
    write_dataset(generate(cfg), dir.path());
    const auto m = load_manifest(dir / "sessions/f01/manifest.json");
    save_manifest(m, dir / "copy/manifest.json");
    // Image refs are stored relative to the manifest, so copy the image alongside.
    std::filesystem::copy_file(dir / "sessions/f01/frame.png", dir / "copy/frame.png");
    auto back = load_manifest(dir / "copy/manifest.json");
    back.image_paths = m.image_paths;
    EXPECT_EQ(back, m);
    ASSERT_TRUE(m.card_patches.has_value());
    EXPECT_EQ(m.card_patches->size(), 6u);
}

TEST(Series, DatesMustIncrease) {
    TempDir dir("s");
    write_png(dir / "img.png", RgbImage(4, 4));
    for (auto [id, date] : {std::pair{"a", "2023-08-02"}, std::pair{"b", "2023-08-02"}})
        write_text_file(dir / (std::string(id) + ".json"),
                        nlohmann::json{{"session_id", id}, {"bog_id", "A5"}, {"capture_date", date}, {"image_paths", {"img.png"}}}.dump());
    write_text_file(dir / "series.json", R"({"name":"x","manifests":["a.json","b.json"]})");
    EXPECT_THROW(load_series(dir / "series.json"), ValidationError);
}

TEST(Features, HeaderGivesDimension) {
    const auto t = parse_features("berry_id,timepoint,dim_0,dim_1,dim_2,dim_3\n0,0,1,2,3,4\n0,1,5,6,7,8\n");
    EXPECT_EQ(t.dimension, 4u);
    ASSERT_EQ(t.records.size(), 2u);
    EXPECT_EQ(t.records[1].vector, (std::vector<double>{5, 6, 7, 8}));
}

TEST(Features, RaggedRowReportsLine) {
    try {
        parse_features("berry_id,timepoint,dim_0,dim_1\n0,0,1,2\n0,1,5\n");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
}

TEST(Features, DuplicateKeyNamed) {
    try {
        parse_features("berry_id,timepoint,dim_0,dim_1\n3,7,1,2\n3,7,5,6\n");
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("berry_id=3, timepoint=7"), std::string::npos);
    }
}

TEST(Features, FullSeriesHas378Records) {
    SynthConfig cfg;
    const auto ds = generate(cfg);
    const auto t = synth_features(states_by_frame(ds), 32, FeatureMode::linear, 1);
    EXPECT_EQ(t.records.size(), 378u);
    EXPECT_EQ(parse_features(features_to_csv(t)), t);
}

TEST(Masks, AllZeroLabelImageIsEmpty) {
    const auto set = masks_from_label_image(LabelImage(10, 10), "f");
    EXPECT_TRUE(set.instances.empty());
}

TEST(Masks, LabelImageTwoIdsDisjoint) {
    LabelImage img(6, 4);
    img.at(0, 0) = 1;
    img.at(0, 1) = 1;
    img.at(3, 5) = 2;
    const auto set = masks_from_label_image(img, "f");
    ASSERT_EQ(set.instances.size(), 2u);
    EXPECT_EQ(intersection_area(set.instances[0].runs, set.instances[1].runs), 0);
    EXPECT_EQ(area(set.instances[0].runs), 2);
}

TEST(Masks, PngAndRleEncodingsAgree) {
    TempDir dir("masks");
    const auto set = two_instance_masks();
    save_masks_png(set, dir / "f00.png");
    save_masks_json(set, dir / "f00.json");
    auto from_png = load_masks(dir / "f00.png");
    auto from_json = load_masks(dir / "f00.json");
    from_png.width = from_json.width;
    from_png.height = from_json.height;
    EXPECT_EQ(from_png.instances, from_json.instances);
    EXPECT_EQ(from_json, set);
}

TEST(Masks, OverlappingRunsRejected) {
    EXPECT_THROW(canonical_runs({{0, 0, 4}, {0, 2, 4}}), ValidationError);
    auto j = masks_to_json(two_instance_masks());
    j["instances"][1]["rle"] = {{0, 1, 2}};
    EXPECT_THROW(masks_from_json(j), ValidationError);
}

TEST(Masks, AdjacentRunsMerge) {
    const auto runs = canonical_runs({{2, 5, 2}, {2, 0, 5}});
    ASSERT_EQ(runs.size(), 1u);
    EXPECT_EQ(runs[0].length, 7);
}

TEST(Masks, IouAndErode) {
    const std::vector<ripelab::Run> a{{0, 0, 4}, {1, 0, 4}};
    const std::vector<ripelab::Run> b{{0, 2, 4}, {1, 2, 4}};
    EXPECT_DOUBLE_EQ(iou(a, b), 4.0 / 12.0);
    std::vector<ripelab::Run> square;
    for (int r = 0; r < 5; ++r) square.push_back({r, 0, 5});
    const auto e = erode(square);
    EXPECT_EQ(area(e), 9);
}

TEST(Track, JsonRoundTrip) {
    BerryTrack t;
    t.berry_id = 4;
    t.entries.push_back({"f00", 0, 3, 1.0, Rgb{10, 20, 30}, std::vector<double>{0.5, 1.5}, 2, 0.25});
    t.entries.push_back({"f01", 1, 5, 0.8, std::nullopt, std::nullopt, std::nullopt, std::nullopt});
    EXPECT_EQ(track_from_json(track_to_json(t)), t);
    t.entries[0].ripeness = 1.5;
    EXPECT_THROW(validate_track(t), ValidationError);
}

TEST(ImageIo, PngRoundTripWithText) {
    TempDir dir("img");
    RgbImage img(5, 3);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 5; ++c)
            for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = static_cast<std::uint8_t>(r * 50 + c * 10 + ch);
    write_png(dir / "a.png", img, {{"config_hash", "abc"}});
    EXPECT_EQ(read_rgb(dir / "a.png"), img);
    EXPECT_NE(read_text_file(dir / "a.png").find("config_hash"), std::string::npos);
    LabelImage lab(4, 4);
    lab.at(1, 1) = 300;
    write_png(dir / "l.png", lab);
    EXPECT_EQ(read_label_png(dir / "l.png"), lab);
}

TEST(ImageIo, MissingFileIsIoError) { EXPECT_THROW(read_rgb("/nonexistent/x.png"), IoError); }
