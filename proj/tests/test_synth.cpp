#include <gtest/gtest.h>

#include "ripelab.hpp"
#include "support.hpp"

using namespace ripelab;

TEST(Synth, BitwiseDeterministic) {
    SynthConfig cfg;
    cfg.n_frames = 5;
    const auto a = generate(cfg);
    const auto b = generate(cfg);
    for (std::size_t f = 0; f < a.frames.size(); ++f) {
        EXPECT_EQ(a.frames[f].image, b.frames[f].image);
        EXPECT_EQ(a.frames[f].masks, b.frames[f].masks);
    }
    cfg.seed += 1;
    EXPECT_NE(generate(cfg).frames[1].image, a.frames[1].image);
}

TEST(Synth, SingleCleanFrameShowsInterpolatedColour) {
    SynthConfig cfg;
    cfg.n_frames = 1;
    cfg.noise_sigma = 0.0;
    cfg.mask_jitter = 0;
    cfg.distortion = {PhotometricDistortion{}};
    cfg.geometry = {{1, 0, 0, 0, 1, 0, 0, 0, 1}};
    const auto ds = generate(cfg);
    const auto& f = ds.frames[0];
    for (const auto& inst : f.masks.instances) {
        const int berry = f.berry_of_instance[inst.id];
        const double s = f.states[berry];
        const auto chip = extract_berry_chip(f.image, inst.runs);
        for (int c = 0; c < 3; ++c) {
            const double expected = (1.0 - s) * cfg.green[c] + s * cfg.red[c];
            EXPECT_NEAR(chip.mean_rgb[c], expected, 0.5) << berry;
        }
    }
}

TEST(Synth, ClassesNeverDecrease) {
    const auto ds = generate(SynthConfig{});
    for (int b = 0; b < ds.config.n_berries; ++b)
        for (std::size_t f = 1; f < ds.frames.size(); ++f) {
            EXPECT_LE(ds.frames[f - 1].classes[b], ds.frames[f].classes[b]);
            EXPECT_EQ(ds.frames[f].classes[b], state_class(ds.frames[f].states[b]));
        }
}

TEST(Synth, DatesSpanTheSeason) {
    const auto ds = generate(SynthConfig{});
    EXPECT_EQ(ds.frames.front().capture_date, "2023-08-02");
    EXPECT_EQ(ds.frames.back().capture_date, "2023-09-13");
    for (std::size_t f = 1; f < ds.frames.size(); ++f) EXPECT_LT(ds.frames[f - 1].capture_date, ds.frames[f].capture_date);
}

TEST(Synth, MasksDoNotOverlap) {
    const auto ds = generate(SynthConfig{});
    for (const auto& f : ds.frames) {
        EXPECT_EQ(f.masks.instances.size(), 14u);
        EXPECT_NO_THROW(validate_masks(f.masks));
    }
}

TEST(Synth, OverlappingBerriesRejected) {
    SynthConfig cfg;
    cfg.n_berries = 2;
    cfg.berry_centers = {{100, 100}, {105, 100}};
    EXPECT_THROW(generate(cfg), ValidationError);
    cfg.n_berries = 500;
    cfg.berry_centers.clear();
    EXPECT_THROW(generate(cfg), ValidationError);
}

TEST(SynthFeatures, NoiselessLinearIsRankOne) {
    const auto ds = generate(SynthConfig{});
    const auto table = synth_features(states_by_frame(ds), 16, FeatureMode::linear, 1, 0.0);
    const Eigen::MatrixXd x = feature_matrix(table);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(x);
    const auto& sv = svd.singularValues();
    EXPECT_GT(sv(0), 1.0);
    EXPECT_LT(sv(1), 1e-9 * sv(0));
}

TEST(SynthFeatures, ScrambledLosesMonotonicity) {
    const auto ds = generate(SynthConfig{});
    const auto table = synth_features(states_by_frame(ds), 8, FeatureMode::scrambled, 2, 0.0);
    const Eigen::MatrixXd x = feature_matrix(table);
    // With no noise every vector is s * u, so the first nonzero coordinate orders berries by state.
    double sum = 0.0;
    for (int b = 0; b < 14; ++b) {
        std::vector<double> v, t;
        for (std::size_t i = 0; i < table.records.size(); ++i)
            if (table.records[i].berry_id == b) {
                v.push_back(x(static_cast<Eigen::Index>(i), 0));
                t.push_back(table.records[i].timepoint);
            }
        sum += spearman(v, t);
    }
    EXPECT_LT(std::abs(sum / 14.0), 0.3);
}

TEST(SynthConfigJson, RoundTrip) {
    SynthConfig cfg;
    cfg.n_berries = 3;
    cfg.ripening = {{5, 0.4}, {6, 0.5}, {7, 0.6}};
    cfg.seed = 99;
    const auto j = synth_config_to_json(cfg);
    EXPECT_EQ(synth_config_to_json(synth_config_from_json(j)), j);
    EXPECT_THROW(synth_config_from_json(nlohmann::json{{"n_berries", "many"}}), std::exception);
}

TEST(SynthDataset, WrittenFilesParse) {
    testing_support::TempDir dir("synth");
    SynthConfig cfg;
    cfg.n_frames = 3;
    const auto ds = generate(cfg);
    write_dataset(ds, dir.path());
    const auto series = load_series(dir.path() / "series.json");
    ASSERT_EQ(series.sessions.size(), 3u);
    for (const auto& s : series.sessions) {
        const auto masks = load_masks(dir.path() / "masks" / (s.session_id + ".json"));
        EXPECT_EQ(masks.instances.size(), 14u);
    }
    const auto features = load_features(dir.path() / "features_linear.csv");
    EXPECT_EQ(features.records.size(), 14u * 3u);
    EXPECT_EQ(features.dimension, 64u);
}
