#include <random>

#include <gtest/gtest.h>

#include "ripelab.hpp"

using namespace ripelab;

namespace {

const std::array<double, 6> kRefs{243.0, 200.0, 160.0, 122.0, 85.0, 52.0};

// Measurements a correction (gain, offset) maps back onto the references.
std::vector<GrayPatchSample> distorted_patches(std::array<double, 3> gain, std::array<double, 3> offset,
                                               double sigma = 0.0, std::mt19937_64* rng = nullptr) {
    std::normal_distribution<double> noise(0.0, sigma);
    std::vector<GrayPatchSample> p;
    for (double ref : kRefs) {
        GrayPatchSample s;
        s.reference_value = ref;
        for (int c = 0; c < 3; ++c) s.measured_rgb[c] = (ref - offset[c]) / gain[c] + (sigma > 0 ? noise(*rng) : 0.0);
        p.push_back(s);
    }
    return p;
}

}  // namespace

TEST(Calibration, IdentityWhenMeasuredEqualsReference) {
    const auto m = fit_calibration(distorted_patches({1, 1, 1}, {0, 0, 0}));
    for (int c = 0; c < 3; ++c) {
        EXPECT_NEAR(m.gain[c], 1.0, 1e-12);
        EXPECT_NEAR(m.offset[c], 0.0, 1e-9);
        EXPECT_NEAR(m.residual_rms[c], 0.0, 1e-9);
    }
}

TEST(Calibration, RecoversExactLinearDistortion) {
    const auto m = fit_calibration(distorted_patches({0.5, 0.5, 0.5}, {10, 10, 10}));
    for (int c = 0; c < 3; ++c) {
        EXPECT_NEAR(m.gain[c], 0.5, 1e-9);
        EXPECT_NEAR(m.offset[c], 10.0, 1e-9);
    }
}

TEST(Calibration, NoisyRecoveryOverSeededTrials) {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const auto m = fit_calibration(distorted_patches({0.8, 0.8, 0.8}, {5, 5, 5}, 1.0, &rng));
        for (int c = 0; c < 3; ++c) {
            EXPECT_LT(std::abs(m.gain[c] - 0.8), 0.05) << "trial " << trial;
            EXPECT_LT(std::abs(m.offset[c] - 5.0), 3.0) << "trial " << trial;
        }
    }
}

TEST(Calibration, ZeroVarianceIsRankDeficient) {
    auto p = distorted_patches({1, 1, 1}, {0, 0, 0});
    for (auto& s : p) s.measured_rgb[1] = 100.0;
    try {
        fit_calibration(p);
        FAIL() << "expected FitError";
    } catch (const FitError& e) {
        EXPECT_NE(std::string(e.what()).find("rank-deficient calibration"), std::string::npos);
    }
}

TEST(Calibration, WrongPatchCountRejected) {
    auto p = distorted_patches({1, 1, 1}, {0, 0, 0});
    p.pop_back();
    EXPECT_THROW(fit_calibration(p), ValidationError);
}

TEST(Calibration, EquivariantUnderAffineMeasurementChange) {
    const auto p = distorted_patches({0.9, 1.1, 0.7}, {4, -3, 12});
    const auto m = fit_calibration(p);
    const double a = 0.75, b = 6.0;
    auto q = p;
    for (auto& s : q)
        for (auto& v : s.measured_rgb) v = a * v + b;
    const auto m2 = fit_calibration(q);
    for (int c = 0; c < 3; ++c) {
        EXPECT_NEAR(m2.gain[c], m.gain[c] / a, 1e-9);
        EXPECT_NEAR(m2.offset[c], m.offset[c] - m.gain[c] * b / a, 1e-9);
    }
}

TEST(Calibration, RefitOnCorrectedPatchesIsIdentity) {
    std::mt19937_64 rng(5);
    const auto p = distorted_patches({0.85, 0.95, 1.05}, {3, -2, 1}, 0.5, &rng);
    const auto m = fit_calibration(p);
    const auto again = fit_calibration(apply_calibration(m, std::span<const GrayPatchSample>(p)));
    for (int c = 0; c < 3; ++c) {
        EXPECT_NEAR(again.gain[c], 1.0, 1e-9);
        EXPECT_NEAR(again.offset[c], 0.0, 1e-7);
    }
}

TEST(ApplyCalibration, IdentityIsBitExact) {
    RgbImage img(7, 5);
    std::mt19937_64 rng(3);
    for (auto& v : img.data()) v = static_cast<std::uint8_t>(rng() & 255);
    EXPECT_EQ(apply_calibration(CalibrationModel::identity(), img), img);
}

TEST(ApplyCalibration, ClampsAtTop) {
    RgbImage img(1, 1, 200);
    CalibrationModel m;
    m.gain = {2, 2, 2};
    EXPECT_EQ(apply_calibration(m, img).at(0, 0, 0), 255);
}

TEST(ApplyCalibration, MonotoneWithinChannel) {
    RgbImage img(256, 1);
    for (int c = 0; c < 256; ++c)
        for (int ch = 0; ch < 3; ++ch) img.at(0, c, ch) = static_cast<std::uint8_t>(c);
    CalibrationModel m;
    m.gain = {0.7, 1.3, 0.95};
    m.offset = {12, -20, 3};
    const auto out = apply_calibration(m, img);
    for (int c = 1; c < 256; ++c)
        for (int ch = 0; ch < 3; ++ch) EXPECT_LE(out.at(0, c - 1, ch), out.at(0, c, ch));
}

TEST(ApplyCalibration, UndoesSynthDistortion) {
    SynthConfig cfg;
    cfg.n_frames = 3;
    cfg.n_berries = 6;
    cfg.noise_sigma = 0.0;
    const auto ds = generate(cfg);
    for (const auto& f : ds.frames) {
        const auto model = fit_calibration(f.card_patches);
        const auto corrected = apply_calibration(model, f.image);
        // Ground truth: the same geometry without photometric distortion.
        const auto clean = warp_image(f.reference, f.reference_to_frame, cfg.width, cfg.height);
        int worst = 0;
        for (int r = 0; r < cfg.height; ++r)
            for (int c = 0; c < cfg.width; ++c) {
                if (!clean.valid.at(r, c)) continue;
                bool clipped = false;
                for (int ch = 0; ch < 3; ++ch) clipped |= f.image.at(r, c, ch) == 0 || f.image.at(r, c, ch) == 255;
                if (clipped) continue;
                for (int ch = 0; ch < 3; ++ch)
                    worst = std::max(worst, std::abs(int(corrected.at(r, c, ch)) - int(clean.image.at(r, c, ch))));
            }
        EXPECT_LE(worst, 1) << f.session_id;
    }
}

TEST(Calibration, JsonRoundTrip) {
    const auto m = fit_calibration(distorted_patches({0.9, 1.1, 0.7}, {4, -3, 12}));
    EXPECT_EQ(calibration_from_json(calibration_to_json(m)), m);
}

TEST(Calibration, ShippedCardDefaultsMatchGenerator) {
    const auto j = detail::parse_json_file(std::filesystem::path(RIPELAB_SOURCE_DIR) / "config/gray_card_reference.json");
    EXPECT_EQ(j.at("reference_values").get<std::vector<double>>(), SynthConfig{}.card_reference);
}
