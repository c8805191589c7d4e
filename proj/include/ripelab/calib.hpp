#pragma once

// Per-channel linear radiometric correction fitted to the six neutral patches
// of a colour checker.

#include <array>
#include <cmath>
#include <span>
#include <string>

#include <json.hpp>

#include "ripelab/error.hpp"
#include "ripelab/model.hpp"
#include "ripelab/raster.hpp"

namespace ripelab {

struct CalibrationModel {
    std::array<double, 3> gain{1.0, 1.0, 1.0};
    std::array<double, 3> offset{0.0, 0.0, 0.0};
    std::array<double, 3> residual_rms{0.0, 0.0, 0.0};

    static CalibrationModel identity() { return {}; }

    double correct(int channel, double value) const noexcept {
        const double v = gain[channel] * value + offset[channel];
        return v < 0.0 ? 0.0 : (v > 255.0 ? 255.0 : v);
    }

    bool operator==(const CalibrationModel&) const = default;
};

// Ordinary least squares per channel: reference ~ gain * measured + offset.
inline CalibrationModel fit_calibration(std::span<const GrayPatchSample> patches) {
    if (patches.size() != kGrayPatchCount)
        throw ValidationError("calibration needs 6 gray patches (got " + std::to_string(patches.size()) + ")");
    const double n = static_cast<double>(patches.size());
    CalibrationModel model;
    for (int c = 0; c < 3; ++c) {
        double mx = 0.0, my = 0.0;
        for (const auto& p : patches) {
            mx += p.measured_rgb[c];
            my += p.reference_value;
        }
        mx /= n;
        my /= n;
        double sxx = 0.0, sxy = 0.0;
        for (const auto& p : patches) {
            const double dx = p.measured_rgb[c] - mx;
            sxx += dx * dx;
            sxy += dx * (p.reference_value - my);
        }
        if (!(sxx > 1e-12 * (1.0 + mx * mx))) throw FitError("rank-deficient calibration");
        const double gain = sxy / sxx;
        if (!(gain > 0.0)) throw FitError("calibration gain must be positive (channel " + std::to_string(c) + ")");
        const double offset = my - gain * mx;
        double sse = 0.0;
        for (const auto& p : patches) {
            const double r = gain * p.measured_rgb[c] + offset - p.reference_value;
            sse += r * r;
        }
        model.gain[c] = gain;
        model.offset[c] = offset;
        model.residual_rms[c] = std::sqrt(sse / n);
    }
    return model;
}

inline void validate_calibration(const CalibrationModel& m) {
    for (int c = 0; c < 3; ++c) {
        if (!(m.gain[c] > 0.0) || !std::isfinite(m.gain[c])) throw ValidationError("calibration gain must be positive");
        if (!std::isfinite(m.offset[c])) throw ValidationError("calibration offset must be finite");
        if (!(m.residual_rms[c] >= 0.0)) throw ValidationError("calibration residual must be non-negative");
    }
}

inline RgbImage apply_calibration(const CalibrationModel& model, const RgbImage& image) {
    // One lookup table per channel; the map only depends on the input byte.
    std::array<std::array<std::uint8_t, 256>, 3> lut{};
    for (int c = 0; c < 3; ++c)
        for (int v = 0; v < 256; ++v) lut[c][v] = clamp_to_byte(model.correct(c, v));
    RgbImage out(image.width(), image.height());
    auto src = image.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = lut[i % 3][src[i]];
    return out;
}

// Corrected patch measurements, e.g. to check that a refit yields identity.
inline std::vector<GrayPatchSample> apply_calibration(const CalibrationModel& model,
                                                      std::span<const GrayPatchSample> patches) {
    std::vector<GrayPatchSample> out(patches.begin(), patches.end());
    for (auto& p : out)
        for (int c = 0; c < 3; ++c) p.measured_rgb[c] = model.correct(c, p.measured_rgb[c]);
    return out;
}

inline nlohmann::json calibration_to_json(const CalibrationModel& m) {
    return {{"gain", m.gain}, {"offset", m.offset}, {"residual_rms", m.residual_rms}};
}

inline CalibrationModel calibration_from_json(const nlohmann::json& j) {
    CalibrationModel m;
    try {
        m.gain = j.at("gain").get<std::array<double, 3>>();
        m.offset = j.at("offset").get<std::array<double, 3>>();
        m.residual_rms = j.value("residual_rms", std::array<double, 3>{0, 0, 0});
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("calibration JSON: ") + e.what());
    }
    validate_calibration(m);
    return m;
}

}  // namespace ripelab
