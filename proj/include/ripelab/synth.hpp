#pragma once

// Deterministic synthetic bog series with ground truth for every stage:
// berry colours and classes, identities, homographies, photometric
// distortion and ripening states.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ripelab/error.hpp"
#include "ripelab/format.hpp"
#include "ripelab/image_io.hpp"
#include "ripelab/masks.hpp"
#include "ripelab/model.hpp"
#include "ripelab/raster.hpp"
#include "ripelab/register.hpp"

namespace ripelab {

struct RipeningCurve {
    double midpoint = 13.0;  // frame index of half ripeness
    double rate = 0.5;       // per frame

    double state(double frame) const { return 1.0 / (1.0 + std::exp(-rate * (frame - midpoint))); }
};

struct PhotometricDistortion {
    std::array<double, 3> gain{1.0, 1.0, 1.0};
    std::array<double, 3> offset{0.0, 0.0, 0.0};
};

struct SynthConfig {
    int n_berries = 14;
    int n_frames = 27;
    int width = 320;
    int height = 240;
    double berry_radius = 11.0;
    Rgb green{60.0, 150.0, 45.0};
    Rgb red{165.0, 25.0, 45.0};
    double noise_sigma = 2.0;
    int mask_jitter = 2;  // px, per frame and berry, applied to the reference-frame masks

    // Ranges used when the explicit per-item lists below are empty.
    double midpoint_min = 6.0, midpoint_max = 18.0;
    double rate_min = 0.35, rate_max = 0.7;
    double gain_min = 0.9, gain_max = 1.02;
    double offset_max = 5.0;
    double max_translation = 6.0;
    double max_rotation_deg = 1.5;
    double max_scale = 0.02;
    double max_perspective = 2e-5;

    std::vector<RipeningCurve> ripening;                 // per berry
    std::vector<PhotometricDistortion> distortion;       // per frame
    std::vector<std::array<double, 9>> geometry;         // per frame, reference -> frame, row-major
    std::vector<std::array<double, 2>> berry_centers;    // (x, y) in reference pixels

    std::vector<double> card_reference{243.0, 200.0, 160.0, 122.0, 85.0, 52.0};
    std::string start_date = "2023-08-02";
    int season_days = 42;
    std::string bog_id = "A5";
    std::string variety = "Mullica Queen";
    std::uint64_t seed = 7;
};

struct SynthFrame {
    std::string session_id;
    std::string capture_date;
    RgbImage image;      // observed: warped, distorted, noisy
    RgbImage card;       // observed gray-card image
    RgbImage reference;  // clean scene in reference coordinates
    Eigen::Matrix3d reference_to_frame = Eigen::Matrix3d::Identity();
    PhotometricDistortion distortion;
    std::vector<GrayPatchSample> card_patches;
    InstanceMaskSet masks;               // reference coordinates
    std::vector<int> berry_of_instance;  // index = instance id, -1 unused
    std::vector<double> states;          // per berry
    std::vector<int> classes;            // per berry, 1..5
    std::vector<Rgb> colors;             // per berry, rendered colour

    Eigen::Matrix3d frame_to_reference() const {
        const Eigen::Matrix3d inv = reference_to_frame.inverse();
        return inv / inv(2, 2);
    }
};

struct SynthDataset {
    SynthConfig config;
    std::vector<std::array<double, 2>> centers;
    std::vector<RipeningCurve> ripening;
    std::vector<SynthFrame> frames;
};

inline constexpr int kCardPatchSize = 40;
inline constexpr int kCardPatchMargin = 5;  // measurement ignores this border

inline int state_class(double s) { return std::clamp(static_cast<int>(std::floor(s * 5.0)) + 1, 1, 5); }

inline Rgb ripening_color(const SynthConfig& cfg, double s) {
    Rgb c{};
    for (int ch = 0; ch < 3; ++ch) c[ch] = std::round(cfg.green[ch] + s * (cfg.red[ch] - cfg.green[ch]));
    return c;
}

inline std::string add_days(const std::string& iso, int days) {
    using namespace std::chrono;
    int y = 0;
    unsigned m = 0, d = 0;
    parse_number(std::string_view(iso).substr(0, 4), y);
    parse_number(std::string_view(iso).substr(5, 2), m);
    parse_number(std::string_view(iso).substr(8, 2), d);
    const year_month_day out{sys_days{year_month_day{year{y}, month{m}, day{d}}} + std::chrono::days{days}};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(out.year()), static_cast<unsigned>(out.month()),
                  static_cast<unsigned>(out.day()));
    return buf;
}

namespace detail {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline void validate_synth_config(const SynthConfig& c) {
    if (c.n_berries < 1) throw ValidationError("n_berries must be >= 1");
    if (c.n_frames < 1) throw ValidationError("n_frames must be >= 1");
    if (c.width < 64 || c.height < 64) throw ValidationError("synthetic images must be at least 64x64");
    if (!(c.berry_radius >= 1.0)) throw ValidationError("berry_radius must be >= 1");
    if (c.card_reference.size() != kGrayPatchCount) throw ValidationError("card_reference needs 6 values");
    if (!is_iso_date(c.start_date)) throw ValidationError("start_date must be an ISO-8601 date");
    if (c.n_frames > 1 && c.season_days < c.n_frames - 1)
        throw ValidationError("season_days too short for distinct daily captures");
    if (!c.ripening.empty() && static_cast<int>(c.ripening.size()) != c.n_berries)
        throw ValidationError("ripening must list one curve per berry");
    if (!c.distortion.empty() && static_cast<int>(c.distortion.size()) != c.n_frames)
        throw ValidationError("distortion must list one entry per frame");
    if (!c.geometry.empty() && static_cast<int>(c.geometry.size()) != c.n_frames)
        throw ValidationError("geometry must list one homography per frame");
    if (!c.berry_centers.empty() && static_cast<int>(c.berry_centers.size()) != c.n_berries)
        throw ValidationError("berry_centers must list one center per berry");
}

// Smooth random texture plus leaf-like ellipses; provides corners to match.
inline RgbImage render_background(int width, int height, std::mt19937_64& rng) {
    FloatImage noise(width, height);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (auto& v : noise.data()) v = gauss(rng);
    noise = blur(noise, 1.2);
    double sd = 0.0;
    for (double v : noise.data()) sd += v * v;
    sd = std::sqrt(sd / static_cast<double>(noise.data().size()));

    RgbImage img(width, height);
    const Rgb base{72.0, 92.0, 48.0};
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) {
            const double t = 22.0 * noise.at(r, c) / sd;
            img.at(r, c, 0) = clamp_to_byte(base[0] + 0.8 * t);
            img.at(r, c, 1) = clamp_to_byte(base[1] + t);
            img.at(r, c, 2) = clamp_to_byte(base[2] + 0.6 * t);
        }
    const int leaves = width * height / 300;
    for (int i = 0; i < leaves; ++i) {
        const double cx = uniform(rng, 0, width), cy = uniform(rng, 0, height);
        const double ax = uniform(rng, 3, 9), ay = uniform(rng, 1.5, 4);
        const double th = uniform(rng, 0, M_PI);
        const Rgb col{uniform(rng, 30, 120), uniform(rng, 60, 150), uniform(rng, 20, 70)};
        const int rad = static_cast<int>(std::ceil(std::max(ax, ay)));
        const double ct = std::cos(th), st = std::sin(th);
        for (int r = static_cast<int>(cy) - rad; r <= static_cast<int>(cy) + rad; ++r)
            for (int c = static_cast<int>(cx) - rad; c <= static_cast<int>(cx) + rad; ++c) {
                if (!img.contains(r, c)) continue;
                const double dx = c - cx, dy = r - cy;
                const double u = (dx * ct + dy * st) / ax, v = (-dx * st + dy * ct) / ay;
                if (u * u + v * v > 1.0) continue;
                for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = clamp_to_byte(col[ch]);
            }
    }
    return img;
}

inline std::vector<Run> disk_runs(double cx, double cy, double radius, int width, int height) {
    std::vector<Run> runs;
    const int r0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
    const int r1 = std::min(height - 1, static_cast<int>(std::ceil(cy + radius)));
    for (int r = r0; r <= r1; ++r) {
        int start = -1;
        for (int c = std::max(0, static_cast<int>(std::floor(cx - radius)));
             c <= std::min(width - 1, static_cast<int>(std::ceil(cx + radius))) + 1; ++c) {
            const bool in = c < width && (c - cx) * (c - cx) + (r - cy) * (r - cy) <= radius * radius;
            if (in && start < 0) start = c;
            if (!in && start >= 0) {
                runs.push_back({r, start, c - start});
                start = -1;
            }
        }
    }
    return runs;
}

inline RgbImage distort(const RgbImage& img, const PhotometricDistortion& d, double sigma, std::mt19937_64& rng) {
    RgbImage out(img.width(), img.height());
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto src = img.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) {
        const int ch = static_cast<int>(i % 3);
        double v = d.gain[ch] * src[i] + d.offset[ch];
        if (sigma > 0.0) v += sigma * gauss(rng);
        dst[i] = clamp_to_byte(v);
    }
    return out;
}

}  // namespace detail

inline SynthDataset generate(const SynthConfig& config) {
    detail::validate_synth_config(config);
    SynthDataset ds;
    ds.config = config;
    std::mt19937_64 rng(config.seed);
    const int w = config.width, h = config.height, nb = config.n_berries;
    const double radius = config.berry_radius;

    // Berry layout: non-overlapping even after mask jitter.
    const double min_sep = 2.0 * radius + 2.0 * config.mask_jitter + 4.0;
    const double edge = radius + config.mask_jitter + 2.0;
    if (!config.berry_centers.empty()) {
        ds.centers = config.berry_centers;
    } else {
        for (int attempt = 0; attempt < 20000 && static_cast<int>(ds.centers.size()) < nb; ++attempt) {
            const std::array<double, 2> c{std::round(detail::uniform(rng, edge, w - edge)),
                                          std::round(detail::uniform(rng, edge, h - edge))};
            const bool clear = std::all_of(ds.centers.begin(), ds.centers.end(), [&](const auto& o) {
                return std::hypot(o[0] - c[0], o[1] - c[1]) >= min_sep;
            });
            if (clear) ds.centers.push_back(c);
        }
        if (static_cast<int>(ds.centers.size()) < nb)
            throw ValidationError("cannot place " + std::to_string(nb) + " non-overlapping berries in the image");
    }
    for (int i = 0; i < nb; ++i)
        for (int j = i + 1; j < nb; ++j)
            if (std::hypot(ds.centers[i][0] - ds.centers[j][0], ds.centers[i][1] - ds.centers[j][1]) < min_sep)
                throw ValidationError("berries " + std::to_string(i) + " and " + std::to_string(j) + " overlap");

    if (!config.ripening.empty()) {
        ds.ripening = config.ripening;
    } else {
        for (int i = 0; i < nb; ++i)
            ds.ripening.push_back({detail::uniform(rng, config.midpoint_min, config.midpoint_max),
                                   detail::uniform(rng, config.rate_min, config.rate_max)});
    }

    const int margin = static_cast<int>(std::ceil(config.max_translation + 0.05 * std::max(w, h))) + 4;
    const RgbImage background = detail::render_background(w + 2 * margin, h + 2 * margin, rng);
    Eigen::Matrix3d canvas_to_ref;
    canvas_to_ref << 1, 0, -margin, 0, 1, -margin, 0, 0, 1;

    for (int f = 0; f < config.n_frames; ++f) {
        SynthFrame frame;
        char id[16];
        std::snprintf(id, sizeof id, "f%02d", f);
        frame.session_id = id;
        const int day = config.n_frames > 1
                            ? static_cast<int>(std::lround(static_cast<double>(f) * config.season_days / (config.n_frames - 1)))
                            : 0;
        frame.capture_date = add_days(config.start_date, day);

        // Geometry: the first frame defines the reference.
        if (!config.geometry.empty()) {
            const auto& g = config.geometry[f];
            frame.reference_to_frame << g[0], g[1], g[2], g[3], g[4], g[5], g[6], g[7], g[8];
        } else if (f > 0) {
            const double tx = detail::uniform(rng, -config.max_translation, config.max_translation);
            const double ty = detail::uniform(rng, -config.max_translation, config.max_translation);
            const double th = detail::uniform(rng, -config.max_rotation_deg, config.max_rotation_deg) * M_PI / 180.0;
            const double s = 1.0 + detail::uniform(rng, -config.max_scale, config.max_scale);
            const double px = detail::uniform(rng, -config.max_perspective, config.max_perspective);
            const double py = detail::uniform(rng, -config.max_perspective, config.max_perspective);
            Eigen::Matrix3d about_center, back, sim, persp;
            about_center << 1, 0, -w / 2.0, 0, 1, -h / 2.0, 0, 0, 1;
            back << 1, 0, w / 2.0 + tx, 0, 1, h / 2.0 + ty, 0, 0, 1;
            sim << s * std::cos(th), -s * std::sin(th), 0, s * std::sin(th), s * std::cos(th), 0, 0, 0, 1;
            persp << 1, 0, 0, 0, 1, 0, px, py, 1;
            frame.reference_to_frame = back * sim * persp * about_center;
            frame.reference_to_frame /= frame.reference_to_frame(2, 2);
        }

        if (!config.distortion.empty()) {
            frame.distortion = config.distortion[f];
        } else {
            for (int ch = 0; ch < 3; ++ch) {
                frame.distortion.gain[ch] = detail::uniform(rng, config.gain_min, config.gain_max);
                frame.distortion.offset[ch] = detail::uniform(rng, -config.offset_max, config.offset_max);
            }
        }

        // Scene in canvas coordinates, then reference crop and observed frame.
        RgbImage canvas = background;
        for (int b = 0; b < nb; ++b) {
            const double s = ds.ripening[b].state(f);
            const Rgb col = ripening_color(config, s);
            frame.states.push_back(s);
            frame.classes.push_back(state_class(s));
            frame.colors.push_back(col);
            const auto runs = detail::disk_runs(ds.centers[b][0] + margin, ds.centers[b][1] + margin, radius,
                                                canvas.width(), canvas.height());
            for_each_pixel(runs, [&](int r, int c) {
                for (int ch = 0; ch < 3; ++ch) canvas.at(r, c, ch) = static_cast<std::uint8_t>(col[ch]);
            });
        }
        frame.reference = warp_image(canvas, canvas_to_ref, w, h).image;
        const RgbImage geometric = warp_image(canvas, frame.reference_to_frame * canvas_to_ref, w, h).image;
        frame.image = detail::distort(geometric, frame.distortion, config.noise_sigma, rng);

        RgbImage card(kCardPatchSize * static_cast<int>(kGrayPatchCount), kCardPatchSize);
        for (int p = 0; p < static_cast<int>(kGrayPatchCount); ++p)
            for (int r = 0; r < kCardPatchSize; ++r)
                for (int c = 0; c < kCardPatchSize; ++c)
                    for (int ch = 0; ch < 3; ++ch)
                        card.at(r, p * kCardPatchSize + c, ch) = clamp_to_byte(config.card_reference[p]);
        frame.card = detail::distort(card, frame.distortion, config.noise_sigma, rng);
        for (int p = 0; p < static_cast<int>(kGrayPatchCount); ++p) {
            GrayPatchSample sample;
            sample.reference_value = config.card_reference[p];
            int count = 0;
            for (int r = kCardPatchMargin; r < kCardPatchSize - kCardPatchMargin; ++r)
                for (int c = kCardPatchMargin; c < kCardPatchSize - kCardPatchMargin; ++c) {
                    for (int ch = 0; ch < 3; ++ch) sample.measured_rgb[ch] += frame.card.at(r, p * kCardPatchSize + c, ch);
                    ++count;
                }
            for (auto& v : sample.measured_rgb) v /= count;
            frame.card_patches.push_back(sample);
        }

        // Masks in reference coordinates with shuffled instance ids.
        std::vector<int> ids(nb);
        std::iota(ids.begin(), ids.end(), 1);
        std::shuffle(ids.begin(), ids.end(), rng);
        frame.masks.frame_id = frame.session_id;
        frame.masks.capture_date = frame.capture_date;
        frame.masks.width = w;
        frame.masks.height = h;
        frame.berry_of_instance.assign(nb + 1, -1);
        for (int b = 0; b < nb; ++b) {
            const int j = config.mask_jitter;
            const int dx = j > 0 ? static_cast<int>(rng() % (2 * j + 1)) - j : 0;
            const int dy = j > 0 ? static_cast<int>(rng() % (2 * j + 1)) - j : 0;
            frame.masks.instances.push_back(
                {ids[b], canonical_runs(detail::disk_runs(ds.centers[b][0] + dx, ds.centers[b][1] + dy, radius, w, h))});
            frame.berry_of_instance[ids[b]] = b;
        }
        std::sort(frame.masks.instances.begin(), frame.masks.instances.end(),
                  [](const Instance& a, const Instance& b) { return a.id < b.id; });
        validate_masks(frame.masks);
        ds.frames.push_back(std::move(frame));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Synthetic feature files

enum class FeatureMode { linear, scrambled };

// linear: feature = s * u + noise for one fixed random unit vector u.
// scrambled: the same, with each berry's timepoints permuted.
inline FeatureTable synth_features(const std::vector<std::vector<double>>& states_by_frame, std::size_t dimension,
                                   FeatureMode mode, std::uint64_t seed, double noise_sigma = 0.02) {
    if (dimension < 2) throw ValidationError("feature dimension must be >= 2");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd u(static_cast<Eigen::Index>(dimension));
    for (auto& v : u) v = gauss(rng);
    u.normalize();

    const std::size_t frames = states_by_frame.size();
    const std::size_t berries = frames ? states_by_frame.front().size() : 0;
    FeatureTable table;
    table.dimension = dimension;
    for (std::size_t b = 0; b < berries; ++b) {
        std::vector<std::size_t> source(frames);
        std::iota(source.begin(), source.end(), std::size_t{0});
        if (mode == FeatureMode::scrambled) std::shuffle(source.begin(), source.end(), rng);
        for (std::size_t t = 0; t < frames; ++t) {
            const double s = states_by_frame[source[t]][b];
            FeatureRecord rec;
            rec.berry_id = static_cast<int>(b);
            rec.timepoint = static_cast<int>(t);
            rec.vector.resize(dimension);
            for (std::size_t d = 0; d < dimension; ++d)
                rec.vector[d] = s * u(static_cast<Eigen::Index>(d)) + (noise_sigma > 0.0 ? noise_sigma * gauss(rng) : 0.0);
            table.records.push_back(std::move(rec));
        }
    }
    sort_and_check_features(table);
    return table;
}

inline std::vector<std::vector<double>> states_by_frame(const SynthDataset& ds) {
    std::vector<std::vector<double>> out;
    for (const auto& f : ds.frames) out.push_back(f.states);
    return out;
}

// ---------------------------------------------------------------------------
// Config and dataset files

inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
    SynthConfig c;
    try {
        c.n_berries = j.value("n_berries", c.n_berries);
        c.n_frames = j.value("n_frames", c.n_frames);
        c.width = j.value("width", c.width);
        c.height = j.value("height", c.height);
        c.berry_radius = j.value("berry_radius", c.berry_radius);
        c.green = j.value("green", c.green);
        c.red = j.value("red", c.red);
        c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
        c.mask_jitter = j.value("mask_jitter", c.mask_jitter);
        c.midpoint_min = j.value("midpoint_min", c.midpoint_min);
        c.midpoint_max = j.value("midpoint_max", c.midpoint_max);
        c.rate_min = j.value("rate_min", c.rate_min);
        c.rate_max = j.value("rate_max", c.rate_max);
        c.gain_min = j.value("gain_min", c.gain_min);
        c.gain_max = j.value("gain_max", c.gain_max);
        c.offset_max = j.value("offset_max", c.offset_max);
        c.max_translation = j.value("max_translation", c.max_translation);
        c.max_rotation_deg = j.value("max_rotation_deg", c.max_rotation_deg);
        c.max_scale = j.value("max_scale", c.max_scale);
        c.max_perspective = j.value("max_perspective", c.max_perspective);
        c.card_reference = j.value("card_reference", c.card_reference);
        c.start_date = j.value("start_date", c.start_date);
        c.season_days = j.value("season_days", c.season_days);
        c.bog_id = j.value("bog_id", c.bog_id);
        c.variety = j.value("variety", c.variety);
        c.seed = j.value("seed", c.seed);
        if (j.contains("ripening"))
            for (const auto& r : j["ripening"]) c.ripening.push_back({r.at("midpoint").get<double>(), r.at("rate").get<double>()});
        if (j.contains("distortion"))
            for (const auto& d : j["distortion"])
                c.distortion.push_back({d.at("gain").get<std::array<double, 3>>(), d.at("offset").get<std::array<double, 3>>()});
        if (j.contains("geometry")) c.geometry = j["geometry"].get<std::vector<std::array<double, 9>>>();
        if (j.contains("berry_centers")) c.berry_centers = j["berry_centers"].get<std::vector<std::array<double, 2>>>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("synth config: ") + e.what());
    }
    detail::validate_synth_config(c);
    return c;
}

inline nlohmann::json synth_config_to_json(const SynthConfig& c) {
    nlohmann::json j{{"n_berries", c.n_berries},       {"n_frames", c.n_frames},
                     {"width", c.width},               {"height", c.height},
                     {"berry_radius", c.berry_radius}, {"green", c.green},
                     {"red", c.red},                   {"noise_sigma", c.noise_sigma},
                     {"mask_jitter", c.mask_jitter},   {"midpoint_min", c.midpoint_min},
                     {"midpoint_max", c.midpoint_max}, {"rate_min", c.rate_min},
                     {"rate_max", c.rate_max},         {"gain_min", c.gain_min},
                     {"gain_max", c.gain_max},         {"offset_max", c.offset_max},
                     {"max_translation", c.max_translation},
                     {"max_rotation_deg", c.max_rotation_deg},
                     {"max_scale", c.max_scale},       {"max_perspective", c.max_perspective},
                     {"card_reference", c.card_reference},
                     {"start_date", c.start_date},     {"season_days", c.season_days},
                     {"bog_id", c.bog_id},             {"variety", c.variety},
                     {"seed", c.seed}};
    if (!c.ripening.empty()) {
        auto& arr = j["ripening"] = nlohmann::json::array();
        for (const auto& r : c.ripening) arr.push_back({{"midpoint", r.midpoint}, {"rate", r.rate}});
    }
    if (!c.distortion.empty()) {
        auto& arr = j["distortion"] = nlohmann::json::array();
        for (const auto& d : c.distortion) arr.push_back({{"gain", d.gain}, {"offset", d.offset}});
    }
    if (!c.geometry.empty()) j["geometry"] = c.geometry;
    if (!c.berry_centers.empty()) j["berry_centers"] = c.berry_centers;
    return j;
}

inline nlohmann::json synth_truth_json(const SynthDataset& ds) {
    nlohmann::json berries = nlohmann::json::array();
    for (std::size_t b = 0; b < ds.centers.size(); ++b)
        berries.push_back({{"berry", b},
                           {"center", ds.centers[b]},
                           {"radius", ds.config.berry_radius},
                           {"midpoint", ds.ripening[b].midpoint},
                           {"rate", ds.ripening[b].rate}});
    nlohmann::json frames = nlohmann::json::array();
    for (const auto& f : ds.frames) {
        const Eigen::Matrix3d h = f.frame_to_reference();
        std::vector<double> flat;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) flat.push_back(h(r, c));
        nlohmann::json colors = nlohmann::json::array();
        for (const auto& c : f.colors) colors.push_back({c[0], c[1], c[2]});
        nlohmann::json instance_to_berry = nlohmann::json::object();
        for (std::size_t id = 1; id < f.berry_of_instance.size(); ++id)
            if (f.berry_of_instance[id] >= 0) instance_to_berry[std::to_string(id)] = f.berry_of_instance[id];
        frames.push_back({{"session_id", f.session_id},
                          {"capture_date", f.capture_date},
                          {"frame_to_reference", flat},
                          {"gain", f.distortion.gain},
                          {"offset", f.distortion.offset},
                          {"states", f.states},
                          {"classes", f.classes},
                          {"colors", colors},
                          {"instance_to_berry", instance_to_berry}});
    }
    return {{"config", synth_config_to_json(ds.config)}, {"berries", berries}, {"frames", frames}};
}

// Layout:
//   config.json truth.json series.json features_linear.csv features_scrambled.csv
//   sessions/<id>/{frame.png, card.png, manifest.json}
//   masks/<id>.json
inline void write_dataset(const SynthDataset& ds, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "sessions");
    fs::create_directories(dir / "masks");
    nlohmann::json series{{"name", ds.config.bog_id + "-ground"}, {"manifests", nlohmann::json::array()}};
    for (const auto& f : ds.frames) {
        const auto sdir = dir / "sessions" / f.session_id;
        fs::create_directories(sdir);
        write_png(sdir / "frame.png", f.image);
        write_png(sdir / "card.png", f.card);
        SessionManifest m;
        m.session_id = f.session_id;
        m.bog_id = ds.config.bog_id;
        m.variety = ds.config.variety;
        m.capture_date = f.capture_date;
        m.image_paths = {detail::absolute_normal(sdir / "frame.png")};
        m.card_patches = f.card_patches;
        m.role = CaptureRole::ground;
        save_manifest(m, sdir / "manifest.json");
        series["manifests"].push_back("sessions/" + f.session_id + "/manifest.json");
        save_masks_json(f.masks, dir / "masks" / (f.session_id + ".json"));
    }
    write_text_file(dir / "series.json", series.dump(2) + "\n");
    write_text_file(dir / "config.json", synth_config_to_json(ds.config).dump(2) + "\n");
    write_text_file(dir / "truth.json", synth_truth_json(ds).dump(2) + "\n");
    const auto states = states_by_frame(ds);
    save_features(synth_features(states, 64, FeatureMode::linear, ds.config.seed + 1), dir / "features_linear.csv");
    save_features(synth_features(states, 64, FeatureMode::scrambled, ds.config.seed + 2), dir / "features_scrambled.csv");
}

}  // namespace ripelab
