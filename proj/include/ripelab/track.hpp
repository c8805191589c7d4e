#pragma once

// Cross-frame berry identity by greedy IoU association of registered masks.

#include <algorithm>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "ripelab/error.hpp"
#include "ripelab/masks.hpp"
#include "ripelab/model.hpp"
#include "ripelab/raster.hpp"

namespace ripelab {

struct TrackParams {
    double iou_threshold = 0.3;
    int max_gap = 3;             // frames a track may go unseen and still be matched
    bool spawn_tracks = false;   // start new tracks from unmatched instances after frame 0
};

struct UnmatchedInstances {
    std::string frame_id;
    std::vector<int> instance_ids;

    bool operator==(const UnmatchedInstances&) const = default;
};

struct TrackSet {
    std::vector<BerryTrack> tracks;
    std::vector<UnmatchedInstances> unmatched;  // one entry per frame

    bool operator==(const TrackSet&) const = default;
};

inline TrackSet associate(std::span<const InstanceMaskSet> frames, const TrackParams& params = {}) {
    if (frames.empty()) throw ValidationError("associate needs at least one frame");
    for (std::size_t f = 1; f < frames.size(); ++f) {
        const auto& a = frames[f - 1].capture_date;
        const auto& b = frames[f].capture_date;
        if (a && b && !(*a < *b))
            throw ValidationError("frames out of date order: " + frames[f - 1].frame_id + " (" + *a + ") before " +
                                  frames[f].frame_id + " (" + *b + ")");
    }

    TrackSet out;
    struct Live {
        const std::vector<Run>* last_mask;
        int last_frame;
    };
    std::vector<Live> live;

    auto start_track = [&](int frame, const Instance& inst) {
        BerryTrack t;
        t.berry_id = static_cast<int>(out.tracks.size());
        t.entries.push_back({frames[frame].frame_id, frame, inst.id, 1.0, {}, {}, {}, {}});
        out.tracks.push_back(std::move(t));
        live.push_back({&inst.runs, frame});
    };

    out.unmatched.push_back({frames[0].frame_id, {}});
    for (const auto& inst : frames[0].instances) start_track(0, inst);

    for (int f = 1; f < static_cast<int>(frames.size()); ++f) {
        const auto& frame = frames[f];
        struct Candidate {
            double iou;
            int track;
            std::size_t instance;
        };
        std::vector<Candidate> candidates;
        for (int t = 0; t < static_cast<int>(live.size()); ++t) {
            if (f - live[t].last_frame - 1 > params.max_gap) continue;
            for (std::size_t i = 0; i < frame.instances.size(); ++i) {
                const double v = iou(*live[t].last_mask, frame.instances[i].runs);
                if (v >= params.iou_threshold) candidates.push_back({v, t, i});
            }
        }
        std::sort(candidates.begin(), candidates.end(), [&](const Candidate& a, const Candidate& b) {
            if (a.iou != b.iou) return a.iou > b.iou;
            if (a.track != b.track) return a.track < b.track;
            return frame.instances[a.instance].id < frame.instances[b.instance].id;
        });
        std::vector<bool> track_used(live.size(), false), inst_used(frame.instances.size(), false);
        for (const auto& c : candidates) {
            if (track_used[c.track] || inst_used[c.instance]) continue;
            track_used[c.track] = inst_used[c.instance] = true;
            const auto& inst = frame.instances[c.instance];
            out.tracks[c.track].entries.push_back({frame.frame_id, f, inst.id, c.iou, {}, {}, {}, {}});
            live[c.track] = {&inst.runs, f};
        }
        UnmatchedInstances un{frame.frame_id, {}};
        for (std::size_t i = 0; i < frame.instances.size(); ++i) {
            if (inst_used[i]) continue;
            if (params.spawn_tracks)
                start_track(f, frame.instances[i]);
            else
                un.instance_ids.push_back(frame.instances[i].id);
        }
        out.unmatched.push_back(std::move(un));
    }
    return out;
}

struct BerryChip {
    RgbaImage chip;  // tight bounding box; alpha 0 outside the mask
    Rgb mean_rgb{};
    int row0 = 0;
    int col0 = 0;
    long long pixel_count = 0;
};

// Pixels outside the image are ignored; a mask with no in-image pixel is an error.
inline BerryChip extract_berry_chip(const RgbImage& image, const std::vector<Run>& mask,
                                    const GrayImage* valid = nullptr) {
    const auto box = bounding_box(mask);
    if (!box) throw ValidationError("cannot extract chip from an empty mask");
    const int r0 = std::max(box->row0, 0), c0 = std::max(box->col0, 0);
    const int r1 = std::min(box->row1, image.height()), c1 = std::min(box->col1, image.width());
    if (r1 <= r0 || c1 <= c0) throw ValidationError("mask lies outside the image");
    BerryChip out;
    out.row0 = r0;
    out.col0 = c0;
    out.chip = RgbaImage(c1 - c0, r1 - r0);
    std::array<double, 3> sum{};
    for_each_pixel(mask, [&](int r, int c) {
        if (!image.contains(r, c)) return;
        if (valid && valid->at(r, c) == 0) return;
        for (int ch = 0; ch < 3; ++ch) {
            out.chip.at(r - r0, c - c0, ch) = image.at(r, c, ch);
            sum[ch] += image.at(r, c, ch);
        }
        out.chip.at(r - r0, c - c0, 3) = 255;
        ++out.pixel_count;
    });
    if (out.pixel_count == 0) throw ValidationError("mask has no valid pixels in the image");
    for (int ch = 0; ch < 3; ++ch) out.mean_rgb[ch] = sum[ch] / static_cast<double>(out.pixel_count);
    return out;
}

inline nlohmann::json trackset_to_json(const TrackSet& set) {
    nlohmann::json tracks = nlohmann::json::array();
    for (const auto& t : set.tracks) tracks.push_back(track_to_json(t));
    nlohmann::json unmatched = nlohmann::json::array();
    for (const auto& u : set.unmatched) unmatched.push_back({{"frame", u.frame_id}, {"instances", u.instance_ids}});
    return {{"tracks", std::move(tracks)}, {"unmatched", std::move(unmatched)}};
}

inline TrackSet trackset_from_json(const nlohmann::json& j) {
    TrackSet set;
    try {
        for (const auto& t : j.at("tracks")) set.tracks.push_back(track_from_json(t));
        for (const auto& u : j.at("unmatched"))
            set.unmatched.push_back({u.at("frame").get<std::string>(), u.at("instances").get<std::vector<int>>()});
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("tracks JSON: ") + e.what());
    }
    return set;
}

}  // namespace ripelab
