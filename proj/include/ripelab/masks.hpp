#pragma once

// Instance masks in run-length form, with the label-PNG and RLE-JSON codecs.

#include <algorithm>
#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ripelab/error.hpp"
#include "ripelab/format.hpp"
#include "ripelab/image_io.hpp"
#include "ripelab/raster.hpp"

namespace ripelab {

// Horizontal span of pixels [col_start, col_start + length) on one row.
struct Run {
    int row = 0;
    int col_start = 0;
    int length = 0;

    int col_end() const noexcept { return col_start + length; }
    auto operator<=>(const Run&) const = default;
};

struct Instance {
    int id = 0;
    std::vector<Run> runs;  // sorted by (row, col_start), non-overlapping, non-adjacent

    bool operator==(const Instance&) const = default;
};

struct InstanceMaskSet {
    std::string frame_id;
    std::optional<std::string> capture_date;
    int width = 0;   // 0 when the source carries no image size
    int height = 0;
    std::vector<Instance> instances;  // sorted by id

    bool operator==(const InstanceMaskSet&) const = default;

    const Instance* find(int id) const {
        auto it = std::lower_bound(instances.begin(), instances.end(), id,
                                   [](const Instance& inst, int v) { return inst.id < v; });
        return it != instances.end() && it->id == id ? &*it : nullptr;
    }
};

struct BoundingBox {
    int row0 = 0, col0 = 0, row1 = 0, col1 = 0;  // half-open
    int width() const noexcept { return col1 - col0; }
    int height() const noexcept { return row1 - row0; }
};

// Sorts runs and merges adjacent spans. Overlapping spans are rejected.
inline std::vector<Run> canonical_runs(std::vector<Run> runs) {
    std::erase_if(runs, [](const Run& r) { return r.length == 0; });
    for (const auto& r : runs)
        if (r.length < 0) throw ValidationError("RLE run has negative length");
    std::sort(runs.begin(), runs.end());
    std::vector<Run> out;
    out.reserve(runs.size());
    for (const auto& r : runs) {
        if (!out.empty() && out.back().row == r.row) {
            if (r.col_start < out.back().col_end())
                throw ValidationError("overlapping RLE runs on row " + std::to_string(r.row));
            if (r.col_start == out.back().col_end()) {
                out.back().length += r.length;
                continue;
            }
        }
        out.push_back(r);
    }
    return out;
}

inline long long area(const std::vector<Run>& runs) {
    long long n = 0;
    for (const auto& r : runs) n += r.length;
    return n;
}

inline long long intersection_area(const std::vector<Run>& a, const std::vector<Run>& b) {
    long long n = 0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i].row != b[j].row) {
            (a[i].row < b[j].row) ? ++i : ++j;
            continue;
        }
        const int lo = std::max(a[i].col_start, b[j].col_start);
        const int hi = std::min(a[i].col_end(), b[j].col_end());
        if (hi > lo) n += hi - lo;
        (a[i].col_end() < b[j].col_end()) ? ++i : ++j;
    }
    return n;
}

inline double iou(const std::vector<Run>& a, const std::vector<Run>& b) {
    const long long inter = intersection_area(a, b);
    const long long uni = area(a) + area(b) - inter;
    return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

inline std::vector<Run> translate(const std::vector<Run>& runs, int drow, int dcol) {
    std::vector<Run> out = runs;
    for (auto& r : out) {
        r.row += drow;
        r.col_start += dcol;
    }
    return out;
}

inline std::optional<BoundingBox> bounding_box(const std::vector<Run>& runs) {
    if (runs.empty()) return std::nullopt;
    BoundingBox box{runs.front().row, runs.front().col_start, runs.back().row + 1, runs.front().col_end()};
    for (const auto& r : runs) {
        box.col0 = std::min(box.col0, r.col_start);
        box.col1 = std::max(box.col1, r.col_end());
    }
    return box;
}

template <typename Fn>
void for_each_pixel(const std::vector<Run>& runs, Fn&& fn) {
    for (const auto& r : runs)
        for (int c = r.col_start; c < r.col_end(); ++c) fn(r.row, c);
}

// One-pixel erosion with a 4-neighbourhood structuring element.
inline std::vector<Run> erode(const std::vector<Run>& runs) {
    std::map<int, std::vector<Run>> by_row;
    for (const auto& r : runs) by_row[r.row].push_back(r);
    auto covered = [&](int row, int col) {
        auto it = by_row.find(row);
        if (it == by_row.end()) return false;
        for (const auto& r : it->second)
            if (col >= r.col_start && col < r.col_end()) return true;
        return false;
    };
    std::vector<Run> out;
    for (const auto& r : runs) {
        // Interior columns only; the last column acts as a flush sentinel.
        const int last = r.col_end() - 1;
        int start = -1;
        for (int c = r.col_start + 1; c <= last; ++c) {
            const bool keep = c < last && covered(r.row - 1, c) && covered(r.row + 1, c);
            if (keep && start < 0) start = c;
            if (!keep && start >= 0) {
                out.push_back({r.row, start, c - start});
                start = -1;
            }
        }
    }
    return canonical_runs(std::move(out));
}

// Checks pairwise disjointness and, when the set carries a size, bounds.
inline void validate_masks(const InstanceMaskSet& set) {
    std::set<int> ids;
    std::map<int, std::vector<Run>> rows;
    for (const auto& inst : set.instances) {
        if (inst.id <= 0) throw ValidationError("instance id must be positive, got " + std::to_string(inst.id));
        if (!ids.insert(inst.id).second)
            throw ValidationError("duplicate instance id " + std::to_string(inst.id) + " in frame " + set.frame_id);
        for (const auto& r : inst.runs) {
            if (r.row < 0 || r.col_start < 0) throw ValidationError("RLE run has negative coordinates");
            if (set.width > 0 && (r.row >= set.height || r.col_end() > set.width))
                throw ValidationError("RLE run outside image bounds in frame " + set.frame_id);
            rows[r.row].push_back(r);
        }
    }
    for (auto& [row, runs] : rows) {
        std::sort(runs.begin(), runs.end());
        for (std::size_t i = 1; i < runs.size(); ++i)
            if (runs[i].col_start < runs[i - 1].col_end())
                throw ValidationError("overlapping RLE runs on row " + std::to_string(row) + " in frame " +
                                      set.frame_id);
    }
}

inline InstanceMaskSet masks_from_label_image(const LabelImage& labels, std::string frame_id) {
    std::map<int, std::vector<Run>> runs;
    for (int r = 0; r < labels.height(); ++r) {
        int c = 0;
        while (c < labels.width()) {
            const int id = labels.at(r, c);
            int end = c + 1;
            while (end < labels.width() && labels.at(r, end) == id) ++end;
            if (id != 0) runs[id].push_back({r, c, end - c});
            c = end;
        }
    }
    InstanceMaskSet set;
    set.frame_id = std::move(frame_id);
    set.width = labels.width();
    set.height = labels.height();
    for (auto& [id, rs] : runs) set.instances.push_back({id, canonical_runs(std::move(rs))});
    return set;
}

inline LabelImage masks_to_label_image(const InstanceMaskSet& set, int width, int height) {
    LabelImage img(width, height);
    for (const auto& inst : set.instances) {
        if (inst.id > 0xffff) throw ValidationError("instance id exceeds 16-bit label range");
        for_each_pixel(inst.runs, [&](int r, int c) {
            if (img.contains(r, c)) img.at(r, c) = static_cast<std::uint16_t>(inst.id);
        });
    }
    return img;
}

inline nlohmann::json masks_to_json(const InstanceMaskSet& set) {
    nlohmann::json j;
    j["frame_id"] = set.frame_id;
    if (set.capture_date) j["capture_date"] = *set.capture_date;
    if (set.width > 0) {
        j["width"] = set.width;
        j["height"] = set.height;
    }
    auto& arr = j["instances"] = nlohmann::json::array();
    for (const auto& inst : set.instances) {
        nlohmann::json rle = nlohmann::json::array();
        for (const auto& r : inst.runs) rle.push_back({r.row, r.col_start, r.length});
        arr.push_back({{"id", inst.id}, {"rle", std::move(rle)}});
    }
    return j;
}

inline InstanceMaskSet masks_from_json(const nlohmann::json& j) {
    try {
        InstanceMaskSet set;
        set.frame_id = j.at("frame_id").get<std::string>();
        if (j.contains("capture_date")) set.capture_date = j["capture_date"].get<std::string>();
        if (j.contains("width")) {
            set.width = j.at("width").get<int>();
            set.height = j.at("height").get<int>();
        }
        for (const auto& inst : j.at("instances")) {
            Instance out;
            out.id = inst.at("id").get<int>();
            std::vector<Run> runs;
            for (const auto& r : inst.at("rle")) {
                if (!r.is_array() || r.size() != 3) throw ValidationError("RLE entries must be [row, col_start, len]");
                runs.push_back({r[0].get<int>(), r[1].get<int>(), r[2].get<int>()});
            }
            out.runs = canonical_runs(std::move(runs));
            set.instances.push_back(std::move(out));
        }
        std::sort(set.instances.begin(), set.instances.end(),
                  [](const Instance& a, const Instance& b) { return a.id < b.id; });
        validate_masks(set);
        return set;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("mask JSON: ") + e.what());
    }
}

// Accepts a label PNG (frame id = file stem) or an RLE JSON file.
inline InstanceMaskSet load_masks(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError("mask file not found: " + path.string());
    if (path.extension() == ".png") {
        auto set = masks_from_label_image(read_label_png(path), path.stem().string());
        validate_masks(set);
        return set;
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return masks_from_json(j);
}

inline void save_masks_json(const InstanceMaskSet& set, const std::filesystem::path& path) {
    write_text_file(path, masks_to_json(set).dump() + "\n");
}

inline void save_masks_png(const InstanceMaskSet& set, const std::filesystem::path& path) {
    if (set.width <= 0) throw ValidationError("label PNG export needs image dimensions");
    write_png(path, masks_to_label_image(set, set.width, set.height));
}

// Mask files in a directory (*.json / *.png), sorted by capture date when
// every set carries one, otherwise by file name.
inline std::vector<InstanceMaskSet> load_mask_directory(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("masks directory not found: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto ext = entry.path().extension();
        if (entry.is_regular_file() && (ext == ".json" || ext == ".png")) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<InstanceMaskSet> sets;
    for (const auto& f : files) sets.push_back(load_masks(f));
    const bool dated = std::all_of(sets.begin(), sets.end(), [](const auto& s) { return s.capture_date.has_value(); });
    if (dated)
        std::stable_sort(sets.begin(), sets.end(),
                         [](const auto& a, const auto& b) { return *a.capture_date < *b.capture_date; });
    return sets;
}

}  // namespace ripelab
