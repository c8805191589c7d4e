#pragma once

// Session manifests, feature tables and berry tracks, plus their file formats.

#include <algorithm>
#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ripelab/error.hpp"
#include "ripelab/format.hpp"
#include "ripelab/raster.hpp"

namespace ripelab {

enum class CaptureRole { aerial, ground };

inline std::string to_string(CaptureRole role) { return role == CaptureRole::aerial ? "aerial" : "ground"; }

inline CaptureRole parse_role(const std::string& s) {
    if (s == "aerial") return CaptureRole::aerial;
    if (s == "ground") return CaptureRole::ground;
    throw ValidationError("role: expected \"aerial\" or \"ground\", got \"" + s + "\"");
}

struct GrayPatchSample {
    Rgb measured_rgb{};
    double reference_value = 0.0;

    bool operator==(const GrayPatchSample&) const = default;
};

inline constexpr std::size_t kGrayPatchCount = 6;

struct SessionManifest {
    std::string session_id;
    std::string bog_id;
    std::string variety;
    std::string capture_date;  // YYYY-MM-DD
    std::vector<std::filesystem::path> image_paths;  // absolute, normalized
    std::optional<std::vector<GrayPatchSample>> card_patches;
    CaptureRole role = CaptureRole::ground;

    bool operator==(const SessionManifest&) const = default;
};

// Manifests of one time series in capture order.
struct SessionSeries {
    std::string name;
    std::vector<SessionManifest> sessions;
};

inline bool is_iso_date(const std::string& s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
    int y = 0, m = 0, d = 0;
    if (!parse_number(std::string_view(s).substr(0, 4), y) || !parse_number(std::string_view(s).substr(5, 2), m) ||
        !parse_number(std::string_view(s).substr(8, 2), d))
        return false;
    if (m < 1 || m > 12 || d < 1) return false;
    static constexpr std::array<int, 12> days{31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    const bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
    return d <= days[m - 1] + (m == 2 && leap ? 1 : 0);
}

inline void validate_card_patches(const std::vector<GrayPatchSample>& patches) {
    if (patches.size() != kGrayPatchCount)
        throw ValidationError("card_patches must have 6 entries (got " + std::to_string(patches.size()) + ")");
    for (std::size_t i = 0; i < patches.size(); ++i) {
        for (double v : patches[i].measured_rgb)
            if (!(v >= 0.0 && v <= 255.0)) throw ValidationError("card_patches.measured_rgb must lie in [0,255]");
        const double ref = patches[i].reference_value;
        if (!(ref >= 0.0 && ref <= 255.0)) throw ValidationError("card_patches.reference_value must lie in [0,255]");
        if (i > 0 && !(ref < patches[i - 1].reference_value))
            throw ValidationError("card_patches.reference_value must be strictly decreasing (brightest first)");
    }
}

inline void validate_manifest(const SessionManifest& m) {
    if (m.session_id.empty()) throw ValidationError("session_id must be non-empty");
    if (!is_iso_date(m.capture_date)) throw ValidationError("capture_date must be an ISO-8601 date: " + m.capture_date);
    if (m.image_paths.empty()) throw ValidationError("image_paths must list at least one image");
    if (m.card_patches) validate_card_patches(*m.card_patches);
}

namespace detail {

template <typename T>
T json_field(const nlohmann::json& j, const char* name) {
    if (!j.contains(name)) throw ValidationError(std::string("missing field: ") + name);
    try {
        return j.at(name).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ValidationError(std::string("field has wrong type: ") + name);
    }
}

inline nlohmann::json parse_json_file(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError("file not found: " + path.string());
    try {
        return nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

inline std::filesystem::path absolute_normal(const std::filesystem::path& p) {
    return std::filesystem::absolute(p).lexically_normal();
}

}  // namespace detail

inline SessionManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    SessionManifest m;
    m.session_id = detail::json_field<std::string>(j, "session_id");
    m.bog_id = detail::json_field<std::string>(j, "bog_id");
    m.variety = j.value("variety", std::string{});
    m.capture_date = detail::json_field<std::string>(j, "capture_date");
    m.role = parse_role(j.value("role", std::string("ground")));
    for (const auto& p : detail::json_field<std::vector<std::string>>(j, "image_paths"))
        m.image_paths.push_back(detail::absolute_normal(base_dir / p));
    if (j.contains("card_patches") && !j["card_patches"].is_null()) {
        if (!j["card_patches"].is_array()) throw ValidationError("field has wrong type: card_patches");
        std::vector<GrayPatchSample> patches;
        for (const auto& p : j["card_patches"]) {
            GrayPatchSample s;
            const auto rgb = detail::json_field<std::vector<double>>(p, "measured_rgb");
            if (rgb.size() != 3) throw ValidationError("card_patches.measured_rgb must have 3 entries");
            std::copy(rgb.begin(), rgb.end(), s.measured_rgb.begin());
            s.reference_value = detail::json_field<double>(p, "reference_value");
            patches.push_back(s);
        }
        m.card_patches = std::move(patches);
    }
    validate_manifest(m);
    return m;
}

inline nlohmann::json manifest_to_json(const SessionManifest& m, const std::filesystem::path& base_dir) {
    nlohmann::json j;
    j["session_id"] = m.session_id;
    j["bog_id"] = m.bog_id;
    j["variety"] = m.variety;
    j["capture_date"] = m.capture_date;
    j["role"] = to_string(m.role);
    auto& paths = j["image_paths"] = nlohmann::json::array();
    const auto base = detail::absolute_normal(base_dir);
    for (const auto& p : m.image_paths) paths.push_back(detail::absolute_normal(p).lexically_relative(base).generic_string());
    if (m.card_patches) {
        auto& arr = j["card_patches"] = nlohmann::json::array();
        for (const auto& p : *m.card_patches)
            arr.push_back({{"measured_rgb", {p.measured_rgb[0], p.measured_rgb[1], p.measured_rgb[2]}},
                           {"reference_value", p.reference_value}});
    }
    return j;
}

// Image refs resolve relative to the manifest's directory; each must exist.
inline SessionManifest load_manifest(const std::filesystem::path& path) {
    const auto j = detail::parse_json_file(path);
    auto m = manifest_from_json(j, path.parent_path());
    for (const auto& img : m.image_paths)
        if (!std::filesystem::exists(img)) throw IoError("manifest " + path.string() + ": missing image " + img.string());
    return m;
}

inline void save_manifest(const SessionManifest& m, const std::filesystem::path& path) {
    write_text_file(path, manifest_to_json(m, path.parent_path()).dump(2) + "\n");
}

// Series file: {"name": ..., "manifests": ["a/manifest.json", ...]}.
inline SessionSeries load_series(const std::filesystem::path& path) {
    const auto j = detail::parse_json_file(path);
    SessionSeries series;
    series.name = j.value("name", path.stem().string());
    for (const auto& rel : detail::json_field<std::vector<std::string>>(j, "manifests"))
        series.sessions.push_back(load_manifest(path.parent_path() / rel));
    if (series.sessions.empty()) throw ValidationError("series " + path.string() + " lists no manifests");
    for (std::size_t i = 1; i < series.sessions.size(); ++i)
        if (!(series.sessions[i - 1].capture_date < series.sessions[i].capture_date))
            throw ValidationError("series " + series.name + ": capture dates must strictly increase (" +
                                  series.sessions[i - 1].capture_date + " then " +
                                  series.sessions[i].capture_date + ")");
    return series;
}

// ---------------------------------------------------------------------------
// Feature tables

struct FeatureRecord {
    int berry_id = 0;
    int timepoint = 0;
    std::vector<double> vector;

    bool operator==(const FeatureRecord&) const = default;
};

struct FeatureTable {
    std::size_t dimension = 0;
    std::vector<FeatureRecord> records;  // sorted by (berry_id, timepoint)

    bool operator==(const FeatureTable&) const = default;
};

inline void sort_and_check_features(FeatureTable& table) {
    std::sort(table.records.begin(), table.records.end(), [](const auto& a, const auto& b) {
        return std::pair(a.berry_id, a.timepoint) < std::pair(b.berry_id, b.timepoint);
    });
    for (std::size_t i = 0; i < table.records.size(); ++i) {
        if (table.records[i].vector.size() != table.dimension)
            throw ValidationError("feature record dimension mismatch");
        if (i > 0 && table.records[i].berry_id == table.records[i - 1].berry_id &&
            table.records[i].timepoint == table.records[i - 1].timepoint)
            throw ValidationError("duplicate feature key (berry_id=" + std::to_string(table.records[i].berry_id) +
                                  ", timepoint=" + std::to_string(table.records[i].timepoint) + ")");
    }
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        fields.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return fields;
}

inline FeatureTable parse_features(std::string_view text) {
    FeatureTable table;
    std::size_t line_no = 0;
    std::size_t expected = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        auto line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) {
            if (pos > text.size()) break;
            continue;
        }
        const auto fields = split_csv_line(line);
        if (expected == 0) {
            if (fields.size() < 3 || fields[0] != "berry_id" || fields[1] != "timepoint")
                throw ParseError("feature header must be berry_id,timepoint,dim_0,...", line_no);
            for (std::size_t d = 2; d < fields.size(); ++d)
                if (fields[d] != "dim_" + std::to_string(d - 2))
                    throw ParseError("feature header column " + std::to_string(d) + " must be dim_" +
                                         std::to_string(d - 2),
                                     line_no);
            expected = fields.size();
            table.dimension = expected - 2;
            continue;
        }
        if (fields.size() != expected)
            throw ParseError("ragged row: expected " + std::to_string(expected) + " fields, got " +
                                 std::to_string(fields.size()),
                             line_no);
        FeatureRecord rec;
        if (!parse_number(fields[0], rec.berry_id) || !parse_number(fields[1], rec.timepoint))
            throw ParseError("berry_id and timepoint must be integers", line_no);
        rec.vector.resize(table.dimension);
        for (std::size_t d = 0; d < table.dimension; ++d)
            if (!parse_number(fields[d + 2], rec.vector[d])) throw ParseError("non-numeric feature value", line_no);
        table.records.push_back(std::move(rec));
    }
    if (expected == 0) throw ParseError("feature file has no header");
    sort_and_check_features(table);
    return table;
}

inline FeatureTable load_features(const std::filesystem::path& path) {
    return parse_features(read_text_file(path));
}

inline std::string features_to_csv(const FeatureTable& table) {
    std::string out = "berry_id,timepoint";
    for (std::size_t d = 0; d < table.dimension; ++d) out += ",dim_" + std::to_string(d);
    out += '\n';
    for (const auto& r : table.records) {
        out += std::to_string(r.berry_id) + ',' + std::to_string(r.timepoint);
        for (double v : r.vector) out += ',' + format_double(v);
        out += '\n';
    }
    return out;
}

inline void save_features(const FeatureTable& table, const std::filesystem::path& path) {
    write_text_file(path, features_to_csv(table));
}

// ---------------------------------------------------------------------------
// Berry tracks

struct TrackEntry {
    std::string session_id;
    int frame_index = 0;
    int instance_id = 0;  // mask ref within the frame's mask set
    double iou = 1.0;     // overlap with the previous mask of the track (1 for the seed)
    std::optional<Rgb> mean_rgb;
    std::optional<std::vector<double>> feature;
    std::optional<int> class_label;
    std::optional<double> ripeness;

    bool operator==(const TrackEntry&) const = default;
};

struct BerryTrack {
    int berry_id = 0;
    std::vector<TrackEntry> entries;  // increasing frame_index

    bool operator==(const BerryTrack&) const = default;
};

inline void validate_track(const BerryTrack& t) {
    for (std::size_t i = 0; i < t.entries.size(); ++i) {
        if (i > 0 && t.entries[i].frame_index <= t.entries[i - 1].frame_index)
            throw ValidationError("track " + std::to_string(t.berry_id) + ": timepoints must strictly increase");
        const auto& e = t.entries[i];
        if (e.class_label && (*e.class_label < 1 || *e.class_label > 5))
            throw ValidationError("class_label must lie in 1..5");
        if (e.ripeness && !(*e.ripeness >= 0.0 && *e.ripeness <= 1.0))
            throw ValidationError("ripeness must lie in [0,1]");
    }
}

inline nlohmann::json track_to_json(const BerryTrack& t) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : t.entries) {
        nlohmann::json j{{"session_id", e.session_id},
                         {"frame_index", e.frame_index},
                         {"mask", {{"frame", e.session_id}, {"instance", e.instance_id}}},
                         {"iou", e.iou}};
        if (e.mean_rgb) j["mean_rgb"] = {(*e.mean_rgb)[0], (*e.mean_rgb)[1], (*e.mean_rgb)[2]};
        if (e.feature) j["feature"] = *e.feature;
        if (e.class_label) j["class_label"] = *e.class_label;
        if (e.ripeness) j["ripeness"] = *e.ripeness;
        entries.push_back(std::move(j));
    }
    return {{"berry_id", t.berry_id}, {"entries", std::move(entries)}};
}

inline BerryTrack track_from_json(const nlohmann::json& j) {
    BerryTrack t;
    t.berry_id = detail::json_field<int>(j, "berry_id");
    for (const auto& je : j.at("entries")) {
        TrackEntry e;
        e.session_id = detail::json_field<std::string>(je, "session_id");
        e.frame_index = detail::json_field<int>(je, "frame_index");
        e.instance_id = je.at("mask").at("instance").get<int>();
        e.iou = je.value("iou", 1.0);
        if (je.contains("mean_rgb")) {
            const auto v = je["mean_rgb"].get<std::vector<double>>();
            if (v.size() != 3) throw ValidationError("mean_rgb must have 3 entries");
            e.mean_rgb = Rgb{v[0], v[1], v[2]};
        }
        if (je.contains("feature")) e.feature = je["feature"].get<std::vector<double>>();
        if (je.contains("class_label")) e.class_label = je["class_label"].get<int>();
        if (je.contains("ripeness")) e.ripeness = je["ripeness"].get<double>();
        t.entries.push_back(std::move(e));
    }
    validate_track(t);
    return t;
}

}  // namespace ripelab
