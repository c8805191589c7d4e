#pragma once

// Five-class albedo model (k-means on RGB), majority-vote berry labels,
// per-session class histograms and the bog ripeness-ratio table.

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ripelab/error.hpp"
#include "ripelab/format.hpp"
#include "ripelab/model.hpp"
#include "ripelab/raster.hpp"

namespace ripelab {

inline constexpr int kClassCount = 5;

enum class ClassMappingSource { automatic, human_override };

struct ColorClassModel {
    std::array<Rgb, kClassCount> centroids{};
    std::array<int, kClassCount> class_of_cluster{};  // cluster index -> class 1..5
    ClassMappingSource source = ClassMappingSource::automatic;
    double objective = 0.0;  // within-cluster sum of squares on the fitted pixels
    int iterations = 0;

    bool operator==(const ColorClassModel&) const = default;
};

struct KMeansParams {
    int max_iterations = 300;
    double tolerance = 1e-6;  // max centroid movement
};

namespace detail {

inline double sq_dist(const Rgb& a, const Rgb& b) {
    const double d0 = a[0] - b[0], d1 = a[1] - b[1], d2 = a[2] - b[2];
    return d0 * d0 + d1 * d1 + d2 * d2;
}

template <std::size_t K>
int nearest(const std::array<Rgb, K>& centroids, const Rgb& p, double* dist = nullptr) {
    int best = 0;
    double bd = sq_dist(centroids[0], p);
    for (int k = 1; k < static_cast<int>(K); ++k) {
        const double d = sq_dist(centroids[k], p);
        if (d < bd) {
            bd = d;
            best = k;
        }
    }
    if (dist) *dist = bd;
    return best;
}

inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace detail

// Orders clusters by redness (R - G) so the greenest becomes class 1.
inline std::array<int, kClassCount> redness_class_mapping(const std::array<Rgb, kClassCount>& centroids) {
    std::array<int, kClassCount> order{};
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const double ra = centroids[a][0] - centroids[a][1], rb = centroids[b][0] - centroids[b][1];
        if (ra != rb) return ra < rb;
        return centroids[a] < centroids[b];
    });
    std::array<int, kClassCount> class_of{};
    for (int rank = 0; rank < kClassCount; ++rank) class_of[order[rank]] = rank + 1;
    return class_of;
}

inline void validate_class_model(const ColorClassModel& m) {
    std::set<int> seen(m.class_of_cluster.begin(), m.class_of_cluster.end());
    if (seen.size() != kClassCount || *seen.begin() != 1 || *seen.rbegin() != kClassCount)
        throw ValidationError("class_of_cluster must be a permutation of 1..5");
    for (int a = 0; a < kClassCount; ++a)
        for (int b = a + 1; b < kClassCount; ++b)
            if (m.centroids[a] == m.centroids[b]) throw ValidationError("class centroids must be pairwise distinct");
}

// Within-cluster sum of squares of `pixels` under nearest-centroid assignment.
inline double kmeans_objective(std::span<const Rgb> pixels, const std::array<Rgb, kClassCount>& centroids) {
    double sum = 0.0;
    for (const auto& p : pixels) {
        double d = 0.0;
        detail::nearest(centroids, p, &d);
        sum += d;
    }
    return sum;
}

// Lloyd's algorithm with k-means++ seeding. Pixels are sorted first so the
// result does not depend on input order.
inline ColorClassModel fit_color_classes(std::span<const Rgb> input, std::uint64_t seed,
                                         const KMeansParams& params = {}) {
    std::vector<Rgb> pixels(input.begin(), input.end());
    std::sort(pixels.begin(), pixels.end());
    std::size_t n_distinct = pixels.empty() ? 0 : 1;
    for (std::size_t i = 1; i < pixels.size(); ++i)
        if (pixels[i] != pixels[i - 1]) ++n_distinct;
    if (n_distinct < kClassCount) throw ValidationError("< 5 distinct values");

    const std::size_t n = pixels.size();
    std::mt19937_64 rng(seed);
    std::array<Rgb, kClassCount> centroids{};
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    centroids[0] = pixels[rng() % n];
    for (int k = 1; k < kClassCount; ++k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], detail::sq_dist(pixels[i], centroids[k - 1]));
            total += d2[i];
        }
        const double target = detail::unit_uniform(rng) * total;
        double acc = 0.0;
        std::size_t pick = n;
        for (std::size_t i = 0; i < n; ++i) {
            acc += d2[i];
            if (d2[i] > 0.0 && acc > target) {
                pick = i;
                break;
            }
        }
        if (pick == n)  // rounding pushed target past the last positive weight
            for (std::size_t i = n; i-- > 0;)
                if (d2[i] > 0.0) {
                    pick = i;
                    break;
                }
        centroids[k] = pixels[pick];
    }

    std::vector<int> assign(n, 0);
    std::vector<double> dist(n, 0.0);
    [[maybe_unused]] double previous = std::numeric_limits<double>::infinity();
    int iter = 0;
    for (; iter < params.max_iterations; ++iter) {
        double objective = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            assign[i] = detail::nearest(centroids, pixels[i], &dist[i]);
            objective += dist[i];
        }
        assert(objective <= previous * (1.0 + 1e-12) + 1e-9 && "k-means objective increased");
        previous = objective;

        std::array<Rgb, kClassCount> sums{};
        std::array<std::size_t, kClassCount> counts{};
        for (std::size_t i = 0; i < n; ++i) {
            for (int c = 0; c < 3; ++c) sums[assign[i]][c] += pixels[i][c];
            ++counts[assign[i]];
        }
        std::array<Rgb, kClassCount> next = centroids;
        std::vector<bool> taken(n, false);
        for (int k = 0; k < kClassCount; ++k) {
            if (counts[k] > 0) {
                for (int c = 0; c < 3; ++c) next[k][c] = sums[k][c] / static_cast<double>(counts[k]);
                continue;
            }
            // Empty cluster: restart at the point farthest from its own centroid.
            std::size_t far = 0;
            double fd = -1.0;
            for (std::size_t i = 0; i < n; ++i)
                if (!taken[i] && dist[i] > fd) {
                    fd = dist[i];
                    far = i;
                }
            taken[far] = true;
            next[k] = pixels[far];
        }
        double movement = 0.0;
        for (int k = 0; k < kClassCount; ++k) movement = std::max(movement, std::sqrt(detail::sq_dist(next[k], centroids[k])));
        centroids = next;
        if (movement < params.tolerance) {
            ++iter;
            break;
        }
    }

    ColorClassModel model;
    model.centroids = centroids;
    model.class_of_cluster = redness_class_mapping(centroids);
    model.objective = kmeans_objective(pixels, centroids);
    model.iterations = iter;
    return model;
}

inline ColorClassModel with_class_override(ColorClassModel model, const std::array<int, kClassCount>& class_of_cluster) {
    model.class_of_cluster = class_of_cluster;
    model.source = ClassMappingSource::human_override;
    validate_class_model(model);
    return model;
}

inline int classify_pixel(const ColorClassModel& model, const Rgb& p) {
    return model.class_of_cluster[detail::nearest(model.centroids, p)];
}

// Majority class over the berry's pixels; ties go to the riper class.
inline int label_berry(std::span<const Rgb> pixels, const ColorClassModel& model) {
    if (pixels.empty()) throw ValidationError("cannot label a berry without pixels");
    std::array<std::size_t, kClassCount + 1> votes{};
    for (const auto& p : pixels) ++votes[classify_pixel(model, p)];
    int best = kClassCount;
    for (int c = kClassCount; c >= 1; --c)
        if (votes[c] > votes[best]) best = c;
    return best;
}

// Uniform sample without replacement, at most `cap` pixels.
inline std::vector<Rgb> sample_pixels(std::span<const Rgb> pixels, std::size_t cap, std::uint64_t seed) {
    if (pixels.size() <= cap) return {pixels.begin(), pixels.end()};
    std::vector<std::size_t> idx(pixels.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < cap; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng() % (idx.size() - i));
        std::swap(idx[i], idx[j]);
    }
    std::vector<Rgb> out;
    out.reserve(cap);
    for (std::size_t i = 0; i < cap; ++i) out.push_back(pixels[idx[i]]);
    return out;
}

// ---------------------------------------------------------------------------
// Histograms and ratios

struct ClassHistogram {
    std::string session_id;
    std::string bog_id;
    std::string capture_date;
    std::array<long long, kClassCount> counts{};

    long long total() const noexcept { return std::accumulate(counts.begin(), counts.end(), 0LL); }
    bool no_detections() const noexcept { return total() == 0; }
    // Empty when the session has no detections.
    std::optional<std::array<double, kClassCount>> fractions() const {
        const long long t = total();
        if (t == 0) return std::nullopt;
        std::array<double, kClassCount> f{};
        for (int i = 0; i < kClassCount; ++i) f[i] = static_cast<double>(counts[i]) / static_cast<double>(t);
        return f;
    }
    // Classes 4 and 5.
    std::optional<double> red_fraction() const {
        const long long t = total();
        if (t == 0) return std::nullopt;
        return static_cast<double>(counts[3] + counts[4]) / static_cast<double>(t);
    }

    bool operator==(const ClassHistogram&) const = default;
};

inline ClassHistogram class_histogram(std::span<const int> labels, std::string session_id = {}) {
    ClassHistogram h;
    h.session_id = std::move(session_id);
    for (int l : labels) {
        if (l < 1 || l > kClassCount) throw ValidationError("class label out of range: " + std::to_string(l));
        ++h.counts[l - 1];
    }
    return h;
}

// Red fraction at each date over the red fraction at the final date.
// Dates without detections yield NaN.
inline std::vector<double> ripeness_ratio(std::span<const ClassHistogram> histograms) {
    if (histograms.size() < 2) throw ValidationError("ripeness ratio needs at least 2 dates");
    const auto final_red = histograms.back().red_fraction();
    if (!final_red || !(*final_red > 0.0)) throw ValidationError("undefined ratio: final red fraction is 0");
    std::vector<double> out;
    out.reserve(histograms.size());
    for (std::size_t i = 0; i + 1 < histograms.size(); ++i) {
        const auto red = histograms[i].red_fraction();
        out.push_back(red ? *red / *final_red : std::numeric_limits<double>::quiet_NaN());
    }
    out.push_back(1.0);
    return out;
}

// Index of the earliest ratio at or above `threshold`.
inline std::optional<std::size_t> risk_flag(std::span<const double> ratios, double threshold = 0.6) {
    for (std::size_t i = 0; i < ratios.size(); ++i)
        if (ratios[i] >= threshold) return i;
    return std::nullopt;
}

struct RatioRow {
    std::string bog_id;
    std::vector<std::string> dates;
    std::vector<double> values;

    bool operator==(const RatioRow& o) const {
        if (bog_id != o.bog_id || dates != o.dates || values.size() != o.values.size()) return false;
        for (std::size_t i = 0; i < values.size(); ++i)
            if (!(values[i] == o.values[i] || (std::isnan(values[i]) && std::isnan(o.values[i])))) return false;
        return true;
    }
};

struct RipenessRatioTable {
    std::vector<RatioRow> rows;

    std::vector<std::string> all_dates() const {
        std::set<std::string> dates;
        for (const auto& r : rows) dates.insert(r.dates.begin(), r.dates.end());
        return {dates.begin(), dates.end()};
    }
    bool operator==(const RipenessRatioTable&) const = default;
};

// Groups histograms by bog (sorted by date) and computes one ratio row each.
inline RipenessRatioTable ratio_table(std::span<const ClassHistogram> histograms) {
    std::map<std::string, std::vector<ClassHistogram>> by_bog;
    for (const auto& h : histograms) by_bog[h.bog_id].push_back(h);
    RipenessRatioTable table;
    for (auto& [bog, hs] : by_bog) {
        std::stable_sort(hs.begin(), hs.end(), [](const auto& a, const auto& b) { return a.capture_date < b.capture_date; });
        for (std::size_t i = 1; i < hs.size(); ++i)
            if (hs[i].capture_date == hs[i - 1].capture_date)
                throw ValidationError("bog " + bog + " has two histograms dated " + hs[i].capture_date);
        RatioRow row;
        row.bog_id = bog;
        for (const auto& h : hs) row.dates.push_back(h.capture_date);
        row.values = ripeness_ratio(hs);
        table.rows.push_back(std::move(row));
    }
    return table;
}

// Bog rows, date columns; empty cells where a bog has no value.
inline std::string ratio_table_to_csv(const RipenessRatioTable& table, const std::string& comment = {}) {
    std::string out;
    if (!comment.empty()) out += "# " + comment + "\n";
    const auto dates = table.all_dates();
    out += "bog";
    for (const auto& d : dates) out += "," + d;
    out += "\n";
    for (const auto& row : table.rows) {
        out += row.bog_id;
        for (const auto& d : dates) {
            out += ",";
            auto it = std::find(row.dates.begin(), row.dates.end(), d);
            if (it == row.dates.end()) continue;
            const double v = row.values[static_cast<std::size_t>(it - row.dates.begin())];
            if (!std::isnan(v)) out += format_double(v);
        }
        out += "\n";
    }
    return out;
}

inline RipenessRatioTable ratio_table_from_csv(std::string_view text) {
    RipenessRatioTable table;
    std::vector<std::string> dates;
    std::size_t line_no = 0, pos = 0;
    bool header = false;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        auto line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (line.empty() || line.front() == '#') continue;
        const auto fields = split_csv_line(line);
        if (!header) {
            if (fields.empty() || fields[0] != "bog") throw ParseError("ratio table header must start with bog", line_no);
            for (std::size_t i = 1; i < fields.size(); ++i) dates.emplace_back(fields[i]);
            header = true;
            continue;
        }
        if (fields.size() != dates.size() + 1) throw ParseError("ragged ratio table row", line_no);
        RatioRow row;
        row.bog_id = std::string(fields[0]);
        for (std::size_t i = 1; i < fields.size(); ++i) {
            if (fields[i].empty()) continue;
            double v = 0.0;
            if (!parse_number(fields[i], v)) throw ParseError("non-numeric ratio", line_no);
            row.dates.push_back(dates[i - 1]);
            row.values.push_back(v);
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

inline nlohmann::json class_model_to_json(const ColorClassModel& m) {
    nlohmann::json centroids = nlohmann::json::array();
    for (const auto& c : m.centroids) centroids.push_back({c[0], c[1], c[2]});
    return {{"centroids", std::move(centroids)},
            {"class_of_cluster", m.class_of_cluster},
            {"source", m.source == ClassMappingSource::automatic ? "auto" : "human_override"},
            {"objective", m.objective},
            {"iterations", m.iterations}};
}

inline ColorClassModel class_model_from_json(const nlohmann::json& j) {
    ColorClassModel m;
    try {
        const auto cs = j.at("centroids").get<std::vector<std::array<double, 3>>>();
        if (cs.size() != kClassCount) throw ValidationError("class model needs 5 centroids");
        for (int k = 0; k < kClassCount; ++k) m.centroids[k] = cs[k];
        m.class_of_cluster = j.at("class_of_cluster").get<std::array<int, kClassCount>>();
        const auto src = j.value("source", std::string("auto"));
        if (src != "auto" && src != "human_override") throw ValidationError("class model source must be auto or human_override");
        m.source = src == "auto" ? ClassMappingSource::automatic : ClassMappingSource::human_override;
        m.objective = j.value("objective", 0.0);
        m.iterations = j.value("iterations", 0);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("class model JSON: ") + e.what());
    }
    validate_class_model(m);
    return m;
}

inline nlohmann::json histogram_to_json(const ClassHistogram& h) {
    nlohmann::json j{{"session_id", h.session_id},
                     {"bog_id", h.bog_id},
                     {"capture_date", h.capture_date},
                     {"counts", h.counts}};
    if (auto f = h.fractions())
        j["fractions"] = *f;
    else
        j["flag"] = "no detections";
    return j;
}

inline ClassHistogram histogram_from_json(const nlohmann::json& j) {
    ClassHistogram h;
    try {
        h.session_id = j.at("session_id").get<std::string>();
        h.bog_id = j.at("bog_id").get<std::string>();
        h.capture_date = j.at("capture_date").get<std::string>();
        h.counts = j.at("counts").get<std::array<long long, kClassCount>>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("histogram JSON: ") + e.what());
    }
    for (auto c : h.counts)
        if (c < 0) throw ValidationError("histogram counts must be non-negative");
    return h;
}

}  // namespace ripelab
