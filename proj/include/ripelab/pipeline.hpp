#pragma once

// Stage orchestration: calibrate -> register -> track -> classes -> ratio ->
// embed -> report. Each stage records a stamp holding a key derived from
// the config and the content of its inputs, plus the hashes of what it
// wrote; a stage whose key and outputs still match is skipped.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ripelab/albedo.hpp"
#include "ripelab/calib.hpp"
#include "ripelab/embed.hpp"
#include "ripelab/error.hpp"
#include "ripelab/format.hpp"
#include "ripelab/hash.hpp"
#include "ripelab/image_io.hpp"
#include "ripelab/masks.hpp"
#include "ripelab/model.hpp"
#include "ripelab/register.hpp"
#include "ripelab/report.hpp"
#include "ripelab/track.hpp"

namespace ripelab {

namespace fs = std::filesystem;

inline const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names{"calibrate", "register", "track", "classes", "ratio", "embed", "report"};
    return names;
}

struct PipelineConfig {
    // Paths as written in the config, and resolved against its directory.
    std::string series_ref, masks_ref, features_ref, correspondences_ref;
    fs::path series, masks_dir, features, correspondences, out_dir;
    std::uint64_t seed = 0;
    int threads = 1;
    double threshold = 0.6;
    std::vector<std::string> stages = stage_names();
    MatchParams match;
    RansacParams ransac;
    TrackParams track;
    std::size_t class_sample_cap = 500000;
    bool class_erode = false;  // drop the mask boundary before sampling and labelling
    std::optional<std::array<int, kClassCount>> class_override;
    UmapParams umap;

    std::uint64_t register_seed() const { return seed; }
    std::uint64_t classes_seed() const { return seed + 1; }
    std::uint64_t embed_seed() const { return seed + 2; }
};

inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const fs::path& base_dir) {
    PipelineConfig c;
    auto resolve = [&](const std::string& ref) { return ref.empty() ? fs::path{} : detail::absolute_normal(base_dir / ref); };
    try {
        c.series_ref = j.at("series").get<std::string>();
        c.masks_ref = j.value("masks_dir", std::string{});
        c.features_ref = j.value("features", std::string{});
        c.out_dir = resolve(j.value("out_dir", std::string{"out"}));
        c.seed = j.value("seed", std::uint64_t{0});
        c.threads = j.value("threads", 1);
        c.threshold = j.value("threshold", 0.6);
        if (j.contains("stages")) c.stages = j["stages"].get<std::vector<std::string>>();
        if (j.contains("register")) {
            const auto& r = j["register"];
            c.ransac.inlier_threshold = r.value("inlier_threshold", c.ransac.inlier_threshold);
            c.ransac.confidence = r.value("confidence", c.ransac.confidence);
            c.ransac.max_iterations = r.value("max_iterations", c.ransac.max_iterations);
            c.match.ratio = r.value("ratio", c.match.ratio);
            c.match.max_corners = r.value("max_corners", c.match.max_corners);
            c.correspondences_ref = r.value("correspondences", std::string{});
        }
        if (j.contains("track")) {
            const auto& t = j["track"];
            c.track.iou_threshold = t.value("iou_threshold", c.track.iou_threshold);
            c.track.max_gap = t.value("max_gap", c.track.max_gap);
            c.track.spawn_tracks = t.value("spawn_tracks", c.track.spawn_tracks);
        }
        if (j.contains("classes")) {
            const auto& k = j["classes"];
            c.class_sample_cap = k.value("sample_cap", c.class_sample_cap);
            c.class_erode = k.value("erode", c.class_erode);
            if (k.contains("class_of_cluster")) c.class_override = k["class_of_cluster"].get<std::array<int, kClassCount>>();
        }
        if (j.contains("umap")) {
            const auto& u = j["umap"];
            c.umap.n_neighbors = u.value("n_neighbors", c.umap.n_neighbors);
            c.umap.min_dist = u.value("min_dist", c.umap.min_dist);
            c.umap.spread = u.value("spread", c.umap.spread);
            c.umap.n_epochs = u.value("n_epochs", c.umap.n_epochs);
            c.umap.negative_sample_rate = u.value("negative_sample_rate", c.umap.negative_sample_rate);
            c.umap.learning_rate = u.value("learning_rate", c.umap.learning_rate);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("pipeline config: ") + e.what());
    }
    c.series = resolve(c.series_ref);
    c.masks_dir = resolve(c.masks_ref);
    c.features = resolve(c.features_ref);
    c.correspondences = resolve(c.correspondences_ref);
    if (c.threads < 1) throw ValidationError("threads must be >= 1");
    if (!(c.threshold > 0.0)) throw ValidationError("threshold must be positive");
    if (c.class_sample_cap < kClassCount) throw ValidationError("classes.sample_cap too small");
    for (const auto& s : c.stages)
        if (std::find(stage_names().begin(), stage_names().end(), s) == stage_names().end())
            throw ValidationError("unknown stage: " + s);
    return c;
}

inline PipelineConfig load_pipeline_config(const fs::path& path) {
    return pipeline_config_from_json(detail::parse_json_file(path), detail::absolute_normal(path).parent_path());
}

// Everything that can change an output. The output directory and thread
// count are excluded.
inline nlohmann::json pipeline_config_canonical(const PipelineConfig& c) {
    nlohmann::json j{{"series", c.series_ref},
                     {"masks_dir", c.masks_ref},
                     {"features", c.features_ref},
                     {"seed", c.seed},
                     {"threshold", c.threshold},
                     {"stages", c.stages},
                     {"register",
                      {{"inlier_threshold", c.ransac.inlier_threshold},
                       {"confidence", c.ransac.confidence},
                       {"max_iterations", c.ransac.max_iterations},
                       {"ratio", c.match.ratio},
                       {"max_corners", c.match.max_corners},
                       {"correspondences", c.correspondences_ref}}},
                     {"track",
                      {{"iou_threshold", c.track.iou_threshold},
                       {"max_gap", c.track.max_gap},
                       {"spawn_tracks", c.track.spawn_tracks}}},
                     {"classes", {{"sample_cap", c.class_sample_cap}, {"erode", c.class_erode}}},
                     {"umap",
                      {{"n_neighbors", c.umap.n_neighbors},
                       {"min_dist", c.umap.min_dist},
                       {"spread", c.umap.spread},
                       {"n_epochs", c.umap.n_epochs},
                       {"negative_sample_rate", c.umap.negative_sample_rate},
                       {"learning_rate", c.umap.learning_rate}}}};
    if (c.class_override) j["classes"]["class_of_cluster"] = *c.class_override;
    return j;
}

inline std::string config_hash(const PipelineConfig& c) { return sha256_hex(pipeline_config_canonical(c).dump()); }

struct ArtifactMeta {
    std::string config_hash;
    std::map<std::string, std::uint64_t> seeds;

    explicit ArtifactMeta(const PipelineConfig& c)
        : config_hash(ripelab::config_hash(c)),
          seeds{{"seed", c.seed},
                {"register_seed", c.register_seed()},
                {"classes_seed", c.classes_seed()},
                {"embed_seed", c.embed_seed()}} {}

    nlohmann::json json() const { return {{"config_hash", config_hash}, {"seeds", seeds}}; }

    std::string line() const {
        std::string s = "config_hash=" + config_hash;
        for (const auto& [k, v] : seeds) s += " " + k + "=" + std::to_string(v);
        return s;
    }

    PngText png_text() const {
        PngText t{{"config_hash", config_hash}};
        for (const auto& [k, v] : seeds) t[k] = std::to_string(v);
        return t;
    }
};

// Runs fn(0..n-1) on up to `threads` workers. The error from the lowest
// failing index is rethrown so failures are reported deterministically.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n);
    std::vector<std::exception_ptr> errors(n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
}

struct StageStatus {
    std::string stage;
    bool skipped = false;
};

struct RunSummary {
    std::vector<StageStatus> stages;
    fs::path bundle_dir;

    bool all_skipped() const {
        return std::all_of(stages.begin(), stages.end(), [](const StageStatus& s) { return s.skipped; });
    }
};

inline std::vector<std::string> bundle_files() {
    return {"table.csv", "histograms.svg", "embedding.svg", "ripeness.svg"};
}

namespace detail {

inline std::string hash_directory(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    Sha256 h;
    for (const auto& f : files) h.field(f.lexically_relative(dir).generic_string()).field(sha256_file(f));
    return h.hex();
}

inline std::string hash_input(const fs::path& p) {
    return fs::is_directory(p) ? "dir:" + hash_directory(p) : sha256_file(p);
}

class Runner {
public:
    Runner(const PipelineConfig& cfg, std::function<void(const std::string&)> log)
        : cfg_(cfg), meta_(cfg), out_(cfg.out_dir), log_(std::move(log)) {}

    RunSummary run() {
        check_inputs();
        fs::create_directories(out_ / ".cache");
        RunSummary summary;
        summary.bundle_dir = out_ / "report";
        for (const auto& stage : stage_names()) {
            if (!requested(stage)) continue;
            summary.stages.push_back({stage, run_stage(stage)});
        }
        return summary;
    }

private:
    using Outputs = std::vector<std::string>;  // paths relative to out_dir

    bool requested(const std::string& s) const {
        return std::find(cfg_.stages.begin(), cfg_.stages.end(), s) != cfg_.stages.end();
    }

    static void require(const std::string& stage, const fs::path& p, const std::string& what) {
        if (p.empty() || !fs::exists(p)) throw StageError(stage, "missing input: " + what + (p.empty() ? "" : " " + p.filename().string()));
    }

    // External inputs are checked before any work is done.
    void check_inputs() const {
        if (requested("calibrate") || requested("register") || requested("track") || requested("classes"))
            require("calibrate", cfg_.series, "series file");
        if (requested("register") && !cfg_.correspondences_ref.empty())
            require("register", cfg_.correspondences, "correspondences file");
        if (requested("track")) require("track", cfg_.masks_dir, "masks directory");
        if (requested("classes")) require("classes", cfg_.masks_dir, "masks directory");
        if (requested("embed")) require("embed", cfg_.features, "features file");
    }

    // Upstream stages whose outputs feed `stage`, and its external inputs.
    std::vector<std::string> upstream(const std::string& stage) const {
        static const std::map<std::string, std::vector<std::string>> deps{
            {"calibrate", {}},           {"register", {"calibrate"}}, {"track", {"register"}},
            {"classes", {"register"}},   {"ratio", {"classes"}},      {"embed", {}},
            {"report", {"classes", "ratio", "embed"}}};
        return deps.at(stage);
    }

    std::vector<fs::path> external(const std::string& stage) const {
        if (stage == "calibrate") return {cfg_.series};
        if (stage == "register") return cfg_.correspondences_ref.empty() ? std::vector<fs::path>{} : std::vector{cfg_.correspondences};
        if (stage == "track" || stage == "classes") return {cfg_.masks_dir};
        if (stage == "embed") return {cfg_.features};
        return {};
    }

    std::string stage_key(const std::string& stage) {
        Sha256 h;
        h.field(stage).field(meta_.config_hash);
        for (const auto& p : external(stage)) h.field(hash_input(p));
        if (stage == "calibrate")
            for (const auto& s : series().sessions) {
                h.field(s.session_id).field(manifest_to_json(s, s.image_paths.front().parent_path()).dump());
                for (const auto& img : s.image_paths) h.field(sha256_file(img));
            }
        for (const auto& up : upstream(stage)) {
            if (!requested(up)) {
                // Consume whatever a previous run left behind.
                const auto stamp = read_stamp(up);
                if (!stamp) throw StageError(stage, "missing input: outputs of stage " + up);
                h.field(stamp->dump());
            } else {
                h.field(stamps_.at(up).dump());
            }
        }
        return h.hex();
    }

    fs::path stamp_path(const std::string& stage) const { return out_ / ".cache" / (stage + ".json"); }

    std::optional<nlohmann::json> read_stamp(const std::string& stage) const {
        const auto p = stamp_path(stage);
        if (!fs::exists(p)) return std::nullopt;
        try {
            return nlohmann::json::parse(read_text_file(p));
        } catch (const nlohmann::json::exception&) {
            return std::nullopt;
        }
    }

    bool up_to_date(const nlohmann::json& stamp, const std::string& key) const {
        if (stamp.value("key", std::string{}) != key || !stamp.contains("outputs")) return false;
        for (const auto& [rel, hash] : stamp["outputs"].items()) {
            const auto p = out_ / rel;
            if (!fs::is_regular_file(p) || sha256_file(p) != hash.get<std::string>()) return false;
        }
        return true;
    }

    bool run_stage(const std::string& stage) {
        try {
            const auto key = stage_key(stage);
            if (const auto stamp = read_stamp(stage); stamp && up_to_date(*stamp, key)) {
                stamps_[stage] = *stamp;
                log_("stage " + stage + ": up to date, skipped");
                return true;
            }
            log_("stage " + stage + ": running");
            Outputs outputs = execute(stage);
            std::sort(outputs.begin(), outputs.end());
            nlohmann::json stamp{{"stage", stage}, {"key", key}, {"outputs", nlohmann::json::object()}};
            for (const auto& rel : outputs) stamp["outputs"][rel] = sha256_file(out_ / rel);
            write_text_file(stamp_path(stage), stamp.dump(2) + "\n");
            stamps_[stage] = stamp;
            return false;
        } catch (const StageError&) {
            throw;
        } catch (const Error& e) {
            throw StageError(stage, e.what());
        } catch (const std::exception& e) {
            throw StageError(stage, e.what());
        }
    }

    Outputs execute(const std::string& stage) {
        if (stage == "calibrate") return calibrate();
        if (stage == "register") return register_frames();
        if (stage == "track") return track();
        if (stage == "classes") return classes();
        if (stage == "ratio") return ratio();
        if (stage == "embed") return embed();
        return report();
    }

    const SessionSeries& series() {
        if (!series_) series_ = load_series(cfg_.series);
        if (series_->sessions.empty()) throw ValidationError("series has no sessions");
        return *series_;
    }

    static std::string calibrated_name(const std::string& sid, std::size_t k) {
        return "calibrated/" + sid + (k == 0 ? "" : "_" + std::to_string(k)) + ".png";
    }

    Outputs calibrate() {
        const auto& sessions = series().sessions;
        std::vector<Outputs> per(sessions.size());
        parallel_for(sessions.size(), cfg_.threads, [&](std::size_t i) {
            const auto& s = sessions[i];
            const bool have_card = s.card_patches.has_value();
            const CalibrationModel model = have_card ? fit_calibration(*s.card_patches) : CalibrationModel::identity();
            for (std::size_t k = 0; k < s.image_paths.size(); ++k) {
                const auto rel = calibrated_name(s.session_id, k);
                write_png(out_ / rel, apply_calibration(model, read_rgb(s.image_paths[k])), meta_.png_text());
                per[i].push_back(rel);
            }
            auto j = calibration_to_json(model);
            j["session_id"] = s.session_id;
            j["source"] = have_card ? "card" : "identity";
            j["meta"] = meta_.json();
            const auto rel = "calibration/" + s.session_id + ".json";
            write_text_file(out_ / rel, j.dump(2) + "\n");
            per[i].push_back(rel);
        });
        Outputs out;
        for (auto& p : per) out.insert(out.end(), p.begin(), p.end());
        return out;
    }

    Outputs register_frames() {
        const auto& sessions = series().sessions;
        const RgbImage reference = read_rgb(out_ / calibrated_name(sessions[0].session_id, 0));
        const GrayImage ref_gray = to_gray(reference);
        std::optional<nlohmann::json> provided;
        if (!cfg_.correspondences_ref.empty()) provided = parse_json_file(cfg_.correspondences);

        std::vector<Outputs> per(sessions.size());
        parallel_for(sessions.size(), cfg_.threads, [&](std::size_t i) {
            const auto& sid = sessions[i].session_id;
            const RgbImage moving = i == 0 ? reference : read_rgb(out_ / calibrated_name(sid, 0));
            Homography h;
            if (i > 0) {
                std::vector<Correspondence> matches;
                if (provided && provided->contains(sid))
                    matches = correspondences_from_json((*provided)[sid]);
                else
                    matches = detect_and_match(to_gray(moving), ref_gray, match_params());
                h = estimate_homography(matches, cfg_.register_seed() + i, cfg_.ransac);
            }
            const auto warped = warp_to_reference(moving, h);
            auto j = homography_to_json(h);
            j["frame"] = sid;
            j["reference"] = sessions[0].session_id;
            j["meta"] = meta_.json();
            per[i] = {"homography/h_" + sid + ".json", "registered/" + sid + ".png", "valid/" + sid + ".png"};
            write_text_file(out_ / per[i][0], j.dump(2) + "\n");
            write_png(out_ / per[i][1], warped.image, meta_.png_text());
            write_png(out_ / per[i][2], warped.valid, meta_.png_text());
        });
        Outputs out;
        for (auto& p : per) out.insert(out.end(), p.begin(), p.end());
        return out;
    }

    MatchParams match_params() const { return cfg_.match; }

    // Mask sets in session order; every mask frame must name a session.
    std::vector<InstanceMaskSet> masks_in_session_order() {
        auto sets = load_mask_directory(cfg_.masks_dir);
        std::map<std::string, InstanceMaskSet> by_id;
        for (auto& s : sets) {
            const auto id = s.frame_id;
            if (!by_id.emplace(id, std::move(s)).second) throw ValidationError("duplicate mask frame " + id);
        }
        std::vector<InstanceMaskSet> out;
        for (const auto& s : series().sessions) {
            auto it = by_id.find(s.session_id);
            if (it == by_id.end()) throw ValidationError("no masks for session " + s.session_id);
            auto set = std::move(it->second);
            set.capture_date = s.capture_date;
            out.push_back(std::move(set));
            by_id.erase(it);
        }
        if (!by_id.empty()) throw ValidationError("masks for unknown session " + by_id.begin()->first);
        return out;
    }

    Outputs track() {
        const auto frames = masks_in_session_order();
        TrackSet set = associate(frames, cfg_.track);
        Outputs out;
        for (auto& t : set.tracks) {
            for (auto& e : t.entries) {
                const RgbImage img = read_rgb(out_ / ("registered/" + e.session_id + ".png"));
                const GrayImage valid = read_gray(out_ / ("valid/" + e.session_id + ".png"));
                const auto* inst = frames[static_cast<std::size_t>(e.frame_index)].find(e.instance_id);
                const auto chip = extract_berry_chip(img, inst->runs, &valid);
                e.mean_rgb = chip.mean_rgb;
                const auto rel = "chips/" + std::to_string(t.berry_id) + "/" + e.session_id + ".png";
                write_png(out_ / rel, chip.chip, meta_.png_text());
                out.push_back(rel);
            }
        }
        auto j = trackset_to_json(set);
        j["meta"] = meta_.json();
        write_text_file(out_ / "tracks.json", j.dump(2) + "\n");
        out.push_back("tracks.json");
        return out;
    }

    static GrayImage read_gray(const fs::path& p) {
        const RgbImage rgb = read_rgb(p);
        GrayImage g(rgb.width(), rgb.height());
        for (int r = 0; r < rgb.height(); ++r)
            for (int c = 0; c < rgb.width(); ++c) g.at(r, c) = rgb.at(r, c, 0);
        return g;
    }

    Outputs classes() {
        const auto frames = masks_in_session_order();
        const auto& sessions = series().sessions;
        // pixels[f][i]: calibrated, registered pixels of instance i in frame f.
        std::vector<std::vector<std::vector<Rgb>>> pixels(frames.size());
        std::vector<Rgb> all;
        for (std::size_t f = 0; f < frames.size(); ++f) {
            const RgbImage img = read_rgb(out_ / ("registered/" + frames[f].frame_id + ".png"));
            const GrayImage valid = read_gray(out_ / ("valid/" + frames[f].frame_id + ".png"));
            for (const auto& inst : frames[f].instances) {
                std::vector<Rgb> px;
                auto collect = [&](const std::vector<Run>& runs) {
                    for_each_pixel(runs, [&](int r, int c) {
                        if (img.contains(r, c) && valid.at(r, c))
                            px.push_back({double(img.at(r, c, 0)), double(img.at(r, c, 1)), double(img.at(r, c, 2))});
                    });
                };
                if (cfg_.class_erode) collect(erode(inst.runs));
                if (px.empty()) collect(inst.runs);
                all.insert(all.end(), px.begin(), px.end());
                pixels[f].push_back(std::move(px));
            }
        }
        const auto sample = sample_pixels(all, cfg_.class_sample_cap, cfg_.classes_seed());
        ColorClassModel model = fit_color_classes(sample, cfg_.classes_seed());
        if (cfg_.class_override) model = with_class_override(model, *cfg_.class_override);

        nlohmann::json hist = nlohmann::json::array();
        nlohmann::json labels = nlohmann::json::object();
        for (std::size_t f = 0; f < frames.size(); ++f) {
            std::vector<int> ls;
            nlohmann::json frame_labels = nlohmann::json::object();
            for (std::size_t i = 0; i < frames[f].instances.size(); ++i) {
                if (pixels[f][i].empty()) continue;
                const int l = label_berry(pixels[f][i], model);
                ls.push_back(l);
                frame_labels[std::to_string(frames[f].instances[i].id)] = l;
            }
            ClassHistogram h = class_histogram(ls, sessions[f].session_id);
            h.bog_id = sessions[f].bog_id;
            h.capture_date = sessions[f].capture_date;
            hist.push_back(histogram_to_json(h));
            labels[frames[f].frame_id] = frame_labels;
        }
        auto jm = class_model_to_json(model);
        jm["meta"] = meta_.json();
        jm["sample_size"] = sample.size();
        write_text_file(out_ / "class_model.json", jm.dump(2) + "\n");
        const nlohmann::json jh{{"meta", meta_.json()}, {"histograms", hist}, {"labels", labels}};
        write_text_file(out_ / "histograms.json", jh.dump(2) + "\n");
        return {"class_model.json", "histograms.json"};
    }

    std::vector<ClassHistogram> load_histograms() const {
        const auto j = parse_json_file(out_ / "histograms.json");
        std::vector<ClassHistogram> hs;
        for (const auto& h : j.at("histograms")) hs.push_back(histogram_from_json(h));
        return hs;
    }

    Outputs ratio() {
        const auto hs = load_histograms();
        const auto table = ratio_table(hs);
        write_text_file(out_ / "report/table.csv", ratio_table_to_csv(table, meta_.line()));
        nlohmann::json risk = nlohmann::json::array();
        for (const auto& row : table.rows) {
            const auto idx = risk_flag(row.values, cfg_.threshold);
            risk.push_back({{"bog", row.bog_id},
                            {"threshold", cfg_.threshold},
                            {"first_date", idx ? nlohmann::json(row.dates[*idx]) : nlohmann::json(nullptr)}});
        }
        write_text_file(out_ / "risk.json", nlohmann::json{{"meta", meta_.json()}, {"flags", risk}}.dump(2) + "\n");
        return {"report/table.csv", "risk.json"};
    }

    Outputs embed() {
        const auto table = load_features(cfg_.features);
        const auto result = embed_features(table, cfg_.umap, cfg_.embed_seed());
        write_text_file(out_ / "embedding.csv", embedding_to_csv(result.rows, meta_.line()));
        const nlohmann::json axis{{"meta", meta_.json()},
                                  {"direction", result.axis.direction},
                                  {"origin", result.axis.origin},
                                  {"lo", result.axis.lo},
                                  {"hi", result.axis.hi},
                                  {"a", result.model.a},
                                  {"b", result.model.b},
                                  {"n_neighbors", result.model.params.n_neighbors}};
        write_text_file(out_ / "ripeness_axis.json", axis.dump(2) + "\n");
        return {"embedding.csv", "ripeness_axis.json"};
    }

    Outputs report() {
        Outputs out;
        const auto meta = meta_.line();
        if (fs::exists(out_ / "histograms.json")) {
            write_text_file(out_ / "report/histograms.svg", histograms_svg(load_histograms(), meta));
            out.push_back("report/histograms.svg");
        }
        if (fs::exists(out_ / "report/table.csv")) out.push_back("report/table.csv");
        if (fs::exists(out_ / "embedding.csv")) {
            const auto rows = embedding_from_csv(read_text_file(out_ / "embedding.csv"));
            std::vector<std::string> dates;
            if (!cfg_.series_ref.empty() && fs::exists(cfg_.series))
                for (const auto& s : series().sessions) dates.push_back(s.capture_date);
            write_text_file(out_ / "report/embedding.svg", embedding_svg(rows, meta));
            write_text_file(out_ / "report/ripeness.svg", ripeness_svg(rows, dates, meta));
            out.push_back("report/embedding.svg");
            out.push_back("report/ripeness.svg");
        }
        if (out.empty()) throw StageError("report", "missing input: no analysis outputs");
        return out;
    }

    const PipelineConfig& cfg_;
    ArtifactMeta meta_;
    fs::path out_;
    std::function<void(const std::string&)> log_;
    std::optional<SessionSeries> series_;
    std::map<std::string, nlohmann::json> stamps_;
};

}  // namespace detail

inline RunSummary run_pipeline(const PipelineConfig& config,
                               std::function<void(const std::string&)> log = [](const std::string&) {}) {
    if (config.out_dir.empty()) throw ValidationError("out_dir is required");
    return detail::Runner(config, std::move(log)).run();
}

}  // namespace ripelab
