// ripelab command-line interface.
// Exit codes: 0 success, 2 validation error, 3 stage failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ripelab.hpp"

namespace fs = std::filesystem;
using namespace ripelab;

namespace {

struct Globals {
    std::optional<std::uint64_t> seed;
    int threads = 1;
    std::string out_dir;
    std::string config;
};

fs::path require_out_dir(const Globals& g) {
    if (g.out_dir.empty()) throw ValidationError("--out-dir is required");
    fs::create_directories(g.out_dir);
    return g.out_dir;
}

nlohmann::json cli_meta(const Globals& g, const std::string& command) {
    return {{"command", command}, {"seed", g.seed.value_or(0)}};
}

std::string cli_meta_line(const Globals& g, const std::string& command) {
    return "command=" + command + " seed=" + std::to_string(g.seed.value_or(0));
}

// Masks directory -> tracks.json; optional registered images named <frame_id>.png give mean_rgb.
void cmd_track(const Globals& g, const std::string& masks_dir, const std::string& images_dir, const std::string& out,
               const TrackParams& params) {
    const auto frames = load_mask_directory(masks_dir);
    TrackSet set = associate(frames, params);
    if (!images_dir.empty())
        for (auto& t : set.tracks)
            for (auto& e : t.entries) {
                const RgbImage img = read_rgb(fs::path(images_dir) / (e.session_id + ".png"));
                e.mean_rgb = extract_berry_chip(img, frames[static_cast<std::size_t>(e.frame_index)].find(e.instance_id)->runs).mean_rgb;
            }
    auto j = trackset_to_json(set);
    j["meta"] = cli_meta(g, "track");
    write_text_file(out, j.dump(2) + "\n");
    std::cout << set.tracks.size() << " tracks over " << frames.size() << " frames\n";
}

std::vector<Rgb> instance_pixels(const RgbImage& img, const std::vector<Run>& runs, bool erode_first) {
    std::vector<Rgb> px;
    if (erode_first) {
        px = instance_pixels(img, erode(runs), false);
        if (!px.empty()) return px;
    }
    for_each_pixel(runs, [&](int r, int c) {
        if (img.contains(r, c)) px.push_back({double(img.at(r, c, 0)), double(img.at(r, c, 1)), double(img.at(r, c, 2))});
    });
    return px;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ripelab: cranberry ripeness analysis from time-series imagery"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--seed", g.seed, "Random seed")->group("Global");
    app.add_option("--threads", g.threads, "Worker threads for independent frames")->check(CLI::PositiveNumber)->group("Global");
    app.add_option("--out-dir", g.out_dir, "Output directory")->group("Global");
    app.add_option("--config", g.config, "Config file (synth or pipeline)")->group("Global");
    for (auto* opt : app.get_options()) opt->configurable(false);
    app.fallthrough();

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic bog series with ground truth");

    // calibrate
    auto* calibrate = app.add_subcommand("calibrate", "Fit gray-card calibration and correct images");
    std::string manifest_path;
    calibrate->add_option("--manifest", manifest_path, "Session manifest")->required();

    // register
    auto* reg = app.add_subcommand("register", "Register every frame of a series to its first frame");
    std::string series_path, corr_path;
    RansacParams ransac;
    MatchParams match;
    reg->add_option("--series", series_path, "Series file")->required();
    reg->add_option("--correspondences", corr_path, "Precomputed correspondences per frame id");
    reg->add_option("--inlier-threshold", ransac.inlier_threshold, "RANSAC inlier threshold (px)");
    reg->add_option("--ratio", match.ratio, "Descriptor ratio-test threshold");

    // track
    auto* trk = app.add_subcommand("track", "Associate berry masks across frames");
    std::string masks_dir, images_dir, track_out;
    TrackParams track_params;
    trk->add_option("--masks-dir", masks_dir, "Directory of per-frame mask files")->required();
    trk->add_option("--images-dir", images_dir, "Registered images <frame_id>.png for mean colour");
    trk->add_option("--out", track_out, "Output tracks JSON")->required();
    trk->add_option("--iou-threshold", track_params.iou_threshold);
    trk->add_option("--max-gap", track_params.max_gap);
    trk->add_flag("--spawn-tracks", track_params.spawn_tracks);

    // classes
    auto* classes = app.add_subcommand("classes", "Colour classes: fit or apply");
    classes->require_subcommand(1);
    auto* cfit = classes->add_subcommand("fit", "Fit five colour classes from berry pixels");
    auto* capply = classes->add_subcommand("apply", "Label berries and build class histograms");
    std::string cl_masks, cl_images, cl_out, cl_model, cl_bog;
    std::size_t sample_cap = 500000;
    bool erode_masks = false;
    std::vector<int> override_map;
    for (auto* sc : {cfit, capply}) {
        sc->add_option("--masks-dir", cl_masks)->required();
        sc->add_option("--images-dir", cl_images, "Calibrated registered images <frame_id>.png")->required();
        sc->add_option("--out", cl_out)->required();
        sc->add_flag("--erode", erode_masks, "Drop a 1-px mask boundary before using pixels");
    }
    cfit->add_option("--sample-cap", sample_cap);
    cfit->add_option("--class-of-cluster", override_map, "Human override: class for each cluster")->expected(kClassCount);
    capply->add_option("--model", cl_model)->required();
    capply->add_option("--bog", cl_bog, "Bog id recorded in the histograms")->required();

    // ratio
    auto* ratio = app.add_subcommand("ratio", "Ripeness-ratio table from class histograms");
    std::string hist_path, bog_filter, ratio_out;
    double threshold = 0.6;
    ratio->add_option("--histograms", hist_path)->required();
    ratio->add_option("--bog", bog_filter, "Restrict to one bog");
    ratio->add_option("--out", ratio_out)->required();
    ratio->add_option("--threshold", threshold, "Risk threshold");

    // embed
    auto* embed = app.add_subcommand("embed", "UMAP embedding and ripeness axis");
    std::string features_path, embed_out;
    UmapParams umap;
    embed->add_option("--features", features_path, "Feature CSV");
    embed->add_option("--out", embed_out, "Output embedding CSV");
    embed->add_option("--n-neighbors", umap.n_neighbors);
    embed->add_option("--min-dist", umap.min_dist);
    embed->add_option("--n-epochs", umap.n_epochs);
    auto* compare = embed->add_subcommand("compare", "Rank feature extractors by path linearity and monotonicity");
    std::vector<std::string> compare_files;
    compare->add_option("--features", compare_files, "Feature CSVs, one per extractor")->required()->expected(2, -1);

    // report
    auto* report = app.add_subcommand("report", "Emit SVG charts from analysis outputs");
    std::string rep_hist, rep_emb, rep_series;
    report->add_option("--histograms", rep_hist);
    report->add_option("--embedding", rep_emb);
    report->add_option("--series", rep_series, "Series file for date labels");

    // run
    auto* run = app.add_subcommand("run", "Run the whole pipeline from a config file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*synth) {
            SynthConfig cfg = g.config.empty() ? SynthConfig{} : synth_config_from_json(detail::parse_json_file(g.config));
            if (g.seed) cfg.seed = *g.seed;
            const auto dir = require_out_dir(g);
            const auto ds = generate(cfg);
            write_dataset(ds, dir);
            const nlohmann::json pipeline{{"series", "series.json"},  {"masks_dir", "masks"},
                                          {"features", "features_linear.csv"}, {"out_dir", "run"},
                                          {"seed", cfg.seed}};
            write_text_file(dir / "pipeline.json", pipeline.dump(2) + "\n");
            std::cout << "wrote " << ds.frames.size() << " frames of " << cfg.n_berries << " berries to " << dir.string()
                      << "\n";
        } else if (*calibrate) {
            const auto dir = require_out_dir(g);
            const auto m = load_manifest(manifest_path);
            if (!m.card_patches) throw ValidationError("manifest has no card_patches");
            const auto model = fit_calibration(*m.card_patches);
            for (std::size_t k = 0; k < m.image_paths.size(); ++k) {
                const auto name = m.image_paths[k].stem().string() + "_calibrated.png";
                write_png(dir / name, apply_calibration(model, read_rgb(m.image_paths[k])),
                          {{"session_id", m.session_id}, {"seed", std::to_string(g.seed.value_or(0))}});
            }
            auto j = calibration_to_json(model);
            j["session_id"] = m.session_id;
            j["meta"] = cli_meta(g, "calibrate");
            write_text_file(dir / "calibration.json", j.dump(2) + "\n");
            std::cout << "gain " << format_fixed(model.gain[0], 4) << " " << format_fixed(model.gain[1], 4) << " "
                      << format_fixed(model.gain[2], 4) << "\n";
        } else if (*reg) {
            const auto dir = require_out_dir(g);
            const auto series = load_series(series_path);
            if (series.sessions.empty()) throw ValidationError("series has no sessions");
            std::optional<nlohmann::json> provided;
            if (!corr_path.empty()) provided = detail::parse_json_file(corr_path);
            const RgbImage reference = read_rgb(series.sessions[0].image_paths.front());
            const GrayImage ref_gray = to_gray(reference);
            const std::uint64_t seed = g.seed.value_or(0);
            parallel_for(series.sessions.size(), g.threads, [&](std::size_t i) {
                const auto& s = series.sessions[i];
                const RgbImage moving = i == 0 ? reference : read_rgb(s.image_paths.front());
                Homography h;
                if (i > 0) {
                    std::vector<Correspondence> matches;
                    if (provided && provided->contains(s.session_id))
                        matches = correspondences_from_json((*provided)[s.session_id]);
                    else
                        matches = detect_and_match(to_gray(moving), ref_gray, match);
                    h = estimate_homography(matches, seed + i, ransac);
                }
                const auto warped = warp_to_reference(moving, h);
                auto j = homography_to_json(h);
                j["frame"] = s.session_id;
                j["meta"] = cli_meta(g, "register");
                write_text_file(dir / ("h_" + s.session_id + ".json"), j.dump(2) + "\n");
                write_png(dir / "registered" / (s.session_id + ".png"), warped.image);
                write_png(dir / "valid" / (s.session_id + ".png"), warped.valid);
            });
            std::cout << "registered " << series.sessions.size() << " frames\n";
        } else if (*trk) {
            cmd_track(g, masks_dir, images_dir, track_out, track_params);
        } else if (*cfit) {
            std::vector<Rgb> all;
            for (const auto& set : load_mask_directory(cl_masks)) {
                const RgbImage img = read_rgb(fs::path(cl_images) / (set.frame_id + ".png"));
                for (const auto& inst : set.instances) {
                    const auto px = instance_pixels(img, inst.runs, erode_masks);
                    all.insert(all.end(), px.begin(), px.end());
                }
            }
            const std::uint64_t seed = g.seed.value_or(0);
            auto model = fit_color_classes(sample_pixels(all, sample_cap, seed), seed);
            if (!override_map.empty()) {
                std::array<int, kClassCount> m{};
                std::copy(override_map.begin(), override_map.end(), m.begin());
                model = with_class_override(model, m);
            }
            auto j = class_model_to_json(model);
            j["meta"] = cli_meta(g, "classes fit");
            write_text_file(cl_out, j.dump(2) + "\n");
            std::cout << "k-means objective " << format_double(model.objective) << "\n";
        } else if (*capply) {
            const auto model = class_model_from_json(detail::parse_json_file(cl_model));
            nlohmann::json hist = nlohmann::json::array();
            for (const auto& set : load_mask_directory(cl_masks)) {
                const RgbImage img = read_rgb(fs::path(cl_images) / (set.frame_id + ".png"));
                std::vector<int> labels;
                for (const auto& inst : set.instances) {
                    const auto px = instance_pixels(img, inst.runs, erode_masks);
                    if (!px.empty()) labels.push_back(label_berry(px, model));
                }
                auto h = class_histogram(labels, set.frame_id);
                h.bog_id = cl_bog;
                if (!set.capture_date) throw ValidationError("mask set " + set.frame_id + " has no capture_date");
                h.capture_date = *set.capture_date;
                hist.push_back(histogram_to_json(h));
            }
            write_text_file(cl_out, nlohmann::json{{"meta", cli_meta(g, "classes apply")}, {"histograms", hist}}.dump(2) + "\n");
        } else if (*ratio) {
            const auto j = detail::parse_json_file(hist_path);
            std::vector<ClassHistogram> hs;
            for (const auto& h : j.at("histograms")) {
                auto ch = histogram_from_json(h);
                if (bog_filter.empty() || ch.bog_id == bog_filter) hs.push_back(std::move(ch));
            }
            if (hs.empty()) throw ValidationError("no histograms for bog " + bog_filter);
            const auto table = ratio_table(hs);
            write_text_file(ratio_out, ratio_table_to_csv(table, cli_meta_line(g, "ratio")));
            for (const auto& row : table.rows) {
                const auto idx = risk_flag(row.values, threshold);
                std::cout << row.bog_id << ": " << (idx ? "reaches " + format_double(threshold) + " on " + row.dates[*idx]
                                                        : "below " + format_double(threshold))
                          << "\n";
            }
        } else if (*compare) {
            std::vector<ExtractorEmbedding> embeddings;
            const std::uint64_t seed = g.seed.value_or(0);
            for (const auto& f : compare_files) {
                const auto result = embed_features(load_features(f), umap, seed);
                embeddings.push_back(extractor_embedding(fs::path(f).stem().string(), result.rows));
            }
            std::string out = "rank,extractor,linearity,monotonicity,score\n";
            for (const auto& s : select_extractor_report(embeddings))
                out += std::to_string(s.rank) + "," + s.name + "," + format_fixed(s.linearity, 4) + "," +
                       format_fixed(s.monotonicity, 4) + "," + format_fixed(s.score, 4) + "\n";
            if (!g.out_dir.empty()) write_text_file(require_out_dir(g) / "extractor_ranking.csv", out);
            std::cout << out;
        } else if (*embed) {
            if (features_path.empty() || embed_out.empty()) throw ValidationError("embed needs --features and --out");
            const auto result = embed_features(load_features(features_path), umap, g.seed.value_or(0));
            write_text_file(embed_out, embedding_to_csv(result.rows, cli_meta_line(g, "embed")));
        } else if (*report) {
            const auto dir = require_out_dir(g);
            const auto meta = cli_meta_line(g, "report");
            if (rep_hist.empty() && rep_emb.empty()) throw ValidationError("report needs --histograms or --embedding");
            if (!rep_hist.empty()) {
                std::vector<ClassHistogram> hs;
                for (const auto& h : detail::parse_json_file(rep_hist).at("histograms")) hs.push_back(histogram_from_json(h));
                write_text_file(dir / "histograms.svg", histograms_svg(hs, meta));
            }
            if (!rep_emb.empty()) {
                const auto rows = embedding_from_csv(read_text_file(rep_emb));
                std::vector<std::string> dates;
                if (!rep_series.empty())
                    for (const auto& s : load_series(rep_series).sessions) dates.push_back(s.capture_date);
                write_text_file(dir / "embedding.svg", embedding_svg(rows, meta));
                write_text_file(dir / "ripeness.svg", ripeness_svg(rows, dates, meta));
            }
        } else if (*run) {
            if (g.config.empty()) throw ValidationError("run needs --config");
            PipelineConfig cfg = load_pipeline_config(g.config);
            if (g.seed) cfg.seed = *g.seed;
            if (!g.out_dir.empty()) cfg.out_dir = detail::absolute_normal(g.out_dir);
            cfg.threads = g.threads;
            const auto summary = run_pipeline(cfg, [](const std::string& msg) { std::cerr << msg << "\n"; });
            std::cout << "report bundle: " << summary.bundle_dir.string() << "\n";
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
