// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>

#include "ripelab.hpp"

using namespace ripelab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool ok = false;
    std::string detail;
};

struct Criterion {
    std::string name;
    double budget_s;
    std::function<Outcome()> check;
};

std::string fmt(double v, int digits = 3) { return format_fixed(v, digits); }

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2e", v);
    return buf;
}

const std::vector<std::string> kDates{"2023-08-02", "2023-08-16", "2023-08-25", "2023-08-31", "2023-09-09", "2023-09-14"};

std::vector<ClassHistogram> histograms_for_row(const std::string& bog, const std::vector<double>& ratios) {
    std::vector<ClassHistogram> hs;
    for (std::size_t d = 0; d < ratios.size(); ++d) {
        const long long red = std::llround(1000.0 * ratios[d]);
        ClassHistogram h;
        h.bog_id = bog;
        h.session_id = bog + "-" + std::to_string(d);
        h.capture_date = kDates[d];
        h.counts = {2000 - red, 0, 0, 0, red};
        hs.push_back(h);
    }
    return hs;
}

Outcome ratio_arithmetic() {
    const std::vector<double> a5{0.007, 0.082, 0.331, 0.497, 0.902, 1};
    const std::vector<double> a4{0.127, 0.453, 0.926, 1.118, 0.808, 1};
    const auto r5 = ripeness_ratio(histograms_for_row("A5", a5));
    const auto r4 = ripeness_ratio(histograms_for_row("A4", a4));
    bool ok = true;
    std::string row;
    for (std::size_t i = 0; i < a5.size(); ++i) {
        ok &= format_fixed(r5[i], 3) == format_fixed(a5[i], 3);
        row += (i ? "," : "") + format_fixed(r5[i], 3);
    }
    ok &= format_fixed(r4[3], 3) == "1.118";
    return {ok, "A5=" + row + " A4[3]=" + format_fixed(r4[3], 3)};
}

Outcome risk() {
    const auto a5 = ripeness_ratio(histograms_for_row("A5", {0.007, 0.082, 0.331, 0.497, 0.902, 1}));
    const auto j12 = ripeness_ratio(histograms_for_row("J12", {0.002, 0.088, 0.419, 0.609, 0.968, 1}));
    const auto fa = risk_flag(a5, 0.6), fj = risk_flag(j12, 0.6);
    const std::string da = fa ? kDates[*fa] : "none", dj = fj ? kDates[*fj] : "none";
    return {da == "2023-09-09" && dj == "2023-08-31", "A5=" + da + " J12=" + dj};
}

std::vector<GrayPatchSample> card(double gain, double offset, double sigma, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, sigma);
    std::vector<GrayPatchSample> p;
    for (double ref : {243.0, 200.0, 160.0, 122.0, 85.0, 52.0}) {
        GrayPatchSample s;
        s.reference_value = ref;
        for (auto& v : s.measured_rgb) v = (ref - offset) / gain + (sigma > 0 ? g(rng) : 0.0);
        p.push_back(s);
    }
    return p;
}

Outcome calibration() {
    std::mt19937_64 rng(2024);
    const auto exact = fit_calibration(card(0.8, 5.0, 0.0, rng));
    double exact_err = 0.0;
    for (int c = 0; c < 3; ++c)
        exact_err = std::max({exact_err, std::abs(exact.gain[c] - 0.8), std::abs(exact.offset[c] - 5.0)});
    double worst_gain = 0.0, worst_offset = 0.0;
    for (int t = 0; t < 100; ++t) {
        const auto m = fit_calibration(card(0.8, 5.0, 1.0, rng));
        for (int c = 0; c < 3; ++c) {
            worst_gain = std::max(worst_gain, std::abs(m.gain[c] - 0.8));
            worst_offset = std::max(worst_offset, std::abs(m.offset[c] - 5.0));
        }
    }
    return {exact_err < 1e-9 && worst_gain < 0.05 && worst_offset < 3.0,
            "noise-free |d|=" + sci(exact_err) + " worst gain " + fmt(worst_gain) + " worst offset " +
                fmt(worst_offset)};
}

Outcome homography() {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(-1.0, 1.0), ux(0.0, 320.0), uy(0.0, 240.0);
    std::normal_distribution<double> g(0.0, 0.1);
    int good = 0;
    for (int trial = 0; trial < 100; ++trial) {
        Eigen::Matrix3d h;
        const double th = 0.1 * u(rng), s = 1.0 + 0.1 * u(rng);
        h << s * std::cos(th), -s * std::sin(th), 20 * u(rng), s * std::sin(th), s * std::cos(th), 20 * u(rng),
            3e-4 * u(rng), 3e-4 * u(rng), 1.0;
        std::vector<Correspondence> m;
        for (int i = 0; i < 100; ++i) {
            const Point2 src{ux(rng), uy(rng)};
            Point2 dst = i < 30 ? Point2{ux(rng), uy(rng)} : transfer(h, src);
            if (i >= 30) dst = {dst.x + g(rng), dst.y + g(rng)};
            m.push_back({src, dst, 1.0});
        }
        std::shuffle(m.begin(), m.end(), rng);
        if (corner_transfer_error(estimate_homography(m, trial).h, h, 320, 240) < 0.5) ++good;
    }
    return {good >= 99, std::to_string(good) + "/100 trials under 0.5 px"};
}

const SynthDataset& synth() {
    static const SynthDataset ds = generate(SynthConfig{});
    return ds;
}

Outcome tracking() {
    const auto& ds = synth();
    std::vector<InstanceMaskSet> frames;
    for (const auto& f : ds.frames) frames.push_back(f.masks);
    const auto set = associate(frames);
    int agree = 0, total = 0;
    for (const auto& t : set.tracks) {
        const int berry = ds.frames[0].berry_of_instance[t.entries[0].instance_id];
        for (const auto& e : t.entries) {
            agree += ds.frames[e.frame_index].berry_of_instance[e.instance_id] == berry;
            ++total;
        }
    }
    const int expected = ds.config.n_berries * ds.config.n_frames;
    return {agree == expected && total == expected && set.tracks.size() == 14u,
            std::to_string(agree) + "/" + std::to_string(expected) + " identities, " + std::to_string(set.tracks.size()) +
                " tracks"};
}

std::vector<Rgb> blob(const Rgb& c, double sigma, int n, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, sigma);
    std::vector<Rgb> out;
    for (int i = 0; i < n; ++i) out.push_back({c[0] + g(rng), c[1] + g(rng), c[2] + g(rng)});
    return out;
}

double brute_force(const std::vector<Rgb>& px) {
    const std::size_t n = px.size();
    std::vector<int> a(n, 0);
    double best = std::numeric_limits<double>::infinity();
    std::function<void(std::size_t, int)> rec = [&](std::size_t i, int blocks) {
        if (i == n) {
            std::array<Rgb, kClassCount> sum{};
            std::array<int, kClassCount> cnt{};
            for (std::size_t j = 0; j < n; ++j) {
                for (int c = 0; c < 3; ++c) sum[a[j]][c] += px[j][c];
                ++cnt[a[j]];
            }
            double cost = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                for (int c = 0; c < 3; ++c) cost += std::pow(px[j][c] - sum[a[j]][c] / cnt[a[j]], 2);
            best = std::min(best, cost);
            return;
        }
        for (int b = 0; b <= std::min(blocks, kClassCount - 1); ++b) {
            a[i] = b;
            rec(i + 1, std::max(blocks, b + 1));
        }
    };
    rec(0, 0);
    return best;
}

Outcome albedo() {
    std::mt19937_64 rng(10);
    const std::array<Rgb, kClassCount> centers{Rgb{40, 200, 40}, Rgb{90, 150, 60}, Rgb{150, 120, 50}, Rgb{200, 70, 60},
                                               Rgb{150, 20, 40}};
    std::vector<Rgb> px;
    for (const auto& c : centers) {
        const auto b = blob(c, 2.0, 300, rng);
        px.insert(px.end(), b.begin(), b.end());
    }
    const auto m = fit_color_classes(px, 1);
    double centroid_err = 0.0;
    for (int k = 0; k < kClassCount; ++k) {
        const auto it = std::find(m.class_of_cluster.begin(), m.class_of_cluster.end(), k + 1);
        const auto& c = m.centroids[static_cast<std::size_t>(it - m.class_of_cluster.begin())];
        for (int ch = 0; ch < 3; ++ch) centroid_err = std::max(centroid_err, std::abs(c[ch] - centers[k][ch]));
    }

    SynthConfig cfg;
    std::vector<std::vector<Rgb>> berries;
    std::vector<Rgb> all;
    for (int b = 0; b < 100; ++b) {
        berries.push_back(blob(ripening_color(cfg, 0.1 + 0.2 * (b % kClassCount)), 5.0, 300, rng));
        all.insert(all.end(), berries.back().begin(), berries.back().end());
    }
    const auto labeler = fit_color_classes(all, 5);
    int correct = 0;
    for (int b = 0; b < 100; ++b) correct += label_berry(berries[b], labeler) == b % kClassCount + 1;

    const std::vector<Rgb> tiny{{10, 200, 30}, {10, 200, 30}, {10, 200, 30}, {90, 150, 40}, {90, 150, 40}, {160, 90, 50},
                                {160, 90, 50}, {160, 90, 50}, {210, 40, 40}, {210, 40, 40}, {120, 10, 30}, {120, 10, 30}};
    const double gap = std::abs(fit_color_classes(tiny, 4).objective - brute_force(tiny));
    return {centroid_err < 3.0 && correct == 100 && gap < 1e-9,
            "centroid err " + fmt(centroid_err) + ", labels " + std::to_string(correct) + "/100, objective gap " +
                sci(gap)};
}

Outcome umap() {
    const auto table = synth_features(states_by_frame(synth()), 64, FeatureMode::linear, 3);
    const auto x = feature_matrix(table);
    const auto a = umap_embed(x, {}, 5);
    double residual = 0.0;
    for (std::size_t i = 0; i < a.knn.indices.size(); ++i)
        residual = std::max(residual, std::abs(smooth_knn_sum(a.knn.distances[i], a.rho[i], a.sigma[i]) -
                                               std::log2(static_cast<double>(a.knn.k))));
    const auto b = umap_embed(x, {}, 5);
    const bool same = a.points.size() == b.points.size() &&
                      std::memcmp(a.points.data(), b.points.data(), a.points.size() * sizeof(Point2d)) == 0;

    std::mt19937_64 rng(7);
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd c(378, 64);
    for (int i = 0; i < 378; ++i)
        for (int d = 0; d < 64; ++d) c(i, d) = g(rng) + (d == i / 126 ? 10.0 : 0.0);
    const auto m = umap_embed(c, {}, 42);
    std::array<Point2d, 3> centroid{};
    for (int i = 0; i < 378; ++i)
        for (int d = 0; d < 2; ++d) centroid[i / 126][d] += m.points[i][d] / 126.0;
    int pure = 0;
    for (int i = 0; i < 378; ++i) {
        int best = 0;
        double bd = 1e300;
        for (int k = 0; k < 3; ++k) {
            const double d = std::hypot(m.points[i][0] - centroid[k][0], m.points[i][1] - centroid[k][1]);
            if (d < bd) bd = d, best = k;
        }
        pure += best == i / 126;
    }
    const double purity = pure / 378.0;
    return {residual < 1e-3 && purity >= 0.95 && same,
            "residual " + sci(residual) + ", purity " + fmt(purity) + ", reproducible " + (same ? "yes" : "no")};
}

Outcome end_to_end() {
    const auto& ds = synth();
    const auto states = states_by_frame(ds);
    const auto good = embed_features(synth_features(states, 64, FeatureMode::linear, 3), {}, 11);
    const auto bad = embed_features(synth_features(states, 64, FeatureMode::scrambled, 4), {}, 11);
    std::map<int, std::pair<std::vector<double>, std::vector<double>>> per;
    for (const auto& r : good.rows) {
        per[r.berry_id].first.push_back(r.ripeness);
        per[r.berry_id].second.push_back(ds.frames[r.timepoint].states[r.berry_id]);
    }
    double sum = 0.0;
    for (const auto& [id, s] : per) sum += spearman(s.first, s.second);
    const double mean = sum / static_cast<double>(per.size());
    const std::vector<ExtractorEmbedding> es{extractor_embedding("scrambled", bad.rows),
                                             extractor_embedding("linear", good.rows)};
    const auto ranking = select_extractor_report(es);
    return {mean >= 0.9 && per.size() == 14u && ranking.front().name == "linear",
            "mean Spearman " + fmt(mean) + " over " + std::to_string(per.size()) + " berries, top extractor " +
                ranking.front().name};
}

std::map<std::string, std::string> read_bundle(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) out[fs::relative(e.path(), dir).generic_string()] = read_text_file(e.path());
    return out;
}

Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / "ripelab_acceptance";
    fs::remove_all(root);
    write_dataset(synth(), root / "data");
    std::vector<std::map<std::string, std::string>> bundles;
    for (const char* out : {"run1", "run2"}) {
        const nlohmann::json j{{"series", "data/series.json"},
                               {"masks_dir", "data/masks"},
                               {"features", "data/features_linear.csv"},
                               {"out_dir", out},
                               {"seed", 7}};
        const auto summary = run_pipeline(pipeline_config_from_json(j, root));
        bundles.push_back(read_bundle(summary.bundle_dir));
    }
    fs::remove_all(root);
    const bool same = bundles[0] == bundles[1] && bundles[0].size() >= bundle_files().size();
    return {same, std::to_string(bundles[0].size()) + " bundle files, identical " + (same ? "yes" : "no")};
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {"ratio-arithmetic", 1, ratio_arithmetic}, {"risk-flag", 1, risk},
        {"calibration-recovery", 5, calibration},  {"homography-robustness", 30, homography},
        {"track-association", 30, tracking},        {"albedo", 30, albedo},
        {"umap", 60, umap},                         {"end-to-end", 60, end_to_end},
        {"determinism", 600, determinism},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = secs < c.budget_s;
        const bool pass = o.ok && in_time;
        failures += !pass;
        std::printf("%s %s (%.2f s, budget %.0f s) %s%s\n", pass ? "PASS" : "FAIL", c.name.c_str(), secs, c.budget_s,
                    o.detail.c_str(), in_time ? "" : " [over budget]");
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
