#include <functional>
#include <random>

#include <gtest/gtest.h>

#include "ripelab.hpp"

using namespace ripelab;

namespace {

const std::vector<std::string> kDates{"2023-08-02", "2023-08-16", "2023-08-25", "2023-08-31", "2023-09-09", "2023-09-14"};

// Ripeness rows as printed in the season table.
const std::map<std::string, std::vector<double>> kTable{
    {"A5", {0.007, 0.082, 0.331, 0.497, 0.902, 1}}, {"I15", {0.001, 0.108, 0.167, 0.409, 0.874, 1}},
    {"J12", {0.002, 0.088, 0.419, 0.609, 0.968, 1}}, {"K4", {0.012, 0.151, 0.339, 0.433, 0.872, 1}},
    {"A4", {0.127, 0.453, 0.926, 1.118, 0.808, 1}},  {"B7", {0.035, 0.217, 0.622, 0.798, 1.119, 1}},
    {"I3", {0.010, 0.079, 0.347, 0.678, 1.121, 1}}};

// Berry counts reproducing a row: 2000 berries per date, 1000 red on the
// final date, round(1000 * ratio) red before it.
std::vector<ClassHistogram> histograms_for_row(const std::string& bog, const std::vector<double>& ratios) {
    std::vector<ClassHistogram> hs;
    for (std::size_t d = 0; d < ratios.size(); ++d) {
        const long long red = std::llround(1000.0 * ratios[d]);
        ClassHistogram h;
        h.bog_id = bog;
        h.session_id = bog + "-" + std::to_string(d);
        h.capture_date = kDates[d];
        h.counts = {2000 - red, 0, 0, red / 3, red - red / 3};
        hs.push_back(h);
    }
    return hs;
}

std::vector<Rgb> blob(const Rgb& center, double sigma, int n, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, sigma);
    std::vector<Rgb> out;
    for (int i = 0; i < n; ++i) out.push_back({center[0] + g(rng), center[1] + g(rng), center[2] + g(rng)});
    return out;
}

// Generator colours at the centre of each class bin.
std::array<Rgb, kClassCount> class_colors() {
    SynthConfig cfg;
    std::array<Rgb, kClassCount> c{};
    for (int k = 0; k < kClassCount; ++k) c[k] = ripening_color(cfg, 0.1 + 0.2 * k);
    return c;
}

double brute_force_objective(const std::vector<Rgb>& px) {
    // Restricted-growth strings enumerate every partition into <= 5 blocks once.
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
                for (int c = 0; c < 3; ++c) {
                    const double d = px[j][c] - sum[a[j]][c] / cnt[a[j]];
                    cost += d * d;
                }
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

}  // namespace

TEST(KMeans, RecoversWellSeparatedBlobs) {
    std::mt19937_64 rng(10);
    // Increasing R - G, pairwise >= 60 apart.
    const std::array<Rgb, kClassCount> centers{Rgb{40, 200, 40}, Rgb{90, 150, 60}, Rgb{150, 120, 50}, Rgb{200, 70, 60},
                                               Rgb{150, 20, 40}};
    std::vector<Rgb> px;
    for (const auto& c : centers) {
        const auto b = blob(c, 2.0, 300, rng);
        px.insert(px.end(), b.begin(), b.end());
    }
    const auto model = fit_color_classes(px, 1);
    for (int k = 0; k < kClassCount; ++k) {
        const int cluster = static_cast<int>(std::find(model.class_of_cluster.begin(), model.class_of_cluster.end(), k + 1) -
                                             model.class_of_cluster.begin());
        for (int c = 0; c < 3; ++c) EXPECT_LT(std::abs(model.centroids[cluster][c] - centers[k][c]), 3.0) << k;
    }
}

TEST(KMeans, IdenticalPixelsRejected) {
    const std::vector<Rgb> px(50, Rgb{1, 2, 3});
    try {
        fit_color_classes(px, 0);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("< 5 distinct values"), std::string::npos);
    }
}

TEST(KMeans, MatchesExhaustiveOptimumOnTinyInstance) {
    const std::vector<Rgb> px{{10, 200, 30}, {10, 200, 30}, {10, 200, 30}, {90, 150, 40}, {90, 150, 40},
                              {160, 90, 50}, {160, 90, 50}, {160, 90, 50}, {210, 40, 40}, {210, 40, 40},
                              {120, 10, 30}, {120, 10, 30}};
    const double oracle = brute_force_objective(px);
    const auto model = fit_color_classes(px, 4);
    EXPECT_NEAR(model.objective, oracle, 1e-9);
}

TEST(KMeans, InputOrderDoesNotMatter) {
    std::mt19937_64 rng(3);
    std::vector<Rgb> px;
    for (const auto& c : class_colors()) {
        const auto b = blob(c, 8.0, 100, rng);
        px.insert(px.end(), b.begin(), b.end());
    }
    auto shuffled = px;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_EQ(fit_color_classes(px, 9), fit_color_classes(shuffled, 9));
}

TEST(KMeans, HumanOverride) {
    std::mt19937_64 rng(3);
    std::vector<Rgb> px;
    for (const auto& c : class_colors()) {
        const auto b = blob(c, 2.0, 50, rng);
        px.insert(px.end(), b.begin(), b.end());
    }
    const auto m = with_class_override(fit_color_classes(px, 2), {5, 4, 3, 2, 1});
    EXPECT_EQ(m.source, ClassMappingSource::human_override);
    EXPECT_THROW(with_class_override(m, {1, 1, 3, 4, 5}), ValidationError);
    EXPECT_EQ(class_model_from_json(class_model_to_json(m)), m);
}

TEST(Label, CentroidOfClassTwo) {
    ColorClassModel m;
    m.centroids = class_colors();
    m.class_of_cluster = {1, 2, 3, 4, 5};
    const std::vector<Rgb> px(10, m.centroids[1]);
    EXPECT_EQ(label_berry(px, m), 2);
}

TEST(Label, MajorityAndRiperTieBreak) {
    ColorClassModel m;
    m.centroids = class_colors();
    m.class_of_cluster = {1, 2, 3, 4, 5};
    std::vector<Rgb> px(6, m.centroids[3]);
    px.insert(px.end(), 4, m.centroids[0]);
    EXPECT_EQ(label_berry(px, m), 4);
    std::vector<Rgb> tie(3, m.centroids[0]);
    tie.insert(tie.end(), 3, m.centroids[2]);
    EXPECT_EQ(label_berry(tie, m), 3);
    auto doubled = px;
    doubled.insert(doubled.end(), px.begin(), px.end());
    EXPECT_EQ(label_berry(doubled, m), label_berry(px, m));
}

TEST(Label, SynthClassColorsAtSigmaFive) {
    std::mt19937_64 rng(21);
    const auto colors = class_colors();
    std::vector<std::vector<Rgb>> berries;
    std::vector<int> truth;
    std::vector<Rgb> all;
    for (int b = 0; b < 100; ++b) {
        const int cls = b % kClassCount;
        berries.push_back(blob(colors[cls], 5.0, 300, rng));
        truth.push_back(cls + 1);
        all.insert(all.end(), berries.back().begin(), berries.back().end());
    }
    const auto model = fit_color_classes(all, 5);
    for (std::size_t b = 0; b < berries.size(); ++b) EXPECT_EQ(label_berry(berries[b], model), truth[b]) << b;
}

TEST(Label, EarlySynthFrameIsGreen) {
    SynthConfig cfg;
    const auto ds = generate(cfg);
    std::vector<std::vector<std::vector<Rgb>>> per_frame;
    std::vector<Rgb> all;
    for (const auto& f : ds.frames) {
        auto& berries = per_frame.emplace_back();
        for (const auto& inst : f.masks.instances) {
            auto& px = berries.emplace_back();
            for_each_pixel(erode(inst.runs), [&](int r, int c) {
                px.push_back({double(f.reference.at(r, c, 0)), double(f.reference.at(r, c, 1)), double(f.reference.at(r, c, 2))});
            });
            all.insert(all.end(), px.begin(), px.end());
        }
    }
    const auto model = fit_color_classes(sample_pixels(all, 500000, 1), 1);
    std::vector<int> labels;
    for (const auto& px : per_frame[0]) labels.push_back(label_berry(px, model));
    const auto f = *class_histogram(labels).fractions();
    EXPECT_GE(f[0] + f[1], 0.95);
}

TEST(Histogram, CountsAndFractions) {
    const std::vector<int> labels{1, 1, 5};
    const auto h = class_histogram(labels, "s");
    EXPECT_EQ(h.counts, (std::array<long long, 5>{2, 0, 0, 0, 1}));
    const auto f = *h.fractions();
    EXPECT_DOUBLE_EQ(f[0], 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(f[4], 1.0 / 3.0);
    EXPECT_THROW(class_histogram(std::vector<int>{0}), ValidationError);
}

TEST(Histogram, EmptyIsNoDetections) {
    const auto h = class_histogram(std::vector<int>{});
    EXPECT_TRUE(h.no_detections());
    EXPECT_FALSE(h.fractions().has_value());
    EXPECT_EQ(histogram_from_json(histogram_to_json(h)), h);
}

TEST(Ratio, ReproducesSeasonTableRows) {
    for (const auto& [bog, row] : kTable) {
        const auto ratios = ripeness_ratio(histograms_for_row(bog, row));
        ASSERT_EQ(ratios.size(), row.size());
        for (std::size_t i = 0; i < row.size(); ++i) EXPECT_EQ(format_fixed(ratios[i], 3), format_fixed(row[i], 3)) << bog << " " << i;
        EXPECT_EQ(ratios.back(), 1.0);
    }
}

TEST(Ratio, ValuesAboveOneNotClamped) {
    const auto ratios = ripeness_ratio(histograms_for_row("A4", kTable.at("A4")));
    EXPECT_NEAR(ratios[3], 1.118, 5e-4);
    EXPECT_GT(ratios[3], 1.0);
}

TEST(Ratio, ConstantHistogramsGiveOnes) {
    std::vector<ClassHistogram> hs(4);
    for (auto& h : hs) h.counts = {3, 1, 4, 1, 5};
    for (double r : ripeness_ratio(hs)) EXPECT_EQ(r, 1.0);
}

TEST(Ratio, UndefinedWhenFinalHasNoRed) {
    std::vector<ClassHistogram> hs(3);
    for (auto& h : hs) h.counts = {5, 5, 0, 0, 0};
    try {
        ripeness_ratio(hs);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("undefined ratio"), std::string::npos);
    }
    EXPECT_THROW(ripeness_ratio(std::vector<ClassHistogram>(1)), ValidationError);
}

TEST(Ratio, NoDetectionDateIsEmptyCell) {
    auto hs = histograms_for_row("A5", kTable.at("A5"));
    hs[1].counts = {};
    const auto table = ratio_table(hs);
    EXPECT_TRUE(std::isnan(table.rows[0].values[1]));
    const auto csv = ratio_table_to_csv(table);
    EXPECT_NE(csv.find("A5,0.007,,0.331"), std::string::npos) << csv;
}

TEST(Ratio, TableCsvRoundTrip) {
    std::vector<ClassHistogram> all;
    for (const auto& [bog, row] : kTable) {
        const auto hs = histograms_for_row(bog, row);
        all.insert(all.end(), hs.begin(), hs.end());
    }
    const auto table = ratio_table(all);
    ASSERT_EQ(table.rows.size(), kTable.size());
    const auto csv = ratio_table_to_csv(table, "config_hash=x");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "# config_hash=x");
    EXPECT_EQ(ratio_table_from_csv(csv), table);
}

TEST(RiskFlag, SeasonTableRows) {
    const auto a5 = ripeness_ratio(histograms_for_row("A5", kTable.at("A5")));
    const auto j12 = ripeness_ratio(histograms_for_row("J12", kTable.at("J12")));
    EXPECT_EQ(kDates[*risk_flag(a5, 0.6)], "2023-09-09");
    EXPECT_EQ(kDates[*risk_flag(j12, 0.6)], "2023-08-31");
    EXPECT_FALSE(risk_flag(std::vector<double>(6, 0.0)).has_value());
}
