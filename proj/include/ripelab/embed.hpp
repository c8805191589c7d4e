#pragma once

// UMAP embedding of per-berry feature vectors into 2-D and the line-fit
// ripeness axis measured along it.
//
// The graph construction follows the usual recipe: exact k nearest neighbours,
// a per-point bandwidth chosen so the fuzzy neighbour weights sum to
// log2(k), fuzzy-union symmetrization, and a layout optimized by
// negative-sampling SGD on the curve 1 / (1 + a d^(2b)).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ripelab/error.hpp"
#include "ripelab/format.hpp"
#include "ripelab/model.hpp"
#include "ripelab/stats.hpp"

namespace ripelab {

using Point2d = std::array<double, 2>;

struct UmapParams {
    int n_neighbors = 0;  // 0 selects min(15, N - 1)
    double min_dist = 0.1;
    double spread = 1.0;
    int n_epochs = 500;
    int negative_sample_rate = 5;
    double learning_rate = 1.0;
    double init_noise = 1e-4;  // jitter added to the PCA layout
};

struct KnnGraph {
    int k = 0;
    std::vector<std::vector<int>> indices;  // excludes self, nearest first
    std::vector<std::vector<double>> distances;
};

struct FuzzyEdge {
    int head = 0;
    int tail = 0;
    double weight = 0.0;
};

struct EmbeddingModel {
    std::vector<Point2d> points;
    KnnGraph knn;
    std::vector<double> rho;
    std::vector<double> sigma;
    std::vector<FuzzyEdge> graph;  // symmetric, both directions listed
    UmapParams params;             // resolved n_neighbors
    std::uint64_t seed = 0;
    double a = 0.0;
    double b = 0.0;
};

inline Eigen::MatrixXd feature_matrix(const FeatureTable& table) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(table.records.size()), static_cast<Eigen::Index>(table.dimension));
    for (std::size_t i = 0; i < table.records.size(); ++i)
        for (std::size_t d = 0; d < table.dimension; ++d)
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = table.records[i].vector[d];
    return x;
}

// Brute-force Euclidean kNN; ties broken by lower index.
inline KnnGraph exact_knn(const Eigen::MatrixXd& x, int k) {
    const int n = static_cast<int>(x.rows());
    KnnGraph g;
    g.k = k;
    g.indices.resize(n);
    g.distances.resize(n);
    std::vector<std::pair<double, int>> row(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        row.clear();
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            row.emplace_back((x.row(i) - x.row(j)).norm(), j);
        }
        std::partial_sort(row.begin(), row.begin() + k, row.end());
        for (int t = 0; t < k; ++t) {
            g.indices[i].push_back(row[t].second);
            g.distances[i].push_back(row[t].first);
        }
    }
    return g;
}

inline double smooth_knn_sum(std::span<const double> dists, double rho, double sigma) {
    double s = 0.0;
    for (double d : dists) {
        const double e = d - rho;
        s += e > 0.0 ? std::exp(-e / sigma) : 1.0;
    }
    return s;
}

// rho = nearest-neighbour distance; sigma by 64 bisection steps so the
// neighbour weights sum to log2(k).
inline void smooth_knn_calibrate(const KnnGraph& knn, std::vector<double>& rho, std::vector<double>& sigma) {
    const std::size_t n = knn.indices.size();
    const double target = std::log2(static_cast<double>(knn.k));
    rho.assign(n, 0.0);
    sigma.assign(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& d = knn.distances[i];
        rho[i] = d.empty() ? 0.0 : d.front();
        double lo = 0.0, hi = std::numeric_limits<double>::infinity(), mid = 1.0;
        for (int it = 0; it < 64; ++it) {
            const double s = smooth_knn_sum(d, rho[i], mid);
            if (std::abs(s - target) < 1e-12) break;
            if (s > target) {
                hi = mid;
                mid = 0.5 * (lo + hi);
            } else {
                lo = mid;
                mid = std::isinf(hi) ? mid * 2.0 : 0.5 * (lo + hi);
            }
        }
        sigma[i] = mid;
    }
}

// Fuzzy union w = w1 + w2 - w1*w2 of the directed membership strengths.
inline std::vector<FuzzyEdge> fuzzy_union(const KnnGraph& knn, std::span<const double> rho,
                                          std::span<const double> sigma) {
    std::map<std::pair<int, int>, double> directed;
    for (std::size_t i = 0; i < knn.indices.size(); ++i)
        for (std::size_t t = 0; t < knn.indices[i].size(); ++t) {
            const double e = knn.distances[i][t] - rho[i];
            directed[{static_cast<int>(i), knn.indices[i][t]}] = e > 0.0 ? std::exp(-e / sigma[i]) : 1.0;
        }
    std::map<std::pair<int, int>, double> sym;
    for (const auto& [key, w] : directed) {
        const auto rev = directed.find({key.second, key.first});
        const double w2 = rev == directed.end() ? 0.0 : rev->second;
        const double u = w + w2 - w * w2;
        sym[key] = u;
        sym[{key.second, key.first}] = u;
    }
    std::vector<FuzzyEdge> edges;
    edges.reserve(sym.size());
    for (const auto& [key, w] : sym) edges.push_back({key.first, key.second, w});
    return edges;
}

// Least-squares (a, b) so 1 / (1 + a x^(2b)) follows the target curve that is
// 1 below min_dist and exp(-(x - min_dist) / spread) above, on 300 samples of
// [0, 3 spread]. Levenberg-Marquardt from (1, 1).
inline std::pair<double, double> fit_ab(double min_dist, double spread = 1.0) {
    constexpr int samples = 300;
    std::vector<double> xs(samples), ys(samples);
    for (int i = 0; i < samples; ++i) {
        xs[i] = 3.0 * spread * i / (samples - 1);
        ys[i] = xs[i] < min_dist ? 1.0 : std::exp(-(xs[i] - min_dist) / spread);
    }
    auto sse = [&](double a, double b) {
        double s = 0.0;
        for (int i = 0; i < samples; ++i) {
            const double r = 1.0 / (1.0 + a * std::pow(xs[i], 2.0 * b)) - ys[i];
            s += r * r;
        }
        return s;
    };
    double a = 1.0, b = 1.0, lambda = 1e-3;
    double cost = sse(a, b);
    for (int it = 0; it < 500; ++it) {
        Eigen::Matrix2d jtj = Eigen::Matrix2d::Zero();
        Eigen::Vector2d jtr = Eigen::Vector2d::Zero();
        for (int i = 0; i < samples; ++i) {
            const double x = xs[i];
            const double u = x > 0.0 ? std::pow(x, 2.0 * b) : 0.0;
            const double den = 1.0 + a * u;
            const double f = 1.0 / den;
            const double da = -u / (den * den);
            const double db = x > 0.0 ? -a * u * 2.0 * std::log(x) / (den * den) : 0.0;
            const Eigen::Vector2d g(da, db);
            jtj += g * g.transpose();
            jtr += g * (f - ys[i]);
        }
        bool improved = false;
        for (int tries = 0; tries < 50 && !improved; ++tries) {
            Eigen::Matrix2d m = jtj;
            m.diagonal() *= (1.0 + lambda);
            const Eigen::Vector2d step = m.ldlt().solve(-jtr);
            const double na = a + step(0), nb = b + step(1);
            const double nc = sse(na, nb);
            if (std::isfinite(nc) && nc < cost) {
                const double rel = (cost - nc) / std::max(cost, 1e-300);
                a = na;
                b = nb;
                cost = nc;
                lambda = std::max(lambda / 10.0, 1e-12);
                improved = true;
                if (rel < 1e-15 && step.norm() < 1e-12) return {a, b};
            } else {
                lambda *= 10.0;
            }
        }
        if (!improved) break;
    }
    return {a, b};
}

// Top-two principal components, scaled so the largest |coordinate| is 10.
inline std::vector<Point2d> pca_layout(const Eigen::MatrixXd& x) {
    const Eigen::Index n = x.rows();
    const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
    // Eigen-decompose the smaller of the Gram and covariance matrices.
    Eigen::MatrixXd coords(n, 2);
    coords.setZero();
    if (n <= x.cols()) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(centered * centered.transpose());
        for (int c = 0; c < 2 && c < n; ++c) {
            const Eigen::Index idx = n - 1 - c;
            const double lambda = std::max(es.eigenvalues()(idx), 0.0);
            coords.col(c) = es.eigenvectors().col(idx) * std::sqrt(lambda);
        }
    } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(centered.transpose() * centered);
        const Eigen::Index d = x.cols();
        for (int c = 0; c < 2 && c < d; ++c) coords.col(c) = centered * es.eigenvectors().col(d - 1 - c);
    }
    for (int c = 0; c < 2; ++c) {
        Eigen::Index arg = 0;
        coords.col(c).cwiseAbs().maxCoeff(&arg);
        if (coords(arg, c) < 0.0) coords.col(c) *= -1.0;
    }
    const double max_abs = coords.cwiseAbs().maxCoeff();
    if (max_abs > 0.0) coords *= 10.0 / max_abs;
    std::vector<Point2d> out(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = {coords(i, 0), coords(i, 1)};
    return out;
}

namespace detail {

inline double clip4(double v) { return v > 4.0 ? 4.0 : (v < -4.0 ? -4.0 : v); }

}  // namespace detail

// Sequential negative-sampling SGD; bitwise reproducible for a fixed seed.
inline void optimize_layout(std::vector<Point2d>& emb, std::span<const FuzzyEdge> graph, double a, double b,
                            const UmapParams& params, std::mt19937_64& rng) {
    if (graph.empty()) return;
    double max_w = 0.0;
    for (const auto& e : graph) max_w = std::max(max_w, e.weight);
    std::vector<FuzzyEdge> edges;
    std::vector<double> eps;  // epochs per sample
    for (const auto& e : graph) {
        const double n_samples = params.n_epochs * (e.weight / max_w);
        if (n_samples < 1.0) continue;
        edges.push_back(e);
        eps.push_back(params.n_epochs / n_samples);
    }
    const int n = static_cast<int>(emb.size());
    std::vector<double> eps_neg(eps.size()), next_sample(eps), next_neg(eps.size());
    for (std::size_t i = 0; i < eps.size(); ++i) {
        eps_neg[i] = eps[i] / params.negative_sample_rate;
        next_neg[i] = eps_neg[i];
    }
    double alpha = params.learning_rate;
    for (int epoch = 0; epoch < params.n_epochs; ++epoch) {
        for (std::size_t i = 0; i < edges.size(); ++i) {
            if (next_sample[i] > epoch) continue;
            const int j = edges[i].head;
            const int k = edges[i].tail;
            auto& cur = emb[static_cast<std::size_t>(j)];
            auto& oth = emb[static_cast<std::size_t>(k)];
            double d2 = (cur[0] - oth[0]) * (cur[0] - oth[0]) + (cur[1] - oth[1]) * (cur[1] - oth[1]);
            double coeff = 0.0;
            if (d2 > 0.0) coeff = -2.0 * a * b * std::pow(d2, b - 1.0) / (a * std::pow(d2, b) + 1.0);
            for (int d = 0; d < 2; ++d) {
                const double g = detail::clip4(coeff * (cur[d] - oth[d]));
                cur[d] += g * alpha;
                oth[d] -= g * alpha;
            }
            next_sample[i] += eps[i];

            const int n_neg = static_cast<int>((epoch - next_neg[i]) / eps_neg[i]);
            for (int p = 0; p < n_neg; ++p) {
                const int m = static_cast<int>(rng() % static_cast<std::uint64_t>(n));
                const auto& neg = emb[static_cast<std::size_t>(m)];
                d2 = (cur[0] - neg[0]) * (cur[0] - neg[0]) + (cur[1] - neg[1]) * (cur[1] - neg[1]);
                if (d2 > 0.0) {
                    coeff = 2.0 * b / ((0.001 + d2) * (a * std::pow(d2, b) + 1.0));
                } else if (m == j) {
                    continue;
                } else {
                    coeff = 0.0;
                }
                for (int d = 0; d < 2; ++d) {
                    const double g = coeff > 0.0 ? detail::clip4(coeff * (cur[d] - neg[d])) : 4.0;
                    cur[d] += g * alpha;
                }
            }
            next_neg[i] += n_neg * eps_neg[i];
        }
        alpha = params.learning_rate * (1.0 - static_cast<double>(epoch + 1) / params.n_epochs);
    }
}

inline EmbeddingModel umap_embed(const Eigen::MatrixXd& features, UmapParams params, std::uint64_t seed) {
    const int n = static_cast<int>(features.rows());
    if (!features.allFinite()) throw ValidationError("features contain NaN or infinite values");
    if (n < 2) throw ValidationError("UMAP needs at least 2 points");
    if (params.n_neighbors == 0) params.n_neighbors = std::min(15, n - 1);
    if (params.n_neighbors < 1 || n < params.n_neighbors + 1)
        throw ValidationError("UMAP needs N >= n_neighbors + 1 (N=" + std::to_string(n) +
                              ", n_neighbors=" + std::to_string(params.n_neighbors) + ")");
    if (!(params.min_dist >= 0.0) || !(params.spread > 0.0) || params.n_epochs < 1)
        throw ValidationError("invalid UMAP parameters");

    EmbeddingModel model;
    model.params = params;
    model.seed = seed;
    model.knn = exact_knn(features, params.n_neighbors);
    smooth_knn_calibrate(model.knn, model.rho, model.sigma);
    model.graph = fuzzy_union(model.knn, model.rho, model.sigma);
    std::tie(model.a, model.b) = fit_ab(params.min_dist, params.spread);

    std::mt19937_64 rng(seed);
    model.points = pca_layout(features);
    if (params.init_noise > 0.0) {
        std::normal_distribution<double> noise(0.0, params.init_noise);
        for (auto& p : model.points) {
            p[0] += noise(rng);
            p[1] += noise(rng);
        }
    }
    optimize_layout(model.points, model.graph, model.a, model.b, params, rng);
    return model;
}

// ---------------------------------------------------------------------------
// Ripeness axis

struct RipenessAxis {
    Point2d direction{1.0, 0.0};  // unit
    Point2d origin{0.0, 0.0};     // foot of the coordinate origin on the fitted line
    double lo = 0.0;
    double hi = 1.0;

    double project(const Point2d& p) const {
        return (p[0] - origin[0]) * direction[0] + (p[1] - origin[1]) * direction[1];
    }
};

struct PrincipalAxes {
    Point2d centroid{};
    Point2d major{};  // unit
    double major_variance = 0.0;
    double minor_variance = 0.0;
};

inline PrincipalAxes principal_axes(std::span<const Point2d> points) {
    PrincipalAxes ax;
    const double n = static_cast<double>(points.size());
    for (const auto& p : points) {
        ax.centroid[0] += p[0] / n;
        ax.centroid[1] += p[1] / n;
    }
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (const auto& p : points) {
        const Eigen::Vector2d d(p[0] - ax.centroid[0], p[1] - ax.centroid[1]);
        cov += d * d.transpose() / n;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
    ax.major_variance = std::max(es.eigenvalues()(1), 0.0);
    ax.minor_variance = std::max(es.eigenvalues()(0), 0.0);
    Eigen::Vector2d v = es.eigenvectors().col(1).normalized();
    if (v(0) < 0.0 || (v(0) == 0.0 && v(1) < 0.0)) v = -v;
    ax.major = {v(0), v(1)};
    return ax;
}

// Total-least-squares line through the points, oriented so projections
// increase with time; lo/hi are the population extremes.
inline RipenessAxis fit_ripeness_axis(std::span<const Point2d> points, std::span<const int> timepoints) {
    if (points.size() != timepoints.size()) throw ValidationError("points and timepoints differ in length");
    if (std::set<int>(timepoints.begin(), timepoints.end()).size() < 2)
        throw ValidationError("ripeness axis needs at least 2 distinct timepoints");
    const auto ax = principal_axes(points);
    const double scale = std::max({1.0, std::abs(ax.centroid[0]), std::abs(ax.centroid[1])});
    if (!(ax.major_variance > 1e-24 * scale * scale)) throw FitError("zero-variance embedding");

    RipenessAxis axis;
    axis.direction = ax.major;
    std::vector<double> proj(points.size()), times(timepoints.begin(), timepoints.end());
    for (std::size_t i = 0; i < points.size(); ++i)
        proj[i] = points[i][0] * axis.direction[0] + points[i][1] * axis.direction[1];
    if (spearman(proj, times) < 0.0) {
        axis.direction = {-axis.direction[0], -axis.direction[1]};
        for (auto& p : proj) p = -p;
    }
    const double c = ax.centroid[0] * axis.direction[0] + ax.centroid[1] * axis.direction[1];
    axis.origin = {ax.centroid[0] - c * axis.direction[0], ax.centroid[1] - c * axis.direction[1]};
    for (std::size_t i = 0; i < points.size(); ++i) proj[i] = axis.project(points[i]);
    const auto [mn, mx] = std::minmax_element(proj.begin(), proj.end());
    axis.lo = *mn;
    axis.hi = *mx;
    if (!(axis.lo < axis.hi)) throw FitError("zero-variance embedding");
    return axis;
}

inline double ripeness_value(const RipenessAxis& axis, const Point2d& p) {
    const double t = (axis.project(p) - axis.lo) / (axis.hi - axis.lo);
    return std::clamp(t, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Extractor comparison

struct ExtractorEmbedding {
    std::string name;
    std::vector<int> berry_ids;
    std::vector<int> timepoints;
    std::vector<Point2d> points;
};

struct ExtractorScore {
    std::string name;
    double linearity = 0.0;     // share of 2-D variance on the major axis
    double monotonicity = 0.0;  // mean per-berry Spearman(projection, timepoint)
    double score = 0.0;         // linearity * monotonicity
    int rank = 0;               // 1 = best
};

inline ExtractorScore score_embedding(const ExtractorEmbedding& e) {
    ExtractorScore s;
    s.name = e.name;
    const auto ax = principal_axes(e.points);
    const double total = ax.major_variance + ax.minor_variance;
    s.linearity = total > 0.0 ? ax.major_variance / total : 0.0;

    std::vector<double> proj(e.points.size()), times(e.timepoints.begin(), e.timepoints.end());
    for (std::size_t i = 0; i < e.points.size(); ++i)
        proj[i] = e.points[i][0] * ax.major[0] + e.points[i][1] * ax.major[1];
    if (spearman(proj, times) < 0.0)
        for (auto& p : proj) p = -p;

    std::map<int, std::pair<std::vector<double>, std::vector<double>>> per_berry;
    for (std::size_t i = 0; i < proj.size(); ++i) {
        per_berry[e.berry_ids[i]].first.push_back(proj[i]);
        per_berry[e.berry_ids[i]].second.push_back(times[i]);
    }
    double sum = 0.0;
    int counted = 0;
    for (const auto& [id, series] : per_berry) {
        if (series.first.size() < 2) continue;
        sum += spearman(series.first, series.second);
        ++counted;
    }
    s.monotonicity = counted ? sum / counted : 0.0;
    s.score = s.linearity * s.monotonicity;
    return s;
}

inline std::vector<ExtractorScore> select_extractor_report(std::span<const ExtractorEmbedding> extractors) {
    if (extractors.size() < 2) throw ValidationError("extractor comparison needs at least 2 embeddings");
    auto keys = [](const ExtractorEmbedding& e) {
        if (e.berry_ids.size() != e.points.size() || e.timepoints.size() != e.points.size())
            throw ValidationError("embedding " + e.name + " has inconsistent lengths");
        std::set<std::pair<int, int>> k;
        for (std::size_t i = 0; i < e.points.size(); ++i) k.insert({e.berry_ids[i], e.timepoints[i]});
        return k;
    };
    const auto reference = keys(extractors.front());
    std::vector<ExtractorScore> out;
    for (const auto& e : extractors) {
        if (keys(e) != reference)
            throw ValidationError("embedding " + e.name + " covers a different (berry_id, timepoint) set");
        out.push_back(score_embedding(e));
    }
    std::stable_sort(out.begin(), out.end(), [](const ExtractorScore& a, const ExtractorScore& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.name < b.name;
    });
    for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = static_cast<int>(i) + 1;
    return out;
}

// ---------------------------------------------------------------------------
// Embedding tables

struct EmbeddingRow {
    int berry_id = 0;
    int timepoint = 0;
    double x = 0.0;
    double y = 0.0;
    double ripeness = 0.0;

    bool operator==(const EmbeddingRow&) const = default;
};

struct EmbeddingResult {
    EmbeddingModel model;
    RipenessAxis axis;
    std::vector<EmbeddingRow> rows;  // same order as the feature records
};

inline EmbeddingResult embed_features(const FeatureTable& table, const UmapParams& params, std::uint64_t seed) {
    EmbeddingResult out;
    out.model = umap_embed(feature_matrix(table), params, seed);
    std::vector<int> times;
    for (const auto& r : table.records) times.push_back(r.timepoint);
    out.axis = fit_ripeness_axis(out.model.points, times);
    for (std::size_t i = 0; i < table.records.size(); ++i) {
        const auto& p = out.model.points[i];
        out.rows.push_back({table.records[i].berry_id, table.records[i].timepoint, p[0], p[1],
                            ripeness_value(out.axis, p)});
    }
    return out;
}

inline ExtractorEmbedding extractor_embedding(std::string name, std::span<const EmbeddingRow> rows) {
    ExtractorEmbedding e;
    e.name = std::move(name);
    for (const auto& r : rows) {
        e.berry_ids.push_back(r.berry_id);
        e.timepoints.push_back(r.timepoint);
        e.points.push_back({r.x, r.y});
    }
    return e;
}

inline std::string embedding_to_csv(std::span<const EmbeddingRow> rows, const std::string& comment = {}) {
    std::string out;
    if (!comment.empty()) out += "# " + comment + "\n";
    out += "berry_id,timepoint,x,y,ripeness\n";
    for (const auto& r : rows)
        out += std::to_string(r.berry_id) + ',' + std::to_string(r.timepoint) + ',' + format_double(r.x) + ',' +
               format_double(r.y) + ',' + format_double(r.ripeness) + '\n';
    return out;
}

inline std::vector<EmbeddingRow> embedding_from_csv(std::string_view text) {
    std::vector<EmbeddingRow> rows;
    std::size_t pos = 0, line_no = 0;
    bool header = false;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        auto line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty() || line.front() == '#') continue;
        if (!header) {
            if (line != "berry_id,timepoint,x,y,ripeness")
                throw ParseError("embedding header must be berry_id,timepoint,x,y,ripeness", line_no);
            header = true;
            continue;
        }
        const auto f = split_csv_line(line);
        if (f.size() != 5) throw ParseError("ragged embedding row", line_no);
        EmbeddingRow r;
        if (!parse_number(f[0], r.berry_id) || !parse_number(f[1], r.timepoint) || !parse_number(f[2], r.x) ||
            !parse_number(f[3], r.y) || !parse_number(f[4], r.ripeness))
            throw ParseError("non-numeric embedding field", line_no);
        rows.push_back(r);
    }
    if (!header) throw ParseError("embedding file has no header");
    return rows;
}

}  // namespace ripelab
