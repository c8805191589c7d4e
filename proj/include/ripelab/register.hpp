#pragma once

// Frame-to-reference registration: Harris corners with normalized patch
// descriptors, ratio-tested mutual matching, and a RANSAC homography on
// Hartley-normalized DLT.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ripelab/error.hpp"
#include "ripelab/raster.hpp"

namespace ripelab {

struct Point2 {
    double x = 0.0;
    double y = 0.0;

    bool operator==(const Point2&) const = default;
};

struct Correspondence {
    Point2 src;  // moving frame
    Point2 dst;  // reference frame
    double score = 0.0;

    bool operator==(const Correspondence&) const = default;
};

struct Homography {
    Eigen::Matrix3d h = Eigen::Matrix3d::Identity();  // maps moving -> reference, h(2,2) == 1
    int inlier_count = 0;
    double reprojection_rms = 0.0;
    std::vector<std::size_t> inliers;  // indices into the input correspondences
};

struct MatchParams {
    double harris_k = 0.04;
    double window_sigma = 1.5;        // structure-tensor smoothing
    double response_threshold = 0.01;  // relative to the strongest response
    int nms_radius = 5;
    int patch_radius = 5;  // 11x11 descriptors
    std::size_t max_corners = 1000;
    double ratio = 0.8;
    bool cross_check = true;
};

struct RansacParams {
    double inlier_threshold = 3.0;  // px, symmetric reprojection error
    double confidence = 0.99;
    int max_iterations = 2000;
};

struct Corner {
    int x = 0;
    int y = 0;
    double response = 0.0;
};

namespace detail {

inline std::vector<double> gaussian_kernel(double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (auto& v : k) v /= sum;
    return k;
}

// Separable convolution with edge replication.
inline FloatImage blur(const FloatImage& in, double sigma) {
    const auto k = gaussian_kernel(sigma);
    const int radius = static_cast<int>(k.size() / 2);
    const int w = in.width(), h = in.height();
    FloatImage tmp(w, h), out(w, h);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i) s += k[i + radius] * in.at(r, std::clamp(c + i, 0, w - 1));
            tmp.at(r, c) = s;
        }
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i) s += k[i + radius] * tmp.at(std::clamp(r + i, 0, h - 1), c);
            out.at(r, c) = s;
        }
    return out;
}

inline Point2 apply(const Eigen::Matrix3d& h, const Point2& p) {
    const double w = h(2, 0) * p.x + h(2, 1) * p.y + h(2, 2);
    return {(h(0, 0) * p.x + h(0, 1) * p.y + h(0, 2)) / w, (h(1, 0) * p.x + h(1, 1) * p.y + h(1, 2)) / w};
}

inline double dist2(const Point2& a, const Point2& b) {
    const double dx = a.x - b.x, dy = a.y - b.y;
    return dx * dx + dy * dy;
}

// Similarity taking the centroid to the origin and the mean distance to sqrt(2).
inline Eigen::Matrix3d hartley_transform(std::span<const Point2> pts) {
    double cx = 0.0, cy = 0.0;
    for (const auto& p : pts) {
        cx += p.x;
        cy += p.y;
    }
    cx /= static_cast<double>(pts.size());
    cy /= static_cast<double>(pts.size());
    double mean_dist = 0.0;
    for (const auto& p : pts) mean_dist += std::hypot(p.x - cx, p.y - cy);
    mean_dist /= static_cast<double>(pts.size());
    const double s = mean_dist > 0.0 ? std::sqrt(2.0) / mean_dist : 1.0;
    Eigen::Matrix3d t;
    t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
    return t;
}

inline bool collinear(const Point2& a, const Point2& b, const Point2& c) {
    const double ux = b.x - a.x, uy = b.y - a.y, vx = c.x - a.x, vy = c.y - a.y;
    const double nu = std::hypot(ux, uy), nv = std::hypot(vx, vy);
    if (nu < 1e-9 || nv < 1e-9) return true;
    return std::abs(ux * vy - uy * vx) < 1e-6 * nu * nv;
}

inline bool degenerate_sample(std::span<const Point2> p) {
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j)
            for (int k = j + 1; k < 4; ++k)
                if (collinear(p[i], p[j], p[k])) return true;
    return false;
}

inline bool usable(const Eigen::Matrix3d& h) {
    if (!h.allFinite()) return false;
    const double det2 = h(0, 0) * h(1, 1) - h(0, 1) * h(1, 0);
    return std::abs(det2) > 1e-12 && std::abs(h.determinant()) > 1e-12;
}

// Root mean square of forward and backward transfer distances.
inline double symmetric_error(const Eigen::Matrix3d& h, const Eigen::Matrix3d& h_inv, const Correspondence& m) {
    const double fwd = dist2(apply(h, m.src), m.dst);
    const double bwd = dist2(apply(h_inv, m.dst), m.src);
    return std::sqrt(0.5 * (fwd + bwd));
}

inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

}  // namespace detail

// Normalized direct linear transform over all given pairs (least squares when
// more than four). Returns a matrix with h(2,2) == 1, or a non-finite matrix
// when the configuration is degenerate.
inline Eigen::Matrix3d dlt_homography(std::span<const Point2> src, std::span<const Point2> dst) {
    if (src.size() != dst.size() || src.size() < 4) throw ValidationError("DLT needs at least 4 point pairs");
    const Eigen::Matrix3d ts = detail::hartley_transform(src);
    const Eigen::Matrix3d td = detail::hartley_transform(dst);
    Eigen::MatrixXd a(2 * src.size(), 9);
    for (std::size_t i = 0; i < src.size(); ++i) {
        const Point2 s = detail::apply(ts, src[i]);
        const Point2 d = detail::apply(td, dst[i]);
        a.row(2 * i) << -s.x, -s.y, -1, 0, 0, 0, d.x * s.x, d.x * s.y, d.x;
        a.row(2 * i + 1) << 0, 0, 0, -s.x, -s.y, -1, d.y * s.x, d.y * s.y, d.y;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    const Eigen::Matrix<double, 9, 1> v = svd.matrixV().col(8);
    Eigen::Matrix3d hn;
    hn << v(0), v(1), v(2), v(3), v(4), v(5), v(6), v(7), v(8);
    Eigen::Matrix3d h = td.inverse() * hn * ts;
    if (std::abs(h(2, 2)) < 1e-15) return Eigen::Matrix3d::Constant(std::numeric_limits<double>::quiet_NaN());
    return h / h(2, 2);
}

inline Point2 transfer(const Eigen::Matrix3d& h, const Point2& p) { return detail::apply(h, p); }

// Largest displacement between the two maps over the corners of a w x h image.
inline double corner_transfer_error(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b, double width, double height) {
    double worst = 0.0;
    for (const Point2 p : {Point2{0, 0}, Point2{width - 1, 0}, Point2{0, height - 1}, Point2{width - 1, height - 1}})
        worst = std::max(worst, std::sqrt(detail::dist2(transfer(a, p), transfer(b, p))));
    return worst;
}

// ---------------------------------------------------------------------------
// Detection and matching

inline std::vector<Corner> harris_corners(const FloatImage& img, const MatchParams& params) {
    const int w = img.width(), h = img.height();
    FloatImage ixx(w, h), iyy(w, h), ixy(w, h);
    for (int r = 1; r + 1 < h; ++r)
        for (int c = 1; c + 1 < w; ++c) {
            const double gx = (img.at(r - 1, c + 1) + 2 * img.at(r, c + 1) + img.at(r + 1, c + 1)) -
                              (img.at(r - 1, c - 1) + 2 * img.at(r, c - 1) + img.at(r + 1, c - 1));
            const double gy = (img.at(r + 1, c - 1) + 2 * img.at(r + 1, c) + img.at(r + 1, c + 1)) -
                              (img.at(r - 1, c - 1) + 2 * img.at(r - 1, c) + img.at(r - 1, c + 1));
            ixx.at(r, c) = gx * gx;
            iyy.at(r, c) = gy * gy;
            ixy.at(r, c) = gx * gy;
        }
    ixx = detail::blur(ixx, params.window_sigma);
    iyy = detail::blur(iyy, params.window_sigma);
    ixy = detail::blur(ixy, params.window_sigma);

    FloatImage resp(w, h);
    double max_resp = 0.0;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const double a = ixx.at(r, c), b = iyy.at(r, c), d = ixy.at(r, c);
            const double v = a * b - d * d - params.harris_k * (a + b) * (a + b);
            resp.at(r, c) = v;
            max_resp = std::max(max_resp, v);
        }
    std::vector<Corner> corners;
    if (!(max_resp > 0.0)) return corners;

    const double threshold = params.response_threshold * max_resp;
    const int margin = std::max(params.patch_radius, 1) + 1;
    const int rad = params.nms_radius;
    for (int r = margin; r < h - margin; ++r)
        for (int c = margin; c < w - margin; ++c) {
            const double v = resp.at(r, c);
            if (v <= threshold) continue;
            bool is_max = true;
            for (int dr = -rad; dr <= rad && is_max; ++dr)
                for (int dc = -rad; dc <= rad; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if ((dr == 0 && dc == 0) || !resp.contains(rr, cc)) continue;
                    const double o = resp.at(rr, cc);
                    // Plateaus keep only their first pixel in scan order.
                    const bool earlier = dr < 0 || (dr == 0 && dc < 0);
                    if (o > v || (earlier && o == v)) {
                        is_max = false;
                        break;
                    }
                }
            if (is_max) corners.push_back({c, r, v});
        }
    std::sort(corners.begin(), corners.end(), [](const Corner& a, const Corner& b) {
        if (a.response != b.response) return a.response > b.response;
        return std::pair(a.y, a.x) < std::pair(b.y, b.x);
    });
    if (corners.size() > params.max_corners) corners.resize(params.max_corners);
    return corners;
}

struct DescribedCorners {
    std::vector<Point2> points;
    Eigen::MatrixXd descriptors;  // one zero-mean unit-norm row per point
};

inline DescribedCorners describe_corners(const FloatImage& img, const std::vector<Corner>& corners, int radius) {
    const int side = 2 * radius + 1;
    std::vector<Eigen::VectorXd> rows;
    DescribedCorners out;
    for (const auto& c : corners) {
        if (c.x < radius || c.y < radius || c.x + radius >= img.width() || c.y + radius >= img.height()) continue;
        Eigen::VectorXd d(side * side);
        int k = 0;
        for (int dr = -radius; dr <= radius; ++dr)
            for (int dc = -radius; dc <= radius; ++dc) d(k++) = img.at(c.y + dr, c.x + dc);
        d.array() -= d.mean();
        const double n = d.norm();
        if (n < 1e-6) continue;
        rows.push_back(d / n);
        out.points.push_back({static_cast<double>(c.x), static_cast<double>(c.y)});
    }
    out.descriptors.resize(static_cast<Eigen::Index>(rows.size()), side * side);
    for (std::size_t i = 0; i < rows.size(); ++i) out.descriptors.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    return out;
}

// Mutual nearest neighbours in descriptor space that pass the ratio test.
// Distance between unit descriptors is sqrt(2 - 2 * correlation).
inline std::vector<Correspondence> match_descriptors(const DescribedCorners& moving, const DescribedCorners& reference,
                                                     const MatchParams& params) {
    std::vector<Correspondence> out;
    const auto n = moving.descriptors.rows(), m = reference.descriptors.rows();
    if (n == 0 || m == 0) return out;
    const Eigen::MatrixXd sim = moving.descriptors * reference.descriptors.transpose();
    auto to_dist = [](double s) { return std::sqrt(std::max(0.0, 2.0 - 2.0 * s)); };

    std::vector<Eigen::Index> best_in_col(static_cast<std::size_t>(m), -1);
    if (params.cross_check)
        for (Eigen::Index j = 0; j < m; ++j) sim.col(j).maxCoeff(&best_in_col[static_cast<std::size_t>(j)]);

    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index best = -1;
        double s1 = -std::numeric_limits<double>::infinity(), s2 = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < m; ++j) {
            const double s = sim(i, j);
            if (s > s1) {
                s2 = s1;
                s1 = s;
                best = j;
            } else if (s > s2) {
                s2 = s;
            }
        }
        const double d1 = to_dist(s1);
        const double d2 = m > 1 ? to_dist(s2) : 2.0;
        if (!(d1 < params.ratio * d2)) continue;
        if (params.cross_check && best_in_col[static_cast<std::size_t>(best)] != i) continue;
        out.push_back({moving.points[static_cast<std::size_t>(i)], reference.points[static_cast<std::size_t>(best)], s1});
    }
    return out;
}

inline std::vector<Correspondence> detect_and_match(const GrayImage& moving, const GrayImage& reference,
                                                    const MatchParams& params = {}) {
    if (moving.width() < 64 || moving.height() < 64 || reference.width() < 64 || reference.height() < 64)
        throw ValidationError("registration images must be at least 64x64");
    const auto fm = to_float(moving);
    const auto fr = to_float(reference);
    const auto dm = describe_corners(fm, harris_corners(fm, params), params.patch_radius);
    const auto dr = describe_corners(fr, harris_corners(fr, params), params.patch_radius);
    auto matches = match_descriptors(dm, dr, params);
    if (matches.size() < 4) throw InsufficientCorrespondences(matches.size());
    return matches;
}

// ---------------------------------------------------------------------------
// Robust estimation

inline Homography estimate_homography(std::span<const Correspondence> input, std::uint64_t seed,
                                      const RansacParams& params = {}) {
    const std::size_t n = input.size();
    if (n < 4) throw InsufficientCorrespondences(n);

    // Sampling indexes a canonical ordering so the result ignores input order.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& p = input[a];
        const auto& q = input[b];
        return std::tie(p.src.x, p.src.y, p.dst.x, p.dst.y, p.score) <
               std::tie(q.src.x, q.src.y, q.dst.x, q.dst.y, q.score);
    });
    std::vector<Correspondence> pts(n);
    std::vector<Point2> src(n), dst(n);
    for (std::size_t i = 0; i < n; ++i) {
        pts[i] = input[order[i]];
        src[i] = pts[i].src;
        dst[i] = pts[i].dst;
    }

    auto score = [&](const Eigen::Matrix3d& h, std::vector<std::size_t>& inliers, double& err_sum) {
        inliers.clear();
        err_sum = 0.0;
        const Eigen::Matrix3d h_inv = h.inverse();
        for (std::size_t i = 0; i < n; ++i) {
            const double e = detail::symmetric_error(h, h_inv, pts[i]);
            if (e <= params.inlier_threshold) {
                inliers.push_back(i);
                err_sum += e * e;
            }
        }
    };

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> best_inliers, inliers;
    double best_err = std::numeric_limits<double>::infinity();
    Eigen::Matrix3d best_h = Eigen::Matrix3d::Identity();
    int needed = params.max_iterations;
    std::array<Point2, 4> ss, sd;
    for (int iter = 0; iter < std::min(needed, params.max_iterations); ++iter) {
        bool drawn = false;
        for (int attempt = 0; attempt < 100 && !drawn; ++attempt) {
            std::array<std::size_t, 4> idx{};
            for (int k = 0; k < 4; ++k) {
                std::size_t cand;
                do {
                    cand = detail::uniform_index(rng, n);
                } while (std::find(idx.begin(), idx.begin() + k, cand) != idx.begin() + k);
                idx[k] = cand;
            }
            for (int k = 0; k < 4; ++k) {
                ss[k] = src[idx[k]];
                sd[k] = dst[idx[k]];
            }
            drawn = !detail::degenerate_sample(ss) && !detail::degenerate_sample(sd);
        }
        if (!drawn) continue;
        const Eigen::Matrix3d h = dlt_homography(ss, sd);
        if (!detail::usable(h)) continue;
        double err = 0.0;
        score(h, inliers, err);
        if (inliers.size() > best_inliers.size() || (inliers.size() == best_inliers.size() && err < best_err)) {
            best_inliers = inliers;
            best_err = err;
            best_h = h;
            const double w = static_cast<double>(best_inliers.size()) / static_cast<double>(n);
            const double denom = std::log(1.0 - std::pow(w, 4.0));
            if (w >= 1.0) {
                needed = 0;
            } else if (denom < 0.0) {
                needed = static_cast<int>(std::ceil(std::log(1.0 - params.confidence) / denom));
            }
        }
    }
    if (best_inliers.size() < 4) throw FitError("homography estimation failed: no model with >= 4 inliers");

    // Least-squares refit on the consensus set until it stops changing.
    Eigen::Matrix3d h = best_h;
    std::vector<std::size_t> current = best_inliers;
    for (int round = 0; round < 10; ++round) {
        std::vector<Point2> is, id;
        for (auto i : current) {
            is.push_back(src[i]);
            id.push_back(dst[i]);
        }
        const Eigen::Matrix3d refit = dlt_homography(is, id);
        if (!detail::usable(refit)) break;
        double err = 0.0;
        score(refit, inliers, err);
        if (inliers.size() < 4) break;
        h = refit;
        if (inliers == current) break;
        current = inliers;
    }

    Homography result;
    result.h = h;
    const Eigen::Matrix3d h_inv = h.inverse();
    double sse = 0.0;
    for (auto i : current) {
        const double e = detail::symmetric_error(h, h_inv, pts[i]);
        sse += e * e;
        result.inliers.push_back(order[i]);
    }
    std::sort(result.inliers.begin(), result.inliers.end());
    result.inlier_count = static_cast<int>(current.size());
    result.reprojection_rms = std::sqrt(sse / static_cast<double>(current.size()));
    return result;
}

// ---------------------------------------------------------------------------
// Warping

struct WarpResult {
    RgbImage image;
    GrayImage valid;  // 255 where the source covered the pixel, 0 otherwise
};

// Inverse-maps every output pixel through `src_to_dst` and samples `src`
// bilinearly. Output pixel (x, y) corresponds to destination coordinate
// (x + origin.x, y + origin.y).
inline WarpResult warp_image(const RgbImage& src, const Eigen::Matrix3d& src_to_dst, int out_width, int out_height,
                             Point2 origin = {}) {
    if (!src_to_dst.allFinite() || std::abs(src_to_dst.determinant()) < 1e-12)
        throw ValidationError("homography is singular");
    const Eigen::Matrix3d inv = src_to_dst.inverse();
    WarpResult out{RgbImage(out_width, out_height), GrayImage(out_width, out_height)};
    const double max_x = src.width() - 1, max_y = src.height() - 1;
    constexpr double eps = 1e-9;
    for (int r = 0; r < out_height; ++r)
        for (int c = 0; c < out_width; ++c) {
            const Point2 p = detail::apply(inv, {c + origin.x, r + origin.y});
            if (!(p.x >= -eps && p.y >= -eps && p.x <= max_x + eps && p.y <= max_y + eps)) continue;
            const double x = std::clamp(p.x, 0.0, max_x), y = std::clamp(p.y, 0.0, max_y);
            const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
            const int x1 = std::min(x0 + 1, src.width() - 1), y1 = std::min(y0 + 1, src.height() - 1);
            const double fx = x - x0, fy = y - y0;
            for (int ch = 0; ch < 3; ++ch) {
                const double top = src.at(y0, x0, ch) * (1.0 - fx) + src.at(y0, x1, ch) * fx;
                const double bottom = src.at(y1, x0, ch) * (1.0 - fx) + src.at(y1, x1, ch) * fx;
                out.image.at(r, c, ch) = clamp_to_byte(top * (1.0 - fy) + bottom * fy);
            }
            out.valid.at(r, c) = 255;
        }
    return out;
}

inline WarpResult warp_to_reference(const RgbImage& image, const Homography& h) {
    return warp_image(image, h.h, image.width(), image.height());
}

inline nlohmann::json homography_to_json(const Homography& h) {
    std::vector<double> flat;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) flat.push_back(h.h(r, c));
    return {{"h", flat}, {"inlier_count", h.inlier_count}, {"reprojection_rms", h.reprojection_rms}};
}

inline Homography homography_from_json(const nlohmann::json& j) {
    Homography h;
    const auto flat = j.at("h").get<std::vector<double>>();
    if (flat.size() != 9) throw ValidationError("homography must have 9 entries");
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) h.h(r, c) = flat[static_cast<std::size_t>(3 * r + c)];
    h.inlier_count = j.value("inlier_count", 0);
    h.reprojection_rms = j.value("reprojection_rms", 0.0);
    if (!detail::usable(h.h)) throw ValidationError("homography is singular");
    return h;
}

inline std::vector<Correspondence> correspondences_from_json(const nlohmann::json& arr) {
    std::vector<Correspondence> out;
    try {
        for (const auto& j : arr) {
            const auto s = j.at("src").get<std::array<double, 2>>();
            const auto d = j.at("dst").get<std::array<double, 2>>();
            out.push_back({{s[0], s[1]}, {d[0], d[1]}, j.value("score", 0.0)});
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("correspondence JSON: ") + e.what());
    }
    return out;
}

inline nlohmann::json correspondences_to_json(std::span<const Correspondence> matches) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& m : matches)
        arr.push_back({{"src", {m.src.x, m.src.y}}, {"dst", {m.dst.x, m.dst.y}}, {"score", m.score}});
    return arr;
}

}  // namespace ripelab
