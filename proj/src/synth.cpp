#include "otreg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "otreg/error.hpp"

namespace otreg {
namespace {

Eigen::Vector3d random_unit(std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::Vector3d v;
    do {
        v = Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng));
    } while (v.norm() < 1e-9);
    return v.normalized();
}

// Uniform point on the surface of an axis-aligned box with half-extents h.
Eigen::Vector3d sample_box_surface(const Eigen::Vector3d& h, const Eigen::Vector3d& center,
                                   std::mt19937_64& rng) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double ax = h.y() * h.z(), ay = h.x() * h.z(), az = h.x() * h.y();
    double pick = uni(rng) * (ax + ay + az);
    int axis = pick < ax ? 0 : (pick < ax + ay ? 1 : 2);
    double side = uni(rng) < 0.5 ? -1.0 : 1.0;
    Eigen::Vector3d p;
    p[axis] = side * h[axis];
    int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    p[a1] = (2.0 * uni(rng) - 1.0) * h[a1];
    p[a2] = (2.0 * uni(rng) - 1.0) * h[a2];
    return center + p;
}

Eigen::Vector3d sample_sphere_surface(double r, const Eigen::Vector3d& center,
                                      std::mt19937_64& rng) {
    return center + r * random_unit(rng);
}

PointCloud base_box(int n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> uni(0.5, 1.0);
    Eigen::Vector3d h(0.5 * uni(rng), 0.5 * uni(rng), 0.5 * uni(rng));
    PointCloud cloud;
    cloud.points.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        cloud.points.push_back(sample_box_surface(h, Eigen::Vector3d::Zero(), rng));
    return cloud;
}

PointCloud base_room(int n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    struct Prim {
        bool sphere;
        Eigen::Vector3d center, half;
        double radius, area;
    };
    std::vector<Prim> prims;
    // Floor: a flat box spanning the room.
    prims.push_back({false, {0, -0.5, 0}, {0.5, 0.005, 0.5}, 0.0, 1.0});
    int n_prims = 3 + static_cast<int>(uni(rng) * 4.0);
    for (int k = 0; k < n_prims; ++k) {
        Prim prim;
        prim.sphere = uni(rng) < 0.4;
        prim.center = Eigen::Vector3d(0.8 * (uni(rng) - 0.5), -0.3 + 0.5 * uni(rng),
                                      0.8 * (uni(rng) - 0.5));
        if (prim.sphere) {
            prim.radius = 0.05 + 0.1 * uni(rng);
            prim.area = 4.0 * M_PI * prim.radius * prim.radius;
        } else {
            prim.half = Eigen::Vector3d(0.04 + 0.12 * uni(rng), 0.04 + 0.12 * uni(rng),
                                        0.04 + 0.12 * uni(rng));
            prim.area = 8.0 * (prim.half.x() * prim.half.y() + prim.half.y() * prim.half.z() +
                               prim.half.x() * prim.half.z());
        }
        prims.push_back(prim);
    }
    double total_area = 0.0;
    for (const auto& p : prims) total_area += p.area;

    PointCloud cloud;
    cloud.points.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double pick = uni(rng) * total_area;
        std::size_t idx = 0;
        for (; idx + 1 < prims.size() && pick >= prims[idx].area; ++idx) pick -= prims[idx].area;
        const Prim& prim = prims[idx];
        cloud.points.push_back(prim.sphere
                                   ? sample_sphere_surface(prim.radius, prim.center, rng)
                                   : sample_box_surface(prim.half, prim.center, rng));
    }
    return cloud;
}

// Two identical cubes: repeated structure that makes pointwise matching
// ambiguous.
// Height field over the unit square: a sum of random Gaussian bumps. The
// rough relief gives local neighborhoods distinctive shape, which point
// descriptors need; plain boxes and rooms are too self-similar for that.
PointCloud base_terrain(int n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> uni(-0.5, 0.5);
    std::uniform_real_distribution<double> amp(-0.3, 0.3), sig(0.03, 0.06);
    std::uniform_real_distribution<double> amp_big(0.25, 0.5), sig_big(0.1, 0.18), sign(0.0, 1.0);
    struct Bump {
        double x, y, a, s;
    };
    std::vector<Bump> bumps;
    bumps.reserve(162);
    // A few large landmark hills break up the self-similar fine texture and
    // give patch-scale neighborhoods distinctive shapes.
    for (int k = 0; k < 12; ++k)
        bumps.push_back({uni(rng), uni(rng), (sign(rng) < 0.5 ? -1.0 : 1.0) * amp_big(rng),
                         sig_big(rng)});
    for (int k = 0; k < 150; ++k) bumps.push_back({uni(rng), uni(rng), amp(rng), sig(rng)});
    PointCloud cloud;
    cloud.points.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double x = uni(rng), y = uni(rng), z = 0.0;
        for (const auto& b : bumps) {
            double dx = x - b.x, dy = y - b.y;
            z += b.a * std::exp(-(dx * dx + dy * dy) / (2.0 * b.s * b.s));
        }
        cloud.points.push_back({x, y, z});
    }
    return cloud;
}

PointCloud base_twin_cubes(int n, std::mt19937_64& rng) {
    PointCloud cloud;
    cloud.points.reserve(static_cast<std::size_t>(n));
    const Eigen::Vector3d half(0.15, 0.15, 0.15);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
        Eigen::Vector3d center = uni(rng) < 0.5 ? Eigen::Vector3d(-0.35, 0, 0)
                                                : Eigen::Vector3d(0.35, 0, 0);
        cloud.points.push_back(sample_box_surface(half, center, rng));
    }
    return cloud;
}

}  // namespace

void SynthConfig::validate() const {
    if (n_points < 1) throw ConfigError("SynthConfig: n_points must be >= 1");
    if (overlap_fraction <= 0.0 || overlap_fraction > 1.0)
        throw ConfigError("SynthConfig: overlap_fraction in (0,1]");
    if (noise_sigma < 0.0) throw ConfigError("SynthConfig: noise_sigma must be >= 0");
    if (outlier_fraction < 0.0 || outlier_fraction >= 1.0)
        throw ConfigError("SynthConfig: outlier_fraction in [0,1)");
    if (density_skew < 1.0) throw ConfigError("SynthConfig: density_skew must be >= 1");
    if (pair_radius <= 0.0) throw ConfigError("SynthConfig: pair_radius must be positive");
}

PointCloud make_base_cloud(const std::string& kind, int n_points, std::mt19937_64& rng) {
    if (kind == "box") return base_box(n_points, rng);
    if (kind == "room") return base_room(n_points, rng);
    if (kind == "terrain") return base_terrain(n_points, rng);
    if (kind == "twin_cubes") return base_twin_cubes(n_points, rng);
    throw ConfigError("unknown base cloud kind: " + kind);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

SynthPair generate_pair(const PointCloud& base, const SynthConfig& cfg) {
    cfg.validate();
    if (base.empty()) throw EmptyInputError("generate_pair: empty base cloud");
    std::mt19937_64 rng(mix_seed(cfg.seed, 0x70617972ull));
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int n = base.size();

    // Crop two half-space slabs along a random direction; quantiles chosen so
    // the shared slab carries the target overlap fraction of the source.
    const double f = cfg.overlap_fraction;
    const double qa = 1.0 / (2.0 - f);
    const double qb = 1.0 - qa;
    std::vector<int> p_idx, q_idx;
    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
        Eigen::Vector3d dir = random_unit(rng);
        std::vector<double> t(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) t[static_cast<std::size_t>(i)] = dir.dot(base[i]);
        std::vector<double> sorted = t;
        std::sort(sorted.begin(), sorted.end());
        auto quantile = [&](double q) {
            int k = std::clamp(static_cast<int>(q * (n - 1)), 0, n - 1);
            return sorted[static_cast<std::size_t>(k)];
        };
        double a = quantile(qa), b = quantile(qb);
        p_idx.clear();
        q_idx.clear();
        int shared = 0;
        for (int i = 0; i < n; ++i) {
            bool in_p = t[static_cast<std::size_t>(i)] <= a;
            bool in_q = t[static_cast<std::size_t>(i)] >= b;
            if (in_p) p_idx.push_back(i);
            if (in_q) q_idx.push_back(i);
            if (in_p && in_q) ++shared;
        }
        if (p_idx.empty() || q_idx.empty()) continue;
        double measured = static_cast<double>(shared) / static_cast<double>(p_idx.size());
        ok = std::abs(measured - f) <= 0.05;
    }
    if (!ok) throw GenerationError("generate_pair: could not hit the overlap target in 100 attempts");

    // Density skew: thin by a keep-probability ramp along a random axis.
    auto apply_skew = [&](std::vector<int>& idx) {
        if (cfg.density_skew <= 1.0) return;
        Eigen::Vector3d axis = random_unit(rng);
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (int i : idx) {
            double t = axis.dot(base[i]);
            lo = std::min(lo, t);
            hi = std::max(hi, t);
        }
        double span = std::max(hi - lo, 1e-12);
        std::vector<int> kept;
        for (int i : idx) {
            double s = (axis.dot(base[i]) - lo) / span;  // 0..1
            double keep = (1.0 + (cfg.density_skew - 1.0) * s) / cfg.density_skew;
            if (uni(rng) < keep) kept.push_back(i);
        }
        if (!kept.empty()) idx = std::move(kept);
    };
    apply_skew(p_idx);
    apply_skew(q_idx);

    SynthPair pair;
    for (int i : p_idx) pair.source.points.push_back(base[i]);
    PointCloud q_base;
    for (int i : q_idx) q_base.points.push_back(base[i]);

    auto add_noise = [&](PointCloud& cloud) {
        if (cfg.noise_sigma <= 0.0) return;
        for (auto& p : cloud.points)
            p += cfg.noise_sigma * Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng));
    };
    add_noise(pair.source);
    add_noise(q_base);

    auto add_outliers = [&](PointCloud& cloud) {
        if (cfg.outlier_fraction <= 0.0) return;
        Eigen::Vector3d lo = cloud.points.front(), hi = lo;
        for (const auto& p : cloud.points) {
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
        Eigen::Vector3d span = (hi - lo).cwiseMax(1e-6);
        int n_out = static_cast<int>(std::lround(cfg.outlier_fraction * cloud.size()));
        for (int k = 0; k < n_out; ++k) {
            cloud.points.push_back(lo + Eigen::Vector3d(uni(rng) * span.x(), uni(rng) * span.y(),
                                                        uni(rng) * span.z()));
        }
    };
    add_outliers(pair.source);
    add_outliers(q_base);

    double angle = cfg.rotation_magnitude_deg * M_PI / 180.0 * uni(rng);
    pair.gt = rotation_about_axis(random_unit(rng), angle,
                                  cfg.translation_magnitude * uni(rng) * random_unit(rng));
    pair.target = apply_transform(q_base, pair.gt);

    // Ground-truth pairs: mutual nearest neighbors within pair_radius under gt.
    PointCloud src_aligned = apply_transform(pair.source, pair.gt);
    SpatialGrid grid_q(pair.target, cfg.pair_radius);
    SpatialGrid grid_p(src_aligned, cfg.pair_radius);
    int overlapping = 0;
    for (int i = 0; i < src_aligned.size(); ++i) {
        auto [j, dist] = grid_q.nearest(src_aligned[i]);
        if (dist >= cfg.pair_radius) continue;
        ++overlapping;
        auto [back, dist_back] = grid_p.nearest(pair.target[j]);
        if (back == i) pair.gt_pairs.push_back({i, j, 1.0});
    }
    pair.measured_overlap = static_cast<double>(overlapping) / pair.source.size();
    return pair;
}

SynthPair generate_pair(const SynthConfig& cfg) {
    cfg.validate();
    std::mt19937_64 base_rng(mix_seed(cfg.seed, 0x62617365ull));
    PointCloud base = make_base_cloud(cfg.base, 2 * cfg.n_points, base_rng);
    return generate_pair(base, cfg);
}

}  // namespace otreg
