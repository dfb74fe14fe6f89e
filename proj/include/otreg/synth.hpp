#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "otreg/geometry.hpp"

namespace otreg {

/// Parameters for one synthetic registration pair. Scenes are unit-scale;
/// all lengths are in scene units.
struct SynthConfig {
    int n_points = 2000;
    double overlap_fraction = 0.5;      // target, hit within +-5%
    double noise_sigma = 0.0;
    double outlier_fraction = 0.0;      // [0, 1)
    double density_skew = 1.0;          // >= 1; biased subsampling along a random axis
    double rotation_magnitude_deg = 45.0;
    double translation_magnitude = 0.5;
    std::uint64_t seed = 0;
    std::string base = "box";           // "box" | "room" | "terrain" | "twin_cubes"
    double pair_radius = 0.0375;        // r_o for ground-truth pairs and overlap measurement

    void validate() const;
};

struct SynthPair {
    PointCloud source;         // P
    PointCloud target;         // Q
    RigidTransform gt;         // aligns P to Q
    CorrespondenceSet gt_pairs;  // mutual nearest neighbors within pair_radius under gt
    double measured_overlap = 0.0;
};

/// Built-in shape generators ("box", "room", "terrain", "twin_cubes").
PointCloud make_base_cloud(const std::string& kind, int n_points, std::mt19937_64& rng);

/// Crops two overlapping sub-regions of the base, applies a drawn rigid
/// motion to the target side, then noise/outliers/density skew. Throws
/// GenerationError if no crop hits the overlap target within 100 attempts.
SynthPair generate_pair(const PointCloud& base, const SynthConfig& cfg);

/// Convenience: builds the base cloud named by cfg.base first.
SynthPair generate_pair(const SynthConfig& cfg);

/// Splitmix64; used to derive independent per-pair RNG streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace otreg
