#pragma once

#include <cstdint>
#include <utility>

#include "sparseshot/data.hpp"

namespace sparseshot {

struct Range {
    double min = 0.0;
    double max = 1.0;
};

/// Seeded "cell blob" scene description. Class 2 defaults to larger, brighter
/// cells that a scorer can confuse with class 1.
struct SceneConfig {
    std::size_t height = 128;
    std::size_t width = 128;
    std::size_t n_cells_class1 = 20;
    std::size_t n_cells_class2 = 0;
    Range radius_range{3.0, 5.0};
    Range radius_range_class2{5.0, 7.0};
    Range intensity_class1{0.5, 0.8};
    Range intensity_class2{0.8, 1.0};
    double noise_std = 0.08;
    double min_separation = 10.0;
    std::uint64_t seed = 0;

    /// Throws InvalidConfig.
    void validate() const;
};

struct Scene {
    Image image;
    AnnotationSet truth;  ///< exhaustive, both classes
};

/// Places cells by rejection sampling (PackingError after 1000 failed attempts
/// for one cell), then renders dome-shaped bumps over zero-mean Gaussian noise.
Scene generate_scene(const SceneConfig& cfg);

/// Bump profile of a cell at distance `dist` from its centroid; zero at and beyond `radius`.
double cell_profile(double dist, double radius, double intensity);

/// Mixes two values into an independent 64-bit seed (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace sparseshot
