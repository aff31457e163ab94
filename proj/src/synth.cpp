#include "sparseshot/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace sparseshot {

namespace {

constexpr int kMaxAttempts = 1000;

void check_range(const Range& r, const char* name, double lo_bound, double hi_bound) {
    if (!(r.min < r.max)) throw InvalidConfig(std::string(name) + ": min must be < max");
    if (!(r.min > lo_bound) || !(r.max <= hi_bound))
        throw InvalidConfig(std::string(name) + ": values out of range");
}

}  // namespace

void SceneConfig::validate() const {
    if (height == 0 || width == 0) throw InvalidConfig("scene dimensions must be positive");
    check_range(radius_range, "radius_range", 0.0, INFINITY);
    check_range(radius_range_class2, "radius_range_class2", 0.0, INFINITY);
    check_range(intensity_class1, "intensity_class1", 0.0, 1.0);
    check_range(intensity_class2, "intensity_class2", 0.0, 1.0);
    if (!(noise_std >= 0.0)) throw InvalidConfig("noise_std must be >= 0");
    if (!(min_separation >= 0.0)) throw InvalidConfig("min_separation must be >= 0");
    double biggest = std::max(n_cells_class1 ? radius_range.max : 0.0, n_cells_class2 ? radius_range_class2.max : 0.0);
    if (2.0 * biggest >= static_cast<double>(std::min(height, width)))
        throw InvalidConfig("cells do not fit inside the image");
}

double cell_profile(double dist, double radius, double intensity) {
    if (dist >= radius) return 0.0;
    double t = dist / radius;
    return intensity * std::sqrt(1.0 - t * t);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Scene generate_scene(const SceneConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);

    struct Cell {
        Annotation anno;
        double intensity;
    };
    std::vector<Cell> cells;
    cells.reserve(cfg.n_cells_class1 + cfg.n_cells_class2);

    auto place = [&](int class_id, const Range& radius, const Range& intensity) {
        std::uniform_real_distribution<double> radius_dist(radius.min, radius.max);
        std::uniform_real_distribution<double> intensity_dist(intensity.min, intensity.max);
        for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
            double r = radius_dist(rng);
            std::uniform_real_distribution<double> x_dist(r, static_cast<double>(cfg.width - 1) - r);
            std::uniform_real_distribution<double> y_dist(r, static_cast<double>(cfg.height - 1) - r);
            double x = x_dist(rng);
            double y = y_dist(rng);
            bool clear = std::all_of(cells.begin(), cells.end(), [&](const Cell& c) {
                double dx = c.anno.cx - x, dy = c.anno.cy - y;
                return std::sqrt(dx * dx + dy * dy) >= cfg.min_separation;
            });
            if (clear) {
                cells.push_back({Annotation{x, y, r, class_id}, intensity_dist(rng)});
                return;
            }
        }
        throw PackingError("could not place cell " + std::to_string(cells.size() + 1) + " within " +
                           std::to_string(kMaxAttempts) + " attempts");
    };

    for (std::size_t i = 0; i < cfg.n_cells_class1; ++i) place(1, cfg.radius_range, cfg.intensity_class1);
    for (std::size_t i = 0; i < cfg.n_cells_class2; ++i) place(2, cfg.radius_range_class2, cfg.intensity_class2);

    Grid<double> pixels(cfg.height, cfg.width, 0.0);
    if (cfg.noise_std > 0.0) {
        std::normal_distribution<double> noise(0.0, cfg.noise_std);
        for (auto& v : pixels.values()) v = noise(rng);
    }
    for (const auto& cell : cells) {
        const auto& a = cell.anno;
        auto r0 = static_cast<std::size_t>(std::max(0.0, std::floor(a.cy - a.radius)));
        auto r1 = static_cast<std::size_t>(std::min<double>(cfg.height - 1, std::ceil(a.cy + a.radius)));
        auto c0 = static_cast<std::size_t>(std::max(0.0, std::floor(a.cx - a.radius)));
        auto c1 = static_cast<std::size_t>(std::min<double>(cfg.width - 1, std::ceil(a.cx + a.radius)));
        for (std::size_t r = r0; r <= r1; ++r)
            for (std::size_t c = c0; c <= c1; ++c) {
                double dx = static_cast<double>(c) - a.cx, dy = static_cast<double>(r) - a.cy;
                double d2 = dx * dx + dy * dy;
                // Same disk test as rasterize, so rendered support never exceeds the labels.
                if (d2 < a.radius * a.radius) pixels(r, c) += cell_profile(std::sqrt(d2), a.radius, cell.intensity);
            }
    }
    for (auto& v : pixels.values()) v = std::clamp(v, 0.0, 1.0);

    std::vector<Annotation> truth;
    truth.reserve(cells.size());
    for (const auto& c : cells) truth.push_back(c.anno);
    return Scene{Image(std::move(pixels)), AnnotationSet(std::move(truth))};
}

}  // namespace sparseshot
