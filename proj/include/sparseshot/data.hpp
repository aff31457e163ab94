#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sparseshot/grid.hpp"

namespace sparseshot {

/// Single-channel image, pixel values in [0,1].
class Image {
public:
    Image() = default;
    Image(std::size_t height, std::size_t width);
    /// Throws RangeError if any pixel lies outside [0,1] or is not finite.
    explicit Image(Grid<double> pixels);

    std::size_t height() const noexcept { return pixels_.height(); }
    std::size_t width() const noexcept { return pixels_.width(); }
    const Grid<double>& pixels() const noexcept { return pixels_; }
    double operator()(std::size_t row, std::size_t col) const { return pixels_(row, col); }

    friend bool operator==(const Image&, const Image&) = default;

private:
    Grid<double> pixels_;
};

/// Disk-shaped object annotation. Pixel (row, col) has its center at (x=col, y=row).
struct Annotation {
    double cx = 0.0;
    double cy = 0.0;
    double radius = 1.0;
    int class_id = 1;

    friend bool operator==(const Annotation&, const Annotation&) = default;
};

class AnnotationSet {
public:
    AnnotationSet() = default;
    /// Throws InvalidConfig on a bad radius/class or a duplicated (cx, cy, class_id).
    explicit AnnotationSet(std::vector<Annotation> annotations, std::string image_id = {});

    const std::vector<Annotation>& annotations() const noexcept { return annotations_; }
    const std::string& image_id() const noexcept { return image_id_; }
    std::size_t size() const noexcept { return annotations_.size(); }
    bool empty() const noexcept { return annotations_.empty(); }

    /// Annotations of one class, order preserved.
    AnnotationSet of_class(int class_id) const;

    friend bool operator==(const AnnotationSet&, const AnnotationSet&) = default;

private:
    std::vector<Annotation> annotations_;
    std::string image_id_;
};

enum class Membership : std::uint8_t { Foreground, BackgroundAssumed };

/// Per-pixel label with the annotated (F) / tentatively-negative (F-bar) split.
struct DenseLabelField {
    Grid<std::uint8_t> labels;
    Grid<Membership> membership;

    DenseLabelField() = default;
    /// All-background field.
    DenseLabelField(std::size_t height, std::size_t width);

    std::size_t height() const noexcept { return labels.height(); }
    std::size_t width() const noexcept { return labels.width(); }
    std::size_t foreground_count() const;

    /// Marks a pixel as annotated foreground.
    void set_foreground(std::size_t row, std::size_t col);

    /// Throws ShapeError/InvalidConfig when the label/membership invariants are broken.
    void validate() const;

    friend bool operator==(const DenseLabelField&, const DenseLabelField&) = default;
};

/// Nested non-exhaustive annotation variants drawn from one permutation.
struct SparsificationPlan {
    std::vector<double> fractions;
    std::uint64_t seed = 0;
    std::vector<std::size_t> permutation;

    /// Draws a seeded permutation of `count` indices. Throws InvalidPlan on bad fractions.
    static SparsificationPlan make(std::size_t count, std::vector<double> fractions, std::uint64_t seed);

    void validate(std::size_t count) const;
};

/// Number of annotations kept for `fraction` of `count`: ceil(fraction * count).
std::size_t variant_size(double fraction, std::size_t count);

/// One AnnotationSet per plan fraction; each keeps the first ceil(f*N) permuted
/// annotations in their original order.
std::vector<AnnotationSet> sparsify(const AnnotationSet& full, const SparsificationPlan& plan);

/// Labels every pixel within `radius` of a centroid of `class_id` as foreground.
DenseLabelField rasterize(const AnnotationSet& annos, std::size_t height, std::size_t width, int class_id);

/// Exhaustive disk mask over all annotations of `class_id`.
Mask rasterize_mask(const AnnotationSet& annos, std::size_t height, std::size_t width, int class_id);

// Portable graymap (P2 ASCII / P5 binary), maxval 255.
Image read_pgm(std::istream& in);
void write_pgm(std::ostream& out, const Image& image, bool binary = true);
Image load_image(const std::filesystem::path& path);
void save_image(const std::filesystem::path& path, const Image& image, bool binary = true);

// CSV with header `cx,cy,radius,class_id`.
AnnotationSet read_annotations(std::istream& in, std::string image_id = {});
void write_annotations(std::ostream& out, const AnnotationSet& annos);
AnnotationSet load_annotations(const std::filesystem::path& path);
void save_annotations(const std::filesystem::path& path, const AnnotationSet& annos);

}  // namespace sparseshot
