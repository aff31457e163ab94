#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sparseshot/errors.hpp"

namespace sparseshot {

/// Dense row-major 2-D array.
template <class T>
class Grid {
public:
    Grid() = default;
    Grid(std::size_t height, std::size_t width, T fill = T{})
        : height_(height), width_(width), data_(height * width, fill) {}
    Grid(std::size_t height, std::size_t width, std::vector<T> data)
        : height_(height), width_(width), data_(std::move(data)) {
        if (data_.size() != height_ * width_)
            throw ShapeError("grid data size " + std::to_string(data_.size()) + " != " +
                             std::to_string(height_) + "x" + std::to_string(width_));
    }

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t row, std::size_t col) { return data_[row * width_ + col]; }
    const T& operator()(std::size_t row, std::size_t col) const { return data_[row * width_ + col]; }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }

    template <class U>
    bool same_shape(const Grid<U>& other) const noexcept {
        return height_ == other.height() && width_ == other.width();
    }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<T> data_;
};

template <class T, class U>
void require_same_shape(const Grid<T>& a, const Grid<U>& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": shape " + std::to_string(a.height()) + "x" +
                         std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                         std::to_string(b.width()));
}

/// Pre-activation score per pixel.
struct LogitField : Grid<double> {
    using Grid<double>::Grid;
};

/// Per-pixel foreground probability.
struct ProbabilityField : Grid<double> {
    using Grid<double>::Grid;
};

using Mask = Grid<unsigned char>;

}  // namespace sparseshot
