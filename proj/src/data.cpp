#include "sparseshot/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

namespace sparseshot {

namespace {

std::string format_real(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

double parse_real(std::string_view s, const char* field) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw FormatError(std::string("cannot parse ") + field + " from '" + std::string(s) + "'");
    return v;
}

int parse_int(std::string_view s, const char* field) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw FormatError(std::string("cannot parse ") + field + " from '" + std::string(s) + "'");
    return v;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

// Next whitespace-delimited PNM header token, skipping '#' comments.
std::string pnm_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {}
            if (!tok.empty()) break;
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    if (tok.empty()) throw FormatError("unexpected end of graymap header");
    return tok;
}

std::size_t parse_dim(const std::string& tok) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size() || v == 0)
        throw FormatError("bad graymap dimension '" + tok + "'");
    return v;
}

}  // namespace

Image::Image(std::size_t height, std::size_t width) : pixels_(height, width, 0.0) {
    if (height == 0 || width == 0) throw RangeError("image dimensions must be positive");
}

Image::Image(Grid<double> pixels) : pixels_(std::move(pixels)) {
    if (pixels_.height() == 0 || pixels_.width() == 0) throw RangeError("image dimensions must be positive");
    for (double v : pixels_.values())
        if (!(v >= 0.0 && v <= 1.0)) throw RangeError("pixel value outside [0,1]");
}

AnnotationSet::AnnotationSet(std::vector<Annotation> annotations, std::string image_id)
    : annotations_(std::move(annotations)), image_id_(std::move(image_id)) {
    std::set<std::tuple<double, double, int>> seen;
    for (const auto& a : annotations_) {
        if (!(a.radius > 0.0) || !std::isfinite(a.radius)) throw InvalidConfig("annotation radius must be > 0");
        if (a.class_id < 1) throw InvalidConfig("annotation class_id must be >= 1");
        if (!std::isfinite(a.cx) || !std::isfinite(a.cy)) throw InvalidConfig("annotation centroid not finite");
        if (!seen.emplace(a.cx, a.cy, a.class_id).second)
            throw InvalidConfig("duplicate annotation at (" + format_real(a.cx) + ", " + format_real(a.cy) + ")");
    }
}

AnnotationSet AnnotationSet::of_class(int class_id) const {
    std::vector<Annotation> out;
    std::copy_if(annotations_.begin(), annotations_.end(), std::back_inserter(out),
                 [&](const Annotation& a) { return a.class_id == class_id; });
    return AnnotationSet(std::move(out), image_id_);
}

DenseLabelField::DenseLabelField(std::size_t height, std::size_t width)
    : labels(height, width, 0), membership(height, width, Membership::BackgroundAssumed) {}

std::size_t DenseLabelField::foreground_count() const {
    return static_cast<std::size_t>(
        std::count(membership.values().begin(), membership.values().end(), Membership::Foreground));
}

void DenseLabelField::set_foreground(std::size_t row, std::size_t col) {
    labels(row, col) = 1;
    membership(row, col) = Membership::Foreground;
}

void DenseLabelField::validate() const {
    require_same_shape(labels, membership, "label field");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] > 1) throw InvalidConfig("labels must be 0 or 1");
        if (labels[i] == 1 && membership[i] != Membership::Foreground)
            throw InvalidConfig("positive label outside the annotated set");
    }
}

SparsificationPlan SparsificationPlan::make(std::size_t count, std::vector<double> fractions, std::uint64_t seed) {
    SparsificationPlan plan;
    plan.fractions = std::move(fractions);
    plan.seed = seed;
    plan.permutation.resize(count);
    std::iota(plan.permutation.begin(), plan.permutation.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(plan.permutation.begin(), plan.permutation.end(), rng);
    plan.validate(count);
    return plan;
}

void SparsificationPlan::validate(std::size_t count) const {
    if (fractions.empty()) throw InvalidPlan("no fractions");
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        double f = fractions[i];
        if (!(f > 0.0 && f <= 1.0)) throw InvalidPlan("fraction " + format_real(f) + " outside (0,1]");
        if (i > 0 && !(f > fractions[i - 1])) throw InvalidPlan("fractions must be strictly increasing");
    }
    if (permutation.size() != count)
        throw InvalidPlan("permutation covers " + std::to_string(permutation.size()) + " of " +
                          std::to_string(count) + " annotations");
    std::vector<bool> hit(count, false);
    for (auto idx : permutation) {
        if (idx >= count || hit[idx]) throw InvalidPlan("permutation is not a bijection");
        hit[idx] = true;
    }
}

std::size_t variant_size(double fraction, std::size_t count) {
    // Slack absorbs products like 0.3 * 10 = 3.0000000000000004.
    double exact = fraction * static_cast<double>(count);
    auto n = static_cast<std::size_t>(std::ceil(exact - 1e-9 * std::max(1.0, exact)));
    return std::clamp<std::size_t>(n, 1, count);
}

std::vector<AnnotationSet> sparsify(const AnnotationSet& full, const SparsificationPlan& plan) {
    if (full.empty()) throw EmptyAnnotations("cannot sparsify an empty annotation set");
    plan.validate(full.size());

    std::vector<AnnotationSet> variants;
    variants.reserve(plan.fractions.size());
    for (double f : plan.fractions) {
        std::size_t keep = variant_size(f, full.size());
        std::vector<std::size_t> chosen(plan.permutation.begin(), plan.permutation.begin() + keep);
        std::sort(chosen.begin(), chosen.end());
        std::vector<Annotation> subset;
        subset.reserve(keep);
        for (auto idx : chosen) subset.push_back(full.annotations()[idx]);
        variants.emplace_back(std::move(subset), full.image_id());
    }
    return variants;
}

Mask rasterize_mask(const AnnotationSet& annos, std::size_t height, std::size_t width, int class_id) {
    Mask mask(height, width, 0);
    for (const auto& a : annos.annotations()) {
        if (!(a.cx >= 0.0 && a.cx < static_cast<double>(width) && a.cy >= 0.0 &&
              a.cy < static_cast<double>(height)))
            throw OutOfBounds("annotation (" + format_real(a.cx) + ", " + format_real(a.cy) +
                              ") outside " + std::to_string(height) + "x" + std::to_string(width));
        if (a.class_id != class_id) continue;
        const double r2 = a.radius * a.radius;
        auto lo_r = static_cast<long>(std::max(0.0, std::floor(a.cy - a.radius)));
        auto hi_r = static_cast<long>(std::min<double>(height - 1, std::ceil(a.cy + a.radius)));
        auto lo_c = static_cast<long>(std::max(0.0, std::floor(a.cx - a.radius)));
        auto hi_c = static_cast<long>(std::min<double>(width - 1, std::ceil(a.cx + a.radius)));
        for (long r = lo_r; r <= hi_r; ++r) {
            for (long c = lo_c; c <= hi_c; ++c) {
                double dx = static_cast<double>(c) - a.cx;
                double dy = static_cast<double>(r) - a.cy;
                if (dx * dx + dy * dy <= r2) mask(r, c) = 1;
            }
        }
    }
    return mask;
}

DenseLabelField rasterize(const AnnotationSet& annos, std::size_t height, std::size_t width, int class_id) {
    Mask mask = rasterize_mask(annos, height, width, class_id);
    DenseLabelField field(height, width);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) {
            field.labels[i] = 1;
            field.membership[i] = Membership::Foreground;
        }
    }
    return field;
}

Image read_pgm(std::istream& in) {
    std::string magic = pnm_token(in);
    if (magic != "P2" && magic != "P5") throw FormatError("not a graymap (magic '" + magic + "')");
    std::size_t width = parse_dim(pnm_token(in));
    std::size_t height = parse_dim(pnm_token(in));
    std::size_t maxval = parse_dim(pnm_token(in));
    if (maxval != 255) throw FormatError("graymap maxval must be 255, got " + std::to_string(maxval));

    Grid<double> pixels(height, width, 0.0);
    if (magic == "P5") {
        std::vector<unsigned char> raw(height * width);
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
        if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw FormatError("truncated graymap data");
        for (std::size_t i = 0; i < raw.size(); ++i) pixels[i] = raw[i] / 255.0;
    } else {
        for (std::size_t i = 0; i < pixels.size(); ++i) {
            long v = 0;
            if (!(in >> v)) throw FormatError("truncated graymap data");
            if (v < 0 || v > 255) throw RangeError("graymap value " + std::to_string(v) + " outside [0,255]");
            pixels[i] = static_cast<double>(v) / 255.0;
        }
    }
    return Image(std::move(pixels));
}

void write_pgm(std::ostream& out, const Image& image, bool binary) {
    out << (binary ? "P5" : "P2") << '\n' << image.width() << ' ' << image.height() << "\n255\n";
    const auto& px = image.pixels();
    if (binary) {
        std::vector<unsigned char> raw(px.size());
        for (std::size_t i = 0; i < px.size(); ++i) raw[i] = static_cast<unsigned char>(std::lround(px[i] * 255.0));
        out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    } else {
        for (std::size_t r = 0; r < image.height(); ++r) {
            for (std::size_t c = 0; c < image.width(); ++c) {
                if (c) out << ' ';
                out << std::lround(px(r, c) * 255.0);
            }
            out << '\n';
        }
    }
}

Image load_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return read_pgm(in);
}

void save_image(const std::filesystem::path& path, const Image& image, bool binary) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    write_pgm(out, image, binary);
    if (!out) throw IoError("write failed: " + path.string());
}

AnnotationSet read_annotations(std::istream& in, std::string image_id) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("missing annotation header");
    if (trim(line) != "cx,cy,radius,class_id") throw FormatError("unexpected annotation header '" + line + "'");

    std::vector<Annotation> annos;
    while (std::getline(in, line)) {
        std::string_view row = trim(line);
        if (row.empty()) continue;
        std::string_view fields[4];
        std::size_t n = 0;
        while (true) {
            auto comma = row.find(',');
            if (n == 4) throw FormatError("too many columns in '" + line + "'");
            fields[n++] = trim(row.substr(0, comma));
            if (comma == std::string_view::npos) break;
            row.remove_prefix(comma + 1);
        }
        if (n != 4) throw FormatError("expected 4 columns in '" + line + "'");
        Annotation a{parse_real(fields[0], "cx"), parse_real(fields[1], "cy"), parse_real(fields[2], "radius"),
                     parse_int(fields[3], "class_id")};
        if (!(a.radius > 0.0)) throw RangeError("radius must be positive in '" + line + "'");
        if (a.class_id < 1) throw RangeError("class_id must be >= 1 in '" + line + "'");
        annos.push_back(a);
    }
    return AnnotationSet(std::move(annos), std::move(image_id));
}

void write_annotations(std::ostream& out, const AnnotationSet& annos) {
    out << "cx,cy,radius,class_id\n";
    for (const auto& a : annos.annotations())
        out << format_real(a.cx) << ',' << format_real(a.cy) << ',' << format_real(a.radius) << ',' << a.class_id
            << '\n';
}

AnnotationSet load_annotations(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return read_annotations(in, path.stem().string());
}

void save_annotations(const std::filesystem::path& path, const AnnotationSet& annos) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    write_annotations(out, annos);
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace sparseshot
