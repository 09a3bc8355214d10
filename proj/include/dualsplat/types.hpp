// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dualsplat {

/// Thrown when a caller breaks a documented precondition (shape mismatch,
/// out-of-range argument).
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Vec2&, const Vec2&) = default;
};

/// Row-major 2x2 matrix [[a, b], [c, d]].
struct Mat2 {
    double a = 1.0, b = 0.0, c = 0.0, d = 1.0;

    static Mat2 identity() { return {}; }
    static Mat2 diag(double x, double y) { return {x, 0.0, 0.0, y}; }
    static Mat2 rotation(double angle);

    double det() const { return a * d - b * c; }
    Mat2 transpose() const { return {a, c, b, d}; }
    Mat2 inverse() const;
    Vec2 operator*(Vec2 v) const { return {a * v.x + b * v.y, c * v.x + d * v.y}; }
    Mat2 operator*(const Mat2& m) const {
        return {a * m.a + b * m.c, a * m.b + b * m.d, c * m.a + d * m.c, c * m.b + d * m.d};
    }
    Mat2 operator*(double s) const { return {a * s, b * s, c * s, d * s}; }
    Mat2 operator+(const Mat2& m) const { return {a + m.a, b + m.b, c + m.c, d + m.d}; }

    friend bool operator==(const Mat2&, const Mat2&) = default;
};

/// Eigenvalues of a symmetric 2x2 matrix, larger first.
std::array<double, 2> symmetric_eigenvalues(const Mat2& m);

/// Dense H x W x C image of doubles, channel-interleaved.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

    double& at(int x, int y, int ch = 0) { return data[index(x, y, ch)]; }
    double at(int x, int y, int ch = 0) const { return data[index(x, y, ch)]; }
    std::size_t index(int x, int y, int ch = 0) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + ch;
    }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    bool same_shape(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
    bool same_extent(const Image& o) const { return width == o.width && height == o.height; }

    friend bool operator==(const Image&, const Image&) = default;
};

enum class Attribute : int { Position = 0, Scale = 1, Rotation = 2, Opacity = 3, Color = 4 };

inline constexpr std::array<Attribute, 5> kAllAttributes = {
    Attribute::Position, Attribute::Scale, Attribute::Rotation, Attribute::Opacity, Attribute::Color};
inline constexpr std::size_t kNumAttributes = 5;

/// Scalars per Gaussian for each attribute.
constexpr int arity(Attribute a) {
    switch (a) {
    case Attribute::Position: return 2;
    case Attribute::Scale: return 2;
    case Attribute::Rotation: return 1;
    case Attribute::Opacity: return 1;
    case Attribute::Color: return 3;
    }
    return 0;
}

constexpr bool is_geometric(Attribute a) {
    return a == Attribute::Position || a == Attribute::Rotation || a == Attribute::Scale;
}

std::string_view attribute_name(Attribute a);
Attribute attribute_from_name(std::string_view name);

/// The optimizable primitive set plus per-Gaussian bookkeeping.
///
/// Attributes are stored flat (struct-of-arrays), so `param(a)` is exactly the
/// vector the optimizer and harmonizer operate on.
struct GaussianCloud {
    std::vector<double> positions;       // 2N, world coordinates
    std::vector<double> log_scales;      // 2N
    std::vector<double> rotations;       // N, radians
    std::vector<double> opacity_logits;  // N
    std::vector<double> colors;          // 3N, RGB
    std::vector<double> depths;          // N, compositing key (not learnable)

    std::vector<double> densify_r_max;        // N
    std::vector<double> densify_grad_accum;   // N
    std::vector<std::int64_t> densify_count;  // N
    std::vector<double> conflict_ema;         // N

    std::size_t size() const { return rotations.size(); }
    void resize(std::size_t n);

    std::vector<double>& param(Attribute a);
    const std::vector<double>& param(Attribute a) const;

    Vec2 position(std::size_t i) const { return {positions[2 * i], positions[2 * i + 1]}; }
    Vec2 log_scale(std::size_t i) const { return {log_scales[2 * i], log_scales[2 * i + 1]}; }
    double opacity(std::size_t i) const;

    /// Appends Gaussian `src` of `from` (all fields, bookkeeping included).
    void append_from(const GaussianCloud& from, std::size_t src);

    friend bool operator==(const GaussianCloud&, const GaussianCloud&) = default;
};

/// A training or evaluation view: world->view affine plus supervision.
struct View {
    Mat2 affine = Mat2::identity();  // A in  p = A x + t  (normalized view coords)
    Vec2 translation;                // t
    Image gt_image;                  // H x W x 3
    Image prior_mask;                // H x W x 1, 1 = stable
    int view_id = 0;
};

/// Per-view gradients from one backward pass.
struct GradientBundle {
    std::array<std::vector<double>, kNumAttributes> per_attribute;
    std::vector<double> view_space_pos;  // 2N, dL/dp_view in pixels

    std::vector<double>& operator[](Attribute a) { return per_attribute[static_cast<int>(a)]; }
    const std::vector<double>& operator[](Attribute a) const { return per_attribute[static_cast<int>(a)]; }

    std::size_t gaussian_count() const { return view_space_pos.size() / 2; }

    /// Per-Gaussian slices (views into the flat attribute vectors).
    std::span<const double, 2> position_grad(std::size_t n) const {
        return std::span<const double, 2>((*this)[Attribute::Position].data() + 2 * n, 2);
    }
    double opacity_grad(std::size_t n) const { return (*this)[Attribute::Opacity][n]; }
    Vec2 view_space(std::size_t n) const { return {view_space_pos[2 * n], view_space_pos[2 * n + 1]}; }

    static GradientBundle zeros(std::size_t n);
};

double sigmoid(double x);
double logit(double p);
double softplus(double x);

}  // namespace dualsplat
