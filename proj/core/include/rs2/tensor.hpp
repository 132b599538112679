#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "rs2/common.hpp"
#include "rs2/rng.hpp"

namespace rs2 {

// Dense row-major tensor. S is float (training mode) or double
// (verification mode).
template <class S>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), v_(count(shape_), S(0)) {}

    Tensor(std::vector<std::size_t> shape, std::vector<S> values)
        : shape_(std::move(shape)), v_(std::move(values)) {
        require(v_.size() == count(shape_), "tensor: ", v_.size(),
                " values for shape of ", count(shape_));
    }

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<std::size_t> shape, S value) {
        Tensor t(std::move(shape));
        for (auto& x : t.v_) x = value;
        return t;
    }

    static Tensor uniform(Rng& rng, std::vector<std::size_t> shape, double lo, double hi) {
        Tensor t(std::move(shape));
        for (auto& x : t.v_) x = static_cast<S>(rng.uniform(lo, hi));
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t extent(std::size_t i) const { return shape_[i]; }
    std::size_t size() const { return v_.size(); }
    bool empty() const { return v_.empty(); }

    S* data() { return v_.data(); }
    const S* data() const { return v_.data(); }

    S& operator[](std::size_t flat) { return v_[flat]; }
    S operator[](std::size_t flat) const { return v_[flat]; }

    S& at(std::size_t i, std::size_t j) { return v_[i * shape_[1] + j]; }
    S at(std::size_t i, std::size_t j) const { return v_[i * shape_[1] + j]; }

    S& at(std::size_t i, std::size_t j, std::size_t k) {
        return v_[(i * shape_[1] + j) * shape_[2] + k];
    }
    S at(std::size_t i, std::size_t j, std::size_t k) const {
        return v_[(i * shape_[1] + j) * shape_[2] + k];
    }

    Tensor reshaped(std::vector<std::size_t> shape) const {
        require(count(shape) == v_.size(), "reshape: element count mismatch");
        Tensor t = *this;
        t.shape_ = std::move(shape);
        return t;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (S x : v_)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape_[i]);
        }
        return s + "]";
    }

    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (auto e : shape) n *= e;
        return n;
    }

private:
    std::vector<std::size_t> shape_;
    std::vector<S> v_;
};

// Value-level helpers shared by non-differentiable paths (data prep, tests).

// Splits [H,W,3] into non-overlapping p x p patches, row-major block order,
// row-major pixels within a block, channels fastest.
template <class S>
Tensor<S> patchify_values(const Tensor<S>& image, std::size_t p) {
    require(image.rank() == 3 && image.extent(2) == 3, "patchify: expected [H,W,3] image");
    const std::size_t h = image.extent(0), w = image.extent(1);
    require(p > 0 && h % p == 0 && w % p == 0,
            "patchify: patch size ", p, " does not divide ", h, "x", w);
    const std::size_t gh = h / p, gw = w / p;
    Tensor<S> out({gh * gw, p * p * 3});
    for (std::size_t by = 0; by < gh; ++by)
        for (std::size_t bx = 0; bx < gw; ++bx) {
            const std::size_t row = by * gw + bx;
            std::size_t col = 0;
            for (std::size_t iy = 0; iy < p; ++iy)
                for (std::size_t ix = 0; ix < p; ++ix)
                    for (std::size_t c = 0; c < 3; ++c)
                        out.at(row, col++) = image.at(by * p + iy, bx * p + ix, c);
        }
    return out;
}

// Inverse of patchify_values on valid shapes.
template <class S>
Tensor<S> unpatchify_values(const Tensor<S>& patches, std::size_t p, std::size_t h, std::size_t w) {
    require(patches.rank() == 2 && patches.extent(1) == p * p * 3 &&
                patches.extent(0) == (h / p) * (w / p) && h % p == 0 && w % p == 0,
            "unpatchify: shape mismatch");
    const std::size_t gw = w / p;
    Tensor<S> img({h, w, 3});
    for (std::size_t row = 0; row < patches.extent(0); ++row) {
        const std::size_t by = row / gw, bx = row % gw;
        std::size_t col = 0;
        for (std::size_t iy = 0; iy < p; ++iy)
            for (std::size_t ix = 0; ix < p; ++ix)
                for (std::size_t c = 0; c < 3; ++c)
                    img.at(by * p + iy, bx * p + ix, c) = patches.at(row, col++);
    }
    return img;
}

namespace detail {

// align-corners-false source coordinate with edge clamping.
struct LerpTap {
    std::size_t lo, hi;
    double w_hi; // weight of hi; lo gets 1 - w_hi
};

inline LerpTap lerp_tap(std::size_t dst, std::size_t dst_n, std::size_t src_n) {
    const double sx = (static_cast<double>(dst) + 0.5) *
                          (static_cast<double>(src_n) / static_cast<double>(dst_n)) -
                      0.5;
    double f = std::floor(sx);
    double frac = sx - f;
    long lo = static_cast<long>(f);
    long hi = lo + 1;
    const long max = static_cast<long>(src_n) - 1;
    if (lo < 0) { lo = 0; }
    if (lo > max) { lo = max; }
    if (hi < 0) { hi = 0; }
    if (hi > max) { hi = max; }
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi), frac};
}

} // namespace detail

// Bilinear resize of a single-channel [h,w] map, align-corners-false,
// edge-clamped sampling.
template <class S>
Tensor<S> bilinear_resize_values(const Tensor<S>& m, std::size_t out_h, std::size_t out_w) {
    require(m.rank() == 2, "bilinear_resize: expected [h,w] map");
    require(out_h >= 1 && out_w >= 1, "bilinear_resize: target extents must be >= 1");
    const std::size_t h = m.extent(0), w = m.extent(1);
    require(h >= 1 && w >= 1, "bilinear_resize: source extents must be >= 1");
    Tensor<S> out({out_h, out_w});
    for (std::size_t y = 0; y < out_h; ++y) {
        const auto ty = detail::lerp_tap(y, out_h, h);
        for (std::size_t x = 0; x < out_w; ++x) {
            const auto tx = detail::lerp_tap(x, out_w, w);
            const double v00 = static_cast<double>(m.at(ty.lo, tx.lo));
            const double v01 = static_cast<double>(m.at(ty.lo, tx.hi));
            const double v10 = static_cast<double>(m.at(ty.hi, tx.lo));
            const double v11 = static_cast<double>(m.at(ty.hi, tx.hi));
            const double top = v00 * (1.0 - tx.w_hi) + v01 * tx.w_hi;
            const double bot = v10 * (1.0 - tx.w_hi) + v11 * tx.w_hi;
            out.at(y, x) = static_cast<S>(top * (1.0 - ty.w_hi) + bot * ty.w_hi);
        }
    }
    return out;
}

// Channelwise bilinear resize of an [H,W,3] image.
template <class S>
Tensor<S> bilinear_resize_image(const Tensor<S>& img, std::size_t out_h, std::size_t out_w) {
    require(img.rank() == 3 && img.extent(2) == 3, "resize_image: expected [H,W,3]");
    Tensor<S> out({out_h, out_w, 3});
    for (std::size_t c = 0; c < 3; ++c) {
        Tensor<S> ch({img.extent(0), img.extent(1)});
        for (std::size_t y = 0; y < img.extent(0); ++y)
            for (std::size_t x = 0; x < img.extent(1); ++x)
                ch.at(y, x) = img.at(y, x, c);
        Tensor<S> r = bilinear_resize_values(ch, out_h, out_w);
        for (std::size_t y = 0; y < out_h; ++y)
            for (std::size_t x = 0; x < out_w; ++x)
                out.at(y, x, c) = r.at(y, x);
    }
    return out;
}

template <class T, class S>
Tensor<T> tensor_cast(const Tensor<S>& t) {
    Tensor<T> out(t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<T>(t[i]);
    return out;
}

} // namespace rs2
