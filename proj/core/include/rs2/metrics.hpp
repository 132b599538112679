#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace rs2 {

// Binary mask with 0/1 entries, row-major.
struct Mask {
    std::size_t h = 0, w = 0;
    std::vector<std::uint8_t> v;

    Mask() = default;
    Mask(std::size_t height, std::size_t width)
        : h(height), w(width), v(height * width, 0) {}

    std::uint8_t& at(std::size_t i, std::size_t j) { return v[i * w + j]; }
    std::uint8_t at(std::size_t i, std::size_t j) const { return v[i * w + j]; }
    std::size_t area() const;
    bool operator==(const Mask& o) const { return h == o.h && w == o.w && v == o.v; }
};

// |pred AND gt| / |pred OR gt|; both masks empty counts as 1.
double iou(const Mask& pred, const Mask& gt);

inline constexpr double kPrThresholds[] = {0.5, 0.6, 0.7, 0.8, 0.9};

struct MetricReport {
    double pr[5] = {0, 0, 0, 0, 0}; // percentages at kPrThresholds
    double miou = 0;                // percentage
    double oiou = 0;                // percentage
    std::size_t n = 0;

    // {"pr@0.5": ..., ..., "miou": ..., "oiou": ..., "n": ...}
    std::string to_json() const;
    // Aligned table in the column order Pr@0.5..Pr@0.9, oIoU, mIoU.
    std::string to_table() const;
};

// Pr@t = share of samples with IoU strictly above t; mIoU = mean per-sample
// IoU; oIoU = total intersection over total union.
MetricReport evaluate(const std::vector<std::pair<Mask, Mask>>& samples);

// Per-sample IoUs in input order (used for the eval CSV).
std::vector<double> per_sample_iou(const std::vector<std::pair<Mask, Mask>>& samples);

} // namespace rs2
