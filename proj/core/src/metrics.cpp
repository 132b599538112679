#include "rs2/metrics.hpp"

#include <sstream>

#include "rs2/common.hpp"
#include "rs2/text_table.hpp"

namespace rs2 {

std::size_t Mask::area() const {
    std::size_t a = 0;
    for (std::uint8_t x : v) a += x;
    return a;
}

namespace {

void check_binary(const Mask& m, const char* which) {
    require(m.h > 0 && m.w > 0 && m.v.size() == m.h * m.w, "iou: ", which,
            " mask has inconsistent extents");
    for (std::uint8_t x : m.v)
        require(x == 0 || x == 1, "iou: ", which, " mask contains non-binary value ",
                static_cast<int>(x));
}

struct Counts {
    std::size_t inter = 0, uni = 0;
};

Counts count(const Mask& pred, const Mask& gt) {
    check_binary(pred, "pred");
    check_binary(gt, "gt");
    require(pred.h == gt.h && pred.w == gt.w, "iou: shape mismatch ", pred.h, "x", pred.w, " vs ",
            gt.h, "x", gt.w);
    Counts c;
    for (std::size_t i = 0; i < pred.v.size(); ++i) {
        c.inter += pred.v[i] & gt.v[i];
        c.uni += pred.v[i] | gt.v[i];
    }
    return c;
}

} // namespace

double iou(const Mask& pred, const Mask& gt) {
    Counts c = count(pred, gt);
    if (c.uni == 0) return 1.0;
    return static_cast<double>(c.inter) / static_cast<double>(c.uni);
}

MetricReport evaluate(const std::vector<std::pair<Mask, Mask>>& samples) {
    require(!samples.empty(), "evaluate: empty sample list");
    MetricReport r;
    r.n = samples.size();
    std::size_t total_inter = 0, total_uni = 0;
    double iou_sum = 0;
    std::size_t above[5] = {0, 0, 0, 0, 0};
    for (const auto& [pred, gt] : samples) {
        Counts c = count(pred, gt);
        const double v = c.uni == 0 ? 1.0 : static_cast<double>(c.inter) / c.uni;
        iou_sum += v;
        total_inter += c.inter;
        total_uni += c.uni;
        for (std::size_t t = 0; t < 5; ++t)
            if (v > kPrThresholds[t]) ++above[t];
    }
    for (std::size_t t = 0; t < 5; ++t)
        r.pr[t] = 100.0 * static_cast<double>(above[t]) / static_cast<double>(r.n);
    r.miou = 100.0 * iou_sum / static_cast<double>(r.n);
    r.oiou = total_uni == 0 ? 100.0
                            : 100.0 * static_cast<double>(total_inter) /
                                  static_cast<double>(total_uni);
    return r;
}

std::vector<double> per_sample_iou(const std::vector<std::pair<Mask, Mask>>& samples) {
    std::vector<double> out;
    out.reserve(samples.size());
    for (const auto& [pred, gt] : samples) out.push_back(iou(pred, gt));
    return out;
}

std::string MetricReport::to_json() const {
    std::ostringstream os;
    os << "{";
    for (std::size_t t = 0; t < 5; ++t)
        os << "\"pr@0." << (5 + t) << "\": " << fmt_double(pr[t]) << ", ";
    os << "\"miou\": " << fmt_double(miou) << ", \"oiou\": " << fmt_double(oiou)
       << ", \"n\": " << n << "}";
    return os.str();
}

std::string MetricReport::to_table() const {
    TextTable t;
    t.header({"Pr@0.5", "Pr@0.6", "Pr@0.7", "Pr@0.8", "Pr@0.9", "oIoU", "mIoU", "n"});
    t.row({fmt_fixed(pr[0], 2), fmt_fixed(pr[1], 2), fmt_fixed(pr[2], 2), fmt_fixed(pr[3], 2),
           fmt_fixed(pr[4], 2), fmt_fixed(oiou, 2), fmt_fixed(miou, 2), std::to_string(n)});
    return t.render();
}

} // namespace rs2
