#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rs2/metrics.hpp"
#include "rs2/tensor.hpp"

namespace rs2 {

enum class Category : std::uint8_t { Road, Building, Vehicle, Tank };

const char* category_name(Category c);

// Palette indices used by expressions and rasterization.
std::size_t palette_size();
const char* color_name(std::size_t idx);
void color_bytes(std::size_t idx, std::uint8_t rgb[3]);

// Axis-aligned rectangle [x0,x1) x [y0,y1) or a circle; integer predicates
// so rasterization and the point-in-shape oracle agree exactly.
struct SceneObject {
    Category cat = Category::Building;
    std::size_t color = 0;
    bool circle = false;
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0; // rect extents
    int cx = 0, cy = 0, r = 0;          // circle

    bool inside(int x, int y) const;
    int bb_x0() const { return circle ? cx - r : x0; }
    int bb_y0() const { return circle ? cy - r : y0; }
    int bb_x1() const { return circle ? cx + r + 1 : x1; }
    int bb_y1() const { return circle ? cy + r + 1 : y1; }
    int center_x() const { return circle ? cx : (x0 + x1) / 2; }
    int center_y() const { return circle ? cy : (y0 + y1) / 2; }
};

// Sides a referring expression may name. kNone means the expression carries
// no position clause.
enum class Side : std::int8_t { None = -1, Left = 0, Right = 1, Top = 2, Bottom = 3 };

const char* side_name(Side s);

struct SceneSpec {
    std::uint64_t seed = 0;
    std::size_t canvas = 0;
    std::vector<SceneObject> objects; // objects[0] is the referent
    Side side = Side::None;
};

struct ReferringSample {
    Tensor<double> image; // [H,W,3], byte-quantized values
    std::string expression;
    Mask gt;
    SceneSpec spec;
};

struct SynthConfig {
    std::size_t canvas = 128;
    std::size_t distractors_min = 1;
    std::size_t distractors_max = 2;
    double pos_prob = 0.35; // chance of a position clause

    void validate() const;
};

// Deterministic scene from (seed, config): one uniquely-referable object
// plus distractors, a templated expression, and an exact rasterized mask.
ReferringSample synth_scene(std::uint64_t seed, const SynthConfig& cfg);

// True when an object's center satisfies the side predicate with the
// ambiguity margin used during generation.
bool on_side(const SceneObject& o, Side s, std::size_t canvas);

struct ManifestEntry {
    std::size_t id = 0;
    std::string image;
    std::string mask;
    std::string expression;
    std::uint64_t seed = 0;
};

struct LoadedSample {
    ManifestEntry meta;
    Tensor<double> image;
    Mask gt;
};

// Writes img_NNNN.ppm / msk_NNNN.pgm plus manifest.jsonl; returns the
// manifest. Per-sample seeds are seed0 + id.
std::vector<ManifestEntry> write_dataset(std::size_t n, std::uint64_t seed0,
                                         const std::string& dir, const SynthConfig& cfg);
std::vector<LoadedSample> read_dataset(const std::string& dir);

} // namespace rs2
