#include "rs2/synth.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "rs2/common.hpp"
#include "rs2/image_io.hpp"
#include "rs2/rng.hpp"

namespace fs = std::filesystem;

namespace rs2 {

namespace {

struct PaletteEntry {
    const char* name;
    std::uint8_t rgb[3];
};

// Muted tones keep foreground-background contrast low on purpose.
constexpr PaletteEntry kPalette[] = {
    {"red", {165, 62, 55}},    {"green", {78, 136, 74}},  {"blue", {70, 98, 158}},
    {"yellow", {178, 166, 80}}, {"white", {212, 212, 208}}, {"purple", {128, 76, 140}},
};

constexpr const char* kCategoryNames[] = {"road", "building", "vehicle", "tank"};
constexpr const char* kSideNames[] = {"left", "right", "top", "bottom"};

int clamp_byte(int v) { return v < 0 ? 0 : (v > 255 ? 255 : v); }

std::size_t side_margin(std::size_t canvas) { return canvas / 16; }

// Uniform int in [lo, hi].
int draw(Rng& rng, int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); }

// Object geometry is laid out in units of canvas/8, which at the default
// canvas is exactly the decoder's stride-16 cell, so mask boundaries mostly
// fall on cell edges. A mask edge cutting through the middle of a cell forces
// the upsampled logit ramp between two cells to place its zero crossing at a
// precise amplitude ratio, which an optimizer approaches only asymptotically;
// edge-aligned shapes keep toy training runs short without making the scenes
// trivial.
SceneObject draw_geometry(Rng& rng, Category cat, std::size_t canvas, Side want) {
    const int c = static_cast<int>(canvas);
    const int q = c / 8; // layout unit; decoder cell size at the default canvas
    SceneObject o;
    o.cat = cat;
    switch (cat) {
    case Category::Road: {
        const int wid = q * draw(rng, 2, 3);
        // A road spans the canvas; its free axis must allow the wanted side.
        bool vertical;
        if (want == Side::Left || want == Side::Right) vertical = true;
        else if (want == Side::Top || want == Side::Bottom) vertical = false;
        else vertical = rng.coin();
        const int lo = q * draw(rng, 0, (c - wid) / q);
        if (vertical) {
            o.x0 = lo;
            o.x1 = lo + wid;
            o.y0 = 0;
            o.y1 = c;
        } else {
            o.x0 = 0;
            o.x1 = c;
            o.y0 = lo;
            o.y1 = lo + wid;
        }
        break;
    }
    case Category::Building: {
        const int side = q * draw(rng, 2, 3);
        o.x0 = q * draw(rng, 0, (c - side) / q);
        o.y0 = q * draw(rng, 0, (c - side) / q);
        o.x1 = o.x0 + side;
        o.y1 = o.y0 + side;
        break;
    }
    case Category::Vehicle: {
        // Strictly oblong so a vehicle never shares a building's square
        // silhouette (category must stay visually decidable).
        const int len = q * draw(rng, 3, 4);
        const int wid = q * 2;
        const bool vertical = rng.coin();
        const int w = vertical ? wid : len;
        const int h = vertical ? len : wid;
        o.x0 = q * draw(rng, 0, (c - w) / q);
        o.y0 = q * draw(rng, 0, (c - h) / q);
        o.x1 = o.x0 + w;
        o.y1 = o.y0 + h;
        break;
    }
    case Category::Tank: {
        // Circles cannot align with cells; center them on unit corners, and
        // keep them large so the boundary band is small next to the interior.
        o.circle = true;
        o.r = q * draw(rng, 1, 2) + q / 2;
        const int lo = (o.r + q - 1) / q;
        o.cx = q * draw(rng, lo, 8 - lo);
        o.cy = q * draw(rng, lo, 8 - lo);
        break;
    }
    }
    return o;
}

bool boxes_clear(const SceneObject& a, const SceneObject& b, int gap) {
    return a.bb_x1() + gap <= b.bb_x0() || b.bb_x1() + gap <= a.bb_x0() ||
           a.bb_y1() + gap <= b.bb_y0() || b.bb_y1() + gap <= a.bb_y0();
}

// Strictly on the opposite half, beyond the margin, so the expression's
// side clause can never match this object.
bool clearly_off_side(const SceneObject& o, Side s, std::size_t canvas) {
    const int m = static_cast<int>(side_margin(canvas));
    const int mid = static_cast<int>(canvas) / 2;
    switch (s) {
    case Side::Left: return o.center_x() >= mid + m;
    case Side::Right: return o.center_x() <= mid - m;
    case Side::Top: return o.center_y() >= mid + m;
    case Side::Bottom: return o.center_y() <= mid - m;
    case Side::None: return false;
    }
    return false;
}

void rasterize(const SceneSpec& spec, Rng& rng, Tensor<double>& image) {
    const int c = static_cast<int>(spec.canvas);
    // Background: smooth diagonal gradient over low-amplitude noise.
    for (int y = 0; y < c; ++y)
        for (int x = 0; x < c; ++x) {
            const int base = 92 + (14 * (x + y)) / (2 * c - 2) - 7;
            const int noise = draw(rng, -8, 8);
            for (int ch = 0; ch < 3; ++ch) {
                const int jitter = draw(rng, -3, 3);
                const int byte = clamp_byte(base + noise + jitter);
                image[(static_cast<std::size_t>(y) * spec.canvas + x) * 3 + ch] = byte / 255.0;
            }
        }
    for (const auto& o : spec.objects) {
        std::uint8_t rgb[3];
        color_bytes(o.color, rgb);
        const int yl = std::max(0, o.bb_y0()), yh = std::min(c, o.bb_y1());
        const int xl = std::max(0, o.bb_x0()), xh = std::min(c, o.bb_x1());
        for (int y = yl; y < yh; ++y)
            for (int x = xl; x < xh; ++x) {
                if (!o.inside(x, y)) continue;
                const int noise = draw(rng, -6, 6);
                for (int ch = 0; ch < 3; ++ch) {
                    const int byte = clamp_byte(rgb[ch] + noise);
                    image[(static_cast<std::size_t>(y) * spec.canvas + x) * 3 + ch] =
                        byte / 255.0;
                }
            }
    }
}

std::string make_expression(const SceneSpec& spec) {
    const SceneObject& ref = spec.objects.front();
    std::string e = "the ";
    e += color_name(ref.color);
    e += " ";
    e += category_name(ref.cat);
    if (spec.side != Side::None) {
        e += " on the ";
        e += side_name(spec.side);
    }
    return e;
}

std::string pad4(std::size_t n) {
    std::string s = std::to_string(n);
    require(s.size() <= 4, "dataset: sample id ", n, " exceeds 4 digits");
    return std::string(4 - s.size(), '0') + s;
}

std::string json_escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        if (ch == '"' || ch == '\\') out.push_back('\\');
        require(static_cast<unsigned char>(ch) >= 0x20, "manifest: control char in expression");
        out.push_back(ch);
    }
    return out;
}

} // namespace

const char* category_name(Category c) { return kCategoryNames[static_cast<std::size_t>(c)]; }

std::size_t palette_size() { return sizeof(kPalette) / sizeof(kPalette[0]); }

const char* color_name(std::size_t idx) {
    require(idx < palette_size(), "palette: index ", idx, " out of range");
    return kPalette[idx].name;
}

void color_bytes(std::size_t idx, std::uint8_t rgb[3]) {
    require(idx < palette_size(), "palette: index ", idx, " out of range");
    for (int i = 0; i < 3; ++i) rgb[i] = kPalette[idx].rgb[i];
}

const char* side_name(Side s) {
    require(s != Side::None, "side_name: no side");
    return kSideNames[static_cast<std::size_t>(s)];
}

bool SceneObject::inside(int x, int y) const {
    if (circle) {
        const long long dx = x - cx, dy = y - cy;
        return dx * dx + dy * dy <= static_cast<long long>(r) * r;
    }
    return x >= x0 && x < x1 && y >= y0 && y < y1;
}

bool on_side(const SceneObject& o, Side s, std::size_t canvas) {
    const int m = static_cast<int>(side_margin(canvas));
    const int mid = static_cast<int>(canvas) / 2;
    switch (s) {
    case Side::Left: return o.center_x() <= mid - m;
    case Side::Right: return o.center_x() >= mid + m;
    case Side::Top: return o.center_y() <= mid - m;
    case Side::Bottom: return o.center_y() >= mid + m;
    case Side::None: return true;
    }
    return false;
}

void SynthConfig::validate() const {
    require(canvas >= 64 && canvas % 16 == 0, "data.canvas must be >= 64 and divisible by 16");
    require(distractors_min <= distractors_max && distractors_max <= 4,
            "data.distractors range invalid (max 4)");
    require(pos_prob >= 0.0 && pos_prob <= 1.0, "data.pos_prob must be in [0,1]");
}

ReferringSample synth_scene(std::uint64_t seed, const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(seed);
    const std::size_t n_d =
        cfg.distractors_min + rng.below(cfg.distractors_max - cfg.distractors_min + 1);

    for (int attempt = 0; attempt < 64; ++attempt) {
        SceneSpec spec;
        spec.seed = seed;
        spec.canvas = cfg.canvas;

        const auto cat = static_cast<Category>(rng.below(4));
        const std::size_t color = rng.below(palette_size());
        spec.side = rng.uniform() < cfg.pos_prob ? static_cast<Side>(rng.below(4)) : Side::None;

        // Referent: must satisfy its own side clause.
        bool placed = false;
        for (int t = 0; t < 40 && !placed; ++t) {
            SceneObject o = draw_geometry(rng, cat, cfg.canvas, spec.side);
            o.color = color;
            if (spec.side != Side::None && !on_side(o, spec.side, cfg.canvas)) continue;
            spec.objects.push_back(o);
            placed = true;
        }
        if (!placed) continue;

        bool scene_ok = true;
        for (std::size_t d = 0; d < n_d && scene_ok; ++d) {
            bool ok = false;
            for (int t = 0; t < 40 && !ok; ++t) {
                const auto dcat = static_cast<Category>(rng.below(4));
                const std::size_t dcolor = rng.below(palette_size());
                SceneObject o = draw_geometry(rng, dcat, cfg.canvas, Side::None);
                o.color = dcolor;
                const bool same_attrs = dcat == cat && dcolor == color;
                if (same_attrs) {
                    // Identical attributes are only allowed when the side
                    // clause unambiguously excludes the distractor.
                    if (spec.side == Side::None) continue;
                    if (!clearly_off_side(o, spec.side, cfg.canvas)) continue;
                }
                bool clear = true;
                for (const auto& other : spec.objects)
                    clear = clear && boxes_clear(o, other, 2);
                if (!clear) continue;
                spec.objects.push_back(o);
                ok = true;
            }
            scene_ok = ok;
        }
        if (!scene_ok) continue;

        ReferringSample s;
        s.spec = spec;
        s.expression = make_expression(spec);
        s.image = Tensor<double>({cfg.canvas, cfg.canvas, 3});
        rasterize(spec, rng, s.image);
        s.gt = Mask(cfg.canvas, cfg.canvas);
        const SceneObject& ref = spec.objects.front();
        for (int y = 0; y < static_cast<int>(cfg.canvas); ++y)
            for (int x = 0; x < static_cast<int>(cfg.canvas); ++x)
                s.gt.at(y, x) = ref.inside(x, y) ? 1 : 0;
        require(s.gt.area() > 0, "synth: empty referent mask (seed ", seed, ")");
        return s;
    }
    fail("synth: could not place a unique referent after bounded retries (seed ", seed, ")");
}

std::vector<ManifestEntry> write_dataset(std::size_t n, std::uint64_t seed0,
                                         const std::string& dir, const SynthConfig& cfg) {
    require(n > 0, "write_dataset: n must be positive");
    fs::create_directories(dir);
    std::ofstream manifest(fs::path(dir) / "manifest.jsonl");
    if (!manifest) fail("write_dataset: cannot write manifest in ", dir);
    std::vector<ManifestEntry> entries;
    entries.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        ReferringSample s = synth_scene(seed0 + i, cfg);
        ManifestEntry e;
        e.id = i;
        e.image = "img_" + pad4(i) + ".ppm";
        e.mask = "msk_" + pad4(i) + ".pgm";
        e.expression = s.expression;
        e.seed = seed0 + i;
        write_ppm((fs::path(dir) / e.image).string(), s.image);
        write_pgm((fs::path(dir) / e.mask).string(), s.gt);
        manifest << "{\"id\": " << e.id << ", \"image\": \"" << json_escape(e.image)
                 << "\", \"mask\": \"" << json_escape(e.mask) << "\", \"expression\": \""
                 << json_escape(e.expression) << "\", \"seed\": " << e.seed << "}\n";
        entries.push_back(std::move(e));
    }
    if (!manifest) fail("write_dataset: manifest write failed in ", dir);
    return entries;
}

std::vector<LoadedSample> read_dataset(const std::string& dir) {
    const fs::path mpath = fs::path(dir) / "manifest.jsonl";
    std::ifstream manifest(mpath);
    if (!manifest) fail("read_dataset: cannot open ", mpath.string());
    std::vector<LoadedSample> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(manifest, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& ex) {
            fail("read_dataset: ", mpath.string(), ":", lineno, ": ", ex.what());
        }
        for (const char* key : {"id", "image", "mask", "expression", "seed"})
            require(j.contains(key), "read_dataset: ", mpath.string(), ":", lineno,
                    ": missing field '", key, "'");
        LoadedSample s;
        s.meta.id = j["id"].get<std::size_t>();
        s.meta.image = j["image"].get<std::string>();
        s.meta.mask = j["mask"].get<std::string>();
        s.meta.expression = j["expression"].get<std::string>();
        s.meta.seed = j["seed"].get<std::uint64_t>();
        s.image = read_ppm((fs::path(dir) / s.meta.image).string());
        s.gt = read_pgm((fs::path(dir) / s.meta.mask).string());
        require(s.image.extent(0) == s.gt.h && s.image.extent(1) == s.gt.w,
                "read_dataset: image/mask extents differ for id ", s.meta.id);
        out.push_back(std::move(s));
    }
    require(!out.empty(), "read_dataset: ", mpath.string(), " has no samples");
    return out;
}

} // namespace rs2
