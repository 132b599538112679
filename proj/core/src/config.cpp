#include "rs2/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "rs2/common.hpp"
#include "rs2/fusion.hpp"
#include "rs2/vocab.hpp"

namespace rs2 {

namespace {

enum class Kind { Int, Double, Bool, Str, Sizes, Enum };

struct SchemaEntry {
    const char* key;
    Kind kind;
    const char* def;
    const char* choices; // '|'-separated, Enum only
};

// The one place every runtime knob is declared.
constexpr SchemaEntry kSchema[] = {
    {"run.seed", Kind::Int, "7", nullptr},
    {"run.precision", Kind::Enum, "f32", "f32|f64"},
    {"data.canvas", Kind::Int, "128", nullptr},
    {"data.distractors_min", Kind::Int, "1", nullptr},
    {"data.distractors_max", Kind::Int, "2", nullptr},
    {"data.pos_prob", Kind::Double, "0.35", nullptr},
    {"union.image", Kind::Int, "64", nullptr},
    {"union.patch", Kind::Int, "8", nullptr},
    {"union.dim", Kind::Int, "32", nullptr},
    {"union.depth", Kind::Int, "2", nullptr},
    {"union.heads", Kind::Int, "4", nullptr},
    {"union.mlp_ratio", Kind::Int, "2", nullptr},
    {"union.max_text", Kind::Int, "12", nullptr},
    {"enc.widths", Kind::Sizes, "16,32,64,64", nullptr},
    {"enc.blocks", Kind::Sizes, "1,1,1,1", nullptr},
    {"enc.dim", Kind::Int, "64", nullptr},
    {"enc.heads", Kind::Int, "4", nullptr},
    {"enc.mlp_ratio", Kind::Int, "2", nullptr},
    {"enc.frozen", Kind::Bool, "false", nullptr},
    {"bhfm.variant", Kind::Enum, "bi", "bi|uni|linear|off"},
    {"bhfm.use_bc", Kind::Bool, "true", nullptr},
    {"bhfm.use_bl", Kind::Bool, "true", nullptr},
    {"bhfm.alpha_t", Kind::Double, "0.2", nullptr},
    {"bhfm.alpha_i", Kind::Double, "0.5", nullptr},
    {"bhfm.text_dim", Kind::Int, "32", nullptr},
    {"bhfm.heads", Kind::Int, "2", nullptr},
    {"bhfm.mlp_ratio", Kind::Int, "2", nullptr},
    {"mpg.enabled", Kind::Bool, "true", nullptr},
    {"mpg.use_mhca", Kind::Bool, "true", nullptr},
    {"mpg.heads", Kind::Int, "4", nullptr},
    {"head.rounds", Kind::Int, "2", nullptr},
    {"head.heads", Kind::Int, "4", nullptr},
    {"loss.ce", Kind::Double, "1", nullptr},
    {"loss.dice", Kind::Double, "0.1", nullptr},
    {"loss.tbl", Kind::Double, "0.2", nullptr},
    {"loss.dice_eps", Kind::Double, "1e-06", nullptr},
    {"opt.lr_base", Kind::Double, "0.002", nullptr},
    {"opt.lr_fusion", Kind::Double, "0.004", nullptr},
    {"opt.fusion_prefixes", Kind::Str, "bhfm.,mpg.", nullptr},
    {"opt.beta1", Kind::Double, "0.9", nullptr},
    {"opt.beta2", Kind::Double, "0.999", nullptr},
    {"opt.eps", Kind::Double, "1e-08", nullptr},
    {"opt.weight_decay", Kind::Double, "0.01", nullptr},
    {"opt.clip_norm", Kind::Double, "0", nullptr},
    {"opt.steps", Kind::Int, "300", nullptr},
    {"opt.warmup", Kind::Int, "0", nullptr},
    {"opt.decay_at", Kind::Int, "240", nullptr},
    {"opt.log_every", Kind::Int, "1", nullptr},
    {"opt.ckpt_every", Kind::Int, "0", nullptr},
    {"ablate.steps", Kind::Int, "80", nullptr},
    {"eval.threshold", Kind::Double, "0.5", nullptr},
};

const SchemaEntry* find_entry(const std::string& key) {
    for (const auto& e : kSchema)
        if (key == e.key) return &e;
    return nullptr;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
    std::int64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    require(ec == std::errc() && p == v.data() + v.size(), "config: ", key,
            " expects an integer, got '", v, "'");
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    double out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    require(ec == std::errc() && p == v.data() + v.size(), "config: ", key,
            " expects a number, got '", v, "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail("config: ", key, " expects true/false, got '", v, "'");
}

std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, ',')) {
        part = trim(part);
        const std::int64_t x = parse_int(key, part);
        require(x > 0, "config: ", key, " entries must be positive, got ", x);
        out.push_back(static_cast<std::size_t>(x));
    }
    require(!out.empty(), "config: ", key, " must not be empty");
    return out;
}

bool enum_allows(const char* choices, const std::string& v) {
    std::stringstream ss(choices);
    std::string part;
    while (std::getline(ss, part, '|'))
        if (part == v) return true;
    return false;
}

// Normalized textual form so canonical dumps are independent of the
// spelling used in input ("1e-3" and "0.001" store identically).
std::string normalize(const SchemaEntry& e, const std::string& v) {
    switch (e.kind) {
    case Kind::Int: return std::to_string(parse_int(e.key, v));
    case Kind::Double: return fmt_double(parse_double(e.key, v));
    case Kind::Bool: return parse_bool(e.key, v) ? "true" : "false";
    case Kind::Str: return v;
    case Kind::Sizes: {
        auto sizes = parse_sizes(e.key, v);
        std::string out;
        for (std::size_t i = 0; i < sizes.size(); ++i) {
            if (i) out += ",";
            out += std::to_string(sizes[i]);
        }
        return out;
    }
    case Kind::Enum:
        require(enum_allows(e.choices, v), "config: ", e.key, " must be one of ", e.choices,
                ", got '", v, "'");
        return v;
    }
    fail("config: unhandled kind for ", e.key);
}

} // namespace

Config::Config() {
    for (const auto& e : kSchema) values_[e.key] = normalize(e, e.def);
}

Config Config::from_file(const std::string& path) {
    Config c;
    c.apply_file(path);
    return c;
}

void Config::apply_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("config: cannot open ", path);
    std::stringstream buf;
    buf << in.rdbuf();
    apply_text(buf.str(), path);
}

void Config::apply_text(const std::string& text, const std::string& origin) {
    std::stringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const std::size_t eq = t.find('=');
        require(eq != std::string::npos, "config: ", origin, ":", lineno,
                ": expected key=value");
        set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
}

void Config::apply_set(const std::string& kv) {
    const std::size_t eq = kv.find('=');
    require(eq != std::string::npos, "config: --set expects key=value, got '", kv, "'");
    set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
}

void Config::set(const std::string& key, const std::string& value) {
    const SchemaEntry* e = find_entry(key);
    if (!e) fail("config: unknown key '", key, "'");
    values_[key] = normalize(*e, value);
}

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

std::int64_t Config::get_int(const std::string& key) const {
    return parse_int(key, get_str(key));
}

double Config::get_double(const std::string& key) const {
    return parse_double(key, get_str(key));
}

bool Config::get_bool(const std::string& key) const { return parse_bool(key, get_str(key)); }

const std::string& Config::get_str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) fail("config: unknown key '", key, "'");
    return it->second;
}

std::vector<std::size_t> Config::get_sizes(const std::string& key) const {
    return parse_sizes(key, get_str(key));
}

std::string Config::canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) {
        out += k;
        out += "=";
        out += v;
        out += "\n";
    }
    return out;
}

std::uint64_t Config::hash() const {
    std::uint64_t h = 14695981039346656037ull;
    for (char c : canonical()) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return h;
}

namespace {

std::size_t as_size(const Config& c, const std::string& key) {
    const std::int64_t v = c.get_int(key);
    require(v >= 0, "config: ", key, " must be non-negative");
    return static_cast<std::size_t>(v);
}

} // namespace

ModelConfig model_config(const Config& c) {
    ModelConfig m;
    m.union_.image = as_size(c, "union.image");
    m.union_.patch = as_size(c, "union.patch");
    m.union_.dim = as_size(c, "union.dim");
    m.union_.depth = as_size(c, "union.depth");
    m.union_.heads = as_size(c, "union.heads");
    m.union_.mlp_ratio = as_size(c, "union.mlp_ratio");
    m.union_.max_text = as_size(c, "union.max_text");
    m.union_.vocab = Vocab::builtin().size();

    m.enc.input = as_size(c, "data.canvas");
    const auto widths = c.get_sizes("enc.widths");
    const auto blocks = c.get_sizes("enc.blocks");
    require(widths.size() == 4 && blocks.size() == 4,
            "config: enc.widths and enc.blocks need exactly 4 entries");
    std::copy(widths.begin(), widths.end(), m.enc.widths.begin());
    std::copy(blocks.begin(), blocks.end(), m.enc.blocks.begin());
    m.enc.dim = as_size(c, "enc.dim");
    m.enc.heads = as_size(c, "enc.heads");
    m.enc.mlp_ratio = as_size(c, "enc.mlp_ratio");
    m.enc.frozen = c.get_bool("enc.frozen");

    m.fusion.variant = parse_variant(c.get_str("bhfm.variant"));
    m.fusion.use_bc = c.get_bool("bhfm.use_bc");
    m.fusion.use_bl = c.get_bool("bhfm.use_bl");
    m.fusion.coeffs.alpha_t = c.get_double("bhfm.alpha_t");
    m.fusion.coeffs.alpha_i = c.get_double("bhfm.alpha_i");
    m.fusion.text_dim = as_size(c, "bhfm.text_dim");
    m.fusion.heads = as_size(c, "bhfm.heads");
    m.fusion.mlp_ratio = as_size(c, "bhfm.mlp_ratio");

    m.mpg.enabled = c.get_bool("mpg.enabled");
    m.mpg.use_mhca = c.get_bool("mpg.use_mhca");
    m.mpg.heads = as_size(c, "mpg.heads");

    m.head.rounds = as_size(c, "head.rounds");
    m.head.heads = as_size(c, "head.heads");

    m.loss.ce = c.get_double("loss.ce");
    m.loss.dice = c.get_double("loss.dice");
    m.loss.tbl = c.get_double("loss.tbl");
    m.loss.dice_eps = c.get_double("loss.dice_eps");

    m.validate();
    return m;
}

SynthConfig synth_config(const Config& c) {
    SynthConfig s;
    s.canvas = as_size(c, "data.canvas");
    s.distractors_min = as_size(c, "data.distractors_min");
    s.distractors_max = as_size(c, "data.distractors_max");
    s.pos_prob = c.get_double("data.pos_prob");
    s.validate();
    return s;
}

OptConfig opt_config(const Config& c) {
    OptConfig o;
    o.lr_base = c.get_double("opt.lr_base");
    o.lr_fusion = c.get_double("opt.lr_fusion");
    o.fusion_prefixes.clear();
    std::stringstream ss(c.get_str("opt.fusion_prefixes"));
    std::string part;
    while (std::getline(ss, part, ','))
        if (!part.empty()) o.fusion_prefixes.push_back(part);
    o.beta1 = c.get_double("opt.beta1");
    o.beta2 = c.get_double("opt.beta2");
    o.eps = c.get_double("opt.eps");
    o.weight_decay = c.get_double("opt.weight_decay");
    o.clip_norm = c.get_double("opt.clip_norm");
    require(o.clip_norm >= 0, "config: opt.clip_norm must be >= 0");
    o.steps = as_size(c, "opt.steps");
    o.warmup = as_size(c, "opt.warmup");
    o.decay_at = as_size(c, "opt.decay_at");
    o.log_every = as_size(c, "opt.log_every");
    o.ckpt_every = as_size(c, "opt.ckpt_every");
    require(o.lr_base > 0 && o.lr_fusion > 0 && o.steps > 0 && o.log_every > 0,
            "config: opt.lr_*, opt.steps, opt.log_every must be positive");
    require(o.beta1 >= 0 && o.beta1 < 1 && o.beta2 >= 0 && o.beta2 < 1 && o.eps > 0,
            "config: optimizer moments out of range");
    return o;
}

} // namespace rs2
