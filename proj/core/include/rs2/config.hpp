#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rs2/model.hpp"
#include "rs2/synth.hpp"

namespace rs2 {

// Flat dotted-key configuration. Every key has a schema entry (type +
// default); unknown keys and ill-typed values are rejected at assignment so
// typos in files or --set flags fail loudly.
class Config {
public:
    Config(); // all defaults

    static Config from_file(const std::string& path); // defaults + file

    void apply_file(const std::string& path);
    void apply_text(const std::string& text, const std::string& origin = "<text>");
    void apply_set(const std::string& key_eq_value); // "key=value"
    void set(const std::string& key, const std::string& value);

    bool has(const std::string& key) const;
    std::int64_t get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    const std::string& get_str(const std::string& key) const;
    std::vector<std::size_t> get_sizes(const std::string& key) const; // comma list

    // All keys, sorted, as "key=value" lines with normalized values.
    std::string canonical() const;
    std::uint64_t hash() const; // FNV-1a 64 of canonical()

private:
    std::map<std::string, std::string> values_;
};

struct OptConfig {
    double lr_base = 2e-3;
    double lr_fusion = 4e-3;
    std::vector<std::string> fusion_prefixes{"bhfm.", "mpg."};
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double weight_decay = 0.01;
    double clip_norm = 0.0; // global gradient-norm cap; 0 disables
    std::size_t steps = 300;
    std::size_t warmup = 0;     // linear lr ramp over the first N steps; 0 disables
    std::size_t decay_at = 240; // lr x0.1 from this step on
    std::size_t log_every = 1;
    std::size_t ckpt_every = 0; // 0 = final checkpoint only
};

// Cross-validated views over a Config.
ModelConfig model_config(const Config& c);
SynthConfig synth_config(const Config& c);
OptConfig opt_config(const Config& c);

} // namespace rs2
