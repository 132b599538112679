#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <type_traits>
#include <vector>

#include "rs2/common.hpp"
#include "rs2/nn.hpp"
#include "rs2/optim.hpp"
#include "rs2/tensor.hpp"

namespace rs2 {

// Checkpoints are a flat little-endian dump: header, the canonical config the
// run was launched with, every named parameter, then (optionally) optimizer
// slots. Values are stored as float64 regardless of the model scalar, so an
// f32 model round-trips bit-exactly and an f64 verification run can inspect
// f32 training output.
inline constexpr char kCkptMagic[8] = {'R', 'S', '2', 'C', 'K', 'P', 'T', '1'};

struct CheckpointHead {
    std::uint64_t step = 0;
    std::uint32_t scalar_bytes = 0;
    std::uint64_t config_hash = 0;
    std::string config_text;
};

namespace detail {

template <class T>
void put(std::ostream& out, const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(std::istream& in, const char* what) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    require(static_cast<bool>(in), "checkpoint: truncated while reading ", what);
    return v;
}

inline void put_string(std::ostream& out, const std::string& s) {
    put<std::uint64_t>(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string take_string(std::istream& in, const char* what) {
    const auto n = take<std::uint64_t>(in, what);
    require(n <= (1u << 24), "checkpoint: implausible string length for ", what);
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    require(static_cast<bool>(in), "checkpoint: truncated while reading ", what);
    return s;
}

inline void put_doubles(std::ostream& out, const std::vector<double>& v) {
    put<std::uint64_t>(out, v.size());
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline std::vector<double> take_doubles(std::istream& in, const char* what) {
    const auto n = take<std::uint64_t>(in, what);
    require(n <= (1u << 28), "checkpoint: implausible array length for ", what);
    std::vector<double> v(n);
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    require(static_cast<bool>(in), "checkpoint: truncated while reading ", what);
    return v;
}

inline CheckpointHead take_head(std::istream& in, const std::string& path) {
    char magic[8];
    in.read(magic, 8);
    require(static_cast<bool>(in) && std::memcmp(magic, kCkptMagic, 8) == 0,
            "checkpoint: ", path, " is not a checkpoint file");
    CheckpointHead head;
    head.scalar_bytes = take<std::uint32_t>(in, "scalar size");
    head.step = take<std::uint64_t>(in, "step");
    head.config_hash = take<std::uint64_t>(in, "config hash");
    head.config_text = take_string(in, "config");
    return head;
}

} // namespace detail

template <class S>
void save_checkpoint(const std::string& path, const ParamList<S>& params,
                     const AdamW<S>* opt, std::uint64_t step,
                     const std::string& config_text, std::uint64_t config_hash) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail("checkpoint: cannot write ", path);
    out.write(kCkptMagic, 8);
    detail::put<std::uint32_t>(out, sizeof(S));
    detail::put<std::uint64_t>(out, step);
    detail::put<std::uint64_t>(out, config_hash);
    detail::put_string(out, config_text);

    detail::put<std::uint64_t>(out, params.size());
    std::vector<double> buf;
    for (const auto& p : params) {
        detail::put_string(out, p.name);
        const auto& ext = p.tensor->shape();
        detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(ext.size()));
        for (std::size_t e : ext) detail::put<std::uint64_t>(out, e);
        buf.assign(p.tensor->data(), p.tensor->data() + p.tensor->size());
        detail::put_doubles(out, buf);
    }

    detail::put<std::uint8_t>(out, opt ? 1 : 0);
    if (opt) {
        detail::put<std::uint64_t>(out, opt->slots().size());
        for (const auto& [name, slot] : opt->slots()) {
            detail::put_string(out, name);
            detail::put<std::uint64_t>(out, slot.t);
            detail::put_doubles(out, slot.m);
            detail::put_doubles(out, slot.v);
        }
    }
    out.flush();
    if (!out) fail("checkpoint: write to ", path, " failed");
}

// Header + embedded config only, without needing a model.
inline CheckpointHead peek_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("checkpoint: cannot open ", path);
    return detail::take_head(in, path);
}

// Restores every parameter (and optimizer state when `opt` is non-null).
// The file must cover exactly the model's parameter set.
template <class S>
CheckpointHead load_checkpoint(const std::string& path, const ParamList<S>& params,
                               AdamW<S>* opt) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("checkpoint: cannot open ", path);
    const CheckpointHead head = detail::take_head(in, path);

    std::map<std::string, Tensor<S>*> by_name;
    for (const auto& p : params) by_name[p.name] = p.tensor;

    const auto n = detail::take<std::uint64_t>(in, "parameter count");
    require(n == params.size(), "checkpoint: ", path, " holds ", n, " parameters, model has ",
            params.size());
    for (std::uint64_t i = 0; i < n; ++i) {
        const std::string name = detail::take_string(in, "parameter name");
        const auto it = by_name.find(name);
        require(it != by_name.end(), "checkpoint: unknown parameter '", name, "'");
        const auto rank = detail::take<std::uint32_t>(in, "rank");
        std::vector<std::size_t> ext(rank);
        for (auto& e : ext) e = detail::take<std::uint64_t>(in, "extent");
        require(ext == it->second->shape(), "checkpoint: shape mismatch for '", name, "'");
        const std::vector<double> vals = detail::take_doubles(in, "values");
        require(vals.size() == it->second->size(), "checkpoint: value count mismatch for '",
                name, "'");
        for (std::size_t k = 0; k < vals.size(); ++k)
            (*it->second)[k] = static_cast<S>(vals[k]);
    }

    const auto has_opt = detail::take<std::uint8_t>(in, "optimizer flag");
    if (opt) {
        require(has_opt == 1, "checkpoint: ", path, " has no optimizer state to resume from");
        opt->slots().clear();
        const auto ns = detail::take<std::uint64_t>(in, "slot count");
        for (std::uint64_t i = 0; i < ns; ++i) {
            const std::string name = detail::take_string(in, "slot name");
            require(by_name.count(name) == 1, "checkpoint: optimizer slot for unknown '", name,
                    "'");
            auto& slot = opt->slots()[name];
            slot.t = detail::take<std::uint64_t>(in, "slot t");
            slot.m = detail::take_doubles(in, "slot m");
            slot.v = detail::take_doubles(in, "slot v");
            require(slot.m.size() == slot.v.size() &&
                        slot.m.size() == by_name[name]->size(),
                    "checkpoint: slot size mismatch for '", name, "'");
        }
    }
    return head;
}

} // namespace rs2
