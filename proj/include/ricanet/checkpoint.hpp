#pragma once

// Binary checkpoint of a trained network.
//
//   "UFCK" | u32 version | u32 echo length | echo bytes (network config text)
//   | u32 input H, W, C | u32 layer count | layers... | u64 FNV-1a hash of all preceding bytes
//
// Integers are little-endian u32, parameters little-endian f64. Layers:
//   untied: u32 0 | u32 H W C fh fw stride | u32 oh ow oc | u32 has_lcn | u32 window | f64 floor
//           | u32 field count | params per field
//   dense:  u32 1 | u32 H W C | params
//   params: u32 k | u32 n | f64 alpha lambda eps | f64 W[k*n] | f64 b[n]

#include <bit>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "ricanet/datapipe.hpp"
#include "ricanet/errors.hpp"
#include "ricanet/layers.hpp"

namespace ricanet {

inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    std::uint32_t u32() {
        need(4);
        const auto v = get_u32(bytes_, pos_);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string_view bytes(std::size_t n) {
        need(n);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t position() const { return pos_; }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw DataError("checkpoint truncated");
    }
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

inline void put_dims(std::string& out, const ImageDims& d) {
    put_u32(out, static_cast<std::uint32_t>(d.height));
    put_u32(out, static_cast<std::uint32_t>(d.width));
    put_u32(out, static_cast<std::uint32_t>(d.channels));
}

inline ImageDims get_dims(Reader& r) {
    ImageDims d;
    d.height = r.u32();
    d.width = r.u32();
    d.channels = r.u32();
    return d;
}

inline void put_params(std::string& out, const RicaParams& p) {
    put_u32(out, static_cast<std::uint32_t>(p.filters()));
    put_u32(out, static_cast<std::uint32_t>(p.inputs()));
    put_f64(out, p.alpha);
    put_f64(out, p.lambda);
    put_f64(out, p.eps_sparsity);
    for (double v : p.W.data()) put_f64(out, v);
    for (double v : p.b.data()) put_f64(out, v);
}

inline RicaParams get_params(Reader& r) {
    const std::size_t k = r.u32(), n = r.u32();
    if (k == 0 || n == 0) throw DataError("checkpoint: empty parameter bundle");
    RicaParams p{Tensor({k, n}), 0.0, Tensor({n}), 0.0, 0.0};
    p.alpha = r.f64();
    p.lambda = r.f64();
    p.eps_sparsity = r.f64();
    for (double& v : p.W.data()) v = r.f64();
    for (double& v : p.b.data()) v = r.f64();
    return p;
}

} // namespace detail

inline void serialize_layer(std::string& out, const Layer& layer) {
    if (const auto* u = std::get_if<UntiedLayer>(&layer)) {
        detail::put_u32(out, 0);
        detail::put_dims(out, u->geometry.input);
        detail::put_u32(out, static_cast<std::uint32_t>(u->geometry.field_h));
        detail::put_u32(out, static_cast<std::uint32_t>(u->geometry.field_w));
        detail::put_u32(out, static_cast<std::uint32_t>(u->geometry.stride));
        detail::put_dims(out, {u->output_block.height, u->output_block.width, u->output_block.channels});
        detail::put_u32(out, u->lcn ? 1 : 0);
        detail::put_u32(out, u->lcn ? static_cast<std::uint32_t>(u->lcn->window) : 0);
        detail::put_f64(out, u->lcn ? u->lcn->floor_c : 0.0);
        detail::put_u32(out, static_cast<std::uint32_t>(u->fields.size()));
        for (const auto& f : u->fields) detail::put_params(out, f);
    } else {
        const auto& d = std::get<DenseLayer>(layer);
        detail::put_u32(out, 1);
        detail::put_dims(out, d.input);
        detail::put_params(out, d.params);
    }
}

inline Layer parse_layer(detail::Reader& r) {
    const std::uint32_t kind = r.u32();
    if (kind == 0) {
        const ImageDims in = detail::get_dims(r);
        const std::size_t fh = r.u32(), fw = r.u32(), stride = r.u32();
        const ImageDims ob = detail::get_dims(r);
        const bool has_lcn = r.u32() != 0;
        const std::size_t window = r.u32();
        const double floor_c = r.f64();
        UntiedLayer u{compute_field_grid(in, fh, fw, stride), {ob.height, ob.width, ob.channels}, {}, std::nullopt};
        if (has_lcn) u.lcn = LcnConfig{window, floor_c};
        const std::size_t fields = r.u32();
        for (std::size_t f = 0; f < fields; ++f) u.fields.push_back(detail::get_params(r));
        validate(u);
        return u;
    }
    if (kind == 1) {
        const ImageDims in = detail::get_dims(r);
        DenseLayer d{in, detail::get_params(r)};
        if (d.params.inputs() != in.size()) throw DataError("checkpoint: dense layer input size mismatch");
        return d;
    }
    throw DataError("checkpoint: unknown layer kind " + std::to_string(kind));
}

// Content hash of one layer's parameters (used to verify snapshot immutability).
inline std::uint64_t layer_hash(const Layer& layer) {
    std::string bytes;
    serialize_layer(bytes, layer);
    return fnv1a64(bytes);
}

inline std::string save_checkpoint(const Network& net, std::string_view config_echo) {
    std::string out = "UFCK";
    detail::put_u32(out, 1);
    detail::put_u32(out, static_cast<std::uint32_t>(config_echo.size()));
    out.append(config_echo);
    detail::put_dims(out, net.input);
    detail::put_u32(out, static_cast<std::uint32_t>(net.layers.size()));
    for (const auto& l : net.layers) serialize_layer(out, l);
    detail::put_u64(out, fnv1a64(out));
    return out;
}

struct LoadedCheckpoint {
    Network network;
    std::string config_echo;
};

// Verifies the trailing hash, then (when given) that the stored config echo
// equals `expected_echo`.
inline LoadedCheckpoint load_checkpoint(std::string_view bytes, std::optional<std::string_view> expected_echo = {}) {
    if (bytes.size() < 12 || bytes.substr(0, 4) != "UFCK") throw DataError("not a UFCK checkpoint (bad magic)");
    const std::string_view body = bytes.substr(0, bytes.size() - 8);
    detail::Reader tail(bytes.substr(bytes.size() - 8));
    if (tail.u64() != fnv1a64(body)) throw HashError("checkpoint hash mismatch (corrupt file)");

    detail::Reader r(body);
    r.bytes(4);
    if (r.u32() != 1) throw DataError("unsupported checkpoint version");
    LoadedCheckpoint out;
    out.config_echo = std::string(r.bytes(r.u32()));
    if (expected_echo && *expected_echo != out.config_echo)
        throw ConfigError("checkpoint config echo does not match the current network config");
    out.network.input = detail::get_dims(r);
    const std::size_t layers = r.u32();
    for (std::size_t i = 0; i < layers; ++i) out.network.layers.push_back(parse_layer(r));
    if (!r.done()) throw DataError("checkpoint has trailing bytes");
    return out;
}

inline void write_checkpoint(const std::string& path, const Network& net, std::string_view config_echo) {
    detail::write_file(path, save_checkpoint(net, config_echo));
}

inline LoadedCheckpoint read_checkpoint(const std::string& path, std::optional<std::string_view> expected_echo = {}) {
    return load_checkpoint(detail::read_file(path), expected_echo);
}

} // namespace ricanet
