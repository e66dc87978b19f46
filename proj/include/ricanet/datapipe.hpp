#pragma once

// Image preprocessing, block/mini-batch packing, the UFD1 dataset container
// and the synthetic oriented-edge corpus.
//
// UFD1 layout (all integers little-endian u32):
//   bytes 0-3   magic "UFD1"
//   4           format version (1)
//   8           image count N
//   12,16,20    H, W, C
//   24          element type code (1 = f32)
//   28...       N*H*W*C f32 values, little-endian, image-major, row-major H x W x C
// The optional manifest is a tab-separated text file of "index<TAB>class-id" lines.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "ricanet/errors.hpp"
#include "ricanet/layers.hpp"
#include "ricanet/rng.hpp"
#include "ricanet/tensor.hpp"

namespace ricanet {

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32(std::string_view in, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
    return v;
}

inline void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }
inline float get_f32(std::string_view in, std::size_t at) { return std::bit_cast<float>(get_u32(in, at)); }

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void write_file(const std::string& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + path);
}

} // namespace detail

struct ManifestEntry {
    std::size_t index = 0;
    int label = 0;
    bool operator==(const ManifestEntry&) const = default;
};

struct DatasetContainer {
    static constexpr std::uint32_t kVersion = 1;
    static constexpr std::uint32_t kTypeF32 = 1;
    static constexpr std::size_t kHeaderBytes = 28;

    ImageDims dims;
    std::size_t count = 0;
    std::vector<float> payload;
    std::vector<ManifestEntry> manifest;  // empty when absent

    std::size_t image_size() const { return dims.size(); }

    Tensor image(std::size_t i) const {
        const std::size_t n = image_size();
        std::vector<double> v(payload.begin() + i * n, payload.begin() + (i + 1) * n);
        return Tensor({dims.height, dims.width, dims.channels}, std::move(v));
    }

    // Images [first, first + m) as an m x H x W x C batch.
    Tensor batch(std::size_t first, std::size_t m) const {
        if (first + m > count) throw DataError("image range exceeds container");
        const std::size_t n = image_size();
        std::vector<double> v(payload.begin() + first * n, payload.begin() + (first + m) * n);
        return Tensor({m, dims.height, dims.width, dims.channels}, std::move(v));
    }

    void append(const Tensor& img) {
        if (img.rank() != 3 || img.dim(0) != dims.height || img.dim(1) != dims.width || img.dim(2) != dims.channels)
            throw ShapeError("image " + shape_string(img.shape()) + " does not match container " + dims_string(dims));
        for (double v : img.data()) payload.push_back(static_cast<float>(v));
        ++count;
    }

    bool operator==(const DatasetContainer&) const = default;
};

inline std::string serialize_container(const DatasetContainer& c) {
    if (c.payload.size() != c.count * c.image_size()) throw DataError("container payload does not match header");
    std::string out = "UFD1";
    detail::put_u32(out, DatasetContainer::kVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(c.count));
    detail::put_u32(out, static_cast<std::uint32_t>(c.dims.height));
    detail::put_u32(out, static_cast<std::uint32_t>(c.dims.width));
    detail::put_u32(out, static_cast<std::uint32_t>(c.dims.channels));
    detail::put_u32(out, DatasetContainer::kTypeF32);
    out.reserve(out.size() + 4 * c.payload.size());
    for (float f : c.payload) detail::put_f32(out, f);
    return out;
}

inline DatasetContainer parse_container(std::string_view bytes) {
    if (bytes.size() < DatasetContainer::kHeaderBytes || bytes.substr(0, 4) != "UFD1")
        throw DataError("not a UFD1 container (bad magic)");
    if (detail::get_u32(bytes, 4) != DatasetContainer::kVersion) throw DataError("unsupported UFD1 version");
    if (detail::get_u32(bytes, 24) != DatasetContainer::kTypeF32) throw DataError("unsupported UFD1 element type");
    DatasetContainer c;
    c.count = detail::get_u32(bytes, 8);
    c.dims = {detail::get_u32(bytes, 12), detail::get_u32(bytes, 16), detail::get_u32(bytes, 20)};
    const std::size_t values = c.count * c.image_size();
    if (bytes.size() != DatasetContainer::kHeaderBytes + 4 * values)
        throw DataError("UFD1 payload length " + std::to_string(bytes.size() - DatasetContainer::kHeaderBytes) +
                        " does not match header (" + std::to_string(4 * values) + ")");
    c.payload.resize(values);
    for (std::size_t i = 0; i < values; ++i) c.payload[i] = detail::get_f32(bytes, DatasetContainer::kHeaderBytes + 4 * i);
    return c;
}

inline std::string serialize_manifest(const std::vector<ManifestEntry>& m) {
    std::string out;
    for (const auto& e : m) out += std::to_string(e.index) + "\t" + std::to_string(e.label) + "\n";
    return out;
}

inline std::vector<ManifestEntry> parse_manifest(const std::string& text) {
    std::vector<ManifestEntry> out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream fields(line);
        ManifestEntry e;
        if (!(fields >> e.index >> e.label)) throw DataError("manifest line " + std::to_string(lineno) + " malformed");
        out.push_back(e);
    }
    return out;
}

inline void write_container(const std::string& path, const DatasetContainer& c) {
    detail::write_file(path, serialize_container(c));
}

inline DatasetContainer read_container(const std::string& path) { return parse_container(detail::read_file(path)); }

// ---------------------------------------------------------------------------
// Blocks

struct DataBlock {
    std::size_t block_index = 0;
    std::vector<std::pair<std::size_t, std::size_t>> minibatches;  // [first, last) image ranges

    std::size_t first_image() const { return minibatches.front().first; }
    std::size_t image_count() const { return minibatches.back().second - minibatches.front().first; }
};

struct BlockPlan {
    std::vector<DataBlock> blocks;
    std::size_t dropped = 0;  // trailing images that do not fill a block
};

// Defaults follow the published layout: 960-image blocks of five 192-image mini-batches.
inline BlockPlan pack_blocks(std::size_t image_count, std::size_t block_size = 960, std::size_t minibatch_size = 192) {
    if (image_count == 0) throw DataError("pack_blocks: no images");
    if (block_size == 0 || minibatch_size == 0 || block_size % minibatch_size != 0)
        throw ConfigError("pack_blocks: block size " + std::to_string(block_size) +
                          " is not a multiple of mini-batch size " + std::to_string(minibatch_size));
    BlockPlan plan;
    const std::size_t full = image_count / block_size;
    plan.dropped = image_count - full * block_size;
    for (std::size_t b = 0; b < full; ++b) {
        DataBlock blk{b, {}};
        for (std::size_t s = b * block_size; s < (b + 1) * block_size; s += minibatch_size)
            blk.minibatches.emplace_back(s, s + minibatch_size);
        plan.blocks.push_back(std::move(blk));
    }
    return plan;
}

// Mini-batch stream consumed by the trainers.
class BlockSource {
public:
    virtual ~BlockSource() = default;
    virtual ImageDims dims() const = 0;
    virtual std::size_t block_count() const = 0;
    virtual std::size_t minibatches_per_block() const = 0;
    virtual std::size_t block_images() const = 0;
    virtual Tensor minibatch(std::size_t block, std::size_t index) const = 0;
};

class ContainerBlockSource final : public BlockSource {
public:
    ContainerBlockSource(std::shared_ptr<const DatasetContainer> data, std::size_t block_size, std::size_t minibatch_size)
        : data_(std::move(data)), plan_(pack_blocks(data_->count, block_size, minibatch_size)), block_size_(block_size) {}

    ImageDims dims() const override { return data_->dims; }
    std::size_t block_count() const override { return plan_.blocks.size(); }
    std::size_t minibatches_per_block() const override {
        return plan_.blocks.empty() ? 0 : plan_.blocks.front().minibatches.size();
    }
    std::size_t block_images() const override { return block_size_; }
    std::size_t dropped() const { return plan_.dropped; }

    Tensor minibatch(std::size_t block, std::size_t index) const override {
        const auto [first, last] = plan_.blocks.at(block).minibatches.at(index);
        return data_->batch(first, last - first);
    }

private:
    std::shared_ptr<const DatasetContainer> data_;
    BlockPlan plan_;
    std::size_t block_size_;
};

// ---------------------------------------------------------------------------
// Image preprocessing

namespace detail {

// n * target / shortest, rounded half up.
inline std::size_t scaled_extent(std::size_t n, std::size_t target, std::size_t shortest) {
    return (2 * n * target + shortest) / (2 * shortest);
}

struct Tap {
    std::size_t lo, hi;
    double frac;
};

// Pixel-centre aligned source coordinate for each destination index.
inline std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
    std::vector<Tap> taps(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t d = 0; d < out; ++d) {
        double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in - 1));
        const auto lo = static_cast<std::size_t>(std::floor(src));
        taps[d] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
    }
    return taps;
}

} // namespace detail

struct PreprocessInfo {
    std::size_t scaled_height = 0, scaled_width = 0;
    std::size_t crop_row = 0, crop_col = 0;
};

// Bilinear rescale so the shorter side equals `target`, then centre-crop the
// longer side to a target x target image.
inline Tensor preprocess_image(const Tensor& raw, std::size_t target, PreprocessInfo* info = nullptr) {
    if (raw.rank() != 3) throw DataError("preprocess_image: expected an H x W x C image, got " + shape_string(raw.shape()));
    if (target == 0) throw DataError("preprocess_image: target side must be positive");
    const std::size_t H = raw.dim(0), W = raw.dim(1), C = raw.dim(2);
    const std::size_t shortest = std::min(H, W);
    const std::size_t sh = H == shortest ? target : detail::scaled_extent(H, target, shortest);
    const std::size_t sw = W == shortest ? target : detail::scaled_extent(W, target, shortest);
    const std::size_t crop_row = (sh - target) / 2, crop_col = (sw - target) / 2;
    if (info) *info = {sh, sw, crop_row, crop_col};

    const auto rows = detail::bilinear_taps(H, sh), cols = detail::bilinear_taps(W, sw);
    Tensor out({target, target, C});
    const auto px = [&](std::size_t y, std::size_t x, std::size_t c) { return raw[(y * W + x) * C + c]; };
    for (std::size_t y = 0; y < target; ++y) {
        const auto& ty = rows[y + crop_row];
        for (std::size_t x = 0; x < target; ++x) {
            const auto& tx = cols[x + crop_col];
            for (std::size_t c = 0; c < C; ++c) {
                const double top = px(ty.lo, tx.lo, c) * (1.0 - tx.frac) + px(ty.lo, tx.hi, c) * tx.frac;
                const double bottom = px(ty.hi, tx.lo, c) * (1.0 - tx.frac) + px(ty.hi, tx.hi, c) * tx.frac;
                out[(y * target + x) * C + c] = top * (1.0 - ty.frac) + bottom * ty.frac;
            }
        }
    }
    return out;
}

// Per-image, per-channel: subtract the mean, divide by max(std, 1e-8).
inline Tensor standardize_image(const Tensor& img) {
    require_rank(img, 3, "standardize_image");
    const std::size_t pixels = img.dim(0) * img.dim(1), C = img.dim(2);
    Tensor out(img.shape());
    for (std::size_t c = 0; c < C; ++c) {
        double mean = 0.0;
        for (std::size_t p = 0; p < pixels; ++p) mean += img[p * C + c];
        mean /= static_cast<double>(pixels);
        double var = 0.0;
        for (std::size_t p = 0; p < pixels; ++p) {
            const double d = img[p * C + c] - mean;
            var += d * d;
        }
        const double sd = std::max(std::sqrt(var / static_cast<double>(pixels)), 1e-8);
        for (std::size_t p = 0; p < pixels; ++p) out[p * C + c] = (img[p * C + c] - mean) / sd;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

struct SyntheticConfig {
    std::size_t images = 4000;
    std::size_t side = 32;
    std::size_t classes = 4;  // 2 or 4
    double noise_sigma = 0.1;
    std::uint64_t seed = 1;
    std::size_t channels = 1;
};

// Step edge whose normal points along `classes` evenly spaced orientations
// (0, 45, 90, 135 degrees for four classes). Class 0 varies along columns
// only. The edge offset is random within the central half of the image.
// Labels are stratified: every class appears images / classes times (the
// first images % classes classes get one extra), in shuffled order.
inline constexpr double kEdgeNormals[4][2] = {
    {1.0, 0.0}, {std::numbers::sqrt2 / 2, std::numbers::sqrt2 / 2}, {0.0, 1.0}, {-std::numbers::sqrt2 / 2, std::numbers::sqrt2 / 2}};

inline DatasetContainer gen_synthetic(const SyntheticConfig& cfg) {
    if (cfg.classes != 2 && cfg.classes != 4) throw ConfigError("gen_synthetic: classes must be 2 or 4");
    if (cfg.side < 8) throw ConfigError("gen_synthetic: side must be at least 8");
    if (cfg.images == 0 || cfg.channels == 0) throw ConfigError("gen_synthetic: need at least one image and channel");
    if (!(cfg.noise_sigma >= 0.0)) throw ConfigError("gen_synthetic: noise sigma must be non-negative");

    Rng rng(derive_seed(cfg.seed, 0x5e7));
    std::vector<int> labels(cfg.images);
    for (std::size_t i = 0; i < cfg.images; ++i) labels[i] = static_cast<int>(i % cfg.classes);
    for (std::size_t i = cfg.images; i > 1; --i) std::swap(labels[i - 1], labels[rng.below(i)]);

    DatasetContainer out;
    out.dims = {cfg.side, cfg.side, cfg.channels};
    out.payload.reserve(cfg.images * out.dims.size());
    const double centre = (static_cast<double>(cfg.side) - 1.0) / 2.0;
    const double quarter = static_cast<double>(cfg.side) / 4.0;
    for (std::size_t i = 0; i < cfg.images; ++i) {
        const std::size_t step = static_cast<std::size_t>(labels[i]) * (4 / cfg.classes);  // in 45 degree units
        const double nx = kEdgeNormals[step][0], ny = kEdgeNormals[step][1];
        const double offset = rng.uniform(-quarter, quarter);
        Tensor img({cfg.side, cfg.side, cfg.channels});
        for (std::size_t y = 0; y < cfg.side; ++y)
            for (std::size_t x = 0; x < cfg.side; ++x) {
                const double proj = (static_cast<double>(x) - centre) * nx + (static_cast<double>(y) - centre) * ny;
                const double base = proj > offset ? 1.0 : -1.0;
                for (std::size_t c = 0; c < cfg.channels; ++c)
                    img[(y * cfg.side + x) * cfg.channels + c] =
                        base + (cfg.noise_sigma > 0.0 ? cfg.noise_sigma * rng.normal() : 0.0);
            }
        out.append(img);
        out.manifest.push_back({i, labels[i]});
    }
    return out;
}

} // namespace ricanet
