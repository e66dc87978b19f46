#pragma once

// Post-training analysis: streaming forward passes over a container, top-K
// stimuli per output unit, and first-layer filter rasters.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "ricanet/datapipe.hpp"
#include "ricanet/errors.hpp"
#include "ricanet/layers.hpp"

namespace ricanet {

inline std::size_t output_units(const Network& net) {
    return layer_output_dims(net.layers.back()).size();
}

// Calls on_batch(first_image, activations m x units) once per mini-batch, in
// image order. Only one mini-batch is resident at a time.
template <class F>
void stream_activations(const Network& net, const DatasetContainer& data, std::size_t minibatch, F&& on_batch) {
    if (data.dims != net.input)
        throw ConfigError("container images are " + dims_string(data.dims) + " but the network expects " +
                          dims_string(net.input));
    if (minibatch == 0) throw ConfigError("mini-batch size must be positive");
    for (std::size_t first = 0; first < data.count; first += minibatch) {
        const std::size_t m = std::min(minibatch, data.count - first);
        on_batch(first, flatten_batch(network_forward(net, data.batch(first, m))));
    }
}

// N x units activation matrix.
inline Tensor forward_dataset(const Network& net, const DatasetContainer& data, std::size_t minibatch = 192) {
    if (data.count == 0) throw DataError("container holds no images");
    Tensor out({data.count, output_units(net)});
    stream_activations(net, data, minibatch, [&](std::size_t first, const Tensor& acts) {
        std::copy(acts.data().begin(), acts.data().end(), out.row(first).begin());
    });
    return out;
}

struct Stimulus {
    std::size_t image = 0;
    double value = 0.0;
    bool operator==(const Stimulus&) const = default;
};

// Higher value first; equal values go to the lower image id.
inline bool ranks_before(const Stimulus& a, const Stimulus& b) {
    return a.value != b.value ? a.value > b.value : a.image < b.image;
}

// Running top-K per unit, fed in any chunking of the image stream.
class TopKTracker {
public:
    TopKTracker(std::size_t units, std::size_t k) : k_(k), best_(units) {
        if (k == 0) throw ConfigError("top-k needs k >= 1");
    }

    void push(std::size_t first_image, const Tensor& acts) {
        if (acts.rank() != 2 || acts.dim(1) != best_.size())
            throw ShapeError("top-k: expected an m x " + std::to_string(best_.size()) + " activation matrix, got " +
                             shape_string(acts.shape()));
        for (std::size_t i = 0; i < acts.dim(0); ++i)
            for (std::size_t u = 0; u < best_.size(); ++u) offer(best_[u], {first_image + i, acts.at(i, u)});
    }

    const std::vector<std::vector<Stimulus>>& result() const { return best_; }

private:
    void offer(std::vector<Stimulus>& set, Stimulus s) {
        if (set.size() == k_ && !ranks_before(s, set.back())) return;
        set.insert(std::upper_bound(set.begin(), set.end(), s, ranks_before), s);
        if (set.size() > k_) set.pop_back();
    }

    std::size_t k_;
    std::vector<std::vector<Stimulus>> best_;
};

// Per column of an N x units matrix, the K best images in rank order.
inline std::vector<std::vector<Stimulus>> top_k_stimuli(const Tensor& activations, std::size_t k) {
    require_rank(activations, 2, "top_k_stimuli");
    TopKTracker t(activations.dim(1), k);
    t.push(0, activations);
    return t.result();
}

// ---------------------------------------------------------------------------
// Filter rendering

struct Raster {
    std::size_t height = 0, width = 0, channels = 1;
    std::vector<std::uint8_t> pixels;  // row-major, interleaved channels

    std::uint8_t at(std::size_t y, std::size_t x, std::size_t c = 0) const { return pixels[(y * width + x) * channels + c]; }
};

inline constexpr std::uint8_t kSeparatorLevel = 0;
inline constexpr std::uint8_t kFlatFilterLevel = 128;

// Each row of W is one fh x fw x C filter. Filters are laid out row-major on a
// grid `cols` wide (ceil(sqrt(k)) when 0), each min-max scaled to [0, 255]
// independently, with 1-pixel separators. A filter with max == min renders as
// mid gray.
inline Raster render_filter_grid(const Tensor& W, std::size_t fh, std::size_t fw, std::size_t channels,
                                 std::size_t cols = 0) {
    require_rank(W, 2, "render_filter_grid");
    if (fh == 0 || fw == 0 || channels == 0 || W.dim(1) != fh * fw * channels)
        throw ShapeError("render_filter_grid: row length " + std::to_string(W.dim(1)) + " does not reshape to " +
                         std::to_string(fh) + "x" + std::to_string(fw) + "x" + std::to_string(channels));
    if (channels != 1 && channels != 3)
        throw ShapeError("render_filter_grid: can only render 1 or 3 channels, got " + std::to_string(channels));
    const std::size_t k = W.dim(0);
    if (cols == 0) cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(k))));
    const std::size_t rows = (k + cols - 1) / cols;
    Raster img{rows * (fh + 1) + 1, cols * (fw + 1) + 1, channels, {}};
    img.pixels.assign(img.height * img.width * channels, kSeparatorLevel);
    for (std::size_t f = 0; f < k; ++f) {
        const auto w = W.row(f);
        const auto [lo, hi] = std::minmax_element(w.begin(), w.end());
        const double min = *lo, range = *hi - *lo;
        const std::size_t y0 = (f / cols) * (fh + 1) + 1, x0 = (f % cols) * (fw + 1) + 1;
        for (std::size_t y = 0; y < fh; ++y)
            for (std::size_t x = 0; x < fw; ++x)
                for (std::size_t c = 0; c < channels; ++c) {
                    const double v = w[(y * fw + x) * channels + c];
                    img.pixels[((y0 + y) * img.width + x0 + x) * channels + c] =
                        range > 0.0 ? static_cast<std::uint8_t>(std::lround(255.0 * (v - min) / range)) : kFlatFilterLevel;
                }
    }
    return img;
}

// Binary PGM (1 channel) or PPM (3 channels).
inline void write_pnm(const std::string& path, const Raster& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open " + path + " for writing");
    out << (img.channels == 1 ? "P5" : "P6") << '\n' << img.width << ' ' << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (!out) throw DataError("write failed for " + path);
}

} // namespace ricanet
