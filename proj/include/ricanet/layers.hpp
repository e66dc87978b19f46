#pragma once

// Untied (locally connected, no weight sharing) RICA layers, the dense top
// layer, local contrast normalization and parameter accounting.
//
// Activation batches travel between layers as spatial maps of shape
// m x H x W x C. An untied layer with an R x C grid of fields, each emitting an
// oh x ow x oc block, produces a (R*oh) x (C*ow) x oc map: every field's output
// block is tiled at its grid cell. A dense layer produces an m x 1 x 1 x k map.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <type_traits>
#include <string>
#include <variant>
#include <vector>

#include "ricanet/errors.hpp"
#include "ricanet/rica.hpp"
#include "ricanet/rng.hpp"
#include "ricanet/tensor.hpp"

namespace ricanet {

struct ImageDims {
    std::size_t height = 0, width = 0, channels = 0;
    std::size_t size() const { return height * width * channels; }
    bool operator==(const ImageDims&) const = default;
};

inline std::string dims_string(const ImageDims& d) {
    return std::to_string(d.height) + "x" + std::to_string(d.width) + "x" + std::to_string(d.channels);
}

struct BlockDims {
    std::size_t height = 0, width = 0, channels = 0;
    std::size_t size() const { return height * width * channels; }
    bool operator==(const BlockDims&) const = default;
};

struct FieldGeometry {
    ImageDims input;
    std::size_t field_h = 0, field_w = 0;
    std::size_t stride = 1;
    std::size_t grid_rows = 0, grid_cols = 0;

    std::size_t field_count() const { return grid_rows * grid_cols; }
    std::size_t field_inputs() const { return field_h * field_w * input.channels; }
    std::size_t field_index(std::size_t r, std::size_t c) const { return r * grid_cols + c; }
    // Top-left input pixel of field (r, c).
    std::pair<std::size_t, std::size_t> origin(std::size_t r, std::size_t c) const { return {r * stride, c * stride}; }

    bool operator==(const FieldGeometry&) const = default;
};

inline FieldGeometry compute_field_grid(ImageDims input, std::size_t field_h, std::size_t field_w, std::size_t stride) {
    if (input.height == 0 || input.width == 0 || input.channels == 0)
        throw GeometryError("input dims must be positive, got " + dims_string(input));
    if (field_h == 0 || field_w == 0 || stride == 0) throw GeometryError("field size and stride must be positive");
    if (field_h > input.height || field_w > input.width) {
        throw GeometryError("field " + std::to_string(field_h) + "x" + std::to_string(field_w) +
                            " exceeds input " + dims_string(input));
    }
    const std::size_t rh = (input.height - field_h) % stride, rw = (input.width - field_w) % stride;
    if (rh != 0)
        throw GeometryError("(height - field_h) = " + std::to_string(input.height - field_h) +
                            " not divisible by stride " + std::to_string(stride) + ", residue " + std::to_string(rh));
    if (rw != 0)
        throw GeometryError("(width - field_w) = " + std::to_string(input.width - field_w) +
                            " not divisible by stride " + std::to_string(stride) + ", residue " + std::to_string(rw));
    return FieldGeometry{input,
                         field_h,
                         field_w,
                         stride,
                         (input.height - field_h) / stride + 1,
                         (input.width - field_w) / stride + 1};
}

// ---------------------------------------------------------------------------
// Local contrast normalization

struct LcnConfig {
    std::size_t window = 9;  // odd
    double floor_c = 1e-4;
    bool operator==(const LcnConfig&) const = default;
};

inline void validate(const LcnConfig& cfg) {
    if (cfg.window == 0 || cfg.window % 2 == 0) throw ConfigError("LCN window must be odd and positive");
    if (!(cfg.floor_c > 0.0)) throw ConfigError("LCN floor must be positive");
}

// Half-open pixel rectangle [row0, row1) x [col0, col1).
struct Region {
    std::size_t row0 = 0, row1 = 0, col0 = 0, col1 = 0;
    bool operator==(const Region&) const = default;
};

inline Region dilate(const Region& r, std::size_t by, std::size_t height, std::size_t width) {
    return Region{r.row0 > by ? r.row0 - by : 0, std::min(r.row1 + by, height), r.col0 > by ? r.col0 - by : 0,
                  std::min(r.col1 + by, width)};
}

// Number of pixels around a location whose inputs can reach its LCN output
// (mean subtraction and the std estimate each look one radius out).
inline std::size_t lcn_dependency_radius(const LcnConfig& cfg) { return 2 * (cfg.window / 2); }

// LCN evaluated only inside `roi` of a single H x W x C map; other entries of
// the result are zero. Each output depends only on inputs within
// lcn_dependency_radius of it, so any ROI reproduces the full-map values bit
// for bit.
inline Tensor lcn_apply_region(const Tensor& map, const LcnConfig& cfg, const Region& roi) {
    validate(cfg);
    require_rank(map, 3, "lcn_apply");
    const std::size_t H = map.dim(0), W = map.dim(1), C = map.dim(2);
    if (cfg.window > H || cfg.window > W) {
        throw ConfigError("LCN window " + std::to_string(cfg.window) + " larger than map " + shape_string(map.shape()));
    }
    const std::size_t r = cfg.window / 2;
    const auto idx = [&](std::size_t y, std::size_t x, std::size_t c) { return (y * W + x) * C + c; };

    const Region vr = dilate(roi, r, H, W);
    std::vector<double> v(map.size(), 0.0);
    for (std::size_t y = vr.row0; y < vr.row1; ++y) {
        const std::size_t y0 = y > r ? y - r : 0, y1 = std::min(y + r + 1, H);
        for (std::size_t x = vr.col0; x < vr.col1; ++x) {
            const std::size_t x0 = x > r ? x - r : 0, x1 = std::min(x + r + 1, W);
            const double count = static_cast<double>((y1 - y0) * (x1 - x0));
            for (std::size_t c = 0; c < C; ++c) {
                // x - mean(window), accumulated as differences so a flat window gives exactly 0
                const double centre = map[idx(y, x, c)];
                double diff = 0.0;
                for (std::size_t yy = y0; yy < y1; ++yy)
                    for (std::size_t xx = x0; xx < x1; ++xx) diff += map[idx(yy, xx, c)] - centre;
                v[idx(y, x, c)] = -diff / count;
            }
        }
    }

    Tensor out(map.shape());
    for (std::size_t y = roi.row0; y < roi.row1; ++y) {
        const std::size_t y0 = y > r ? y - r : 0, y1 = std::min(y + r + 1, H);
        for (std::size_t x = roi.col0; x < roi.col1; ++x) {
            const std::size_t x0 = x > r ? x - r : 0, x1 = std::min(x + r + 1, W);
            const double count = static_cast<double>((y1 - y0) * (x1 - x0));
            for (std::size_t c = 0; c < C; ++c) {
                double sq = 0.0;
                for (std::size_t yy = y0; yy < y1; ++yy)
                    for (std::size_t xx = x0; xx < x1; ++xx) sq += v[idx(yy, xx, c)] * v[idx(yy, xx, c)];
                const double sd = std::sqrt(sq / count);
                out[idx(y, x, c)] = v[idx(y, x, c)] / std::max(cfg.floor_c, sd);
            }
        }
    }
    return out;
}

// Subtractive (uniform local mean, count-correct at the borders) then divisive
// (floored local std) normalization, per channel, over one H x W x C map.
inline Tensor lcn_apply(const Tensor& map, const LcnConfig& cfg) {
    require_rank(map, 3, "lcn_apply");
    return lcn_apply_region(map, cfg, Region{0, map.dim(0), 0, map.dim(1)});
}

// LCN over every image of an m x H x W x C batch.
inline Tensor lcn_apply_batch(const Tensor& batch, const LcnConfig& cfg) {
    require_rank(batch, 4, "lcn_apply_batch");
    const Shape map_shape{batch.dim(1), batch.dim(2), batch.dim(3)};
    Tensor out(batch.shape());
    for (std::size_t i = 0; i < batch.dim(0); ++i) {
        const auto src = batch.row(i);
        const Tensor y = lcn_apply(Tensor(map_shape, std::vector<double>(src.begin(), src.end())), cfg);
        std::copy(y.data().begin(), y.data().end(), out.row(i).begin());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Layers

struct UntiedLayer {
    FieldGeometry geometry;
    BlockDims output_block;
    std::vector<RicaParams> fields;  // row-major over the grid
    std::optional<LcnConfig> lcn;

    ImageDims output_dims() const {
        return {geometry.grid_rows * output_block.height, geometry.grid_cols * output_block.width,
                output_block.channels};
    }
    bool operator==(const UntiedLayer&) const = default;
};

struct DenseLayer {
    ImageDims input;
    RicaParams params;

    ImageDims output_dims() const { return {1, 1, params.filters()}; }
    bool operator==(const DenseLayer&) const = default;
};

using Layer = std::variant<UntiedLayer, DenseLayer>;

inline ImageDims layer_input_dims(const Layer& layer) {
    return std::visit(
        [](const auto& l) {
            if constexpr (std::is_same_v<std::decay_t<decltype(l)>, UntiedLayer>)
                return l.geometry.input;
            else
                return l.input;
        },
        layer);
}

inline ImageDims layer_output_dims(const Layer& layer) {
    return std::visit([](const auto& l) { return l.output_dims(); }, layer);
}

inline void validate(const UntiedLayer& layer) {
    if (layer.fields.size() != layer.geometry.field_count()) {
        throw ShapeError("untied layer holds " + std::to_string(layer.fields.size()) + " fields, grid needs " +
                         std::to_string(layer.geometry.field_count()));
    }
    const std::size_t k = layer.output_block.size(), n = layer.geometry.field_inputs();
    for (const auto& f : layer.fields) {
        if (f.W.rank() != 2 || f.W.dim(0) != k || f.W.dim(1) != n) {
            throw ShapeError("untied field filters " + shape_string(f.W.shape()) + ", expected [" + std::to_string(k) +
                             "x" + std::to_string(n) + "]");
        }
    }
}

inline void require_map_batch(const Tensor& batch, const ImageDims& dims, const char* what) {
    if (batch.rank() != 4 || batch.dim(1) != dims.height || batch.dim(2) != dims.width ||
        batch.dim(3) != dims.channels) {
        throw ShapeError(std::string(what) + ": batch " + shape_string(batch.shape()) + " does not match input " +
                         dims_string(dims));
    }
}

// Flattened (fh, fw, C) input window of field (r, c) for every batch item: m x n.
inline Tensor extract_field_input(const Tensor& batch, const FieldGeometry& g, std::size_t r, std::size_t c) {
    require_map_batch(batch, g.input, "extract_field_input");
    const std::size_t m = batch.dim(0), W = g.input.width, C = g.input.channels;
    const auto [y0, x0] = g.origin(r, c);
    Tensor X({m, g.field_inputs()});
    for (std::size_t i = 0; i < m; ++i) {
        const auto img = batch.row(i);
        auto dst = X.row(i);
        std::size_t t = 0;
        for (std::size_t dy = 0; dy < g.field_h; ++dy) {
            const std::size_t base = ((y0 + dy) * W + x0) * C;
            for (std::size_t q = 0; q < g.field_w * C; ++q) dst[t++] = img[base + q];
        }
    }
    return X;
}

// m x R x C x k  ->  m x (R*oh) x (C*ow) x oc
inline Tensor blocks_to_map(const Tensor& blocks, const BlockDims& out) {
    require_rank(blocks, 4, "blocks_to_map");
    const std::size_t m = blocks.dim(0), R = blocks.dim(1), Cg = blocks.dim(2);
    if (blocks.dim(3) != out.size()) throw ShapeError("blocks_to_map: block size mismatch");
    const std::size_t H = R * out.height, W = Cg * out.width, ch = out.channels;
    Tensor map({m, H, W, ch});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < Cg; ++c) {
                const std::size_t src = ((i * R + r) * Cg + c) * out.size();
                for (std::size_t y = 0; y < out.height; ++y) {
                    const std::size_t dst = (((i * H) + r * out.height + y) * W + c * out.width) * ch;
                    for (std::size_t q = 0; q < out.width * ch; ++q) map[dst + q] = blocks[src + y * out.width * ch + q];
                }
            }
    return map;
}

inline Tensor map_to_blocks(const Tensor& map, std::size_t grid_rows, std::size_t grid_cols, const BlockDims& out) {
    require_rank(map, 4, "map_to_blocks");
    const std::size_t m = map.dim(0), H = map.dim(1), W = map.dim(2), ch = map.dim(3);
    if (H != grid_rows * out.height || W != grid_cols * out.width || ch != out.channels)
        throw ShapeError("map_to_blocks: map " + shape_string(map.shape()) + " does not tile into blocks");
    Tensor blocks({m, grid_rows, grid_cols, out.size()});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t r = 0; r < grid_rows; ++r)
            for (std::size_t c = 0; c < grid_cols; ++c) {
                const std::size_t dst = ((i * grid_rows + r) * grid_cols + c) * out.size();
                for (std::size_t y = 0; y < out.height; ++y) {
                    const std::size_t src = (((i * H) + r * out.height + y) * W + c * out.width) * ch;
                    for (std::size_t q = 0; q < out.width * ch; ++q) blocks[dst + y * out.width * ch + q] = map[src + q];
                }
            }
    return blocks;
}

// Per-field encodings without LCN: m x R x C x k.
inline Tensor untied_forward_raw(const UntiedLayer& layer, const Tensor& batch) {
    validate(layer);
    const auto& g = layer.geometry;
    require_map_batch(batch, g.input, "untied_forward");
    const std::size_t m = batch.dim(0), k = layer.output_block.size();
    Tensor out({m, g.grid_rows, g.grid_cols, k});
    for (std::size_t r = 0; r < g.grid_rows; ++r)
        for (std::size_t c = 0; c < g.grid_cols; ++c) {
            const Tensor H = encode(layer.fields[g.field_index(r, c)], extract_field_input(batch, g, r, c));
            for (std::size_t i = 0; i < m; ++i) {
                const auto h = H.row(i);
                std::copy(h.begin(), h.end(), out.data().begin() + ((i * g.grid_rows + r) * g.grid_cols + c) * k);
            }
        }
    return out;
}

// m x R x C x (oh*ow*oc), with LCN applied over the assembled spatial map when configured.
inline Tensor untied_forward(const UntiedLayer& layer, const Tensor& batch) {
    Tensor raw = untied_forward_raw(layer, batch);
    if (!layer.lcn) return raw;
    const Tensor map = lcn_apply_batch(blocks_to_map(raw, layer.output_block), *layer.lcn);
    return map_to_blocks(map, layer.geometry.grid_rows, layer.geometry.grid_cols, layer.output_block);
}

inline Tensor flatten_batch(const Tensor& batch) {
    const std::size_t m = batch.dim(0);
    return batch.reshaped({m, batch.size() / m});
}

inline Tensor dense_forward(const DenseLayer& layer, const Tensor& batch) {
    require_map_batch(batch, layer.input, "dense_forward");
    const Tensor H = encode(layer.params, flatten_batch(batch));
    return H.reshaped({batch.dim(0), 1, 1, layer.params.filters()});
}

// Layer output as a spatial map batch (input to the next layer).
inline Tensor layer_forward(const Layer& layer, const Tensor& batch) {
    if (const auto* u = std::get_if<UntiedLayer>(&layer)) return blocks_to_map(untied_forward(*u, batch), u->output_block);
    return dense_forward(std::get<DenseLayer>(layer), batch);
}

// ---------------------------------------------------------------------------
// Training

struct LayerStepResult {
    double objective = 0.0;                // summed over fields in row-major order
    std::vector<double> field_objectives;  // one per field
    std::vector<std::size_t> reinitialized_rows;
};

// One projected-gradient step per field, each on its own input slice. Fields
// are fully independent; `layer` and `states` are updated in place.
inline LayerStepResult untied_train_step(UntiedLayer& layer, std::vector<OptimizerState>& states,
                                         const Tensor& minibatch) {
    validate(layer);
    const auto& g = layer.geometry;
    require_map_batch(minibatch, g.input, "untied_train_step");
    if (states.size() != layer.fields.size()) throw ShapeError("untied_train_step: one optimizer state per field required");
    LayerStepResult result;
    result.field_objectives.reserve(g.field_count());
    for (std::size_t r = 0; r < g.grid_rows; ++r)
        for (std::size_t c = 0; c < g.grid_cols; ++c) {
            const std::size_t f = g.field_index(r, c);
            try {
                StepResult s = sgd_step(layer.fields[f], states[f], extract_field_input(minibatch, g, r, c));
                layer.fields[f] = std::move(s.params);
                states[f] = std::move(s.state);
                result.objective += s.objective;
                result.field_objectives.push_back(s.objective);
                for (auto row : s.reinitialized_rows) result.reinitialized_rows.push_back(f * layer.output_block.size() + row);
            } catch (Error& e) {
                e.prepend_context("field (" + std::to_string(r) + "," + std::to_string(c) + ")");
                throw;
            }
        }
    return result;
}

inline LayerStepResult dense_train_step(DenseLayer& layer, OptimizerState& state, const Tensor& minibatch) {
    require_map_batch(minibatch, layer.input, "dense_train_step");
    StepResult s = sgd_step(layer.params, state, flatten_batch(minibatch));
    layer.params = std::move(s.params);
    state = std::move(s.state);
    return LayerStepResult{s.objective, {s.objective}, s.reinitialized_rows};
}

// Parameters plus one optimizer state per RICA bundle.
struct LayerTrainer {
    Layer layer;
    std::vector<OptimizerState> states;
};

inline LayerStepResult train_step(LayerTrainer& t, const Tensor& minibatch) {
    if (auto* u = std::get_if<UntiedLayer>(&t.layer)) return untied_train_step(*u, t.states, minibatch);
    return dense_train_step(std::get<DenseLayer>(t.layer), t.states.at(0), minibatch);
}

inline std::vector<const RicaParams*> rica_bundles(const Layer& layer) {
    std::vector<const RicaParams*> out;
    if (const auto* u = std::get_if<UntiedLayer>(&layer)) {
        for (const auto& f : u->fields) out.push_back(&f);
    } else {
        out.push_back(&std::get<DenseLayer>(layer).params);
    }
    return out;
}

inline LayerTrainer make_trainer(Layer layer, double learning_rate, double momentum, std::uint64_t seed,
                                 std::size_t layer_index) {
    LayerTrainer t{std::move(layer), {}};
    const auto bundles = rica_bundles(t.layer);
    for (std::size_t f = 0; f < bundles.size(); ++f)
        t.states.push_back(
            make_optimizer_state(*bundles[f], learning_rate, momentum, derive_seed(seed, 0x0b7 + layer_index, f)));
    return t;
}

// ---------------------------------------------------------------------------
// Network description

struct LayerSpec {
    enum class Kind { Untied, Dense };
    Kind kind = Kind::Untied;
    // untied
    std::size_t field_h = 0, field_w = 0, stride = 1;
    BlockDims output_block;
    std::optional<std::size_t> lcn_window;
    // dense
    std::size_t neurons = 0;

    std::optional<double> lambda;  // default by depth when unset

    bool operator==(const LayerSpec&) const = default;
};

struct NetworkSpec {
    ImageDims input;
    std::vector<LayerSpec> layers;
    double eps_sparsity = kDefaultEpsSparsity;
    double lcn_floor = 1e-4;
    bool operator==(const NetworkSpec&) const = default;
};

struct ResolvedLayer {
    LayerSpec::Kind kind;
    ImageDims input;
    std::optional<FieldGeometry> geometry;  // untied only
    std::size_t filters = 0;                // k per RICA bundle
    std::size_t bundle_inputs = 0;          // n per RICA bundle
    std::size_t bundles = 0;                // fields (1 for dense)
    ImageDims output;
    std::optional<LcnConfig> lcn;
    double lambda = 0.1;
};

// Walks the layer chain, resolving each layer's input dims and geometry.
inline std::vector<ResolvedLayer> resolve_layers(const NetworkSpec& spec) {
    if (spec.layers.empty()) throw ConfigError("network needs at least one layer");
    std::vector<ResolvedLayer> out;
    ImageDims in = spec.input;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& ls = spec.layers[i];
        ResolvedLayer rl;
        rl.kind = ls.kind;
        rl.input = in;
        rl.lambda = ls.lambda.value_or(default_lambda_for_layer(i));
        try {
            if (ls.kind == LayerSpec::Kind::Untied) {
                if (i > 0 && spec.layers[i - 1].kind == LayerSpec::Kind::Dense)
                    throw ConfigError("untied layer cannot follow a dense layer");
                if (ls.output_block.size() == 0) throw ConfigError("untied output block must be non-empty");
                rl.geometry = compute_field_grid(in, ls.field_h, ls.field_w, ls.stride);
                rl.filters = ls.output_block.size();
                rl.bundle_inputs = rl.geometry->field_inputs();
                rl.bundles = rl.geometry->field_count();
                rl.output = {rl.geometry->grid_rows * ls.output_block.height,
                             rl.geometry->grid_cols * ls.output_block.width, ls.output_block.channels};
                if (ls.lcn_window) {
                    rl.lcn = LcnConfig{*ls.lcn_window, spec.lcn_floor};
                    validate(*rl.lcn);
                    if (*ls.lcn_window > rl.output.height || *ls.lcn_window > rl.output.width)
                        throw ConfigError("LCN window " + std::to_string(*ls.lcn_window) + " larger than output map " +
                                          dims_string(rl.output));
                }
            } else {
                if (ls.neurons == 0) throw ConfigError("dense layer needs at least one neuron");
                if (ls.lcn_window) throw ConfigError("LCN is not defined on a dense layer");
                rl.filters = ls.neurons;
                rl.bundle_inputs = in.size();
                rl.bundles = 1;
                rl.output = {1, 1, ls.neurons};
            }
        } catch (Error& e) {
            e.prepend_context("layer " + std::to_string(i + 1));
            throw;
        }
        out.push_back(rl);
        in = rl.output;
    }
    return out;
}

struct Network {
    ImageDims input;
    std::vector<Layer> layers;
    bool operator==(const Network&) const = default;
};

inline Layer init_layer(const ResolvedLayer& rl, const LayerSpec& ls, double eps, std::uint64_t seed,
                        std::size_t layer_index) {
    if (rl.kind == LayerSpec::Kind::Dense) {
        return DenseLayer{rl.input, init_rica_params(rl.filters, rl.bundle_inputs, rl.lambda, eps,
                                                     derive_seed(seed, layer_index, 0))};
    }
    UntiedLayer u{*rl.geometry, ls.output_block, {}, rl.lcn};
    u.fields.reserve(rl.bundles);
    for (std::size_t f = 0; f < rl.bundles; ++f)
        u.fields.push_back(init_rica_params(rl.filters, rl.bundle_inputs, rl.lambda, eps, derive_seed(seed, layer_index, f)));
    return u;
}

inline Network build_network(const NetworkSpec& spec, std::uint64_t seed) {
    const auto resolved = resolve_layers(spec);
    Network net{spec.input, {}};
    for (std::size_t i = 0; i < resolved.size(); ++i)
        net.layers.push_back(init_layer(resolved[i], spec.layers[i], spec.eps_sparsity, seed, i));
    return net;
}

// Forward through the first `depth` layers (all when depth exceeds the count).
inline Tensor network_forward(const Network& net, const Tensor& batch, std::size_t depth = SIZE_MAX) {
    require_map_batch(batch, net.input, "network_forward");
    Tensor x = batch;
    for (std::size_t i = 0; i < std::min(depth, net.layers.size()); ++i) x = layer_forward(net.layers[i], x);
    return x;
}

// ---------------------------------------------------------------------------
// Parameter accounting: k*n (W) + n (b) + 1 (alpha) per RICA bundle.

struct LayerParamCount {
    std::size_t bundles = 0;
    std::size_t inputs = 0;
    std::size_t filters = 0;
    std::uint64_t per_bundle = 0;
    std::uint64_t total = 0;
};

inline LayerParamCount count_layer_params(std::size_t bundles, std::size_t inputs, std::size_t filters) {
    const std::uint64_t per = static_cast<std::uint64_t>(filters) * inputs + inputs + 1;
    return {bundles, inputs, filters, per, per * bundles};
}

struct ParamCount {
    std::vector<LayerParamCount> layers;
    std::uint64_t total = 0;
};

inline ParamCount param_count(const NetworkSpec& spec) {
    ParamCount pc;
    for (const auto& rl : resolve_layers(spec)) {
        pc.layers.push_back(count_layer_params(rl.bundles, rl.bundle_inputs, rl.filters));
        pc.total += pc.layers.back().total;
    }
    return pc;
}

// The published three-layer topology. Layer 1 follows from its stated
// geometry. Layer 2 is reconstructed as 16x16x24 windows (a 4x4 patch of
// layer-1 blocks) at pixel stride 4 over the 288x288x24 layer-1 map, since the
// stated 62x62x24 output cannot be tiled by 4x4x24 blocks. Layer 3 uses the
// stated 62x62x24 input. The sum does not reach the stated 15 billion.
struct PublishedParamReport {
    LayerParamCount layer1, layer2, layer3;
    std::uint64_t total = 0;
    std::uint64_t stated_total = 15'000'000'000ULL;
    std::vector<std::string> notes;
};

inline PublishedParamReport published_param_report() {
    PublishedParamReport r;
    const auto g1 = compute_field_grid({300, 300, 3}, 16, 16, 4);
    r.layer1 = count_layer_params(g1.field_count(), g1.field_inputs(), 4 * 4 * 24);
    const ImageDims map1{g1.grid_rows * 4, g1.grid_cols * 4, 24};
    const auto g2 = compute_field_grid(map1, 16, 16, 4);
    r.layer2 = count_layer_params(g2.field_count(), g2.field_inputs(), 4 * 4 * 24);
    r.layer3 = count_layer_params(1, 62 * 62 * 24, 4096);
    r.total = r.layer1.total + r.layer2.total + r.layer3.total;
    r.notes.push_back("layer 2 grid " + std::to_string(g2.grid_rows) + "x" + std::to_string(g2.grid_cols) +
                      " emits a " + std::to_string(g2.grid_rows * 4) + "x" + std::to_string(g2.grid_cols * 4) +
                      "x24 map, not the stated 62x62x24 layer-3 input");
    r.notes.push_back("no field-count reading of the layer-2 description closes the stated 15 billion total");
    return r;
}

} // namespace ricanet
