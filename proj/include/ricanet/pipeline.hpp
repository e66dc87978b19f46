#pragma once

// Pipelined layer-wise trainer.
//
// Layer L+1 starts once layer L has trained `warmup_blocks` blocks and its
// objective has stabilized. From then on two instances of layer L exist: the
// trainer, which keeps learning, and a read-only forwarder holding an immutable
// snapshot that feeds layer L+1, replaying the data from block 0. The forwarder
// is re-synchronized with the trainer every `sync_period_blocks` trained
// blocks, and once more when the trainer finishes.
//
// Execution is a deterministic tick schedule: every tick, each active layer
// (shallowest first) trains one block. Snapshots are swapped only at block
// boundaries.

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ricanet/datapipe.hpp"
#include "ricanet/errors.hpp"
#include "ricanet/layers.hpp"

namespace ricanet {

struct PipelineConfig {
    std::size_t warmup_blocks = 1000;
    std::size_t sync_period_blocks = 10;
    std::size_t stabilization_window = 50;
    double stabilization_rel_tol = 0.01;
    std::uint64_t seed = 1;
    std::size_t epochs = 1;  // passes over the block sequence per layer
    double learning_rate = 1e-3;
    double momentum = 0.9;
};

inline void validate(const PipelineConfig& cfg) {
    if (cfg.warmup_blocks < 1) throw ConfigError("warmup_blocks must be at least 1");
    if (cfg.sync_period_blocks < 1) throw ConfigError("sync_period_blocks must be at least 1");
    if (cfg.stabilization_window < 2) throw ConfigError("stabilization_window must be at least 2");
    if (!(cfg.stabilization_rel_tol > 0.0)) throw ConfigError("stabilization_rel_tol must be positive");
    if (cfg.epochs < 1) throw ConfigError("epochs must be at least 1");
}

// Two-window relative-mean test on a per-block objective history.
inline bool stabilized(std::span<const double> history, std::size_t window, double rel_tol) {
    if (window == 0 || history.size() < 2 * window) return false;
    const auto mean = [](std::span<const double> s) {
        double acc = 0.0;
        for (double v : s) acc += v;
        return acc / static_cast<double>(s.size());
    };
    const double last = mean(history.last(window));
    const double prev = mean(history.subspan(history.size() - 2 * window, window));
    return std::abs(last - prev) / std::max(std::abs(prev), 1e-12) < rel_tol;
}

struct LayerSnapshot {
    std::shared_ptr<const Layer> layer;
    std::uint64_t version = 0;
    std::uint64_t source_block_index = 0;  // trainer blocks completed when taken
};

// Training state of one layer inside the pipeline.
struct PipelineStage {
    LayerTrainer trainer;
    std::uint64_t blocks_done = 0;
    std::vector<double> history;  // mean per-image objective of each trained block
    bool started = false;
    bool finished = false;
    std::optional<LayerSnapshot> snapshot;  // forwarder feeding the next layer
};

// Deep, immutable copy of the stage's trainer parameters, one version past the
// previous snapshot.
inline LayerSnapshot sync_snapshot(const PipelineStage& stage) {
    if (stage.blocks_done < 1) throw ConfigError("sync_snapshot: trainer has not completed a block");
    return LayerSnapshot{std::make_shared<const Layer>(stage.trainer.layer),
                         stage.snapshot ? stage.snapshot->version + 1 : 1, stage.blocks_done};
}

struct TrainRecord {
    std::size_t layer = 0;          // 0-based
    std::uint64_t block = 0;        // per-layer ordinal of the trained block
    std::size_t data_block = 0;     // index into the block sequence
    double objective = 0.0;         // mean per-image objective over the block
    std::uint64_t snapshot_version = 0;   // upstream forwarder version (0 for layer 1)
    std::uint64_t staleness = 0;          // upstream trainer blocks beyond that snapshot
    std::uint64_t upstream_completed = 0; // upstream trainer blocks completed at this point
    double elapsed_ms = 0.0;
};

struct TrainLog {
    std::vector<TrainRecord> records;

    std::vector<TrainRecord> for_layer(std::size_t layer) const {
        std::vector<TrainRecord> out;
        for (const auto& r : records)
            if (r.layer == layer) out.push_back(r);
        return out;
    }

    // layer (1-based), block, objective, snapshot_version, staleness; tab separated.
    std::string to_text() const {
        std::ostringstream out;
        out.precision(17);
        for (const auto& r : records)
            out << r.layer + 1 << '\t' << r.block << '\t' << r.objective << '\t' << r.snapshot_version << '\t'
                << r.staleness << '\n';
        return out.str();
    }
};

struct PipelineResult {
    Network network;
    TrainLog log;
    std::vector<std::uint64_t> start_after_upstream_blocks;  // per layer; 0 for layer 1
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline Tensor forward_through(const std::vector<std::shared_ptr<const Layer>>& upstream, Tensor x) {
    for (const auto& l : upstream) x = layer_forward(*l, std::move(x));
    return x;
}

// Trains one data block, mini-batch by mini-batch; returns the mean per-image objective.
inline double train_block(LayerTrainer& trainer, const BlockSource& src, std::size_t data_block,
                          const std::vector<std::shared_ptr<const Layer>>& upstream) {
    double total = 0.0;
    for (std::size_t j = 0; j < src.minibatches_per_block(); ++j)
        total += train_step(trainer, forward_through(upstream, src.minibatch(data_block, j))).objective;
    return total / static_cast<double>(src.block_images());
}

inline std::vector<PipelineStage> make_stages(const Network& init, const PipelineConfig& cfg) {
    std::vector<PipelineStage> stages;
    for (std::size_t l = 0; l < init.layers.size(); ++l)
        stages.push_back(
            PipelineStage{make_trainer(init.layers[l], cfg.learning_rate, cfg.momentum, cfg.seed, l), 0, {}, false, false, {}});
    return stages;
}

inline void check_source(const Network& init, const BlockSource& src) {
    if (init.layers.empty()) throw ConfigError("pipeline needs at least one layer");
    if (src.dims() != init.input)
        throw ConfigError("data dims " + dims_string(src.dims()) + " do not match network input " + dims_string(init.input));
    if (src.block_count() == 0) throw UnderrunError("data source holds no complete block; nothing to train");
}

} // namespace detail

inline PipelineResult run_pipeline(const Network& init, const BlockSource& src, const PipelineConfig& cfg) {
    validate(cfg);
    detail::check_source(init, src);
    const std::size_t L = init.layers.size();
    const std::uint64_t total_blocks = cfg.epochs * src.block_count();
    auto stages = detail::make_stages(init, cfg);
    PipelineResult result;
    result.start_after_upstream_blocks.assign(L, 0);
    stages[0].started = true;
    const auto t0 = detail::Clock::now();

    while (!stages[L - 1].finished) {
        for (std::size_t l = 0; l < L; ++l) {
            auto& st = stages[l];
            if (!st.started || st.finished) continue;

            std::vector<std::shared_ptr<const Layer>> upstream;
            for (std::size_t u = 0; u < l; ++u) upstream.push_back(stages[u].snapshot->layer);
            const std::size_t data_block = st.blocks_done % src.block_count();
            double objective = 0.0;
            try {
                objective = detail::train_block(st.trainer, src, data_block, upstream);
            } catch (Error& e) {
                e.prepend_context("layer " + std::to_string(l + 1) + " block " + std::to_string(st.blocks_done));
                throw;
            }
            TrainRecord rec{l, st.blocks_done, data_block, objective, 0, 0, 0,
                            std::chrono::duration<double, std::milli>(detail::Clock::now() - t0).count()};
            if (l > 0) {
                const auto& up = stages[l - 1];
                rec.snapshot_version = up.snapshot->version;
                rec.upstream_completed = up.blocks_done;
                rec.staleness = up.blocks_done - up.snapshot->source_block_index;
            }
            result.log.records.push_back(rec);
            st.history.push_back(objective);
            ++st.blocks_done;
            if (st.blocks_done == total_blocks) st.finished = true;

            if (l + 1 < L) {
                auto& down = stages[l + 1];
                if (!down.started) {
                    const bool ready = st.blocks_done >= cfg.warmup_blocks &&
                                       stabilized(st.history, cfg.stabilization_window, cfg.stabilization_rel_tol);
                    if (ready || st.finished) {
                        st.snapshot = sync_snapshot(st);
                        down.started = true;
                        result.start_after_upstream_blocks[l + 1] = st.blocks_done;
                    }
                } else if (st.blocks_done != st.snapshot->source_block_index &&
                           (st.finished || st.blocks_done - st.snapshot->source_block_index >= cfg.sync_period_blocks)) {
                    st.snapshot = sync_snapshot(st);
                }
            }
        }
    }

    result.network.input = init.input;
    for (auto& st : stages) result.network.layers.push_back(std::move(st.trainer.layer));
    return result;
}

// Strict layer-wise training: layer L+1 starts only after layer L has
// finished, fed by layer L's final parameters.
inline PipelineResult train_layerwise(const Network& init, const BlockSource& src, const PipelineConfig& cfg) {
    validate(cfg);
    detail::check_source(init, src);
    const std::uint64_t total_blocks = cfg.epochs * src.block_count();
    auto stages = detail::make_stages(init, cfg);
    PipelineResult result;
    result.start_after_upstream_blocks.assign(init.layers.size(), 0);
    std::vector<std::shared_ptr<const Layer>> trained;
    const auto t0 = detail::Clock::now();
    for (std::size_t l = 0; l < stages.size(); ++l) {
        auto& st = stages[l];
        for (std::uint64_t b = 0; b < total_blocks; ++b) {
            const std::size_t data_block = b % src.block_count();
            const double objective = detail::train_block(st.trainer, src, data_block, trained);
            result.log.records.push_back(TrainRecord{l, b, data_block, objective, l > 0 ? 1u : 0u, 0,
                                                     l > 0 ? total_blocks : 0,
                                                     std::chrono::duration<double, std::milli>(detail::Clock::now() - t0).count()});
        }
        if (l > 0) result.start_after_upstream_blocks[l] = total_blocks;
        trained.push_back(std::make_shared<const Layer>(st.trainer.layer));
    }
    result.network.input = init.input;
    for (auto& st : stages) result.network.layers.push_back(std::move(st.trainer.layer));
    return result;
}

// Mean per-image objective of layer `layer_index` over every block, with its
// input produced by the network's own (final) upstream layers.
inline double evaluate_layer_objective(const Network& net, const BlockSource& src, std::size_t layer_index) {
    double total = 0.0;
    std::size_t images = 0;
    const Layer& layer = net.layers.at(layer_index);
    for (std::size_t b = 0; b < src.block_count(); ++b)
        for (std::size_t j = 0; j < src.minibatches_per_block(); ++j) {
            const Tensor x = network_forward(net, src.minibatch(b, j), layer_index);
            if (const auto* u = std::get_if<UntiedLayer>(&layer)) {
                const auto& g = u->geometry;
                for (std::size_t r = 0; r < g.grid_rows; ++r)
                    for (std::size_t c = 0; c < g.grid_cols; ++c)
                        total += rica_objective(u->fields[g.field_index(r, c)], extract_field_input(x, g, r, c));
            } else {
                total += rica_objective(std::get<DenseLayer>(layer).params, flatten_batch(x));
            }
            images += x.dim(0);
        }
    return total / static_cast<double>(images);
}

} // namespace ricanet
