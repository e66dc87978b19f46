#pragma once

// In-process simulation of a model-parallel distributed array.
//
// Every untied field (and every slice of dense rows) is owned by one logical
// worker. Raw input images are available to all workers at no cost; only
// intermediate activations cross worker boundaries. For the boundary between
// layer L and L+1, a downstream consumer (an untied field, or one worker's
// slice of dense rows) needs every layer-L output block that overlaps its input
// window. When layer L applies LCN, the window is widened by the LCN
// dependency radius: blocks travel un-normalized and the consumer evaluates
// LCN over exactly the region it reads. A block owned by another worker is
// shipped once per consuming field: elements * element_size * minibatch bytes.
//
// Workers run in a single thread under a fixed round-robin schedule and talk
// only through their inboxes.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "ricanet/errors.hpp"
#include "ricanet/layers.hpp"

namespace ricanet {

struct PartitionPlan {
    enum class Kind { Fields, DenseRows };
    Kind kind = Kind::Fields;
    std::size_t workers = 1;
    // Fields: grid shape and owner of each field, row-major.
    std::size_t grid_rows = 0, grid_cols = 0;
    std::vector<std::size_t> owner;
    // DenseRows: [begin, end) rows per worker.
    std::vector<std::pair<std::size_t, std::size_t>> rows;

    std::vector<std::size_t> load() const {
        std::vector<std::size_t> counts(workers, 0);
        if (kind == Kind::Fields) {
            for (auto w : owner) ++counts[w];
        } else {
            for (std::size_t w = 0; w < workers; ++w) counts[w] = rows[w].second - rows[w].first;
        }
        return counts;
    }

    std::size_t imbalance() const {
        const auto l = load();
        return *std::max_element(l.begin(), l.end()) - *std::min_element(l.begin(), l.end());
    }

    bool operator==(const PartitionPlan&) const = default;
};

namespace detail {

struct Rect {
    std::size_t r0, r1, c0, c1;  // half-open
    std::size_t rows() const { return r1 - r0; }
    std::size_t cols() const { return c1 - c0; }
};

// Recursive bisection along the longer side of a rectangle. Cuts between
// whole rows (or columns) keep every region rectangular; only the last cut,
// between two workers, may split a row, handing the first half of the cells in
// row-major (or column-major) order to the first worker. Both halves of that
// cut stay 4-connected.
inline void bisect(const Rect& rect, std::size_t first_worker, std::size_t workers, std::size_t grid_cols,
                   std::vector<std::size_t>& owner) {
    const bool by_rows = rect.rows() >= rect.cols();
    const std::size_t len = by_rows ? rect.rows() : rect.cols();
    const std::size_t across = by_rows ? rect.cols() : rect.rows();
    const auto cell_at = [&](std::size_t major, std::size_t minor) {
        return by_rows ? (rect.r0 + major) * grid_cols + rect.c0 + minor : (rect.r0 + minor) * grid_cols + rect.c0 + major;
    };
    if (workers == 1) {
        for (std::size_t a = 0; a < len; ++a)
            for (std::size_t b = 0; b < across; ++b) owner[cell_at(a, b)] = first_worker;
        return;
    }
    const std::size_t left_workers = workers / 2, right_workers = workers - left_workers;
    if (workers == 2) {
        const std::size_t n = len * across, left_cells = (n + 1) / 2;
        for (std::size_t i = 0; i < n; ++i) owner[cell_at(i / across, i % across)] = first_worker + (i < left_cells ? 0 : 1);
        return;
    }
    // proportional cut, rounded half up, moved inward until both sides can feed their workers
    std::size_t cut = (2 * len * left_workers + workers) / (2 * workers);
    cut = std::clamp<std::size_t>(cut, 1, len - 1);
    while (cut * across < left_workers && cut + 1 < len) ++cut;
    while ((len - cut) * across < right_workers && cut > 1) --cut;
    if (cut * across < left_workers || (len - cut) * across < right_workers)
        throw PartitionError("cannot split a " + std::to_string(rect.rows()) + "x" + std::to_string(rect.cols()) +
                             " region over " + std::to_string(workers) + " workers");
    Rect left = rect, right = rect;
    if (by_rows) {
        left.r1 = right.r0 = rect.r0 + cut;
    } else {
        left.c1 = right.c0 = rect.c0 + cut;
    }
    bisect(left, first_worker, left_workers, grid_cols, owner);
    bisect(right, first_worker + left_workers, right_workers, grid_cols, owner);
}

} // namespace detail

inline PartitionPlan partition_fields(const FieldGeometry& geometry, std::size_t workers) {
    const std::size_t n = geometry.field_count();
    if (workers < 1) throw PartitionError("worker count must be at least 1");
    if (workers > n)
        throw PartitionError(std::to_string(workers) + " workers exceed " + std::to_string(n) + " fields");
    PartitionPlan plan{PartitionPlan::Kind::Fields, workers, geometry.grid_rows, geometry.grid_cols,
                       std::vector<std::size_t>(n, 0), {}};
    detail::bisect({0, geometry.grid_rows, 0, geometry.grid_cols}, 0, workers, geometry.grid_cols, plan.owner);
    return plan;
}

// Dense rows split evenly, in order; no worker gets zero rows.
inline PartitionPlan partition_dense(std::size_t neurons, std::size_t workers) {
    if (workers < 1) throw PartitionError("worker count must be at least 1");
    if (workers > neurons)
        throw PartitionError(std::to_string(workers) + " workers exceed " + std::to_string(neurons) + " dense rows");
    PartitionPlan plan{PartitionPlan::Kind::DenseRows, workers, 0, 0, {}, {}};
    for (std::size_t w = 0; w < workers; ++w) plan.rows.emplace_back(w * neurons / workers, (w + 1) * neurons / workers);
    return plan;
}

inline std::vector<PartitionPlan> partition_network(const Network& net, std::size_t workers) {
    std::vector<PartitionPlan> plans;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        try {
            if (const auto* u = std::get_if<UntiedLayer>(&net.layers[l]))
                plans.push_back(partition_fields(u->geometry, workers));
            else
                plans.push_back(partition_dense(std::get<DenseLayer>(net.layers[l]).params.filters(), workers));
        } catch (Error& e) {
            e.prepend_context("layer " + std::to_string(l + 1));
            throw;
        }
    }
    return plans;
}

// ---------------------------------------------------------------------------
// Communication log

enum class CommReason { InputBlockFetch, Snapshot, Control };

inline const char* reason_name(CommReason r) {
    switch (r) {
    case CommReason::InputBlockFetch: return "input-block-fetch";
    case CommReason::Snapshot: return "snapshot";
    case CommReason::Control: return "control";
    }
    return "?";
}

struct CommRecord {
    std::size_t step = 0;
    std::size_t boundary = 0;  // between layer `boundary` and `boundary + 1`, 1-based layers
    std::size_t src = 0, dst = 0;
    std::uint64_t bytes = 0;
    CommReason reason = CommReason::InputBlockFetch;
    bool operator==(const CommRecord&) const = default;
};

struct CommLog {
    std::vector<CommRecord> records;

    void add(const CommRecord& r) {
        if (r.src == r.dst) throw ConsistencyError("self-message recorded; local access is free");
        records.push_back(r);
    }

    std::uint64_t bytes_for(std::size_t boundary) const {
        std::uint64_t b = 0;
        for (const auto& r : records)
            if (r.boundary == boundary) b += r.bytes;
        return b;
    }
    std::size_t messages_for(std::size_t boundary) const {
        return static_cast<std::size_t>(
            std::count_if(records.begin(), records.end(), [&](const CommRecord& r) { return r.boundary == boundary; }));
    }
    std::uint64_t total_bytes() const {
        return std::accumulate(records.begin(), records.end(), std::uint64_t{0},
                               [](std::uint64_t a, const CommRecord& r) { return a + r.bytes; });
    }

    std::string to_text() const {
        std::ostringstream out;
        for (const auto& r : records)
            out << r.step << '\t' << r.boundary << '\t' << r.src << '\t' << r.dst << '\t' << r.bytes << '\t'
                << reason_name(r.reason) << '\n';
        return out.str();
    }
    bool operator==(const CommLog&) const = default;
};

inline constexpr std::size_t kDefaultElementBytes = 8;

namespace detail {

// An output block of an upstream layer: a field's tile, or a worker's dense slice.
struct UpstreamBlock {
    std::size_t id = 0;
    std::size_t owner = 0;
    std::size_t elements = 0;
};

struct Consumer {
    std::size_t id = 0;      // downstream field index, or worker id for dense rows
    std::size_t worker = 0;
    std::vector<std::size_t> needs;  // upstream block ids, ascending
};

inline void check_plans(const std::vector<PartitionPlan>& plans, const Network& net) {
    if (plans.size() != net.layers.size())
        throw ConsistencyError("plan count " + std::to_string(plans.size()) + " does not match layer count " +
                               std::to_string(net.layers.size()));
    const std::size_t P = plans.empty() ? 0 : plans.front().workers;
    for (std::size_t l = 0; l < plans.size(); ++l) {
        const auto& p = plans[l];
        if (p.workers != P) throw ConsistencyError("plans disagree on worker count");
        if (const auto* u = std::get_if<UntiedLayer>(&net.layers[l])) {
            if (p.kind != PartitionPlan::Kind::Fields || p.grid_rows != u->geometry.grid_rows ||
                p.grid_cols != u->geometry.grid_cols || p.owner.size() != u->geometry.field_count())
                throw ConsistencyError("layer " + std::to_string(l + 1) + ": plan does not match field grid");
            for (auto w : p.owner)
                if (w >= P) throw ConsistencyError("layer " + std::to_string(l + 1) + ": owner out of range");
        } else {
            const std::size_t k = std::get<DenseLayer>(net.layers[l]).params.filters();
            if (p.kind != PartitionPlan::Kind::DenseRows || p.rows.size() != P || p.rows.back().second != k)
                throw ConsistencyError("layer " + std::to_string(l + 1) + ": plan does not match dense rows");
        }
    }
}

inline std::vector<UpstreamBlock> upstream_blocks(const Layer& layer, const PartitionPlan& plan) {
    std::vector<UpstreamBlock> out;
    if (const auto* u = std::get_if<UntiedLayer>(&layer)) {
        for (std::size_t f = 0; f < u->geometry.field_count(); ++f) out.push_back({f, plan.owner[f], u->output_block.size()});
    } else {
        for (std::size_t w = 0; w < plan.workers; ++w) out.push_back({w, w, plan.rows[w].second - plan.rows[w].first});
    }
    return out;
}

// Upstream blocks of layer `up` whose tiles overlap `region` of its output map.
inline std::vector<std::size_t> blocks_overlapping(const UntiedLayer& up, const Region& region) {
    std::vector<std::size_t> out;
    const auto& ob = up.output_block;
    for (std::size_t br = region.row0 / ob.height; br * ob.height < region.row1 && br < up.geometry.grid_rows; ++br)
        for (std::size_t bc = region.col0 / ob.width; bc * ob.width < region.col1 && bc < up.geometry.grid_cols; ++bc)
            out.push_back(up.geometry.field_index(br, bc));
    return out;
}

// Input window of downstream field (r, c), widened by the upstream LCN reach.
inline Region consumer_region(const UntiedLayer& up, const FieldGeometry& g, std::size_t r, std::size_t c) {
    const auto [y0, x0] = g.origin(r, c);
    const Region window{y0, y0 + g.field_h, x0, x0 + g.field_w};
    if (!up.lcn) return window;
    const auto dims = up.output_dims();
    return dilate(window, lcn_dependency_radius(*up.lcn), dims.height, dims.width);
}

inline std::vector<Consumer> consumers(const Layer& up, const Layer& down, const PartitionPlan& down_plan,
                                       const std::vector<UpstreamBlock>& blocks) {
    std::vector<std::size_t> all(blocks.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<Consumer> out;
    if (const auto* d = std::get_if<UntiedLayer>(&down)) {
        const auto* u = std::get_if<UntiedLayer>(&up);
        if (!u) throw ConsistencyError("untied layer cannot consume a dense layer");
        const auto& g = d->geometry;
        for (std::size_t r = 0; r < g.grid_rows; ++r)
            for (std::size_t c = 0; c < g.grid_cols; ++c) {
                const std::size_t f = g.field_index(r, c);
                out.push_back({f, down_plan.owner[f], blocks_overlapping(*u, consumer_region(*u, g, r, c))});
            }
    } else {
        for (std::size_t w = 0; w < down_plan.workers; ++w) out.push_back({w, w, all});
    }
    return out;
}

} // namespace detail

struct BoundaryBytes {
    std::size_t boundary = 0;  // 1-based upstream layer
    std::uint64_t bytes = 0;
    std::size_t messages = 0;
};

// Static count of cross-owner (consumer, upstream block) pairs, in bytes.
inline std::vector<BoundaryBytes> predicted_comm_bytes(const std::vector<PartitionPlan>& plans, const Network& net,
                                                       std::size_t minibatch,
                                                       std::size_t element_bytes = kDefaultElementBytes) {
    detail::check_plans(plans, net);
    std::vector<BoundaryBytes> out;
    for (std::size_t l = 0; l + 1 < net.layers.size(); ++l) {
        const auto blocks = detail::upstream_blocks(net.layers[l], plans[l]);
        BoundaryBytes bb{l + 1, 0, 0};
        for (const auto& consumer : detail::consumers(net.layers[l], net.layers[l + 1], plans[l + 1], blocks))
            for (auto id : consumer.needs)
                if (blocks[id].owner != consumer.worker) {
                    bb.bytes += static_cast<std::uint64_t>(blocks[id].elements) * element_bytes * minibatch;
                    ++bb.messages;
                }
        out.push_back(bb);
    }
    return out;
}

// Weight traffic needed to keep a forwarder copy in sync with its trainer when
// both instances follow the given plans. Untied fields never leave their owner,
// so identical plans cost nothing.
inline std::uint64_t predicted_snapshot_bytes(const PartitionPlan& trainer_plan, const PartitionPlan& forwarder_plan,
                                              const Layer& layer, std::size_t element_bytes = kDefaultElementBytes) {
    std::uint64_t bytes = 0;
    const auto bundles = rica_bundles(layer);
    if (trainer_plan.kind == PartitionPlan::Kind::Fields) {
        for (std::size_t f = 0; f < trainer_plan.owner.size(); ++f)
            if (trainer_plan.owner[f] != forwarder_plan.owner.at(f)) {
                const auto& p = *bundles[f];
                bytes += (p.W.size() + p.b.size() + 1) * element_bytes;
            }
    } else if (trainer_plan.rows != forwarder_plan.rows) {
        const auto& p = *bundles[0];
        bytes += (p.W.size() + p.b.size() + 1) * element_bytes;
    }
    return bytes;
}

struct DistForwardResult {
    Tensor output;  // same layout as network_forward
    CommLog log;
};

namespace detail {

struct Message {
    std::size_t src = 0;
    std::size_t consumer = 0;
    std::size_t block = 0;
    Tensor payload;  // m x elements
};

struct Worker {
    std::size_t id = 0;
    std::map<std::size_t, Tensor> owned;  // this layer's un-normalized output blocks, m x elements
    std::deque<Message> inbox;
};

// Assembles the upstream output map visible to one consumer: its needed
// blocks, zeros elsewhere.
inline Tensor local_map(const UntiedLayer& up, std::size_t m, const std::vector<std::size_t>& needs,
                        const std::map<std::size_t, const Tensor*>& available) {
    const auto dims = up.output_dims();
    const auto& ob = up.output_block;
    Tensor map({m, dims.height, dims.width, dims.channels});
    for (auto id : needs) {
        const Tensor& blk = *available.at(id);
        const std::size_t br = id / up.geometry.grid_cols, bc = id % up.geometry.grid_cols;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t y = 0; y < ob.height; ++y) {
                const std::size_t dst = ((i * dims.height + br * ob.height + y) * dims.width + bc * ob.width) * ob.channels;
                const std::size_t src = i * ob.size() + y * ob.width * ob.channels;
                std::copy_n(blk.data().begin() + static_cast<std::ptrdiff_t>(src), ob.width * ob.channels,
                            map.data().begin() + static_cast<std::ptrdiff_t>(dst));
            }
    }
    return map;
}

inline Tensor normalize_region(const Tensor& map, const std::optional<LcnConfig>& lcn, const Region& roi) {
    if (!lcn) return map;
    Tensor out(map.shape());
    const Shape single{map.dim(1), map.dim(2), map.dim(3)};
    for (std::size_t i = 0; i < map.dim(0); ++i) {
        const auto src = map.row(i);
        const Tensor y = lcn_apply_region(Tensor(single, std::vector<double>(src.begin(), src.end())), *lcn, roi);
        std::copy(y.data().begin(), y.data().end(), out.row(i).begin());
    }
    return out;
}

// Rows [begin, end) of alpha * W x for every input row; same arithmetic as encode().
inline Tensor encode_rows(const RicaParams& p, const Tensor& X, std::size_t begin, std::size_t end) {
    const std::size_t m = X.dim(0), n = p.inputs();
    Tensor H({m, end - begin});
    for (std::size_t i = 0; i < m; ++i) {
        const auto x = X.row(i);
        for (std::size_t j = begin; j < end; ++j) {
            const auto w = p.W.row(j);
            double acc = 0.0;
            for (std::size_t t = 0; t < n; ++t) acc += w[t] * x[t];
            H.at(i, j - begin) = p.alpha * acc;
        }
    }
    return H;
}

// Output of one consumer given its (possibly LCN-normalized) input map.
inline Tensor compute_consumer(const Layer& layer, const PartitionPlan& plan, std::size_t consumer, const Tensor& input) {
    if (const auto* u = std::get_if<UntiedLayer>(&layer)) {
        const auto& g = u->geometry;
        const std::size_t r = consumer / g.grid_cols, c = consumer % g.grid_cols;
        return encode(u->fields[consumer], extract_field_input(input, g, r, c));
    }
    const auto& d = std::get<DenseLayer>(layer);
    const auto [begin, end] = plan.rows[consumer];
    return encode_rows(d.params, flatten_batch(input), begin, end);
}

} // namespace detail

inline DistForwardResult dist_forward(const std::vector<PartitionPlan>& plans, const Network& net, const Tensor& batch,
                                      std::size_t element_bytes = kDefaultElementBytes) {
    detail::check_plans(plans, net);
    require_map_batch(batch, net.input, "dist_forward");
    const std::size_t m = batch.dim(0), P = plans.front().workers;
    std::vector<detail::Worker> workers(P);
    for (std::size_t w = 0; w < P; ++w) workers[w].id = w;
    DistForwardResult result;
    std::size_t step = 0;

    // Layer 1 reads the raw input, which every worker holds.
    {
        const auto blocks = detail::upstream_blocks(net.layers[0], plans[0]);
        for (auto& wk : workers)
            for (const auto& b : blocks)
                if (b.owner == wk.id) wk.owned.emplace(b.id, detail::compute_consumer(net.layers[0], plans[0], b.id, batch));
    }

    for (std::size_t l = 0; l + 1 < net.layers.size(); ++l) {
        const Layer& up = net.layers[l];
        const Layer& down = net.layers[l + 1];
        const auto blocks = detail::upstream_blocks(up, plans[l]);
        const auto cons = detail::consumers(up, down, plans[l + 1], blocks);

        // Send: owners push every remotely needed block, consumer by consumer.
        for (const auto& c : cons)
            for (auto id : c.needs) {
                const std::size_t owner = blocks[id].owner;
                if (owner == c.worker) continue;
                workers[c.worker].inbox.push_back({owner, c.id, id, workers[owner].owned.at(id)});
                result.log.add(CommRecord{step++, l + 1, owner, c.worker,
                                          static_cast<std::uint64_t>(blocks[id].elements) * element_bytes * m,
                                          CommReason::InputBlockFetch});
            }

        // Receive and compute, worker by worker.
        std::vector<std::map<std::size_t, Tensor>> next(P);
        for (auto& wk : workers) {
            std::map<std::size_t, std::map<std::size_t, Tensor>> received;  // consumer -> block -> payload
            while (!wk.inbox.empty()) {
                auto msg = std::move(wk.inbox.front());
                wk.inbox.pop_front();
                received[msg.consumer].emplace(msg.block, std::move(msg.payload));
            }
            for (const auto& c : cons) {
                if (c.worker != wk.id) continue;
                std::map<std::size_t, const Tensor*> available;
                for (auto id : c.needs)
                    available[id] = blocks[id].owner == wk.id ? &wk.owned.at(id) : &received.at(c.id).at(id);
                Tensor input;
                if (const auto* u = std::get_if<UntiedLayer>(&up)) {
                    const Tensor raw = detail::local_map(*u, m, c.needs, available);
                    Region roi{0, raw.dim(1), 0, raw.dim(2)};
                    if (const auto* d = std::get_if<UntiedLayer>(&down)) {
                        const auto& g = d->geometry;
                        const auto [y0, x0] = g.origin(c.id / g.grid_cols, c.id % g.grid_cols);
                        roi = Region{y0, y0 + g.field_h, x0, x0 + g.field_w};
                    }
                    input = detail::normalize_region(raw, u->lcn, roi);
                } else {
                    // dense -> dense: concatenate every worker's row slice
                    const std::size_t k = std::get<DenseLayer>(up).params.filters();
                    input = Tensor({m, 1, 1, k});
                    for (auto id : c.needs) {
                        const auto [begin, end] = plans[l].rows[id];
                        for (std::size_t i = 0; i < m; ++i)
                            for (std::size_t j = begin; j < end; ++j) input[i * k + j] = available[id]->at(i, j - begin);
                    }
                }
                next[wk.id].emplace(c.id, detail::compute_consumer(down, plans[l + 1], c.id, input));
            }
        }
        for (auto& wk : workers) wk.owned = std::move(next[wk.id]);
    }

    // Collect the last layer's blocks from their owners.
    const Layer& last = net.layers.back();
    const auto blocks = detail::upstream_blocks(last, plans.back());
    if (const auto* u = std::get_if<UntiedLayer>(&last)) {
        const auto& g = u->geometry;
        const std::size_t k = u->output_block.size();
        Tensor raw({m, g.grid_rows, g.grid_cols, k});
        for (const auto& b : blocks) {
            const Tensor& t = workers[b.owner].owned.at(b.id);
            for (std::size_t i = 0; i < m; ++i)
                std::copy_n(t.row(i).begin(), k, raw.data().begin() + static_cast<std::ptrdiff_t>((i * g.field_count() + b.id) * k));
        }
        Tensor map = blocks_to_map(raw, u->output_block);
        if (u->lcn) map = lcn_apply_batch(map, *u->lcn);
        result.output = std::move(map);
    } else {
        const std::size_t k = std::get<DenseLayer>(last).params.filters();
        Tensor out({m, 1, 1, k});
        for (const auto& b : blocks) {
            const Tensor& t = workers[b.owner].owned.at(b.id);
            const auto [begin, end] = plans.back().rows[b.id];
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = begin; j < end; ++j) out[i * k + j] = t.at(i, j - begin);
        }
        result.output = std::move(out);
    }
    return result;
}

} // namespace ricanet
