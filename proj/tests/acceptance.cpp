// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "ricanet/analysis.hpp"
#include "ricanet/checkpoint.hpp"
#include "ricanet/config.hpp"
#include "ricanet/distsim.hpp"
#include "ricanet/pipeline.hpp"

using namespace ricanet;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& what, const std::string& measured) {
    std::printf("criterion %2d %s  %s: %s\n", id, pass ? "PASS" : "FAIL", what.c_str(), measured.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor normal_tensor(Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = rng.normal();
    return t;
}

// The desk setup: 64 blocks of 96 synthetic 32x32 images.
struct Desk {
    RunConfig cfg;
    std::shared_ptr<const DatasetContainer> data;
    std::unique_ptr<ContainerBlockSource> src;
    Network init;

    Desk() {
        SyntheticConfig sc;
        sc.images = 64 * 96;
        sc.side = 32;
        sc.noise_sigma = 0.1;
        data = std::make_shared<const DatasetContainer>(gen_synthetic(sc));
        src = std::make_unique<ContainerBlockSource>(data, cfg.block_size, cfg.minibatch_size);
        init = build_network(cfg.network_spec(), cfg.pipeline.seed);
    }
};

void gradient_check() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(2024);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t k = 1 + rng.below(6), n = 1 + rng.below(8), m = 1 + rng.below(4);
        RicaParams p = init_rica_params(k, n, trial % 2 == 0 ? 0.1 : 0.01, 1e-6, rng.bits());
        p.alpha = rng.uniform(0.5, 2.0);
        for (double& v : p.b.data()) v = 0.1 * rng.normal();
        const Tensor X = normal_tensor({m, n}, rng);
        const auto g = rica_gradient(p, X);

        std::vector<double> flat(p.W.data().begin(), p.W.data().end());
        flat.push_back(p.alpha);
        flat.insert(flat.end(), p.b.data().begin(), p.b.data().end());
        const auto unflatten = [&](std::span<const double> v) {
            RicaParams q = p;
            std::copy_n(v.begin(), k * n, q.W.data().begin());
            q.alpha = v[k * n];
            std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(k * n + 1), n, q.b.data().begin());
            return q;
        };
        const Tensor numeric = finite_diff_grad([&](std::span<const double> v) { return rica_objective(unflatten(v), X); },
                                                Tensor({flat.size()}, flat), 1e-6);
        std::vector<double> analytic(g.dW.data().begin(), g.dW.data().end());
        analytic.push_back(g.dalpha);
        analytic.insert(analytic.end(), g.db.data().begin(), g.db.data().end());
        double diff = 0.0, scale = 1.0;
        for (std::size_t i = 0; i < analytic.size(); ++i) {
            diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
            scale = std::max(scale, std::abs(analytic[i]));
        }
        worst = std::max(worst, diff / scale);
    }
    const double secs = seconds_since(t0);
    report(1, worst <= 1e-6 && secs < 5.0, "gradient vs central differences (10 instances)",
           fmt("max relative error %.3g (tol 1e-6), %.3f s (limit 5 s)", worst, secs));
}

void constraint_check() {
    Rng rng(7);
    RicaParams p = init_rica_params(6, 10, 0.1, 1e-6, 7);
    auto s = make_optimizer_state(p, 1e-3, 0.9, 8);
    const Tensor X = normal_tensor({8, 10}, rng);
    double worst = 0.0;
    for (int step = 0; step < 1000; ++step) {
        auto r = sgd_step(p, s, X);
        p = std::move(r.params);
        s = std::move(r.state);
        for (std::size_t j = 0; j < p.filters(); ++j) {
            double sq = 0.0;
            for (double v : p.W.row(j)) sq += v * v;
            worst = std::max(worst, std::abs(std::sqrt(sq) - 1.0));
        }
    }
    report(2, worst <= 1e-12, "unit row norms over 1000 steps", fmt("max |norm - 1| %.3g (tol 1e-12)", worst));
}

void geometry_check() {
    const auto g = compute_field_grid({300, 300, 3}, 16, 16, 4);
    report(3, g.grid_rows == 72 && g.grid_cols == 72 && g.field_count() == 5184, "field grid of 300x300x3, 16x16, stride 4",
           fmt("%zux%zu = %zu fields (expected 72x72 = 5184)", g.grid_rows, g.grid_cols, g.field_count()));
}

void param_check() {
    const auto r = published_param_report();
    const bool pass = r.layer1.total == 1'532'810'304ULL && r.layer3.total == 377'972'833ULL;
    report(4, pass, "published parameter arithmetic",
           fmt("layer1 %llu (1532810304), layer3 %llu (377972833); total %llu vs stated %llu, gap flagged in %zu notes",
               static_cast<unsigned long long>(r.layer1.total), static_cast<unsigned long long>(r.layer3.total),
               static_cast<unsigned long long>(r.total), static_cast<unsigned long long>(r.stated_total), r.notes.size()));
    for (const auto& n : r.notes) std::printf("             note: %s\n", n.c_str());
}

void degeneracy_check(const Desk& desk) {
    const auto t0 = std::chrono::steady_clock::now();
    PipelineConfig cfg = desk.cfg.pipeline;
    cfg.warmup_blocks = cfg.epochs * desk.src->block_count();
    const auto piped = run_pipeline(desk.init, *desk.src, cfg);
    const auto seq = train_layerwise(desk.init, *desk.src, cfg);
    const std::string echo = network_echo(desk.cfg);
    const auto a = fnv1a64(save_checkpoint(piped.network, echo)), b = fnv1a64(save_checkpoint(seq.network, echo));
    const double secs = seconds_since(t0);
    report(5, a == b && secs < 120.0, "degenerate pipeline equals layer-wise training",
           fmt("checkpoint hashes %016llx / %016llx, %.1f s for both runs (limit 120 s)", static_cast<unsigned long long>(a),
               static_cast<unsigned long long>(b), secs));
}

void pipelined_checks(const Desk& desk, Network& trained) {
    std::map<std::size_t, double> final_objective;
    std::size_t records = 0, violations = 0;
    for (std::size_t sync : {1u, 5u, 20u}) {
        PipelineConfig cfg = desk.cfg.pipeline;
        cfg.sync_period_blocks = sync;
        const auto res = run_pipeline(desk.init, *desk.src, cfg);
        for (std::size_t l = 1; l < desk.init.layers.size(); ++l)
            for (const auto& r : res.log.for_layer(l)) {
                ++records;
                if (r.staleness > sync) ++violations;
            }
        final_objective[sync] = evaluate_layer_objective(res.network, *desk.src, 1);
        std::printf("             sync %2zu: layer 2 started after %llu layer-1 blocks, final layer-2 objective %.6g\n", sync,
                    static_cast<unsigned long long>(res.start_after_upstream_blocks[1]), final_objective[sync]);
        if (sync == desk.cfg.pipeline.sync_period_blocks) trained = res.network;
    }
    report(6, violations == 0 && records > 0, "staleness <= sync period (sync 1, 5, 20)",
           fmt("%zu of %zu forwarded records over the bound", violations, records));
    double lo = 1e300, hi = -1e300;
    for (const auto& [s, v] : final_objective) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double spread = (hi - lo) / lo;
    report(7, spread < 0.05, "sync-period insensitivity of final layer-2 objective",
           fmt("relative spread %.3f%% (limit 5%%)", 100 * spread));
}

void distributed_check(const Desk& desk, const Network& trained) {
    LayerSpec a;
    a.field_h = a.field_w = 8;
    a.stride = 4;
    a.output_block = {2, 2, 4};
    a.lcn_window = 3;
    LayerSpec b;
    b.field_h = b.field_w = 4;
    b.stride = 2;
    b.output_block = {1, 1, 8};
    LayerSpec c;
    c.kind = LayerSpec::Kind::Dense;
    c.neurons = 16;
    const Network overlap = build_network(NetworkSpec{{32, 32, 1}, {a, b, c}}, 3);
    const Tensor batch = desk.data->batch(0, desk.cfg.minibatch_size);
    double worst = 0.0;
    bool exact = true;
    std::uint64_t moved = 0;
    for (const Network* net : {&trained, &overlap}) {
        const Tensor oracle = network_forward(*net, batch);
        for (std::size_t P : {1u, 2u, 4u}) {
            const auto plans = partition_network(*net, P);
            const auto res = dist_forward(plans, *net, batch);
            for (std::size_t i = 0; i < oracle.size(); ++i) worst = std::max(worst, std::abs(res.output[i] - oracle[i]));
            for (const auto& bb : predicted_comm_bytes(plans, *net, batch.dim(0))) {
                exact = exact && bb.bytes == res.log.bytes_for(bb.boundary) && bb.messages == res.log.messages_for(bb.boundary);
                moved += bb.bytes;
            }
        }
    }
    report(8, worst <= 1e-12 && exact, "distributed forward, P in {1,2,4}",
           fmt("max |diff| %.3g (tol 1e-12), logged == predicted on every boundary: %s, %llu bytes moved in total", worst,
               exact ? "yes" : "no", static_cast<unsigned long long>(moved)));
}

void learning_check() {
    const auto t0 = std::chrono::steady_clock::now();
    SyntheticConfig sc;
    sc.images = 4000;
    sc.side = 32;
    sc.noise_sigma = 0.1;
    auto data = std::make_shared<const DatasetContainer>(gen_synthetic(sc));
    ContainerBlockSource src(data, 96, 32);
    LayerSpec l1;
    l1.field_h = l1.field_w = 16;
    l1.stride = 16;
    l1.output_block = {4, 4, 1};
    const Network init = build_network(NetworkSpec{{32, 32, 1}, {l1}}, 1);
    PipelineConfig cfg;
    cfg.epochs = 20;
    cfg.learning_rate = 1e-5;
    cfg.momentum = 0.9;
    const double before = evaluate_layer_objective(init, src, 0);
    const auto res = train_layerwise(init, src, cfg);
    const double after = evaluate_layer_objective(res.network, src, 0);
    const double reduction = 1.0 - after / before;

    const auto top = top_k_stimuli(forward_dataset(res.network, *data, 200), 5);
    std::size_t above_chance = 0, unanimous = 0;
    double mean_rate = 0.0;
    for (const auto& unit : top) {
        std::array<int, 4> hist{};
        for (const auto& s : unit) ++hist[static_cast<std::size_t>(data->manifest[s.image].label)];
        const double rate = *std::max_element(hist.begin(), hist.end()) / static_cast<double>(unit.size());
        if (rate > 0.25) ++above_chance;
        if (rate == 1.0) ++unanimous;
        mean_rate += rate;
    }
    mean_rate /= static_cast<double>(top.size());
    const double share = static_cast<double>(above_chance) / static_cast<double>(top.size());
    const double secs = seconds_since(t0);
    report(9, reduction >= 0.40 && share >= 0.5 && secs < 600.0, "learning signal on the 4-orientation corpus",
           fmt("objective %.4g -> %.4g (%.1f%% reduction, need 40%%); %zu/%zu units with top-5 modal rate > 0.25 "
               "(mean modal rate %.2f, %zu units unanimous); %.1f s (limit 600 s)",
               before, after, 100 * reduction, above_chance, top.size(), mean_rate, unanimous, secs));
}

void oracle_checks() {
    Rng rng(99);
    bool topk = true;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng.below(300), u = 1 + rng.below(8), k = 1 + rng.below(10);
        Tensor acts({n, u});
        for (double& v : acts.data()) v = trial % 3 == 0 ? static_cast<double>(rng.below(4)) : rng.normal();
        const auto got = top_k_stimuli(acts, k);
        for (std::size_t j = 0; j < u; ++j) {
            std::vector<std::size_t> order(n);
            for (std::size_t i = 0; i < n; ++i) order[i] = i;
            std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return acts.at(x, j) > acts.at(y, j); });
            order.resize(std::min(k, n));
            for (std::size_t r = 0; r < order.size(); ++r) topk = topk && got[j][r].image == order[r];
            topk = topk && got[j].size() == order.size();
        }
    }

    SyntheticConfig sc;
    sc.images = 50;
    sc.side = 16;
    sc.channels = 3;
    const auto container = gen_synthetic(sc);
    const std::string bytes = serialize_container(container);
    const bool roundtrip = serialize_container(parse_container(bytes)) == bytes && parse_container(bytes).payload == container.payload;

    bool conserve = true;
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t mb = 1 + rng.below(64), block = mb * (1 + rng.below(10)), n = 1 + rng.below(200000);
        const auto plan = pack_blocks(n, block, mb);
        std::size_t kept = 0;
        for (const auto& b : plan.blocks) kept += b.image_count();
        conserve = conserve && kept + plan.dropped == n && plan.dropped < block;
    }
    report(10, topk && roundtrip && conserve, "oracle equivalences",
           fmt("top-k == full sort on 100 matrices: %s; container round trip: %s; pack_blocks conservation on 500 sizes: %s",
               topk ? "yes" : "no", roundtrip ? "yes" : "no", conserve ? "yes" : "no"));
}

void lcn_check() {
    Tensor flat({10, 10, 2});
    for (double& v : flat.data()) v = -3.5;
    const Tensor y0 = lcn_apply(flat, LcnConfig{5, 1e-4});
    double max_abs = 0.0;
    for (double v : y0.data()) max_abs = std::max(max_abs, std::abs(v));

    Rng rng(11);
    const Tensor x = normal_tensor({12, 12, 2}, rng);
    Tensor scaled = x;
    for (double& v : scaled.data()) v *= 7.0;
    const LcnConfig cfg{5, 1e-4};
    const Tensor a = lcn_apply(x, cfg), b = lcn_apply(scaled, cfg);
    // precondition: the floor never binds, so results equal an effectively unfloored run
    const Tensor ua = lcn_apply(x, LcnConfig{5, 1e-300}), ub = lcn_apply(scaled, LcnConfig{5, 1e-300});
    const bool precondition = a == ua && b == ub;
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    report(11, max_abs == 0.0 && precondition && worst <= 1e-9, "LCN constant map and scale invariance",
           fmt("constant map max |y| %.3g; floor inactive: %s; max |lcn(7x) - lcn(x)| %.3g (tol 1e-9)", max_abs,
               precondition ? "yes" : "no", worst));
}

void preprocess_check() {
    Rng rng(12);
    const Tensor wide = normal_tensor({400, 600, 3}, rng);
    PreprocessInfo info;
    const Tensor out = preprocess_image(wide, 300, &info);
    const bool wide_ok = out.shape() == Shape{300, 300, 3} && info.scaled_width == 450 && info.crop_col == 75 && info.crop_row == 0;
    const Tensor square = normal_tensor({300, 300, 3}, rng);
    const Tensor same = preprocess_image(square, 300);
    const bool identical = std::memcmp(same.data().data(), square.data().data(), square.size() * sizeof(double)) == 0;
    report(12, wide_ok && identical, "preprocessing resize rule",
           fmt("600x400 -> %zux%zu scaled, crop offset %zu columns; 300x300 unchanged: %s", info.scaled_width,
               info.scaled_height, info.crop_col, identical ? "yes" : "no"));
}

} // namespace

int main() {
    try {
        gradient_check();
        constraint_check();
        geometry_check();
        param_check();
        const Desk desk;
        degeneracy_check(desk);
        Network trained;
        pipelined_checks(desk, trained);
        distributed_check(desk, trained);
        learning_check();
        oracle_checks();
        lcn_check();
        preprocess_check();
    } catch (const std::exception& e) {
        std::printf("acceptance aborted: %s\n", e.what());
        return 2;
    }
    std::printf("%d of 12 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
