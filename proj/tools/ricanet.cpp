// ricanet command-line driver.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "ricanet/analysis.hpp"
#include "ricanet/checkpoint.hpp"
#include "ricanet/config.hpp"
#include "ricanet/datapipe.hpp"
#include "ricanet/distsim.hpp"
#include "ricanet/pipeline.hpp"

using namespace ricanet;

namespace {

std::string manifest_path(const std::string& container) { return container + ".manifest"; }

std::shared_ptr<DatasetContainer> load_data(const std::string& path) {
    auto data = std::make_shared<DatasetContainer>(read_container(path));
    std::ifstream m(manifest_path(path));
    if (m) {
        std::stringstream ss;
        ss << m.rdbuf();
        data->manifest = parse_manifest(ss.str());
    }
    return data;
}

void save_data(const std::string& path, const DatasetContainer& data) {
    write_container(path, data);
    if (!data.manifest.empty()) detail::write_file(manifest_path(path), serialize_manifest(data.manifest));
}

// Options shared by every command that builds a network from a run config.
struct ConfigOptions {
    std::string config_path;
    std::string layers;
    std::optional<std::uint64_t> seed;

    void add_to(CLI::App* app) {
        app->add_option("--config", config_path, "key=value config file");
        app->add_option("--layers", layers, "layer chain, e.g. untied:16x16:16:4x4x1:lcn3,dense:32");
        app->add_option("--seed", seed, "random seed");
    }

    bool given() const { return !config_path.empty() || !layers.empty(); }

    RunConfig resolve() const {
        RunConfig cfg = config_path.empty() ? RunConfig{} : load_config_file(config_path);
        if (!layers.empty()) set_config_value(cfg, "layers", layers);
        if (seed) cfg.pipeline.seed = *seed;
        return cfg;
    }
};

// The checkpoint's network; the echo is checked only when the user named a config.
Network load_network(const std::string& ckpt, const ConfigOptions& opts) {
    if (opts.given()) {
        const RunConfig cfg = opts.resolve();
        validate(cfg);
        return read_checkpoint(ckpt, network_echo(cfg)).network;
    }
    return read_checkpoint(ckpt).network;
}

int cmd_gen_data(const SyntheticConfig& cfg, const std::string& out) {
    const auto data = gen_synthetic(cfg);
    save_data(out, data);
    std::cout << "wrote " << data.count << " images of " << dims_string(data.dims) << " to " << out << '\n';
    return 0;
}

int cmd_preprocess(const std::string& in, const std::string& out, std::size_t target, bool standardize) {
    const auto raw = load_data(in);
    DatasetContainer result;
    result.dims = {target, target, raw->dims.channels};
    result.manifest = raw->manifest;
    for (std::size_t i = 0; i < raw->count; ++i) {
        Tensor img = preprocess_image(raw->image(i), target);
        result.append(standardize ? standardize_image(img) : img);
    }
    save_data(out, result);
    std::cout << "preprocessed " << result.count << " images to " << dims_string(result.dims) << '\n';
    return 0;
}

struct TrainOptions {
    ConfigOptions cfg;
    std::string data, out, log;
    std::optional<std::size_t> warmup, sync, epochs;
    std::optional<double> lr;
    bool layerwise = false;
};

int cmd_train(const TrainOptions& o) {
    RunConfig cfg = o.cfg.resolve();
    if (o.warmup) cfg.pipeline.warmup_blocks = *o.warmup;
    if (o.sync) cfg.pipeline.sync_period_blocks = *o.sync;
    if (o.epochs) cfg.pipeline.epochs = *o.epochs;
    if (o.lr) cfg.pipeline.learning_rate = *o.lr;
    if (o.layerwise) cfg.pipelined = false;
    validate(cfg);

    const auto data = load_data(o.data);
    if (data->dims != cfg.input)
        throw ConfigError("data is " + dims_string(data->dims) + " but the config expects " + dims_string(cfg.input));
    ContainerBlockSource src(data, cfg.block_size, cfg.minibatch_size);
    if (src.dropped() > 0)
        std::cerr << "note: " << src.dropped() << " trailing images do not fill a block and are skipped\n";

    const Network init = build_network(cfg.network_spec(), cfg.pipeline.seed);
    const auto result = cfg.pipelined ? run_pipeline(init, src, cfg.pipeline) : train_layerwise(init, src, cfg.pipeline);
    write_checkpoint(o.out, result.network, network_echo(cfg));
    if (!o.log.empty()) detail::write_file(o.log, result.log.to_text());

    for (std::size_t l = 0; l < init.layers.size(); ++l) {
        const auto records = result.log.for_layer(l);
        std::uint64_t max_stale = 0;
        for (const auto& r : records) max_stale = std::max(max_stale, r.staleness);
        std::printf("layer %zu: %zu blocks, objective %.6g -> %.6g", l + 1, records.size(), records.front().objective,
                    records.back().objective);
        if (l > 0)
            std::printf(", started after %llu upstream blocks, max staleness %llu",
                        static_cast<unsigned long long>(result.start_after_upstream_blocks[l]),
                        static_cast<unsigned long long>(max_stale));
        std::printf("\n");
    }
    std::cout << "checkpoint written to " << o.out << '\n';
    return 0;
}

int cmd_forward(const std::string& ckpt, const std::string& data_path, const ConfigOptions& opts, const std::string& out,
                std::size_t minibatch) {
    const Network net = load_network(ckpt, opts);
    const auto data = load_data(data_path);
    std::ofstream file;
    if (!out.empty()) {
        file.open(out);
        if (!file) throw DataError("cannot open " + out + " for writing");
    }
    std::ostream& os = out.empty() ? std::cout : file;
    os.precision(17);
    stream_activations(net, *data, minibatch, [&](std::size_t first, const Tensor& acts) {
        for (std::size_t i = 0; i < acts.dim(0); ++i) {
            os << first + i;
            for (std::size_t u = 0; u < acts.dim(1); ++u) os << '\t' << acts.at(i, u);
            os << '\n';
        }
    });
    return 0;
}

int cmd_top_stimuli(const std::string& ckpt, const std::string& data_path, const ConfigOptions& opts, std::size_t k,
                    std::size_t minibatch) {
    const Network net = load_network(ckpt, opts);
    const auto data = load_data(data_path);
    TopKTracker tracker(output_units(net), k);
    stream_activations(net, *data, minibatch, [&](std::size_t first, const Tensor& acts) { tracker.push(first, acts); });
    std::vector<int> labels(data->count, -1);
    for (const auto& e : data->manifest)
        if (e.index < labels.size()) labels[e.index] = e.label;
    std::cout << "unit\trank\timage\tvalue\tlabel\n";
    const auto& top = tracker.result();
    for (std::size_t u = 0; u < top.size(); ++u)
        for (std::size_t r = 0; r < top[u].size(); ++r)
            std::printf("%zu\t%zu\t%zu\t%.17g\t%d\n", u, r + 1, top[u][r].image, top[u][r].value, labels[top[u][r].image]);
    return 0;
}

int cmd_viz_filters(const std::string& ckpt, const ConfigOptions& opts, const std::string& out, std::size_t field) {
    const Network net = load_network(ckpt, opts);
    const Layer& first = net.layers.front();
    Raster img;
    if (const auto* u = std::get_if<UntiedLayer>(&first)) {
        if (field >= u->fields.size())
            throw ConfigError("field " + std::to_string(field) + " out of range (" + std::to_string(u->fields.size()) + ")");
        const auto& g = u->geometry;
        img = render_filter_grid(u->fields[field].W, g.field_h, g.field_w, g.input.channels);
    } else {
        const auto& d = std::get<DenseLayer>(first);
        img = render_filter_grid(d.params.W, d.input.height, d.input.width, d.input.channels);
    }
    write_pnm(out, img);
    std::cout << "wrote " << img.width << "x" << img.height << " filter grid to " << out << '\n';
    return 0;
}

int cmd_comm_report(const ConfigOptions& opts, const std::string& ckpt, std::size_t workers, std::size_t minibatch) {
    Network net;
    if (!ckpt.empty()) {
        net = load_network(ckpt, opts);
    } else {
        const RunConfig cfg = opts.resolve();
        validate(cfg);
        net = build_network(cfg.network_spec(), cfg.pipeline.seed);
    }
    const auto plans = partition_network(net, workers);
    Rng rng(derive_seed(0xc033, workers));
    Tensor batch({minibatch, net.input.height, net.input.width, net.input.channels});
    for (double& v : batch.data()) v = rng.normal();
    const auto res = dist_forward(plans, net, batch);
    std::cout << "boundary\tP\tpredicted_bytes\tlogged_bytes\tmessages\n";
    for (const auto& b : predicted_comm_bytes(plans, net, minibatch))
        std::cout << b.boundary << "->" << b.boundary + 1 << '\t' << workers << '\t' << b.bytes << '\t'
                  << res.log.bytes_for(b.boundary) << '\t' << res.log.messages_for(b.boundary) << '\n';
    return 0;
}

int cmd_param_count(const ConfigOptions& opts, bool published) {
    if (published) {
        const auto r = published_param_report();
        const LayerParamCount* layers[] = {&r.layer1, &r.layer2, &r.layer3};
        for (std::size_t l = 0; l < 3; ++l)
            std::printf("layer %zu\t%llu\n", l + 1, static_cast<unsigned long long>(layers[l]->total));
        std::printf("total\t%llu\nstated\t%llu\n", static_cast<unsigned long long>(r.total),
                    static_cast<unsigned long long>(r.stated_total));
        for (const auto& note : r.notes) std::printf("note: %s\n", note.c_str());
        return 0;
    }
    const RunConfig cfg = opts.resolve();
    validate(cfg);
    const auto c = param_count(cfg.network_spec());
    for (std::size_t l = 0; l < c.layers.size(); ++l)
        std::printf("layer %zu\t%llu\n", l + 1, static_cast<unsigned long long>(c.layers[l].total));
    std::printf("total\t%llu\n", static_cast<unsigned long long>(c.total));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ricanet: untied RICA layers, pipelined training, distributed-array simulation"};
    app.require_subcommand(0, 1);
    bool print_config = false;
    std::string print_config_path;
    app.add_flag("--print-config", print_config, "print every config key with its value and exit");
    app.add_option("--config", print_config_path, "config file applied before --print-config");

    SyntheticConfig gen;
    std::string gen_out;
    auto* gen_cmd = app.add_subcommand("gen-data", "write a synthetic oriented-edge corpus");
    gen_cmd->add_option("--out", gen_out, "container path")->required();
    gen_cmd->add_option("--images", gen.images, "image count");
    gen_cmd->add_option("--side", gen.side, "image side in pixels");
    gen_cmd->add_option("--classes", gen.classes, "orientation classes (2 or 4)");
    gen_cmd->add_option("--sigma", gen.noise_sigma, "Gaussian noise sigma");
    gen_cmd->add_option("--channels", gen.channels, "channels per pixel");
    gen_cmd->add_option("--seed", gen.seed, "random seed");

    std::string pre_in, pre_out;
    std::size_t pre_target = 32;
    bool pre_raw = false;
    auto* pre_cmd = app.add_subcommand("preprocess", "rescale, centre-crop and standardize a container");
    pre_cmd->add_option("--in", pre_in, "input container")->required();
    pre_cmd->add_option("--out", pre_out, "output container")->required();
    pre_cmd->add_option("--target", pre_target, "output side length");
    pre_cmd->add_flag("--no-standardize", pre_raw, "skip per-image standardization");

    TrainOptions train;
    auto* train_cmd = app.add_subcommand("train", "train the network on a container");
    train.cfg.add_to(train_cmd);
    train_cmd->add_option("--data", train.data, "training container")->required();
    train_cmd->add_option("--out", train.out, "checkpoint path")->required();
    train_cmd->add_option("--warmup-blocks", train.warmup, "blocks before the next layer may start");
    train_cmd->add_option("--sync-period", train.sync, "blocks between forwarder syncs");
    train_cmd->add_option("--epochs", train.epochs, "passes over the data per layer");
    train_cmd->add_option("--learning-rate", train.lr, "SGD learning rate");
    train_cmd->add_option("--log", train.log, "write the training log here");
    train_cmd->add_flag("--layerwise", train.layerwise, "train strictly layer by layer");

    ConfigOptions fwd_cfg;
    std::string fwd_ckpt, fwd_data, fwd_out;
    std::size_t fwd_mb = 192;
    auto* fwd_cmd = app.add_subcommand("forward", "write top-layer activations for every image");
    fwd_cfg.add_to(fwd_cmd);
    fwd_cmd->add_option("--ckpt", fwd_ckpt, "checkpoint")->required();
    fwd_cmd->add_option("--data", fwd_data, "container")->required();
    fwd_cmd->add_option("--out", fwd_out, "output TSV (stdout when omitted)");
    fwd_cmd->add_option("--minibatch", fwd_mb, "images per forward batch");

    ConfigOptions top_cfg;
    std::string top_ckpt, top_data;
    std::size_t top_k = 5, top_mb = 192;
    auto* top_cmd = app.add_subcommand("top-stimuli", "top-K images per top-layer unit");
    top_cfg.add_to(top_cmd);
    top_cmd->add_option("--ckpt", top_ckpt, "checkpoint")->required();
    top_cmd->add_option("--data", top_data, "container")->required();
    top_cmd->add_option("--k", top_k, "stimuli per unit");
    top_cmd->add_option("--minibatch", top_mb, "images per forward batch");

    ConfigOptions viz_cfg;
    std::string viz_ckpt, viz_out;
    std::size_t viz_field = 0;
    auto* viz_cmd = app.add_subcommand("viz-filters", "render first-layer filters as a PGM/PPM grid");
    viz_cfg.add_to(viz_cmd);
    viz_cmd->add_option("--ckpt", viz_ckpt, "checkpoint")->required();
    viz_cmd->add_option("--out", viz_out, "image path")->required();
    viz_cmd->add_option("--field", viz_field, "field index (row-major)");

    ConfigOptions comm_cfg;
    std::string comm_ckpt;
    std::size_t comm_workers = 4, comm_mb = 32;
    auto* comm_cmd = app.add_subcommand("comm-report", "predicted and simulated communication per layer boundary");
    comm_cfg.add_to(comm_cmd);
    comm_cmd->add_option("--workers", comm_workers, "logical worker count");
    comm_cmd->add_option("--ckpt", comm_ckpt, "use this checkpoint's network");
    comm_cmd->add_option("--minibatch", comm_mb, "images per simulated mini-batch");

    ConfigOptions pc_cfg;
    bool pc_published = false;
    auto* pc_cmd = app.add_subcommand("param-count", "parameter count of a network config");
    pc_cfg.add_to(pc_cmd);
    pc_cmd->add_flag("--published", pc_published, "the published 300x300 configuration");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (print_config) {
            std::cout << format_config(print_config_path.empty() ? RunConfig{} : load_config_file(print_config_path));
            return 0;
        }
        if (*gen_cmd) return cmd_gen_data(gen, gen_out);
        if (*pre_cmd) return cmd_preprocess(pre_in, pre_out, pre_target, !pre_raw);
        if (*train_cmd) return cmd_train(train);
        if (*fwd_cmd) return cmd_forward(fwd_ckpt, fwd_data, fwd_cfg, fwd_out, fwd_mb);
        if (*top_cmd) return cmd_top_stimuli(top_ckpt, top_data, top_cfg, top_k, top_mb);
        if (*viz_cmd) return cmd_viz_filters(viz_ckpt, viz_cfg, viz_out, viz_field);
        if (*comm_cmd) return cmd_comm_report(comm_cfg, comm_ckpt, comm_workers, comm_mb);
        if (*pc_cmd) return cmd_param_count(pc_cfg, pc_published);
        std::cout << app.help();
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e.kind());
    }
}
