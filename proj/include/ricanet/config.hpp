#pragma once

// Run configuration: plain-text key=value lines, '#' starts a comment.
//
// Layer chain grammar (comma separated):
//   untied:FHxFW:STRIDE:OHxOWxOC[:lcnW][:lambdaX]
//   dense:K[:lambdaX]
// e.g. "untied:16x16:16:4x4x1:lcn3,untied:4x4:2:1x1x8"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ricanet/errors.hpp"
#include "ricanet/layers.hpp"
#include "ricanet/pipeline.hpp"

namespace ricanet {

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

template <class T>
T parse_number(std::string_view text, std::string_view what) {
    T v{};
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (text.empty() || ec != std::errc() || ptr != end)
        throw ConfigError(std::string(what) + ": cannot parse '" + std::string(text) + "'");
    return v;
}

inline std::size_t parse_count(std::string_view text, std::string_view what) {
    if (!text.empty() && text.front() == '-') throw ConfigError(std::string(what) + ": must be non-negative");
    return parse_number<std::size_t>(text, what);
}

inline bool parse_bool(std::string_view text, std::string_view what) {
    if (text == "1" || text == "true" || text == "yes" || text == "on") return true;
    if (text == "0" || text == "false" || text == "no" || text == "off") return false;
    throw ConfigError(std::string(what) + ": expected a boolean, got '" + std::string(text) + "'");
}

// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

inline std::vector<std::size_t> parse_extents(std::string_view text, std::size_t n, std::string_view what) {
    const auto parts = split(text, 'x');
    if (parts.size() != n)
        throw ConfigError(std::string(what) + ": expected " + std::to_string(n) + " extents in '" + std::string(text) + "'");
    std::vector<std::size_t> out;
    for (const auto& p : parts) out.push_back(parse_count(p, what));
    return out;
}

} // namespace detail

inline std::vector<LayerSpec> parse_layer_chain(std::string_view text) {
    std::vector<LayerSpec> layers;
    const auto items = detail::split(text, ',');
    for (std::size_t i = 0; i < items.size(); ++i) {
        const std::string where = "layer " + std::to_string(i + 1);
        const auto parts = detail::split(items[i], ':');
        LayerSpec ls;
        std::size_t next = 0;
        if (parts[0] == "untied") {
            if (parts.size() < 4) throw ConfigError(where + ": untied needs FHxFW:STRIDE:OHxOWxOC");
            const auto f = detail::parse_extents(parts[1], 2, where + " field");
            ls.field_h = f[0];
            ls.field_w = f[1];
            ls.stride = detail::parse_count(parts[2], where + " stride");
            const auto o = detail::parse_extents(parts[3], 3, where + " output block");
            ls.output_block = {o[0], o[1], o[2]};
            next = 4;
        } else if (parts[0] == "dense") {
            if (parts.size() < 2) throw ConfigError(where + ": dense needs a neuron count");
            ls.kind = LayerSpec::Kind::Dense;
            ls.neurons = detail::parse_count(parts[1], where + " neurons");
            next = 2;
        } else {
            throw ConfigError(where + ": unknown layer kind '" + parts[0] + "'");
        }
        for (; next < parts.size(); ++next) {
            const auto& opt = parts[next];
            if (opt.starts_with("lcn"))
                ls.lcn_window = detail::parse_count(std::string_view(opt).substr(3), where + " lcn window");
            else if (opt.starts_with("lambda"))
                ls.lambda = detail::parse_number<double>(std::string_view(opt).substr(6), where + " lambda");
            else
                throw ConfigError(where + ": unknown option '" + opt + "'");
        }
        layers.push_back(ls);
    }
    return layers;
}

inline std::string format_layer_chain(const std::vector<LayerSpec>& layers) {
    std::string out;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& ls = layers[i];
        if (i) out += ',';
        if (ls.kind == LayerSpec::Kind::Untied) {
            out += "untied:" + std::to_string(ls.field_h) + "x" + std::to_string(ls.field_w) + ":" +
                   std::to_string(ls.stride) + ":" + std::to_string(ls.output_block.height) + "x" +
                   std::to_string(ls.output_block.width) + "x" + std::to_string(ls.output_block.channels);
            if (ls.lcn_window) out += ":lcn" + std::to_string(*ls.lcn_window);
        } else {
            out += "dense:" + std::to_string(ls.neurons);
        }
        if (ls.lambda) out += ":lambda" + detail::format_double(*ls.lambda);
    }
    return out;
}

inline constexpr std::string_view kDeskLayers = "untied:16x16:16:4x4x1:lcn3,untied:4x4:2:1x1x8";

struct RunConfig {
    ImageDims input{32, 32, 1};
    std::string layers{kDeskLayers};
    double eps_sparsity = kDefaultEpsSparsity;
    double lcn_floor = 1e-4;

    std::size_t block_size = 96;
    std::size_t minibatch_size = 32;
    bool pipelined = true;
    PipelineConfig pipeline = [] {
        PipelineConfig p;
        p.warmup_blocks = 16;
        p.sync_period_blocks = 5;
        p.stabilization_window = 4;
        p.stabilization_rel_tol = 0.05;
        p.epochs = 4;
        p.learning_rate = 1e-5;
        p.momentum = 0.9;
        return p;
    }();

    NetworkSpec network_spec() const {
        return NetworkSpec{input, parse_layer_chain(layers), eps_sparsity, lcn_floor};
    }
};

namespace detail {

struct ConfigKey {
    std::string_view name;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, std::string_view)> set;
    bool network = false;  // part of the checkpoint echo
};

inline ConfigKey size_key(std::string_view name, std::size_t RunConfig::*m, bool network = false) {
    return {name, [m](const RunConfig& c) { return std::to_string(c.*m); },
            [m, name](RunConfig& c, std::string_view v) { c.*m = parse_count(v, name); }, network};
}

inline ConfigKey pipeline_size_key(std::string_view name, std::size_t PipelineConfig::*m) {
    return {name, [m](const RunConfig& c) { return std::to_string(c.pipeline.*m); },
            [m, name](RunConfig& c, std::string_view v) { c.pipeline.*m = parse_count(v, name); }};
}

inline ConfigKey pipeline_double_key(std::string_view name, double PipelineConfig::*m) {
    return {name, [m](const RunConfig& c) { return format_double(c.pipeline.*m); },
            [m, name](RunConfig& c, std::string_view v) { c.pipeline.*m = parse_number<double>(v, name); }};
}

inline ConfigKey dims_key(std::string_view name, std::size_t ImageDims::*m) {
    return {name, [m](const RunConfig& c) { return std::to_string(c.input.*m); },
            [m, name](RunConfig& c, std::string_view v) { c.input.*m = parse_count(v, name); }, true};
}

inline const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = {
        dims_key("input_height", &ImageDims::height),
        dims_key("input_width", &ImageDims::width),
        dims_key("input_channels", &ImageDims::channels),
        {"layers", [](const RunConfig& c) { return c.layers; },
         [](RunConfig& c, std::string_view v) { c.layers = format_layer_chain(parse_layer_chain(v)); }, true},
        {"eps_sparsity", [](const RunConfig& c) { return format_double(c.eps_sparsity); },
         [](RunConfig& c, std::string_view v) { c.eps_sparsity = parse_number<double>(v, "eps_sparsity"); }, true},
        {"lcn_floor", [](const RunConfig& c) { return format_double(c.lcn_floor); },
         [](RunConfig& c, std::string_view v) { c.lcn_floor = parse_number<double>(v, "lcn_floor"); }, true},
        size_key("block_size", &RunConfig::block_size),
        size_key("minibatch_size", &RunConfig::minibatch_size),
        {"pipelined", [](const RunConfig& c) { return std::string(c.pipelined ? "true" : "false"); },
         [](RunConfig& c, std::string_view v) { c.pipelined = parse_bool(v, "pipelined"); }},
        pipeline_size_key("warmup_blocks", &PipelineConfig::warmup_blocks),
        pipeline_size_key("sync_period_blocks", &PipelineConfig::sync_period_blocks),
        pipeline_size_key("stabilization_window", &PipelineConfig::stabilization_window),
        pipeline_double_key("stabilization_rel_tol", &PipelineConfig::stabilization_rel_tol),
        pipeline_size_key("epochs", &PipelineConfig::epochs),
        pipeline_double_key("learning_rate", &PipelineConfig::learning_rate),
        pipeline_double_key("momentum", &PipelineConfig::momentum),
        {"seed", [](const RunConfig& c) { return std::to_string(c.pipeline.seed); },
         [](RunConfig& c, std::string_view v) { c.pipeline.seed = parse_number<std::uint64_t>(v, "seed"); }},
    };
    return keys;
}

} // namespace detail

inline void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
    for (const auto& k : detail::config_keys())
        if (k.name == key) {
            k.set(cfg, value);
            return;
        }
    throw ConfigError("unknown config key '" + std::string(key) + "'");
}

// Applies key=value lines on top of `cfg`.
inline void apply_config_text(RunConfig& cfg, std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        try {
            if (eq == std::string::npos) throw ConfigError("expected key=value");
            set_config_value(cfg, detail::trim(std::string_view(t).substr(0, eq)), detail::trim(std::string_view(t).substr(eq + 1)));
        } catch (Error& e) {
            e.prepend_context("config line " + std::to_string(lineno));
            throw;
        }
    }
}

inline RunConfig load_config_file(const std::string& path, RunConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    apply_config_text(base, ss.str());
    return base;
}

// Every key, one per line, in a fixed order.
inline std::string format_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& k : detail::config_keys()) out += std::string(k.name) + "=" + k.get(cfg) + "\n";
    return out;
}

// The network-defining keys only; stored in checkpoints and compared on load.
inline std::string network_echo(const RunConfig& cfg) {
    std::string out;
    for (const auto& k : detail::config_keys())
        if (k.network) out += std::string(k.name) + "=" + k.get(cfg) + "\n";
    return out;
}

inline void validate(const RunConfig& cfg) {
    if (cfg.input.size() == 0) throw ConfigError("input dims must be positive");
    if (cfg.minibatch_size == 0 || cfg.block_size == 0 || cfg.block_size % cfg.minibatch_size != 0)
        throw ConfigError("block_size must be a positive multiple of minibatch_size");
    if (!(cfg.eps_sparsity > 0.0)) throw ConfigError("eps_sparsity must be positive");
    if (!(cfg.lcn_floor > 0.0)) throw ConfigError("lcn_floor must be positive");
    if (!(cfg.pipeline.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(cfg.pipeline.momentum >= 0.0 && cfg.pipeline.momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
    validate(cfg.pipeline);
    resolve_layers(cfg.network_spec());
}

} // namespace ricanet
