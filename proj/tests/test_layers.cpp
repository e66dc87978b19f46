#include <cmath>
#include <cstring>

#include <gtest/gtest.h>

#include "ricanet/layers.hpp"

using namespace ricanet;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = scale * rng.normal();
    return t;
}

UntiedLayer make_untied(ImageDims in, std::size_t f, std::size_t stride, BlockDims out, std::uint64_t seed,
                        std::optional<LcnConfig> lcn = std::nullopt) {
    LayerSpec ls;
    ls.field_h = ls.field_w = f;
    ls.stride = stride;
    ls.output_block = out;
    if (lcn) ls.lcn_window = lcn->window;
    NetworkSpec spec{in, {ls}};
    if (lcn) spec.lcn_floor = lcn->floor_c;
    return std::get<UntiedLayer>(build_network(spec, seed).layers[0]);
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

// Direct pixel-indexed forward of one field, independent of extract_field_input.
double oracle_activation(const UntiedLayer& layer, const Tensor& batch, std::size_t i, std::size_t r, std::size_t c,
                         std::size_t j) {
    const auto& g = layer.geometry;
    const auto& p = layer.fields[r * g.grid_cols + c];
    const std::size_t H = g.input.height, W = g.input.width, C = g.input.channels;
    double acc = 0.0;
    std::size_t t = 0;
    for (std::size_t dy = 0; dy < g.field_h; ++dy)
        for (std::size_t dx = 0; dx < g.field_w; ++dx)
            for (std::size_t ch = 0; ch < C; ++ch, ++t) {
                const std::size_t y = r * g.stride + dy, x = c * g.stride + dx;
                acc += p.W.at(j, t) * batch[((i * H + y) * W + x) * C + ch];
            }
    return p.alpha * acc;
}

} // namespace

TEST(FieldGrid, PublishedFirstLayer) {
    const auto g = compute_field_grid({300, 300, 3}, 16, 16, 4);
    EXPECT_EQ(g.grid_rows, 72u);
    EXPECT_EQ(g.grid_cols, 72u);
    EXPECT_EQ(g.field_count(), 5184u);
    EXPECT_EQ(g.field_inputs(), 768u);
}

TEST(FieldGrid, SmallCases) {
    const auto one = compute_field_grid({16, 16, 3}, 16, 16, 16);
    EXPECT_EQ(one.grid_rows, 1u);
    EXPECT_EQ(one.grid_cols, 1u);
    const auto three = compute_field_grid({24, 24, 1}, 16, 16, 4);
    EXPECT_EQ(three.grid_rows, 3u);
    EXPECT_EQ(three.grid_cols, 3u);
}

TEST(FieldGrid, ErrorsStateResidue) {
    try {
        compute_field_grid({25, 24, 1}, 16, 16, 4);
        FAIL();
    } catch (const GeometryError& e) {
        EXPECT_NE(std::string(e.what()).find("residue 1"), std::string::npos);
    }
    EXPECT_THROW(compute_field_grid({8, 8, 1}, 16, 16, 4), GeometryError);
}

TEST(FieldGrid, OffsetsAreStable) {
    const auto a = compute_field_grid({40, 32, 2}, 8, 8, 4);
    const auto b = compute_field_grid({40, 32, 2}, 8, 8, 4);
    EXPECT_EQ(a, b);
    for (std::size_t r = 0; r < a.grid_rows; ++r)
        for (std::size_t c = 0; c < a.grid_cols; ++c) EXPECT_EQ(a.origin(r, c), b.origin(r, c));
    EXPECT_EQ(a.origin(a.grid_rows - 1, a.grid_cols - 1), (std::pair<std::size_t, std::size_t>{32, 24}));
}

TEST(UntiedForward, SingleFieldEqualsDenseEncoding) {
    const auto layer = make_untied({8, 8, 2}, 8, 8, {2, 2, 3}, 1);
    const Tensor batch = random_tensor({3, 8, 8, 2}, 2);
    const Tensor out = untied_forward(layer, batch);
    const Tensor dense = encode(layer.fields[0], flatten_batch(batch));
    ASSERT_EQ(out.size(), dense.size());
    EXPECT_TRUE(bitwise_equal(out.reshaped(dense.shape()), dense));
}

TEST(UntiedForward, ZeroInputGivesZeroActivations) {
    const auto layer = make_untied({12, 12, 1}, 4, 4, {2, 2, 1}, 3);
    const Tensor out = untied_forward(layer, Tensor({2, 12, 12, 1}));
    for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(UntiedForward, MatchesPerFieldLoopOracle) {
    const auto layer = make_untied({24, 24, 1}, 16, 4, {2, 2, 2}, 4);
    ASSERT_EQ(layer.geometry.grid_rows, 3u);
    const Tensor batch = random_tensor({2, 24, 24, 1}, 5);
    const Tensor out = untied_forward(layer, batch);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t c = 0; c < 3; ++c)
                for (std::size_t j = 0; j < 8; ++j) {
                    const double expect = oracle_activation(layer, batch, i, r, c, j);
                    EXPECT_NEAR(out[((i * 3 + r) * 3 + c) * 8 + j], expect, 1e-12 * std::max(1.0, std::abs(expect)));
                }
}

TEST(UntiedForward, BatchEquivarianceIsBitwise) {
    const auto layer = make_untied({16, 16, 1}, 8, 4, {2, 2, 1}, 6, LcnConfig{3, 1e-4});
    const Tensor batch = random_tensor({4, 16, 16, 1}, 7);
    const Tensor whole = untied_forward(layer, batch);
    for (std::size_t i = 0; i < 4; ++i) {
        const auto src = batch.row(i);
        const Tensor one = untied_forward(layer, Tensor({1, 16, 16, 1}, std::vector<double>(src.begin(), src.end())));
        const auto expect = whole.row(i);
        EXPECT_EQ(std::memcmp(one.data().data(), expect.data(), expect.size() * sizeof(double)), 0);
    }
}

TEST(UntiedForward, FieldIndependence) {
    auto layer = make_untied({12, 12, 1}, 4, 4, {1, 1, 3}, 8);
    const Tensor batch = random_tensor({2, 12, 12, 1}, 9);
    const Tensor before = untied_forward(layer, batch);
    const std::size_t target = layer.geometry.field_index(1, 2);
    layer.fields[target] = init_rica_params(3, 16, 0.1, 1e-6, 999);
    const Tensor after = untied_forward(layer, batch);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t f = 0; f < 9; ++f)
            for (std::size_t j = 0; j < 3; ++j) {
                const std::size_t idx = (i * 9 + f) * 3 + j;
                if (f == target)
                    EXPECT_NE(before[idx], after[idx]);
                else
                    EXPECT_EQ(before[idx], after[idx]);
            }
}

TEST(UntiedForward, ShapeMismatch) {
    const auto layer = make_untied({12, 12, 1}, 4, 4, {1, 1, 3}, 8);
    EXPECT_THROW(untied_forward(layer, Tensor({2, 12, 12, 2})), ShapeError);
}

TEST(BlocksMap, RoundTrip) {
    const Tensor blocks = random_tensor({2, 3, 2, 12}, 10);
    const BlockDims out{2, 3, 2};
    const Tensor map = blocks_to_map(blocks, out);
    EXPECT_EQ(map.shape(), (Shape{2, 6, 6, 2}));
    EXPECT_TRUE(bitwise_equal(map_to_blocks(map, 3, 2, out), blocks));
    // block (r=1, c=1), element (y=1, x=2, ch=1) lands at map (3, 5, 1)
    EXPECT_EQ(map[((0 * 6 + 3) * 6 + 5) * 2 + 1], blocks[((0 * 3 + 1) * 2 + 1) * 12 + (1 * 3 + 2) * 2 + 1]);
}

TEST(UntiedTrain, ZeroGradientFieldsUnchanged) {
    auto layer = make_untied({8, 8, 1}, 4, 4, {2, 2, 1}, 11);
    const auto original = layer;
    auto trainer = make_trainer(layer, 1e-3, 0.9, 1, 0);
    const auto res = train_step(trainer, Tensor({4, 8, 8, 1}));
    const auto& trained = std::get<UntiedLayer>(trainer.layer);
    for (std::size_t f = 0; f < original.fields.size(); ++f) {
        EXPECT_EQ(trained.fields[f].alpha, original.fields[f].alpha);
        EXPECT_EQ(trained.fields[f].b, original.fields[f].b);
        for (std::size_t i = 0; i < original.fields[f].W.size(); ++i)
            EXPECT_NEAR(trained.fields[f].W[i], original.fields[f].W[i], 1e-15);
    }
    EXPECT_GT(res.objective, 0.0);  // the smoothing term alone: lambda * k * sqrt(eps) per image
}

TEST(UntiedTrain, SharedInitDivergesOnNonUniformImage) {
    auto layer = make_untied({8, 8, 1}, 4, 4, {2, 2, 1}, 12);
    for (auto& f : layer.fields) f = layer.fields[0];
    auto trainer = make_trainer(layer, 1e-2, 0.0, 1, 0);
    const Tensor batch = random_tensor({1, 8, 8, 1}, 13);
    train_step(trainer, batch);
    const auto& fields = std::get<UntiedLayer>(trainer.layer).fields;
    bool any_differ = false;
    for (std::size_t f = 1; f < fields.size(); ++f) any_differ |= !(fields[f].W == fields[0].W);
    EXPECT_TRUE(any_differ);
}

TEST(UntiedTrain, SummedObjectiveEqualsPerFieldObjectives) {
    const auto layer = make_untied({12, 12, 1}, 4, 4, {2, 2, 1}, 14);
    auto trainer = make_trainer(layer, 1e-3, 0.9, 1, 0);
    const Tensor batch = random_tensor({3, 12, 12, 1}, 15);
    const auto res = train_step(trainer, batch);
    double expected = 0.0;
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 3; ++c)
            expected += rica_objective(layer.fields[layer.geometry.field_index(r, c)],
                                       extract_field_input(batch, layer.geometry, r, c));
    EXPECT_EQ(res.objective, expected);
    EXPECT_EQ(res.field_objectives.size(), 9u);
}

TEST(UntiedTrain, ErrorsCarryFieldCoordinates) {
    auto layer = make_untied({8, 8, 1}, 4, 4, {1, 1, 2}, 16);
    auto trainer = make_trainer(layer, 1e-3, 0.9, 1, 0);
    Tensor batch({1, 8, 8, 1});
    batch[(5 * 8 + 6)] = std::numeric_limits<double>::infinity();  // pixel (5, 6) lies in field (1, 1)
    try {
        train_step(trainer, batch);
        FAIL();
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("field (1,1)"), std::string::npos);
    }
}

TEST(Lcn, ConstantAndZeroMaps) {
    const LcnConfig cfg{3, 1e-4};
    Tensor constant({6, 7, 2});
    for (double& v : constant.data()) v = 3.25;
    const Tensor a = lcn_apply(constant, cfg), b = lcn_apply(Tensor({5, 5, 1}), cfg);
    for (double v : a.data()) EXPECT_EQ(v, 0.0);
    for (double v : b.data()) EXPECT_EQ(v, 0.0);
}

TEST(Lcn, ConditionalScaleInvariance) {
    const LcnConfig cfg{5, 1e-4};
    const Tensor x = random_tensor({12, 12, 2}, 17);
    Tensor scaled = x;
    for (double& v : scaled.data()) v *= 7.0;
    // Precondition: floored std never binds (random normal maps have local std of order 1).
    const Tensor loose = lcn_apply(x, LcnConfig{5, 1e-300});
    const Tensor a = lcn_apply(x, cfg), b = lcn_apply(scaled, cfg);
    for (std::size_t i = 0; i < a.size(); ++i) {
        ASSERT_EQ(a[i], loose[i]);
        EXPECT_NEAR(a[i], b[i], 1e-9);
    }
}

TEST(Lcn, SubtractiveStageRemovesInteriorLocalMean) {
    const std::size_t win = 3, r = 1;
    const Tensor x = random_tensor({9, 9, 1}, 18);
    // With an overwhelming floor the divisive stage is a known constant, exposing v = x - local mean.
    const double floor_c = 1e6;
    const Tensor y = lcn_apply(x, LcnConfig{win, floor_c});
    for (std::size_t py = r; py + r < 9; ++py)
        for (std::size_t px = r; px + r < 9; ++px) {
            const double v = y[py * 9 + px] * floor_c;
            const double centre_mean = x[py * 9 + px] - v;
            double residual = 0.0;
            for (std::size_t yy = py - r; yy <= py + r; ++yy)
                for (std::size_t xx = px - r; xx <= px + r; ++xx) residual += x[yy * 9 + xx] - centre_mean;
            EXPECT_NEAR(residual / 9.0, 0.0, 1e-9);
        }
}

TEST(Lcn, RegionEvaluationIsBitwiseEqualToFullMap) {
    const LcnConfig cfg{3, 1e-4};
    const Tensor x = random_tensor({10, 8, 2}, 19);
    const Tensor full = lcn_apply(x, cfg);
    const Region roi{3, 7, 2, 5};
    const Tensor part = lcn_apply_region(x, cfg, roi);
    for (std::size_t yy = roi.row0; yy < roi.row1; ++yy)
        for (std::size_t xx = roi.col0; xx < roi.col1; ++xx)
            for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(part[(yy * 8 + xx) * 2 + c], full[(yy * 8 + xx) * 2 + c]);
}

TEST(Lcn, ConfigErrors) {
    EXPECT_THROW(lcn_apply(Tensor({4, 4, 1}), LcnConfig{5, 1e-4}), ConfigError);
    EXPECT_THROW(lcn_apply(Tensor({4, 4, 1}), LcnConfig{2, 1e-4}), ConfigError);
    EXPECT_THROW(lcn_apply(Tensor({4, 4, 1}), LcnConfig{3, 0.0}), ConfigError);
}

TEST(ParamCount, PublishedLayerArithmetic) {
    const auto report = published_param_report();
    EXPECT_EQ(report.layer1.bundles, 5184u);
    EXPECT_EQ(report.layer1.inputs, 768u);
    EXPECT_EQ(report.layer1.filters, 384u);
    EXPECT_EQ(report.layer1.total, 1'532'810'304ULL);
    EXPECT_EQ(report.layer3.inputs, 92'256u);
    EXPECT_EQ(report.layer3.total, 377'972'833ULL);
    EXPECT_NE(report.total, report.stated_total);
    EXPECT_FALSE(report.notes.empty());
}

TEST(ParamCount, SingleScalarField) {
    LayerSpec ls;
    ls.field_h = ls.field_w = 1;
    ls.output_block = {1, 1, 1};
    const auto pc = param_count(NetworkSpec{{1, 1, 1}, {ls}});
    EXPECT_EQ(pc.total, 3u);
}

TEST(ParamCount, NetworkSpecMatchesBuiltNetwork) {
    LayerSpec l1;
    l1.field_h = l1.field_w = 8;
    l1.stride = 8;
    l1.output_block = {2, 2, 4};
    LayerSpec l2;
    l2.kind = LayerSpec::Kind::Dense;
    l2.neurons = 10;
    const NetworkSpec spec{{16, 16, 1}, {l1, l2}};
    const auto pc = param_count(spec);
    const auto net = build_network(spec, 1);
    std::uint64_t counted = 0;
    for (const auto& layer : net.layers)
        for (const auto* p : rica_bundles(layer)) counted += p->W.size() + p->b.size() + 1;
    EXPECT_EQ(pc.total, counted);
    EXPECT_EQ(pc.layers[1].inputs, 4u * 4u * 4u);
}

TEST(NetworkSpec, InvalidChains) {
    LayerSpec dense;
    dense.kind = LayerSpec::Kind::Dense;
    dense.neurons = 4;
    LayerSpec untied;
    untied.field_h = untied.field_w = 1;
    untied.output_block = {1, 1, 1};
    EXPECT_THROW(resolve_layers(NetworkSpec{{4, 4, 1}, {dense, untied}}), ConfigError);
    LayerSpec lcn_dense = dense;
    lcn_dense.lcn_window = 3;
    EXPECT_THROW(resolve_layers(NetworkSpec{{4, 4, 1}, {lcn_dense}}), ConfigError);
    EXPECT_THROW(resolve_layers(NetworkSpec{{4, 4, 1}, {}}), ConfigError);
    const auto resolved = resolve_layers(NetworkSpec{{4, 4, 1}, {untied, dense}});
    EXPECT_DOUBLE_EQ(resolved[0].lambda, 0.1);
}

TEST(NetworkSpec, DefaultLambdaByDepth) {
    LayerSpec untied;
    untied.field_h = untied.field_w = 1;
    untied.output_block = {1, 1, 1};
    LayerSpec dense;
    dense.kind = LayerSpec::Kind::Dense;
    dense.neurons = 2;
    const auto r = resolve_layers(NetworkSpec{{2, 2, 1}, {untied, untied, dense}});
    EXPECT_DOUBLE_EQ(r[0].lambda, 0.1);
    EXPECT_DOUBLE_EQ(r[1].lambda, 0.1);
    EXPECT_DOUBLE_EQ(r[2].lambda, 0.01);
}
