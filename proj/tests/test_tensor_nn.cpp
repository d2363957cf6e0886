#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "limtr/checkpoint.hpp"
#include "limtr/grad_check.hpp"
#include "limtr/nn.hpp"

using namespace limtr;

namespace {

std::vector<GradCheckTarget> param_targets(ParamStore& store) {
    std::vector<GradCheckTarget> targets;
    for (auto& p : store.params) {
        if (!p->trainable) continue;
        targets.push_back({p->name, p->value.ptr(), p->grad.ptr(), p->value.numel()});
    }
    return targets;
}

Tensor random_tensor(std::vector<size_t> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = rng.normal(0.0, scale);
    return t;
}

// Fixed random projection turning a tensor into a scalar objective.
double weighted_sum(const Tensor& t, const std::vector<double>& w) {
    double s = 0.0;
    for (size_t i = 0; i < t.numel(); ++i) s += t.data[i] * w[i % w.size()];
    return s;
}

}  // namespace

TEST_CASE("linear forward matches hand-computed examples") {
    ParamStore store;
    Rng rng(1);
    Linear layer(store, "lin", 2, 2, rng);

    // identity weights
    layer.weight().value.data = {1, 0, 0, 1};
    layer.bias().value.data = {0, 0};
    Tensor x = Tensor::from({1, 2}, {1, 0});
    Tensor y = layer.forward(x);
    CHECK(y.data[0] == doctest::Approx(1.0));
    CHECK(y.data[1] == doctest::Approx(0.0));

    // x=[2,3], W=[[1,1],[0,1]], b=[0.5,0] -> [5.5, 3]
    layer.weight().value.data = {1, 1, 0, 1};
    layer.bias().value.data = {0.5, 0};
    y = layer.forward(Tensor::from({1, 2}, {2, 3}));
    CHECK(y.data[0] == doctest::Approx(5.5));
    CHECK(y.data[1] == doctest::Approx(3.0));

    // zero input returns the bias
    layer.bias().value.data = {1, 2};
    y = layer.forward(Tensor::from({1, 2}, {0, 0}));
    CHECK(y.data[0] == doctest::Approx(1.0));
    CHECK(y.data[1] == doctest::Approx(2.0));
}

TEST_CASE("linear shape errors name both shapes") {
    ParamStore store;
    Rng rng(1);
    Linear layer(store, "lin", 3, 2, rng);
    CHECK_THROWS_WITH_AS(layer.forward(Tensor::from({2, 2}, {1, 2, 3, 4})),
                         doctest::Contains("(2,2)"), std::invalid_argument);
    CHECK_THROWS_AS(layer.backward(Tensor({1, 2})), std::logic_error);
}

TEST_CASE("linear backward: identity and scalar chain rule") {
    ParamStore store;
    Rng rng(2);
    Linear layer(store, "lin", 2, 2, rng);
    layer.weight().value.data = {1, 0, 0, 1};
    layer.bias().value.data = {0, 0};
    layer.forward(Tensor::from({1, 2}, {0.3, -0.4}));
    Tensor gx = layer.backward(Tensor::from({1, 2}, {1, 0}));
    CHECK(gx.data[0] == doctest::Approx(1.0));
    CHECK(gx.data[1] == doctest::Approx(0.0));

    ParamStore store2;
    Linear scalar(store2, "s", 1, 1, rng);
    scalar.weight().value.data = {2.0};
    scalar.bias().value.data = {0.0};
    scalar.forward(Tensor::from({1, 1}, {1.5}));
    Tensor g = scalar.backward(Tensor::from({1, 1}, {1.0}));
    CHECK(g.data[0] == doctest::Approx(2.0));                       // grad_in = w
    CHECK(scalar.weight().grad.data[0] == doctest::Approx(1.5));    // grad_w = x
    CHECK(scalar.bias().grad.data[0] == doctest::Approx(1.0));
}

TEST_CASE("linear gradients match central finite differences below 1e-6") {
    ParamStore store;
    Rng rng(3);
    Linear layer(store, "lin", 4, 3, rng);
    Tensor x = random_tensor({5, 4}, rng);
    std::vector<double> w(15);
    for (auto& v : w) v = rng.normal();

    Tensor out;
    auto loss = [&]() { return weighted_sum(layer.forward(x), w); };
    auto grads = [&]() {
        store.zero_grads();
        Tensor y = layer.forward(x);
        Tensor gy(y.shape);
        for (size_t i = 0; i < gy.numel(); ++i) gy.data[i] = w[i % w.size()];
        layer.backward(gy);
    };
    auto report = grad_check(loss, grads, param_targets(store), 1e-6);
    CHECK(report.finite);
    CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("batchnorm collapses constant rows to beta") {
    ParamStore store;
    BatchNorm bn(store, "bn", 2);
    bn.beta().value.data = {0.7, -0.2};
    Tensor x = Tensor::from({3, 2}, {4, 1, 4, 1, 4, 1});
    Tensor y = bn.forward(x, Mode::kTrain);
    for (size_t r = 0; r < 3; ++r) {
        CHECK(std::fabs(y.at2(r, 0) - 0.7) < 1e-2);
        CHECK(std::fabs(y.at2(r, 1) + 0.2) < 1e-2);
    }
}

TEST_CASE("batchnorm eval with identity statistics is the identity") {
    ParamStore store;
    BatchNorm bn(store, "bn", 3);
    Tensor x = Tensor::from({2, 3}, {0.05, -0.02, 0.01, 0.03, 0.0, -0.04});
    Tensor y = bn.forward(x, Mode::kEval);
    for (size_t i = 0; i < x.numel(); ++i) CHECK(std::fabs(y.data[i] - x.data[i]) < 1e-6);
}

TEST_CASE("batchnorm train normalizes with population variance") {
    ParamStore store;
    BatchNorm bn(store, "bn", 1);
    Tensor y = bn.forward(Tensor::from({2, 1}, {0, 2}), Mode::kTrain);
    CHECK(y.data[0] == doctest::Approx(-1.0).epsilon(1e-4));
    CHECK(y.data[1] == doctest::Approx(1.0).epsilon(1e-4));
    // running stats updated with momentum 0.1 from (0,1) defaults
    CHECK(bn.running_mean().value.data[0] == doctest::Approx(0.1));
    CHECK(bn.running_var().value.data[0] == doctest::Approx(0.9 + 0.1 * 1.0));
}

TEST_CASE("batchnorm rejects degenerate train batches") {
    ParamStore store;
    BatchNorm bn(store, "bn", 2);
    CHECK_THROWS_AS(bn.forward(Tensor({1, 2}), Mode::kTrain), std::invalid_argument);
    std::vector<uint8_t> mask = {1, 0, 0};
    CHECK_THROWS_AS(bn.forward(Tensor({3, 2}), Mode::kTrain, &mask), std::invalid_argument);
}

TEST_CASE("batchnorm eval mode depends only on running statistics") {
    ParamStore store;
    Rng rng(5);
    BatchNorm bn(store, "bn", 2);
    bn.forward(random_tensor({8, 2}, rng), Mode::kTrain);  // move running stats
    Tensor x = random_tensor({4, 2}, rng);
    Tensor y1 = bn.forward(x, Mode::kEval);
    bn.forward(x, Mode::kEval);  // repeated eval passes do not drift
    Tensor y2 = bn.forward(x, Mode::kEval);
    for (size_t i = 0; i < y1.numel(); ++i) CHECK(y1.data[i] == y2.data[i]);
}

TEST_CASE("batchnorm gradients match finite differences (train, eval, masked)") {
    Rng rng(7);
    for (const bool use_mask : {false, true}) {
        for (const Mode mode : {Mode::kTrain, Mode::kEval}) {
            ParamStore store;
            BatchNorm bn(store, "bn", 3);
            for (auto& v : bn.gamma().value.data) v = rng.uniform(0.5, 1.5);
            for (auto& v : bn.beta().value.data) v = rng.normal();
            for (auto& v : bn.running_mean().value.data) v = rng.normal();
            for (auto& v : bn.running_var().value.data) v = rng.uniform(0.5, 2.0);
            Tensor x = random_tensor({6, 3}, rng);
            Tensor x_grad(x.shape);
            std::vector<uint8_t> mask = {1, 1, 0, 1, 0, 1};
            const std::vector<uint8_t>* mp = use_mask ? &mask : nullptr;
            std::vector<double> w(18);
            for (auto& v : w) v = rng.normal();

            auto loss = [&]() { return weighted_sum(bn.forward(x, mode, mp), w); };
            auto grads = [&]() {
                store.zero_grads();
                Tensor y = bn.forward(x, mode, mp);
                Tensor gy(y.shape);
                for (size_t i = 0; i < gy.numel(); ++i) gy.data[i] = w[i % w.size()];
                Tensor gx = bn.backward(gy);
                std::copy(gx.data.begin(), gx.data.end(), x_grad.data.begin());
            };
            std::vector<GradCheckTarget> targets = param_targets(store);
            targets.push_back({"input", x.ptr(), x_grad.ptr(), x.numel()});
            auto report = grad_check(loss, grads, targets, 1e-6);
            CHECK(report.finite);
            CHECK(report.max_rel_error < 1e-5);
        }
    }
}

TEST_CASE("relu forward/backward examples") {
    Tensor x = Tensor::from({3}, {-1, 0, 2});
    Tensor y = relu(x);
    CHECK(y.data[0] == 0.0);
    CHECK(y.data[1] == 0.0);
    CHECK(y.data[2] == 2.0);

    Tensor g = relu_backward(Tensor::from({3}, {1, 1, 1}), x);
    CHECK(g.data[0] == 0.0);
    CHECK(g.data[1] == 0.0);  // subgradient at exactly zero is zero
    CHECK(g.data[2] == 1.0);

    Tensor pos = Tensor::from({3}, {0.5, 1.0, 2.0});
    Tensor yp = relu(pos);
    for (size_t i = 0; i < 3; ++i) CHECK(yp.data[i] == pos.data[i]);
    Tensor gp = relu_backward(Tensor::from({3}, {3, 4, 5}), pos);
    CHECK(gp.data[0] == 3.0);
    CHECK(gp.data[2] == 5.0);

    // relu(x) >= 0 and idempotent
    Rng rng(11);
    Tensor r = random_tensor({64}, rng);
    Tensor r1 = relu(r);
    Tensor r2 = relu(r1);
    for (size_t i = 0; i < r1.numel(); ++i) {
        CHECK(r1.data[i] >= 0.0);
        CHECK(r1.data[i] == r2.data[i]);
    }
}

TEST_CASE("masked maxpool examples and invariances") {
    Tensor x = Tensor::from({2, 2}, {1, 5, 3, 2});
    auto res = masked_maxpool(x, {1, 1});
    CHECK(res.values.data[0] == 3.0);
    CHECK(res.values.data[1] == 5.0);
    CHECK(res.argmax[0] == 1);
    CHECK(res.argmax[1] == 0);

    Tensor x3 = Tensor::from({3, 2}, {1, 5, 3, 2, 99, 99});
    auto res3 = masked_maxpool(x3, {1, 1, 0});
    CHECK(res3.values.data[0] == 3.0);
    CHECK(res3.values.data[1] == 5.0);

    auto single = masked_maxpool(x3, {0, 1, 0});
    CHECK(single.values.data[0] == 3.0);
    CHECK(single.values.data[1] == 2.0);

    CHECK_THROWS_AS(masked_maxpool(x, {0, 0}), std::invalid_argument);

    // permutation and padding invariance, exact
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        const size_t n = 1 + rng.uniform_int(6), dim = 1 + rng.uniform_int(4);
        Tensor base = random_tensor({n, dim}, rng);
        std::vector<uint8_t> mask(n, 1);
        auto r1 = masked_maxpool(base, mask);

        std::vector<size_t> perm(n);
        for (size_t i = 0; i < n; ++i) perm[i] = i;
        for (size_t i = n; i-- > 1;) std::swap(perm[i], perm[rng.uniform_int(i + 1)]);
        Tensor shuffled({n, dim});
        for (size_t i = 0; i < n; ++i)
            for (size_t d = 0; d < dim; ++d) shuffled.at2(i, d) = base.at2(perm[i], d);
        auto r2 = masked_maxpool(shuffled, mask);
        for (size_t d = 0; d < dim; ++d) CHECK(r1.values.data[d] == r2.values.data[d]);

        Tensor padded({n + 2, dim});
        std::copy(base.data.begin(), base.data.end(), padded.data.begin());
        for (size_t d = 0; d < dim; ++d) padded.at2(n, d) = 1e9;
        std::vector<uint8_t> mask_padded(n + 2, 1);
        mask_padded[n] = 0;
        mask_padded[n + 1] = 0;
        auto r3 = masked_maxpool(padded, mask_padded);
        for (size_t d = 0; d < dim; ++d) CHECK(r1.values.data[d] == r3.values.data[d]);

        // critical set: re-pooling only the argmax rows reproduces the values
        std::vector<uint8_t> keep(n, 0);
        for (size_t d = 0; d < dim; ++d) keep[r1.argmax[d]] = 1;
        auto r4 = masked_maxpool(base, keep);
        for (size_t d = 0; d < dim; ++d) CHECK(r1.values.data[d] == r4.values.data[d]);
    }
}

TEST_CASE("maxpool backward routes gradient to argmax rows only") {
    Tensor x = Tensor::from({3, 2}, {1, 5, 3, 2, 0, 0});
    auto res = masked_maxpool(x, {1, 1, 1});
    Tensor g = masked_maxpool_backward(Tensor::from({2}, {10, 20}), res.argmax, 3, 2);
    CHECK(g.at2(1, 0) == 10.0);
    CHECK(g.at2(0, 1) == 20.0);
    CHECK(g.at2(2, 0) == 0.0);
    CHECK(g.at2(2, 1) == 0.0);
}

TEST_CASE("mlp block: identity layer reduces to relu") {
    ParamStore store;
    Rng rng(17);
    MlpBlock block(store, "blk", 2, {2}, rng);
    store.find("blk/layer0/weight")->value.data = {1, 0, 0, 1};
    store.find("blk/layer0/bias")->value.data = {0, 0};
    Tensor x = Tensor::from({2, 2}, {0.03, -0.02, 0.01, 0.04});
    Tensor y = block.forward(x, Mode::kEval);
    Tensor expect = relu(x);
    for (size_t i = 0; i < y.numel(); ++i) CHECK(std::fabs(y.data[i] - expect.data[i]) < 1e-6);
}

TEST_CASE("mlp block: 12-layer anchor ladder maps dim 7 to 1024") {
    ParamStore store;
    Rng rng(19);
    std::vector<size_t> widths;
    for (size_t w : {256, 512, 1024})
        for (int i = 0; i < 4; ++i) widths.push_back(w);
    MlpBlock block(store, "ladder", 7, widths, rng);
    CHECK(block.depth() == 12);
    Tensor y = block.forward(Tensor({3, 7}), Mode::kEval);
    CHECK(y.shape[0] == 3);
    CHECK(y.shape[1] == 1024);
}

TEST_CASE("mlp block depth-3 gradients match finite differences") {
    ParamStore store;
    Rng rng(23);
    MlpBlock block(store, "blk", 4, {6, 5, 3}, rng);
    Tensor x = random_tensor({7, 4}, rng);
    std::vector<double> w(21);
    for (auto& v : w) v = rng.normal();

    auto loss = [&]() { return weighted_sum(block.forward(x, Mode::kTrain), w); };
    auto grads = [&]() {
        store.zero_grads();
        Tensor y = block.forward(x, Mode::kTrain);
        Tensor gy(y.shape);
        for (size_t i = 0; i < gy.numel(); ++i) gy.data[i] = w[i % w.size()];
        block.backward(gy);
    };
    auto report = grad_check(loss, grads, param_targets(store), 1e-6);
    CHECK(report.finite);
    CHECK(report.max_rel_error < 1e-5);
}

TEST_CASE("grad_check flags non-finite losses") {
    double value = 1.0;
    double grad = 1.0;
    auto loss = [&]() { return std::log(value); };  // blows up at perturbed -1
    value = -0.5e-7;                                // perturbing +-1e-6 crosses zero
    auto report =
        grad_check(loss, [] {}, {{"v", &value, &grad, 1}}, 1e-6);
    CHECK_FALSE(report.finite);
    CHECK(!report.failure.empty());
}

TEST_CASE("checkpoint format round-trips and rejects malformed input") {
    namespace fs = std::filesystem;
    const std::string dir = fs::temp_directory_path() / "limtr_ckpt_test";
    fs::create_directories(dir);
    const std::string path = dir + "/params.bin";

    std::vector<CheckpointEntry> entries;
    entries.push_back({"a/weight", {2, 3}, {1, 2, 3, 4, 5, 6}});
    entries.push_back({"b/bias", {2}, {-1.5f, 2.25f}});
    write_checkpoint(path, entries);
    const auto loaded = read_checkpoint(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].name == "a/weight");
    CHECK(loaded[0].dims == std::vector<uint32_t>{2, 3});
    CHECK(loaded[1].data[1] == 2.25f);

    // truncated file -> parse error naming the offset
    std::string bytes;
    {
        std::ifstream f(path, std::ios::binary);
        bytes.assign((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    }
    const std::string trunc_path = dir + "/trunc.bin";
    {
        std::ofstream f(trunc_path, std::ios::binary);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 5));
    }
    CHECK_THROWS_WITH_AS(read_checkpoint(trunc_path), doctest::Contains("byte offset"),
                         std::runtime_error);

    // version mismatch -> explicit error
    bytes[5] = 9;
    const std::string bad_path = dir + "/badver.bin";
    {
        std::ofstream f(bad_path, std::ios::binary);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_WITH_AS(read_checkpoint(bad_path), doctest::Contains("version"),
                         std::runtime_error);

    // ParamStore round trip + mismatch error lists missing parameters
    ParamStore store;
    Rng rng(29);
    Linear lin(store, "lin", 3, 2, rng);
    const std::string store_path = dir + "/store.bin";
    write_checkpoint(store_path, params_to_entries(store));
    ParamStore store2;
    Linear lin2(store2, "lin", 3, 2, rng);
    load_params(store2, read_checkpoint(store_path));
    for (size_t i = 0; i < lin.weight().value.numel(); ++i)
        CHECK(lin2.weight().value.data[i] ==
              doctest::Approx(lin.weight().value.data[i]).epsilon(1e-6));

    ParamStore store3;
    Linear other(store3, "other", 3, 2, rng);
    CHECK_THROWS_WITH_AS(load_params(store3, read_checkpoint(store_path)),
                         doctest::Contains("other/weight"), std::runtime_error);
}
