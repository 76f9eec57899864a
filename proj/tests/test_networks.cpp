#include <doctest.h>

#include "sinkgan/experiment.hpp"
#include "sinkgan/losses.hpp"
#include "sinkgan/networks.hpp"
#include "test_support.hpp"

using namespace sinkgan;
using testutil::rand_tensor;

TEST_CASE("conv discriminator exposes one tap per DMRB and a sigmoid head") {
    Rng rng(3);
    ConvDiscriminator d = ConvDiscriminator::init(1, 4, 2, 2, 8, rng);
    CHECK(d.tap_count() == 2);

    Tape t;
    BoundParams bp = bind_params(t, d, false);
    Tensor img = rand_tensor({2, 8, 8, 1}, rng, 0.0, 1.0);
    auto out = d.forward(bp, t.constant(img));
    REQUIRE(out.taps.size() == 2);
    CHECK(out.taps[0].value().same_shape(Tensor({2, 8, 8, 4})));
    CHECK(out.prob.value().dim(0) == 2);
    for (size_t i = 0; i < out.prob.value().numel(); ++i) {
        CHECK(out.prob.value()[i] > 0.0);
        CHECK(out.prob.value()[i] < 1.0);
    }
}

TEST_CASE("discriminator spatial attention stays in range and feeds the da loss") {
    Rng rng(11);
    ConvDiscriminator d = ConvDiscriminator::init(1, 4, 2, 2, 8, rng);
    Tape t;
    BoundParams bp = bind_params(t, d, true);
    Tensor lowres = rand_tensor({8, 8, 1}, rng, 0.0, 1.0);
    Tensor target = rand_tensor({8, 8, 1}, rng, 0.0, 1.0);

    Var dsa_low = d.spatial_attention(t, bp, lowres);
    Var dsa_ref = d.spatial_attention(t, bp, target);
    for (size_t i = 0; i < dsa_low.value().numel(); ++i) {
        CHECK(dsa_low.value()[i] >= 0.0);
        CHECK(dsa_low.value()[i] <= 1.0);
    }

    Var da = da_loss(dsa_low, dsa_ref);
    t.backward(da);
    // Gradients reach the discriminator encoder through both attention maps.
    CHECK(bp.of(d.enc.w).grad().max_abs() > 0.0);
}

TEST_CASE("guided forward pass: gated guide channel into a two-channel generator") {
    Rng rng(23);
    const size_t side = 8;
    ConvDiscriminator d = ConvDiscriminator::init(1, 4, 2, 2, side, rng);
    AttentionSpec spec;
    spec.patch_h = 2;
    spec.patch_w = 2;
    spec.heads = 2;
    ToyGenerator g = ToyGenerator::init(2, 1, 3, 1, side, spec, rng);

    Tensor noisy = rand_tensor({side, side, 1}, rng, 0.0, 1.0);
    Tensor guide = rand_tensor({side, side, 1}, rng, 0.0, 1.0);

    Tape t;
    BoundParams bp_d = bind_params(t, d, false);
    BoundParams bp_g = bind_params(t, g, true);
    Var gain = t.leaf(Tensor::scalar(1.0), true);
    Var bias = t.leaf(Tensor::scalar(0.0), true);

    Var dsa = d.spatial_attention(t, bp_d, noisy);
    Var gate = attention_gate(dsa, gain, bias);
    // z (.) A_s: the guide modulated by the spatial gate, one multiplier per pixel.
    Var gated = mul(t.constant(guide.reshaped({side, side})), gate);
    Var input = concat({t.constant(noisy), reshape(gated, {side, side, 1})}, 2);
    Var pred = g.forward(bp_g, reshape(input, {1, side, side, 2}));
    CHECK(pred.value().same_shape(Tensor({1, side, side, 1})));

    Var loss = pixel_loss(pred, t.constant(rand_tensor({1, side, side, 1}, rng, 0.0, 1.0)));
    t.backward(loss);
    CHECK(bp_g.of(g.enc1.w).grad().max_abs() > 0.0);
    CHECK(gain.grad().max_abs() > 0.0);  // the gate parameters are trainable
}

TEST_CASE("htb-mode denoiser trains for one epoch") {
    ExperimentConfig cfg;
    cfg.train_count = 8;
    cfg.test_count = 4;
    cfg.batch_size = 4;
    cfg.max_epochs = 1;
    cfg.image_side = 8;
    cfg.gen_width1 = 3;
    cfg.gen_width2 = 4;
    cfg.use_htb = true;
    cfg.htb_heads = 2;
    cfg.seed = 5;
    RunSummary s = run_denoising(cfg, "");
    CHECK(s.records.size() == 1);
    CHECK(std::isfinite(s.final_test_mse));
    CHECK(s.sinkhorn_solves > 0);
}

TEST_CASE("adam drives a quadratic toward its minimum") {
    struct One {
        Tensor p = Tensor::scalar(5.0);
        void visit_params(const ParamVisitor& fn) { fn("p", p); }
    } m;
    Adam opt(0.1);
    for (int i = 0; i < 200; ++i) {
        Tape t;
        BoundParams bp = bind_params(t, m, true);
        Var loss = mul(bp.of(m.p), bp.of(m.p));
        t.backward(loss);
        opt.step(m, bp);
    }
    CHECK(std::fabs(m.p[0]) < 0.05);
}
