#include "sinkgan/networks.hpp"

#include <cmath>

namespace sinkgan {

namespace {

Tensor he_init(std::vector<size_t> shape, size_t fan_in, Rng& rng) {
    return random_gaussian(std::move(shape), rng, std::sqrt(2.0 / static_cast<double>(fan_in)));
}

}  // namespace

Conv2dWeights Conv2dWeights::init(size_t kh, size_t kw, size_t cin, size_t cout, Rng& rng) {
    Conv2dWeights c;
    c.w = he_init({kh, kw, cin, cout}, kh * kw * cin, rng);
    c.b = Tensor::zeros({cout});
    return c;
}

void Conv2dWeights::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".w", w);
    fn(prefix + ".b", b);
}

DenoiseGenerator DenoiseGenerator::init(size_t in_channels, size_t width1, size_t width2,
                                        bool use_htb, size_t image_side, size_t htb_heads,
                                        Rng& rng) {
    DenoiseGenerator g;
    g.width1 = width1;
    g.width2 = width2;
    g.enc1 = Conv2dWeights::init(3, 3, in_channels, width1, rng);
    g.enc2 = Conv2dWeights::init(3, 3, width1, width2, rng);
    if (use_htb) {
        AttentionSpec spec;
        spec.patch_h = 4;
        spec.patch_w = 4;
        spec.channels = width2;
        spec.heads = htb_heads;
        g.htb = HtbWeights::init(image_side, image_side, spec, 2, rng);
    }
    g.dec1 = Conv2dWeights::init(3, 3, width2, width1, rng);
    g.dec2 = Conv2dWeights::init(1, 1, width1, 1, rng);
    return g;
}

void DenoiseGenerator::visit_params(const ParamVisitor& fn) {
    enc1.visit("g.enc1", fn);
    enc2.visit("g.enc2", fn);
    if (htb.has_value()) htb->visit("g.htb", fn);
    dec1.visit("g.dec1", fn);
    dec2.visit("g.dec2", fn);
}

Var DenoiseGenerator::forward(const BoundParams& bp, const Var& x, double slope,
                              FilterCache* cache) {
    Var h = leaky_relu(conv2d(x, bp.of(enc1.w), bp.of(enc1.b)), slope);
    h = leaky_relu(conv2d(h, bp.of(enc2.w), bp.of(enc2.b)), slope);
    if (htb.has_value()) h = htb_forward(h, bp, *htb, slope, cache);
    h = leaky_relu(conv2d(h, bp.of(dec1.w), bp.of(dec1.b)), slope);
    return conv2d(h, bp.of(dec2.w), bp.of(dec2.b));  // final 1x1, no activation
}

std::vector<Tensor*> DenoiseGenerator::layer_weights() {
    return {&enc1.w, &enc2.w, &dec1.w, &dec2.w};
}

std::vector<std::string> DenoiseGenerator::layer_names() const {
    return {"enc1", "enc2", "dec1", "dec2"};
}

MlpDiscriminator MlpDiscriminator::init(size_t in_dim, size_t hidden1, size_t hidden2, Rng& rng) {
    MlpDiscriminator d;
    d.in_dim = in_dim;
    d.w1 = he_init({in_dim, hidden1}, in_dim, rng);
    d.b1 = Tensor::zeros({hidden1});
    d.w2 = he_init({hidden1, hidden2}, hidden1, rng);
    d.b2 = Tensor::zeros({hidden2});
    d.w3 = he_init({hidden2, 1}, hidden2, rng);
    d.b3 = Tensor::zeros({1});
    return d;
}

void MlpDiscriminator::visit_params(const ParamVisitor& fn) {
    fn("d.w1", w1);
    fn("d.b1", b1);
    fn("d.w2", w2);
    fn("d.b2", b2);
    fn("d.w3", w3);
    fn("d.b3", b3);
}

Var MlpDiscriminator::forward(const BoundParams& bp, const Var& x) {
    if (x.value().rank() != 2 || x.value().dim(1) != in_dim) {
        throw DimensionError("discriminator expects [B," + std::to_string(in_dim) + "], got " +
                             x.value().shape_str());
    }
    Var h = relu(linear(x, bp.of(w1), bp.of(b1)));
    h = relu(linear(h, bp.of(w2), bp.of(b2)));
    return sigmoid(linear(h, bp.of(w3), bp.of(b3)));
}

ConvDiscriminator ConvDiscriminator::init(size_t in_channels, size_t width, size_t taps,
                                          size_t n_rcbs, size_t side, Rng& rng) {
    if (taps == 0) throw ContractError("ConvDiscriminator needs at least one DMRB tap");
    ConvDiscriminator d;
    d.width = width;
    d.side = side;
    d.enc = Conv2dWeights::init(3, 3, in_channels, width, rng);
    for (size_t i = 0; i < taps; ++i) d.dmrbs.push_back(DmrbWeights::init(width, n_rcbs, rng));
    const size_t flat = side * side * width;
    d.head_w = he_init({flat, 1}, flat, rng);
    d.head_b = Tensor::zeros({1});
    return d;
}

void ConvDiscriminator::visit_params(const ParamVisitor& fn) {
    enc.visit("d.enc", fn);
    for (size_t i = 0; i < dmrbs.size(); ++i) dmrbs[i].visit("d.dmrb" + std::to_string(i), fn);
    fn("d.head_w", head_w);
    fn("d.head_b", head_b);
}

ConvDiscriminator::Output ConvDiscriminator::forward(const BoundParams& bp, const Var& image,
                                                     double slope) {
    const Tensor& x = image.value();
    if (x.rank() != 4 || x.dim(1) != side || x.dim(2) != side) {
        throw DimensionError("ConvDiscriminator expects [B," + std::to_string(side) + "," +
                             std::to_string(side) + ",C], got " + x.shape_str());
    }
    const size_t b = x.dim(0);
    Output out;
    Var h = leaky_relu(conv2d(image, bp.of(enc.w), bp.of(enc.b)), slope);
    for (auto& block : dmrbs) {
        h = dmrb_forward(h, bp, block, slope);
        out.taps.push_back(h);
    }
    Var flat = reshape(h, {b, side * side * width});
    out.prob = sigmoid(linear(flat, bp.of(head_w), bp.of(head_b)));
    return out;
}

Var ConvDiscriminator::spatial_attention(Tape& tape, const BoundParams& bp, const Tensor& image,
                                         double slope) {
    if (image.rank() != 3) {
        throw DimensionError("spatial_attention expects [H,W,C], got " + image.shape_str());
    }
    Var x = tape.constant(image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)}));
    Output out = forward(bp, x, slope);
    std::vector<Var> taps;
    taps.reserve(out.taps.size());
    for (const Var& t : out.taps) {
        taps.push_back(reshape(t, {side, side, width}));
    }
    return dsa_map(taps, image.dim(0), image.dim(1));
}

ToyGenerator ToyGenerator::init(size_t in_channels, size_t out_channels, size_t width,
                                size_t n_htbs, size_t image_side, const AttentionSpec& spec,
                                Rng& rng) {
    ToyGenerator g;
    g.width = width;
    g.enc1 = Conv2dWeights::init(3, 3, in_channels, width, rng);
    g.enc2 = Conv2dWeights::init(3, 3, width, width, rng);
    AttentionSpec block_spec = spec;
    block_spec.channels = width;
    for (size_t i = 0; i < n_htbs; ++i) {
        g.htbs.push_back(HtbWeights::init(image_side, image_side, block_spec, 2, rng));
    }
    g.dec1 = Conv2dWeights::init(3, 3, width, width, rng);
    g.dec2 = Conv2dWeights::init(1, 1, width, out_channels, rng);
    return g;
}

void ToyGenerator::visit_params(const ParamVisitor& fn) {
    enc1.visit("g.enc1", fn);
    enc2.visit("g.enc2", fn);
    for (size_t i = 0; i < htbs.size(); ++i) htbs[i].visit("g.htb" + std::to_string(i), fn);
    dec1.visit("g.dec1", fn);
    dec2.visit("g.dec2", fn);
}

Var ToyGenerator::forward(const BoundParams& bp, const Var& x, double slope,
                          FilterCache* cache) {
    Var h = leaky_relu(conv2d(x, bp.of(enc1.w), bp.of(enc1.b)), slope);
    h = leaky_relu(conv2d(h, bp.of(enc2.w), bp.of(enc2.b)), slope);
    for (auto& block : htbs) h = htb_forward(h, bp, block, slope, cache);
    h = leaky_relu(conv2d(h, bp.of(dec1.w), bp.of(dec1.b)), slope);
    return conv2d(h, bp.of(dec2.w), bp.of(dec2.b));
}

void Adam::update(Tensor& p, const Tensor& grad) {
    Moments& mom = state_[&p];
    if (mom.m.empty()) {
        mom.m = Tensor::zeros(p.shape());
        mom.v = Tensor::zeros(p.shape());
    }
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < p.numel(); ++i) {
        const double g = grad[i];
        mom.m[i] = beta1_ * mom.m[i] + (1.0 - beta1_) * g;
        mom.v[i] = beta2_ * mom.v[i] + (1.0 - beta2_) * g * g;
        const double mhat = mom.m[i] / bc1;
        const double vhat = mom.v[i] / bc2;
        p[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
}

}  // namespace sinkgan
