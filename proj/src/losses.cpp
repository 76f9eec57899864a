#include "sinkgan/losses.hpp"

#include <cmath>

namespace sinkgan {

void LossWeights::validate() const {
    for (double v : {lambda_p, lambda_ssim, lambda_adv, lambda_ot, lambda_da}) {
        if (!std::isfinite(v) || v < 0.0) {
            throw ContractError("loss weights must be finite and nonnegative");
        }
    }
}

Var pixel_loss(const Var& pred, const Var& target) {
    if (!pred.value().same_shape(target.value())) {
        throw DimensionError("pixel_loss: shape mismatch " + pred.value().shape_str() + " vs " +
                             target.value().shape_str());
    }
    Var diff = sub(pred, target);
    return mean(mul(diff, diff));
}

namespace {

// [B,H,W,C] view of whatever the caller hands in.
Var as_image_batch(const Var& x) {
    const Tensor& v = x.value();
    if (v.rank() == 4) return x;
    if (v.rank() == 3) return reshape(x, {1, v.dim(0), v.dim(1), v.dim(2)});
    if (v.rank() == 2) return reshape(x, {1, v.dim(0), v.dim(1), 1});
    throw DimensionError("ssim expects an image, got " + v.shape_str());
}

}  // namespace

Var ssim(const Var& a, const Var& b, size_t window, double c1, double c2) {
    if (!a.value().same_shape(b.value())) {
        throw DimensionError("ssim: shape mismatch " + a.value().shape_str() + " vs " +
                             b.value().shape_str());
    }
    Var ia = clamp(as_image_batch(a), 0.0, 1.0);
    Var ib = clamp(as_image_batch(b), 0.0, 1.0);
    const size_t bn = ia.value().dim(0), h = ia.value().dim(1), w = ia.value().dim(2),
                 c = ia.value().dim(3);
    if (window > h || window > w) {
        throw ContractError("ssim window " + std::to_string(window) + " larger than image " +
                            std::to_string(h) + "x" + std::to_string(w));
    }
    const size_t margin = (window - 1) / 2;
    const size_t vh = h - window + 1, vw = w - window + 1;
    auto valid = [&](const Var& x) {
        return slice(x, {0, margin, margin, 0}, {bn, vh, vw, c});
    };

    Var mu_a = valid(box_filter(ia, window));
    Var mu_b = valid(box_filter(ib, window));
    Var e_aa = valid(box_filter(mul(ia, ia), window));
    Var e_bb = valid(box_filter(mul(ib, ib), window));
    Var e_ab = valid(box_filter(mul(ia, ib), window));

    Var var_a = sub(e_aa, mul(mu_a, mu_a));
    Var var_b = sub(e_bb, mul(mu_b, mu_b));
    Var cov = sub(e_ab, mul(mu_a, mu_b));

    Var num = mul(add_scalar(mul_scalar(mul(mu_a, mu_b), 2.0), c1),
                  add_scalar(mul_scalar(cov, 2.0), c2));
    Var den = mul(add_scalar(add(mul(mu_a, mu_a), mul(mu_b, mu_b)), c1),
                  add_scalar(add(var_a, var_b), c2));
    return mean(div(num, den));
}

Var ssim_loss(const Var& a, const Var& b, size_t window, double c1, double c2) {
    // Local covariances can push the mean SSIM to 0 or below on anticorrelated
    // inputs; the log gets the same floor as the adversarial losses.
    return neg(log(clamp(ssim(a, b, window, c1, c2), 1e-7, 1.0)));
}

namespace {

constexpr double kProbFloor = 1e-7;

Var safe_log(const Var& p) { return log(clamp(p, kProbFloor, 1.0 - kProbFloor)); }

}  // namespace

Var adv_generator_loss(const Var& d_out_on_fake) {
    return neg(mean(safe_log(d_out_on_fake)));
}

Var adv_discriminator_loss(const Var& d_real, const Var& d_fake) {
    Var real_term = neg(mean(safe_log(d_real)));
    Var fake_term = neg(mean(safe_log(add_scalar(neg(d_fake), 1.0))));
    return add(real_term, fake_term);
}

Var da_loss(const Var& dsa_a, const Var& dsa_b) {
    if (!dsa_a.value().same_shape(dsa_b.value())) {
        throw DimensionError("da_loss: shape mismatch " + dsa_a.value().shape_str() + " vs " +
                             dsa_b.value().shape_str());
    }
    Var diff = sub(dsa_a, dsa_b);
    return mean(mul(diff, diff));
}

namespace {

Var weighted_term(Var acc, const Var& part, double weight, const char* name) {
    if (!part.defined()) {
        if (weight != 0.0) {
            throw ContractError(std::string("objective: missing ") + name +
                                " component with nonzero weight");
        }
        return acc;
    }
    if (!std::isfinite(part.value()[0])) {
        throw NumericalError(std::string("objective: ") + name + " component is not finite");
    }
    Var term = mul_scalar(part, weight);
    return acc.defined() ? add(acc, term) : term;
}

}  // namespace

Var generator_objective(const GeneratorLossParts& parts, const LossWeights& w) {
    w.validate();
    Var acc = weighted_term(Var{}, parts.pixel, w.lambda_p, "pixel");
    acc = weighted_term(acc, parts.ssim, w.lambda_ssim, "ssim");
    acc = weighted_term(acc, parts.adversarial, w.lambda_adv, "adversarial");
    acc = weighted_term(acc, parts.ot, w.lambda_ot, "ot");
    if (!acc.defined()) throw ContractError("generator_objective needs at least one component");
    return acc;
}

Var discriminator_objective(const Var& d_real, const Var& d_fake, const Var& da,
                            const LossWeights& w) {
    w.validate();
    Var adv = adv_discriminator_loss(d_real, d_fake);
    if (!std::isfinite(adv.value()[0])) {
        throw NumericalError("objective: adversarial component is not finite");
    }
    return weighted_term(adv, da, w.lambda_da, "domain-adaptation");
}

}  // namespace sinkgan
