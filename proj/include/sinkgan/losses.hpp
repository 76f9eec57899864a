#pragma once

#include "sinkgan/autodiff.hpp"

namespace sinkgan {

struct LossWeights {
    double lambda_p = 100.0;
    double lambda_ssim = 1.0;  // the structural weight
    double lambda_adv = 1.0;
    double lambda_ot = 0.01;
    double lambda_da = 0.1;

    void validate() const;
};

/// Mean squared error over all elements.
Var pixel_loss(const Var& pred, const Var& target);

/// Mean local SSIM over valid sliding windows (uniform window). Inputs are
/// clamped to [0,1] first. Window must fit inside the image.
Var ssim(const Var& a, const Var& b, size_t window = 7, double c1 = 1e-4, double c2 = 9e-4);
/// -log(ssim), with the mean SSIM floored at 1e-7 before the log (local
/// covariance terms can be negative on anticorrelated inputs). Zero at
/// identical images.
Var ssim_loss(const Var& a, const Var& b, size_t window = 7, double c1 = 1e-4, double c2 = 9e-4);

/// Saturating original-GAN losses; discriminator outputs are clamped to
/// [1e-7, 1-1e-7] before the logs.
Var adv_generator_loss(const Var& d_out_on_fake);
Var adv_discriminator_loss(const Var& d_real, const Var& d_fake);

/// Mean squared difference of two spatial-attention maps.
Var da_loss(const Var& dsa_a, const Var& dsa_b);

/// Weighted generator composite. Undefined components are allowed only under
/// a zero weight; a non-finite component raises NumericalError naming it.
struct GeneratorLossParts {
    Var pixel, ssim, adversarial, ot;
};
Var generator_objective(const GeneratorLossParts& parts, const LossWeights& w);

/// Discriminator composite: adversarial part plus lambda_da * da.
Var discriminator_objective(const Var& d_real, const Var& d_fake, const Var& da,
                            const LossWeights& w);

}  // namespace sinkgan
