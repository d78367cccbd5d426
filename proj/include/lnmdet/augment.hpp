#pragma once

#include "lnmdet/rng.hpp"
#include "lnmdet/tensor.hpp"

namespace lnmdet {

// Patch augmentation settings. Steps run in the fixed order below with
// independently drawn uniform parameters; every range must stay inside the
// configured maxima (the defaults).
struct AugConfig {
    bool mirror = true;                  // 1. horizontal mirror or none
    bool rotate = true;                  // 2. rotation by k * 90 degrees
    double scale_min = 0.9, scale_max = 1.1;          // 3. scaling
    double hue_min = -0.1, hue_max = 0.1;             // 4. hue shift, fraction of the circle
    double sat_min = -0.25, sat_max = 0.25;           // 5. saturation shift
    double bright_min = -0.25, bright_max = 0.25;     // 6. brightness shift
    double contrast_min = -0.25, contrast_max = 0.25; // 7. contrast
    double noise_min = 0.0, noise_max = 0.05;         // 8. additive Gaussian noise sigma
    double blur_min = 0.0, blur_max = 1.0;            // 9. Gaussian blur sigma

    void validate() const;

    // Every step collapsed to a no-op; augment_patch returns the input.
    static AugConfig identity();
};

// Applies the nine augmentation steps in order. patch is [3, H, W] with
// values in [0, 1]; the result has the same shape and is clamped to [0, 1].
Tensor<float> augment_patch(const Tensor<float>& patch, const AugConfig& cfg, Rng& rng);

// The 8 orientations used for test-time augmentation: k = r + 4f applies a
// vertical mirror when f = 1 and then r quarter-turns. Works on [C, H, W]
// tensors; H and W swap for odd rotations.
Tensor<float> dihedral8(const Tensor<float>& t, int k);
Tensor<float> inverse_dihedral8(const Tensor<float>& t, int k);

}  // namespace lnmdet
