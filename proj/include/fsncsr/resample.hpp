#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fsncsr/image.hpp"
#include "fsncsr/tensor.hpp"

namespace fsncsr {

// Separable bicubic resampling with the Keys kernel (a = -0.5). Downscaling
// stretches the kernel support by the scale ratio and renormalizes the
// weights (anti-aliased). Source coordinates follow
// src = (dst + 0.5) * scale - 0.5 with clamp-to-edge indexing. Values are
// never clamped here.

// Per-output-index source taps along one axis.
struct AxisTaps {
    std::vector<std::int32_t> index;    // flattened (out * taps_per_out)
    std::vector<double> weight;
    std::int64_t taps_per_out = 0;
    std::int64_t out_size = 0;
};

double keys_cubic(double t);  // the a = -0.5 kernel
AxisTaps bicubic_axis_taps(std::int64_t in_size, std::int64_t out_size);

// (H,W,C) -> (out_h,out_w,C)
Tensor resize_bicubic(const Tensor& x, std::int64_t out_h, std::int64_t out_w);
// adjoint of the same linear map: scatters (out_h,out_w,C) back to (in_h,in_w,C)
Tensor resize_bicubic_adjoint(const Tensor& gout, std::int64_t in_h, std::int64_t in_w);

// Image-level frequency-separation operators.
Image bicubic_resize(const Image& img, std::int64_t out_h, std::int64_t out_w);
Image downsample(const Image& img, int s);  // (x)_{s down}; clamps HR-domain output
Image upsample(const Image& img, int s);    // (y)_{s up}; never clamps
Image lowpass(const Image& x, int s);       // up(down(x))
Image highpass(const Image& x, int s);      // x - lowpass(x), high-frequency domain

}  // namespace fsncsr
