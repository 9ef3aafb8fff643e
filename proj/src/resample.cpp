#include "fsncsr/resample.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fsncsr/kernels.hpp"

namespace fsncsr {

double keys_cubic(double t) {
    constexpr double a = -0.5;
    const double x = std::fabs(t);
    if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    return 0.0;
}

AxisTaps bicubic_axis_taps(std::int64_t in_size, std::int64_t out_size) {
    if (in_size < 1 || out_size < 1) {
        throw std::invalid_argument("bicubic_axis_taps: sizes must be positive");
    }
    const double ratio = static_cast<double>(in_size) / static_cast<double>(out_size);
    // downscaling stretches the kernel by the ratio (anti-aliasing)
    const double kscale = std::max(ratio, 1.0);
    const double radius = 2.0 * kscale;
    const auto taps = static_cast<std::int64_t>(std::ceil(2.0 * radius)) + 2;

    AxisTaps t;
    t.out_size = out_size;
    t.taps_per_out = taps;
    t.index.resize(static_cast<std::size_t>(out_size * taps));
    t.weight.resize(static_cast<std::size_t>(out_size * taps));
    for (std::int64_t o = 0; o < out_size; ++o) {
        const double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
        const auto first = static_cast<std::int64_t>(std::floor(src - radius)) + 1;
        double wsum = 0.0;
        for (std::int64_t k = 0; k < taps; ++k) {
            const std::int64_t si = first + k;
            const double w = keys_cubic((src - static_cast<double>(si)) / kscale);
            t.index[static_cast<std::size_t>(o * taps + k)] =
                static_cast<std::int32_t>(std::clamp<std::int64_t>(si, 0, in_size - 1));
            t.weight[static_cast<std::size_t>(o * taps + k)] = w;
            wsum += w;
        }
        for (std::int64_t k = 0; k < taps; ++k) {
            t.weight[static_cast<std::size_t>(o * taps + k)] /= wsum;
        }
    }
    return t;
}

Tensor resize_bicubic(const Tensor& x, std::int64_t out_h, std::int64_t out_w) {
    if (x.rank() != 3) throw std::invalid_argument("resize_bicubic: rank-3 (H,W,C) input required");
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize_bicubic: zero-sized output");
    const std::int64_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
    const AxisTaps rows = bicubic_axis_taps(h, out_h);
    const AxisTaps cols = bicubic_axis_taps(w, out_w);
    const auto& kn = kern::active();

    // vertical pass
    Tensor tmp({out_h, w, c});
    const std::size_t row_len = static_cast<std::size_t>(w * c);
    for (std::int64_t i = 0; i < out_h; ++i) {
        double* dst = tmp.data() + i * w * c;
        for (std::int64_t k = 0; k < rows.taps_per_out; ++k) {
            const auto t = static_cast<std::size_t>(i * rows.taps_per_out + k);
            kn.axpy(rows.weight[t], x.data() + static_cast<std::int64_t>(rows.index[t]) * w * c,
                    dst, row_len);
        }
    }
    // horizontal pass
    Tensor out({out_h, out_w, c});
    const auto cl = static_cast<std::size_t>(c);
    for (std::int64_t i = 0; i < out_h; ++i) {
        const double* src_row = tmp.data() + i * w * c;
        double* dst_row = out.data() + i * out_w * c;
        for (std::int64_t j = 0; j < out_w; ++j) {
            double* dst = dst_row + j * c;
            for (std::int64_t k = 0; k < cols.taps_per_out; ++k) {
                const auto t = static_cast<std::size_t>(j * cols.taps_per_out + k);
                kn.axpy(cols.weight[t], src_row + static_cast<std::int64_t>(cols.index[t]) * c,
                        dst, cl);
            }
        }
    }
    return out;
}

Tensor resize_bicubic_adjoint(const Tensor& gout, std::int64_t in_h, std::int64_t in_w) {
    if (gout.rank() != 3) throw std::invalid_argument("resize_bicubic_adjoint: rank-3 input required");
    const std::int64_t oh = gout.dim(0), ow = gout.dim(1), c = gout.dim(2);
    const AxisTaps rows = bicubic_axis_taps(in_h, oh);
    const AxisTaps cols = bicubic_axis_taps(in_w, ow);
    const auto& kn = kern::active();
    const auto cl = static_cast<std::size_t>(c);

    // adjoint of the horizontal pass
    Tensor tmp({oh, in_w, c});
    for (std::int64_t i = 0; i < oh; ++i) {
        const double* src_row = gout.data() + i * ow * c;
        double* dst_row = tmp.data() + i * in_w * c;
        for (std::int64_t j = 0; j < ow; ++j) {
            const double* src = src_row + j * c;
            for (std::int64_t k = 0; k < cols.taps_per_out; ++k) {
                const auto t = static_cast<std::size_t>(j * cols.taps_per_out + k);
                kn.axpy(cols.weight[t], src, dst_row + static_cast<std::int64_t>(cols.index[t]) * c,
                        cl);
            }
        }
    }
    // adjoint of the vertical pass
    Tensor out({in_h, in_w, c});
    const std::size_t row_len = static_cast<std::size_t>(in_w * c);
    for (std::int64_t i = 0; i < oh; ++i) {
        const double* src = tmp.data() + i * in_w * c;
        for (std::int64_t k = 0; k < rows.taps_per_out; ++k) {
            const auto t = static_cast<std::size_t>(i * rows.taps_per_out + k);
            kn.axpy(rows.weight[t], src, out.data() + static_cast<std::int64_t>(rows.index[t]) * in_w * c,
                    row_len);
        }
    }
    return out;
}

Image bicubic_resize(const Image& img, std::int64_t out_h, std::int64_t out_w) {
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("bicubic_resize: zero-sized output");
    Tensor t = resize_bicubic(img.to_tensor(), out_h, out_w);
    return Image::from_tensor(t, img.domain);
}

namespace {

void check_scale(int s) {
    if (s < 2) throw std::invalid_argument("scale factor must be an integer >= 2");
}

}  // namespace

Image downsample(const Image& img, int s) {
    check_scale(s);
    if (img.height % s != 0 || img.width % s != 0) {
        throw std::invalid_argument("downsample: image dims not divisible by scale factor");
    }
    Image out = bicubic_resize(img, img.height / s, img.width / s);
    if (img.domain == PixelDomain::hr) out.clamp01();
    return out;
}

Image upsample(const Image& img, int s) {
    check_scale(s);
    return bicubic_resize(img, img.height * s, img.width * s);
}

Image lowpass(const Image& x, int s) {
    if (x.domain != PixelDomain::hr) {
        throw std::invalid_argument("lowpass: HR-domain image required");
    }
    return upsample(downsample(x, s), s);
}

Image highpass(const Image& x, int s) {
    Image low = lowpass(x, s);
    Image out(x.height, x.width, x.channels, PixelDomain::high_freq);
    kern::active().sub(x.pixels.data(), low.pixels.data(), out.pixels.data(),
                       static_cast<std::size_t>(x.numel()));
    return out;
}

}  // namespace fsncsr
