#include "fsncsr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "fsncsr/resample.hpp"

namespace fsncsr {

Image hflip(const Image& img) {
    Image out(img.height, img.width, img.channels, img.domain);
    for (std::int64_t i = 0; i < img.height; ++i) {
        for (std::int64_t j = 0; j < img.width; ++j) {
            for (std::int64_t c = 0; c < img.channels; ++c) {
                out.at(i, j, c) = img.at(i, img.width - 1 - j, c);
            }
        }
    }
    return out;
}

Image rot90_ccw(const Image& img, int quarter_turns) {
    int k = ((quarter_turns % 4) + 4) % 4;
    Image out = img;
    while (k-- > 0) {
        Image next(out.width, out.height, out.channels, out.domain);
        for (std::int64_t i = 0; i < next.height; ++i) {
            for (std::int64_t j = 0; j < next.width; ++j) {
                for (std::int64_t c = 0; c < next.channels; ++c) {
                    next.at(i, j, c) = out.at(j, out.width - 1 - i, c);
                }
            }
        }
        out = std::move(next);
    }
    return out;
}

Image synthesize_image(const SyntheticSpec& spec, int channels, std::uint64_t seed,
                       std::uint64_t index) {
    if (spec.size < 4 || spec.size % 2 != 0) {
        throw std::invalid_argument("synthetic.size must be an even integer >= 4");
    }
    Rng rng = Rng::stream(seed, {0x5A17D5E7ull, index});
    const std::int64_t n = spec.size;
    Image img(n, n, channels, PixelDomain::hr);

    for (int comp = 0; comp < spec.components; ++comp) {
        // half the components stay below the x4 LR Nyquist band, half above
        const bool low_band = comp % 2 == 0;
        const double fmin = low_band ? 0.015 : 0.10;
        const double fmax = low_band ? 0.08 : 0.45;
        const double fx = rng.uniform(fmin, fmax) * (rng.coin() ? 1.0 : -1.0);
        const double fy = rng.uniform(fmin, fmax) * (rng.coin() ? 1.0 : -1.0);
        const double amp = rng.uniform(0.05, 0.30);
        const double phase = rng.uniform(0.0, 2.0 * M_PI);
        std::vector<double> cw(static_cast<std::size_t>(channels));
        for (int c = 0; c < channels; ++c) cw[static_cast<std::size_t>(c)] = rng.uniform(0.25, 1.0);
        for (std::int64_t i = 0; i < n; ++i) {
            for (std::int64_t j = 0; j < n; ++j) {
                const double s = amp * std::sin(2.0 * M_PI *
                                                    (fx * static_cast<double>(j) +
                                                     fy * static_cast<double>(i)) +
                                                phase);
                for (int c = 0; c < channels; ++c) {
                    img.at(i, j, c) += s * cw[static_cast<std::size_t>(c)];
                }
            }
        }
    }

    if (spec.noise_amp > 0.0) {
        Image noise(n, n, channels, PixelDomain::high_freq);
        for (auto& p : noise.pixels) p = rng.normal(0.0, spec.noise_amp);
        const Image blurred = lowpass(Image::from_tensor(noise.to_tensor(), PixelDomain::high_freq), 2);
        for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] += blurred.pixels[i];
    }

    // affine-normalize into [0,1]
    double lo = img.pixels[0], hi = img.pixels[0];
    for (double p : img.pixels) {
        lo = std::min(lo, p);
        hi = std::max(hi, p);
    }
    const double span = hi - lo;
    if (span > 1e-12) {
        for (auto& p : img.pixels) p = (p - lo) / span;
    } else {
        for (auto& p : img.pixels) p = 0.5;
    }
    return img;
}

Dataset Dataset::load(const DatasetSpec& spec, std::uint64_t seed) {
    Dataset ds;
    ds.spec_ = spec;
    if (!spec.hr_dir.empty()) {
        std::vector<std::filesystem::path> paths;
        for (const auto& entry : std::filesystem::directory_iterator(spec.hr_dir)) {
            if (entry.is_regular_file() && entry.path().extension() == ".png") {
                paths.push_back(entry.path());
            }
        }
        std::sort(paths.begin(), paths.end());
        for (const auto& p : paths) {
            Image img = load_png(p);
            if (img.height >= spec.crop && img.width >= spec.crop) {
                ds.images_.push_back(std::move(img));
            }
        }
        if (ds.images_.empty()) {
            throw std::runtime_error("dataset: no PNG image of size >= crop found in " + spec.hr_dir);
        }
    } else if (spec.synthetic) {
        const SyntheticSpec& syn = *spec.synthetic;
        if (syn.size < spec.crop) {
            throw std::runtime_error("dataset: synthetic.size smaller than crop");
        }
        for (int i = 0; i < syn.count; ++i) {
            ds.images_.push_back(
                synthesize_image(syn, spec.img_channels, seed, static_cast<std::uint64_t>(i)));
        }
    } else {
        throw std::runtime_error("dataset: neither hr_dir nor a synthetic spec given");
    }
    return ds;
}

Image Dataset::sample_crop(Rng& rng) const {
    const Image& src = images_[rng.below(images_.size())];
    const std::int64_t crop = spec_.crop;
    const std::int64_t ci = static_cast<std::int64_t>(rng.below(
        static_cast<std::uint64_t>(src.height - crop + 1)));
    const std::int64_t cj = static_cast<std::int64_t>(rng.below(
        static_cast<std::uint64_t>(src.width - crop + 1)));
    Image out(crop, crop, src.channels, PixelDomain::hr);
    for (std::int64_t i = 0; i < crop; ++i) {
        for (std::int64_t j = 0; j < crop; ++j) {
            for (std::int64_t c = 0; c < src.channels; ++c) {
                out.at(i, j, c) = src.at(ci + i, cj + j, c);
            }
        }
    }
    if (spec_.flip && rng.below(2) == 1) out = hflip(out);
    if (spec_.rot90) {
        const int k = static_cast<int>(rng.below(4));
        if (k > 0) out = rot90_ccw(out, k);
    }
    return out;
}

std::vector<Image> sample_batch(const Dataset& data, int batch, Rng& rng) {
    if (batch < 1) throw std::invalid_argument("sample_batch: batch must be >= 1");
    std::vector<Image> out;
    out.reserve(static_cast<std::size_t>(batch));
    for (int i = 0; i < batch; ++i) out.push_back(data.sample_crop(rng));
    return out;
}

}  // namespace fsncsr
