#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "fsncsr/image.hpp"

// Evaluation harness: diversity score over non-overlapping patches, LR-PSNR,
// and quantized high-frequency sparsity. The patch distance is a plugin; the
// default is per-patch mean squared error (a perceptual distance can be
// swapped in through the same interface).

namespace fsncsr::metrics {

// symmetric non-negative distance over two equal-length patch buffers
using PatchDistance = std::function<double(const double* a, const double* b, std::size_t n)>;

PatchDistance make_distance(const std::string& name);  // "mse" | "mae"

struct DiversityConfig {
    int num_samples = 10;
    int patch = 64;
    std::string distance = "mse";
};

// matrix of d(gt_k, sample_i_k) over the non-overlapping patch grid; edge
// remainders are discarded
std::vector<std::vector<double>> patch_distances(const Image& gt, const std::vector<Image>& samples,
                                                 const DiversityConfig& cfg);

// min over samples of the per-sample mean patch distance
double global_min_distance(const Image& gt, const std::vector<Image>& samples,
                           const DiversityConfig& cfg);

struct DiversityResult {
    double score = 0.0;  // in [0,1]; multiply by 100 for display
    double dbar = 0.0;
    bool degenerate = false;  // dbar == 0 (a sample reproduced GT exactly)
};

// score from a precomputed distance matrix dist[sample][patch]
DiversityResult diversity_from_distances(const std::vector<std::vector<double>>& dist);

DiversityResult diversity_score(const Image& gt, const std::vector<Image>& samples,
                                const DiversityConfig& cfg);

// PSNR (peak 1.0) between the downsampled SR output and the LR input;
// +infinity on an exact match
double lr_psnr(const Image& sr, const Image& lr, int scale);

// fraction of quantized-to-zero pixels of a high-frequency image
double sparsity(const Image& hf);
// 1 - nnz/nnz_gt; degenerate nnz_gt == 0 maps to 1 (if nnz == 0) or -infinity
double relative_sparsity(const Image& hf, const Image& hf_gt);

struct ManifestEntry {
    std::string gt;
    std::vector<std::string> samples;
};

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);

struct ImageMetrics {
    std::string image;
    double diversity_x100 = 0.0;
    double dbar = 0.0;
    double lr_psnr_db = 0.0;
    double sparsity = 0.0;
    double rs = 0.0;
    double gt_sparsity = 0.0;
    bool degenerate_diversity = false;
};

struct MetricsReport {
    std::vector<ImageMetrics> rows;  // ordered by image name
    ImageMetrics aggregate;          // unweighted means, image = "MEAN"
    DiversityConfig config;
    int scale = 4;
};

// Full harness: per image, diversity over the sample set, LR-PSNR against
// the GT's own bicubic LR, and sparsity of (sample - lowpass(gt)) against
// highpass(gt). Paths in the manifest resolve relative to gt_dir when not
// absolute (samples also against the manifest's directory).
MetricsReport evaluate(const std::filesystem::path& gt_dir,
                       const std::vector<ManifestEntry>& entries, int scale,
                       const DiversityConfig& cfg,
                       const std::filesystem::path& sample_base = {});

// mean GT high-frequency sparsity over a directory of PNGs (images cropped
// to scale-divisible dims); used by the DIV2K reproduction check
double mean_gt_sparsity(const std::filesystem::path& dir, int scale, std::size_t max_images = 0);

void write_report_tsv(const MetricsReport& report, const std::filesystem::path& path);
void write_report_json(const MetricsReport& report, const std::filesystem::path& path);

}  // namespace fsncsr::metrics
