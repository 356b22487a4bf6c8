#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cdiff/metrics.hpp"
#include "cdiff/tensor.hpp"

namespace cdiff {

// --- CDT1 tensor container ------------------------------------------------
//
// magic "CDT1" (4 bytes) | dtype u8 (1 = f32 little-endian) | rank u8 |
// rank x u32 little-endian dims | row-major f32 payload.

void write_cdt(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_cdt(const std::filesystem::path& path);

// In-memory encoding used by the checkpoint container.
std::vector<std::uint8_t> encode_cdt(const Tensor& tensor);
Tensor decode_cdt(const std::uint8_t* bytes, std::size_t size);

// --- PGM preview ------------------------------------------------------------

// Binary (P5) 8-bit PGM; values clamped to [0,1] then scaled to 0..255.
// Accepts [H,W], [1,H,W] or [1,1,H,W].
void write_pgm(const std::filesystem::path& path, const Tensor& image);

// --- Datasets ---------------------------------------------------------------

struct DatasetRecord {
    std::string image;               // path relative to the manifest directory
    int label = 0;
    std::optional<std::string> mask; // present iff label == 1
    std::string split;               // train | val | test
};

struct Sample {
    Tensor image; // [1,1,H,W]
    int label = 0;
    BinaryMask mask; // empty for negatives
};

// Rectangular bump benchmark: x0|y ~ N(mu_y, sigma_y^2 I) with
// mu1 = mu0 + delta inside the block. Solvable in closed form, which makes it
// the verification benchmark for the whole pipeline.
struct GaussianBlockSpec {
    std::size_t height = 16;
    std::size_t width = 16;
    std::size_t block_y = 6;
    std::size_t block_x = 6;
    std::size_t block_h = 4;
    std::size_t block_w = 4;
    double mu0_level = 0.2; // background mean level
    double delta = 1.0;     // contrast added inside the block
    double sigma0 = 0.1;
    double sigma1 = 0.1;
    double positive_fraction = 0.5;

    void validate() const;
    Tensor mu0() const;
    Tensor mu1() const;
    BinaryMask block_mask() const;
};

// Textured background plus a random bright ellipse for positives.
struct ShapesSpec {
    std::size_t height = 32;
    std::size_t width = 32;
    double bg_level = 0.25;
    double bg_texture_amp = 0.08; // low-frequency sinusoidal texture
    double bg_noise_sigma = 0.04; // per-pixel noise
    double lesion_offset = 0.7;   // intensity added inside the ellipse
    double min_axis = 3.0;
    double max_axis = 7.0;
    double positive_fraction = 0.5;

    void validate() const;
};

std::vector<Sample> gen_gaussian_blocks(const GaussianBlockSpec& spec, std::size_t n,
                                        std::uint64_t seed);
std::vector<Sample> gen_shapes(const ShapesSpec& spec, std::size_t n, std::uint64_t seed);

// --- Manifest (one JSON object per line) -------------------------------------

void write_manifest(const std::filesystem::path& path, const std::vector<DatasetRecord>& records);
std::vector<DatasetRecord> read_manifest(const std::filesystem::path& path);

// Writes images (CDT1 + PGM preview), positive masks and the manifest under
// `dir`, assigning splits deterministically by the given fractions.
std::vector<DatasetRecord> write_dataset(const std::filesystem::path& dir,
                                         const std::vector<Sample>& samples, double train_frac,
                                         double val_frac, std::uint64_t seed);

BinaryMask read_mask(const std::filesystem::path& path);

} // namespace cdiff
