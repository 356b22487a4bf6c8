#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace cdiff {

// Flat key=value run configuration. Unknown keys are rejected; missing keys
// take the defaults below. dump() emits every key in a fixed order so run
// outputs are reproducible byte for byte.
struct RunConfig {
    // schedule
    std::size_t timesteps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;

    // dataset
    std::string dataset = "gaussian_blocks"; // gaussian_blocks | shapes
    std::size_t n_images = 200;
    std::size_t image_size = 16;
    double pos_fraction = 0.5;
    double train_frac = 0.8;
    double val_frac = 0.1;
    // gaussian blocks
    std::size_t block_x = 6;
    std::size_t block_y = 6;
    std::size_t block_w = 4;
    std::size_t block_h = 4;
    double mu0 = 0.2;
    double delta = 1.0;
    double sigma0 = 0.1;
    double sigma1 = 0.1;
    // shapes
    double bg_level = 0.25;
    double bg_texture_amp = 0.08;
    double bg_noise_sigma = 0.04;
    double lesion_offset = 0.7;
    double min_axis = 3.0;
    double max_axis = 7.0;

    // model
    std::size_t channels = 32;
    std::size_t embed_dim = 64;
    std::size_t time_dim = 64;
    bool analytic = false;
    double prior1 = 0.5;

    // training
    double lr = 1e-3;
    double weight_decay = 0.0;
    std::size_t batch = 8;
    std::size_t iters = 3000;
    std::size_t checkpoint_interval = 0;
    std::size_t log_interval = 50;
    double cls_lr = 1e-3;
    std::size_t cls_iters = 2000;
    std::size_t cls_batch = 8;
    std::size_t cls_noise_max = 0; // 0 = use q_noise_level

    // saliency
    std::size_t q_noise_level = 400;
    std::size_t r_steps = 10;
    double tau = 0.95;
    double guidance_scale = 10.0;
    std::string normalization = "abs_minmax";

    // eval
    std::size_t otsu_bins = 256;
    std::string otsu_mode = "per_image"; // per_image | dataset_average
    std::string eval_split = "test";

    // paths & misc
    std::string data_dir;
    std::string model_path;
    std::string classifier_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    std::size_t workers = 1;

    static RunConfig parse_file(const std::filesystem::path& path);
    static RunConfig parse_string(const std::string& text);

    // Applies one key=value pair; throws config_error naming unknown keys or
    // malformed values.
    void apply(const std::string& key, const std::string& value);

    // Canonical key=value dump of every field.
    std::string dump() const;
};

} // namespace cdiff
