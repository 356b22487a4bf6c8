#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cdiff/classifier.hpp"
#include "cdiff/denoiser.hpp"
#include "cdiff/schedule.hpp"
#include "cdiff/tensor.hpp"
#include "cdiff/unet.hpp"

namespace cdiff {

// Single-file parameter container: u32 little-endian header length, JSON
// header (kind, metadata, name -> {offset, size, shape} index), then the
// concatenated CDT1 records.
struct Checkpoint {
    std::string kind;
    nlohmann::json meta;
    std::map<std::string, Tensor> tensors;
};

void write_checkpoint(const std::filesystem::path& path, const std::string& kind,
                      const nlohmann::json& meta,
                      const std::vector<std::pair<std::string, const Tensor*>>& tensors);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Model-level wrappers. Analytic models live in the same container with the
// class means stored as records and sigmas/prior in the metadata.
void save_unet(const std::filesystem::path& path, const TinyCondUNet& model);
std::unique_ptr<TinyCondUNet> load_unet(const std::filesystem::path& path);

void save_conv_classifier(const std::filesystem::path& path, const ConvClassifier& classifier);
std::unique_ptr<ConvClassifier> load_conv_classifier(const std::filesystem::path& path);

void save_analytic_model(const std::filesystem::path& path, const Tensor& mu0, const Tensor& mu1,
                         double sigma0, double sigma1, double prior1);

struct LoadedEpsilonModel {
    std::unique_ptr<EpsilonModel> model;
    ConditionEmbedding embedding;
};

// Dispatches on the container kind: "tiny_cond_unet" or "analytic_gaussian".
LoadedEpsilonModel load_epsilon_model(const std::filesystem::path& path,
                                      const NoiseSchedule& sched);

// Dispatches on the container kind: "conv_classifier" or "analytic_gaussian".
std::unique_ptr<NoisyClassifier> load_noisy_classifier(const std::filesystem::path& path,
                                                       const NoiseSchedule& sched);

} // namespace cdiff
