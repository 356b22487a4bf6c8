#include "cdiff/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "cdiff/data_io.hpp"
#include "cdiff/errors.hpp"

namespace cdiff {

void write_checkpoint(const std::filesystem::path& path, const std::string& kind,
                      const nlohmann::json& meta,
                      const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
    nlohmann::json index = nlohmann::json::object();
    std::vector<std::uint8_t> payload;
    for (const auto& [name, tensor] : tensors) {
        const std::vector<std::uint8_t> rec = encode_cdt(*tensor);
        index[name] = {{"offset", payload.size()},
                       {"size", rec.size()},
                       {"shape", tensor->shape()}};
        payload.insert(payload.end(), rec.begin(), rec.end());
    }
    nlohmann::json header = {{"format", "cdt1-index"},
                             {"kind", kind},
                             {"meta", meta},
                             {"records", index}};
    const std::string header_str = header.dump();
    if (header_str.size() > 0xFFFFFFFFull)
        throw io_error(io_error::code::bad_header, "checkpoint: header too large");

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw io_error(io_error::code::open_failed, "checkpoint: cannot open " + path.string());
    const std::uint32_t len = static_cast<std::uint32_t>(header_str.size());
    const std::uint8_t len_bytes[4] = {
        static_cast<std::uint8_t>(len), static_cast<std::uint8_t>(len >> 8),
        static_cast<std::uint8_t>(len >> 16), static_cast<std::uint8_t>(len >> 24)};
    out.write(reinterpret_cast<const char*>(len_bytes), 4);
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    if (!out)
        throw io_error(io_error::code::write_failed, "checkpoint: write failed " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw io_error(io_error::code::open_failed, "checkpoint: cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (bytes.size() < 4) throw io_error(io_error::code::truncated, "checkpoint: truncated");
    const std::uint32_t len = static_cast<std::uint32_t>(bytes[0]) |
                              static_cast<std::uint32_t>(bytes[1]) << 8 |
                              static_cast<std::uint32_t>(bytes[2]) << 16 |
                              static_cast<std::uint32_t>(bytes[3]) << 24;
    if (bytes.size() < 4 + static_cast<std::size_t>(len))
        throw io_error(io_error::code::truncated, "checkpoint: header truncated");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 4, bytes.begin() + 4 + len);
    } catch (const nlohmann::json::exception& e) {
        throw io_error(io_error::code::bad_header,
                       std::string("checkpoint: bad header json: ") + e.what());
    }
    if (header.value("format", "") != "cdt1-index")
        throw io_error(io_error::code::bad_magic, "checkpoint: not a cdt1-index file");

    Checkpoint ckpt;
    ckpt.kind = header.value("kind", "");
    ckpt.meta = header.value("meta", nlohmann::json::object());
    const std::uint8_t* payload = bytes.data() + 4 + len;
    const std::size_t payload_size = bytes.size() - 4 - len;
    for (const auto& [name, rec] : header.at("records").items()) {
        const std::size_t offset = rec.at("offset").get<std::size_t>();
        const std::size_t size = rec.at("size").get<std::size_t>();
        if (offset + size > payload_size)
            throw io_error(io_error::code::truncated, "checkpoint: record outside payload");
        ckpt.tensors.emplace(name, decode_cdt(payload + offset, size));
    }
    return ckpt;
}

namespace {

void restore_params(std::vector<std::pair<std::string, Tensor*>> params, const Checkpoint& ckpt,
                    const std::string& what) {
    for (auto& [name, tensor] : params) {
        auto it = ckpt.tensors.find(name);
        if (it == ckpt.tensors.end())
            throw io_error(io_error::code::bad_header, what + ": missing record " + name);
        if (it->second.shape() != tensor->shape())
            throw io_error(io_error::code::bad_header, what + ": shape mismatch for " + name);
        std::copy(it->second.data(), it->second.data() + it->second.numel(), tensor->data());
    }
}

} // namespace

void save_unet(const std::filesystem::path& path, const TinyCondUNet& model) {
    const TinyCondUNetConfig& cfg = model.config();
    nlohmann::json meta = {{"channels", cfg.channels},
                           {"embed_dim", cfg.embed_dim},
                           {"time_dim", cfg.time_dim},
                           {"image_channels", cfg.image_channels}};
    write_checkpoint(path, "tiny_cond_unet", meta, model.named_params());
}

std::unique_ptr<TinyCondUNet> load_unet(const std::filesystem::path& path) {
    const Checkpoint ckpt = read_checkpoint(path);
    if (ckpt.kind != "tiny_cond_unet")
        throw io_error(io_error::code::bad_header,
                       "expected tiny_cond_unet checkpoint, got " + ckpt.kind);
    TinyCondUNetConfig cfg;
    cfg.channels = ckpt.meta.at("channels").get<std::size_t>();
    cfg.embed_dim = ckpt.meta.at("embed_dim").get<std::size_t>();
    cfg.time_dim = ckpt.meta.at("time_dim").get<std::size_t>();
    cfg.image_channels = ckpt.meta.at("image_channels").get<std::size_t>();
    auto model = std::make_unique<TinyCondUNet>(cfg, 0);
    restore_params(model->named_params(), ckpt, "unet checkpoint");
    return model;
}

void save_conv_classifier(const std::filesystem::path& path, const ConvClassifier& classifier) {
    const ConvClassifierConfig& cfg = classifier.config();
    nlohmann::json meta = {{"channels", cfg.channels},
                           {"time_dim", cfg.time_dim},
                           {"image_channels", cfg.image_channels}};
    write_checkpoint(path, "conv_classifier", meta, classifier.named_params());
}

std::unique_ptr<ConvClassifier> load_conv_classifier(const std::filesystem::path& path) {
    const Checkpoint ckpt = read_checkpoint(path);
    if (ckpt.kind != "conv_classifier")
        throw io_error(io_error::code::bad_header,
                       "expected conv_classifier checkpoint, got " + ckpt.kind);
    ConvClassifierConfig cfg;
    cfg.channels = ckpt.meta.at("channels").get<std::size_t>();
    cfg.time_dim = ckpt.meta.at("time_dim").get<std::size_t>();
    cfg.image_channels = ckpt.meta.at("image_channels").get<std::size_t>();
    auto classifier = std::make_unique<ConvClassifier>(cfg, 0);
    restore_params(classifier->named_params(), ckpt, "classifier checkpoint");
    return classifier;
}

void save_analytic_model(const std::filesystem::path& path, const Tensor& mu0, const Tensor& mu1,
                         double sigma0, double sigma1, double prior1) {
    nlohmann::json meta = {{"sigma0", sigma0}, {"sigma1", sigma1}, {"prior1", prior1}};
    write_checkpoint(path, "analytic_gaussian", meta, {{"mu0", &mu0}, {"mu1", &mu1}});
}

LoadedEpsilonModel load_epsilon_model(const std::filesystem::path& path,
                                      const NoiseSchedule& sched) {
    const Checkpoint ckpt = read_checkpoint(path);
    if (ckpt.kind == "tiny_cond_unet") {
        auto model = load_unet(path);
        ConditionEmbedding emb = model->condition_embedding();
        return {std::move(model), std::move(emb)};
    }
    if (ckpt.kind == "analytic_gaussian") {
        auto model = std::make_unique<AnalyticGaussianDenoiser>(
            ckpt.tensors.at("mu0"), ckpt.tensors.at("mu1"),
            ckpt.meta.at("sigma0").get<double>(), ckpt.meta.at("sigma1").get<double>(), sched);
        return {std::move(model), ConditionEmbedding::analytic_pair()};
    }
    throw io_error(io_error::code::bad_header, "unknown model kind: " + ckpt.kind);
}

std::unique_ptr<NoisyClassifier> load_noisy_classifier(const std::filesystem::path& path,
                                                       const NoiseSchedule& sched) {
    const Checkpoint ckpt = read_checkpoint(path);
    if (ckpt.kind == "conv_classifier") return load_conv_classifier(path);
    if (ckpt.kind == "analytic_gaussian") {
        return std::make_unique<AnalyticBayesClassifier>(
            ckpt.tensors.at("mu0"), ckpt.tensors.at("mu1"),
            ckpt.meta.at("sigma0").get<double>(), ckpt.meta.at("sigma1").get<double>(),
            ckpt.meta.value("prior1", 0.5), sched);
    }
    throw io_error(io_error::code::bad_header, "unknown classifier kind: " + ckpt.kind);
}

} // namespace cdiff
