#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cdiff/commands.hpp"
#include "cdiff/config.hpp"
#include "cdiff/errors.hpp"
#include "cdiff/kernels.hpp"

namespace fs = std::filesystem;

namespace {

cdiff::RunConfig load_config(const std::string& path, const std::optional<std::uint64_t>& seed) {
    if (!fs::exists(path)) {
        throw cdiff::config_error("config file not found: " + path);
    }
    cdiff::RunConfig cfg = cdiff::RunConfig::parse_file(path);
    if (seed) cfg.seed = *seed;
    return cfg;
}

fs::path pick_out_dir(const std::string& out_flag, const char* verb, std::uint64_t seed) {
    if (!out_flag.empty()) return fs::path(out_flag);
    return cdiff::default_run_dir(verb, seed);
}

std::vector<double> parse_values_csv(const std::string& csv) {
    std::vector<double> values;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            values.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw cdiff::config_error("--values: bad number '" + item + "'");
        }
    }
    return values;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"conditional diffusion saliency toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_flag;
    std::string method = "cdm";
    std::string axis;
    std::string values_csv;
    std::string manifest_path;
    std::vector<std::string> pred_dirs;
    std::optional<std::uint64_t> seed_flag;
    std::string kernels_flag;

    app.add_option("--kernels", kernels_flag, "force kernel backend (scalar|avx2)");

    auto add_common = [&](CLI::App* cmd, bool config_required = true) {
        auto* opt = cmd->add_option("--config", config_path, "run configuration file");
        if (config_required) opt->required();
        cmd->add_option("--out", out_flag, "output directory");
        cmd->add_option("--seed", seed_flag, "override the config seed");
    };

    CLI::App* generate = app.add_subcommand("generate", "generate a synthetic dataset");
    add_common(generate);
    CLI::App* train = app.add_subcommand("train", "train (or materialize) the noise model");
    add_common(train);
    CLI::App* classify_train =
        app.add_subcommand("classify-train", "train (or materialize) the classifier");
    add_common(classify_train);
    CLI::App* saliency = app.add_subcommand("saliency", "compute saliency maps");
    add_common(saliency);
    saliency->add_option("--method", method, "cdm | cg-cdm | cg-diff");
    CLI::App* eval = app.add_subcommand("eval", "evaluate saliency maps against masks");
    add_common(eval);
    eval->add_option("--pred", pred_dirs, "prediction run directories")->required();
    eval->add_option("--manifest", manifest_path, "dataset manifest (defaults to data_dir)");
    CLI::App* ablate = app.add_subcommand("ablate", "sweep one hyperparameter");
    add_common(ablate);
    ablate->add_option("--axis", axis, "Q | R | tau | s")->required();
    ablate->add_option("--values", values_csv, "comma-separated sweep values")->required();
    std::string ablate_method;
    ablate->add_option("--method", ablate_method, "saliency method for the sweep");

    CLI11_PARSE(app, argc, argv);

    try {
        if (!kernels_flag.empty()) {
            if (kernels_flag == "scalar")
                cdiff::kernels::force_backend(cdiff::kernels::Backend::scalar);
            else if (kernels_flag == "avx2")
                cdiff::kernels::force_backend(cdiff::kernels::Backend::avx2);
            else
                throw cdiff::config_error("--kernels must be scalar or avx2");
        }

        if (generate->parsed()) {
            const cdiff::RunConfig cfg = load_config(config_path, seed_flag);
            return cdiff::cmd_generate(cfg, pick_out_dir(out_flag, "generate", cfg.seed),
                                       std::cout);
        }
        if (train->parsed()) {
            const cdiff::RunConfig cfg = load_config(config_path, seed_flag);
            return cdiff::cmd_train(cfg, pick_out_dir(out_flag, "train", cfg.seed), std::cout);
        }
        if (classify_train->parsed()) {
            const cdiff::RunConfig cfg = load_config(config_path, seed_flag);
            return cdiff::cmd_classify_train(
                cfg, pick_out_dir(out_flag, "classify-train", cfg.seed), std::cout);
        }
        if (saliency->parsed()) {
            const cdiff::RunConfig cfg = load_config(config_path, seed_flag);
            return cdiff::cmd_saliency(cfg, method,
                                       pick_out_dir(out_flag, "saliency", cfg.seed), std::cout);
        }
        if (eval->parsed()) {
            const cdiff::RunConfig cfg = load_config(config_path, seed_flag);
            std::vector<fs::path> dirs(pred_dirs.begin(), pred_dirs.end());
            return cdiff::cmd_eval(cfg, dirs, fs::path(manifest_path),
                                   pick_out_dir(out_flag, "eval", cfg.seed), std::cout);
        }
        if (ablate->parsed()) {
            const cdiff::RunConfig cfg = load_config(config_path, seed_flag);
            std::string m = ablate_method;
            if (m.empty()) m = cfg.classifier_path.empty() ? "cdm" : "cg-cdm";
            return cdiff::cmd_ablate(cfg, axis, parse_values_csv(values_csv), m,
                                     pick_out_dir(out_flag, "ablate", cfg.seed), std::cout);
        }
    } catch (const cdiff::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
