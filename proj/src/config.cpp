#include "cdiff/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "cdiff/errors.hpp"

namespace cdiff {

namespace {

std::string trim(const std::string& s) {
    const std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw config_error("config: bad numeric value for key '" + key + "': " + value);
    }
}

std::size_t parse_size(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(value, &used);
        if (used != value.size() || v < 0) throw std::invalid_argument("bad");
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw config_error("config: bad integer value for key '" + key + "': " + value);
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument("bad");
        return v;
    } catch (const std::exception&) {
        throw config_error("config: bad integer value for key '" + key + "': " + value);
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true") return true;
    if (value == "0" || value == "false") return false;
    throw config_error("config: bad boolean value for key '" + key + "': " + value);
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

void RunConfig::apply(const std::string& key, const std::string& value) {
    using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;
    auto dbl = [](double RunConfig::*field) {
        return [field](RunConfig& c, const std::string& k, const std::string& v) {
            c.*field = parse_double(k, v);
        };
    };
    auto sz = [](std::size_t RunConfig::*field) {
        return [field](RunConfig& c, const std::string& k, const std::string& v) {
            c.*field = parse_size(k, v);
        };
    };
    auto str = [](std::string RunConfig::*field) {
        return [field](RunConfig& c, const std::string&, const std::string& v) { c.*field = v; };
    };

    static const std::vector<std::pair<std::string, Setter>> table = {
        {"timesteps", sz(&RunConfig::timesteps)},
        {"beta_start", dbl(&RunConfig::beta_start)},
        {"beta_end", dbl(&RunConfig::beta_end)},
        {"dataset", str(&RunConfig::dataset)},
        {"n_images", sz(&RunConfig::n_images)},
        {"image_size", sz(&RunConfig::image_size)},
        {"pos_fraction", dbl(&RunConfig::pos_fraction)},
        {"train_frac", dbl(&RunConfig::train_frac)},
        {"val_frac", dbl(&RunConfig::val_frac)},
        {"block_x", sz(&RunConfig::block_x)},
        {"block_y", sz(&RunConfig::block_y)},
        {"block_w", sz(&RunConfig::block_w)},
        {"block_h", sz(&RunConfig::block_h)},
        {"mu0", dbl(&RunConfig::mu0)},
        {"delta", dbl(&RunConfig::delta)},
        {"sigma0", dbl(&RunConfig::sigma0)},
        {"sigma1", dbl(&RunConfig::sigma1)},
        {"bg_level", dbl(&RunConfig::bg_level)},
        {"bg_texture_amp", dbl(&RunConfig::bg_texture_amp)},
        {"bg_noise_sigma", dbl(&RunConfig::bg_noise_sigma)},
        {"lesion_offset", dbl(&RunConfig::lesion_offset)},
        {"min_axis", dbl(&RunConfig::min_axis)},
        {"max_axis", dbl(&RunConfig::max_axis)},
        {"channels", sz(&RunConfig::channels)},
        {"embed_dim", sz(&RunConfig::embed_dim)},
        {"time_dim", sz(&RunConfig::time_dim)},
        {"analytic",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.analytic = parse_bool(k, v);
         }},
        {"prior1", dbl(&RunConfig::prior1)},
        {"lr", dbl(&RunConfig::lr)},
        {"weight_decay", dbl(&RunConfig::weight_decay)},
        {"batch", sz(&RunConfig::batch)},
        {"iters", sz(&RunConfig::iters)},
        {"checkpoint_interval", sz(&RunConfig::checkpoint_interval)},
        {"log_interval", sz(&RunConfig::log_interval)},
        {"cls_lr", dbl(&RunConfig::cls_lr)},
        {"cls_iters", sz(&RunConfig::cls_iters)},
        {"cls_batch", sz(&RunConfig::cls_batch)},
        {"cls_noise_max", sz(&RunConfig::cls_noise_max)},
        {"q_noise_level", sz(&RunConfig::q_noise_level)},
        {"r_steps", sz(&RunConfig::r_steps)},
        {"tau", dbl(&RunConfig::tau)},
        {"guidance_scale", dbl(&RunConfig::guidance_scale)},
        {"normalization", str(&RunConfig::normalization)},
        {"otsu_bins", sz(&RunConfig::otsu_bins)},
        {"otsu_mode", str(&RunConfig::otsu_mode)},
        {"eval_split", str(&RunConfig::eval_split)},
        {"data_dir", str(&RunConfig::data_dir)},
        {"model_path", str(&RunConfig::model_path)},
        {"classifier_path", str(&RunConfig::classifier_path)},
        {"out_dir", str(&RunConfig::out_dir)},
        {"seed",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.seed = parse_u64(k, v);
         }},
        {"workers", sz(&RunConfig::workers)},
    };

    for (const auto& [name, setter] : table) {
        if (name == key) {
            setter(*this, key, value);
            return;
        }
    }
    throw config_error("config: unknown key '" + key + "'");
}

RunConfig RunConfig::parse_string(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error("config: line " + std::to_string(line_no) +
                               " is not key=value: " + line);
        cfg.apply(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

RunConfig RunConfig::parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw config_error("config: cannot open " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_string(buffer.str());
}

std::string RunConfig::dump() const {
    std::ostringstream os;
    os << "timesteps=" << timesteps << "\n";
    os << "beta_start=" << fmt_double(beta_start) << "\n";
    os << "beta_end=" << fmt_double(beta_end) << "\n";
    os << "dataset=" << dataset << "\n";
    os << "n_images=" << n_images << "\n";
    os << "image_size=" << image_size << "\n";
    os << "pos_fraction=" << fmt_double(pos_fraction) << "\n";
    os << "train_frac=" << fmt_double(train_frac) << "\n";
    os << "val_frac=" << fmt_double(val_frac) << "\n";
    os << "block_x=" << block_x << "\n";
    os << "block_y=" << block_y << "\n";
    os << "block_w=" << block_w << "\n";
    os << "block_h=" << block_h << "\n";
    os << "mu0=" << fmt_double(mu0) << "\n";
    os << "delta=" << fmt_double(delta) << "\n";
    os << "sigma0=" << fmt_double(sigma0) << "\n";
    os << "sigma1=" << fmt_double(sigma1) << "\n";
    os << "bg_level=" << fmt_double(bg_level) << "\n";
    os << "bg_texture_amp=" << fmt_double(bg_texture_amp) << "\n";
    os << "bg_noise_sigma=" << fmt_double(bg_noise_sigma) << "\n";
    os << "lesion_offset=" << fmt_double(lesion_offset) << "\n";
    os << "min_axis=" << fmt_double(min_axis) << "\n";
    os << "max_axis=" << fmt_double(max_axis) << "\n";
    os << "channels=" << channels << "\n";
    os << "embed_dim=" << embed_dim << "\n";
    os << "time_dim=" << time_dim << "\n";
    os << "analytic=" << (analytic ? 1 : 0) << "\n";
    os << "prior1=" << fmt_double(prior1) << "\n";
    os << "lr=" << fmt_double(lr) << "\n";
    os << "weight_decay=" << fmt_double(weight_decay) << "\n";
    os << "batch=" << batch << "\n";
    os << "iters=" << iters << "\n";
    os << "checkpoint_interval=" << checkpoint_interval << "\n";
    os << "log_interval=" << log_interval << "\n";
    os << "cls_lr=" << fmt_double(cls_lr) << "\n";
    os << "cls_iters=" << cls_iters << "\n";
    os << "cls_batch=" << cls_batch << "\n";
    os << "cls_noise_max=" << cls_noise_max << "\n";
    os << "q_noise_level=" << q_noise_level << "\n";
    os << "r_steps=" << r_steps << "\n";
    os << "tau=" << fmt_double(tau) << "\n";
    os << "guidance_scale=" << fmt_double(guidance_scale) << "\n";
    os << "normalization=" << normalization << "\n";
    os << "otsu_bins=" << otsu_bins << "\n";
    os << "otsu_mode=" << otsu_mode << "\n";
    os << "eval_split=" << eval_split << "\n";
    os << "data_dir=" << data_dir << "\n";
    os << "model_path=" << model_path << "\n";
    os << "classifier_path=" << classifier_path << "\n";
    os << "out_dir=" << out_dir << "\n";
    os << "seed=" << seed << "\n";
    os << "workers=" << workers << "\n";
    return os.str();
}

} // namespace cdiff
