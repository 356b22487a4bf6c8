#include "cdiff/commands.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "cdiff/checkpoint.hpp"
#include "cdiff/data_io.hpp"
#include "cdiff/errors.hpp"
#include "cdiff/metrics.hpp"
#include "cdiff/plot.hpp"
#include "cdiff/saliency.hpp"
#include "cdiff/training.hpp"

namespace cdiff {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error(io_error::code::open_failed, "cannot open " + path.string());
    out << text;
    if (!out) throw io_error(io_error::code::write_failed, "write failed " + path.string());
}

void echo_config(const RunConfig& cfg, const fs::path& dir) {
    write_text(dir / "config_used.txt", cfg.dump());
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    auto body = [&] {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) pool.emplace_back(body);
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

NoiseSchedule schedule_from(const RunConfig& cfg) {
    return NoiseSchedule::linear(cfg.timesteps, cfg.beta_start, cfg.beta_end);
}

GaussianBlockSpec blocks_from(const RunConfig& cfg) {
    GaussianBlockSpec spec;
    spec.height = cfg.image_size;
    spec.width = cfg.image_size;
    spec.block_y = cfg.block_y;
    spec.block_x = cfg.block_x;
    spec.block_h = cfg.block_h;
    spec.block_w = cfg.block_w;
    spec.mu0_level = cfg.mu0;
    spec.delta = cfg.delta;
    spec.sigma0 = cfg.sigma0;
    spec.sigma1 = cfg.sigma1;
    spec.positive_fraction = cfg.pos_fraction;
    return spec;
}

ShapesSpec shapes_from(const RunConfig& cfg) {
    ShapesSpec spec;
    spec.height = cfg.image_size;
    spec.width = cfg.image_size;
    spec.bg_level = cfg.bg_level;
    spec.bg_texture_amp = cfg.bg_texture_amp;
    spec.bg_noise_sigma = cfg.bg_noise_sigma;
    spec.lesion_offset = cfg.lesion_offset;
    spec.min_axis = cfg.min_axis;
    spec.max_axis = cfg.max_axis;
    spec.positive_fraction = cfg.pos_fraction;
    return spec;
}

fs::path require_data_dir(const RunConfig& cfg) {
    if (cfg.data_dir.empty()) throw config_error("config: data_dir is required");
    const fs::path dir(cfg.data_dir);
    if (!fs::exists(dir / "manifest.jsonl"))
        throw config_error("config: no manifest.jsonl under data_dir " + cfg.data_dir);
    return dir;
}

std::vector<LabelledImage> load_split(const fs::path& data_dir,
                                      const std::vector<DatasetRecord>& records,
                                      const std::string& split) {
    std::vector<LabelledImage> out;
    for (const DatasetRecord& r : records) {
        if (r.split != split) continue;
        out.push_back({read_cdt(data_dir / r.image), r.label});
    }
    return out;
}

void write_loss_csv(const fs::path& path, const std::vector<LossPoint>& curve) {
    std::ostringstream os;
    os << "iteration,loss\n";
    for (const LossPoint& p : curve) os << p.iteration << "," << fmt(p.loss) << "\n";
    write_text(path, os.str());
}

struct PredRecord {
    std::size_t id = 0;
    std::string image;
    std::string mask;
    std::string map;
};

// Runs one saliency pass over the positive images of the configured split and
// writes maps plus a run manifest into run_dir. Returns the record list.
std::vector<PredRecord> saliency_pass(const RunConfig& cfg, const std::string& method,
                                      const fs::path& run_dir, std::ostream& log) {
    if (method != "cdm" && method != "cg-cdm" && method != "cg-diff")
        throw config_error("saliency: unknown method '" + method + "'");
    const fs::path data_dir = require_data_dir(cfg);
    if (cfg.model_path.empty()) throw config_error("config: model_path is required");

    const NoiseSchedule sched = schedule_from(cfg);
    const LoadedEpsilonModel loaded = load_epsilon_model(cfg.model_path, sched);

    std::unique_ptr<NoisyClassifier> classifier;
    if (method == "cg-cdm" || method == "cg-diff") {
        if (cfg.classifier_path.empty())
            throw config_error("config: classifier_path is required for method " + method);
        classifier = load_noisy_classifier(cfg.classifier_path, sched);
    }
    double scale = cfg.guidance_scale;
    if (method == "cdm" && scale != 0.0) {
        log << "warning: method=cdm ignores guidance_scale=" << fmt(scale) << "\n";
        scale = 0.0;
    }

    const std::vector<DatasetRecord> records = read_manifest(data_dir / "manifest.jsonl");
    std::vector<std::pair<std::size_t, const DatasetRecord*>> targets;
    for (std::size_t i = 0; i < records.size(); ++i)
        if (records[i].split == cfg.eval_split && records[i].label == 1)
            targets.emplace_back(i, &records[i]);
    if (targets.empty())
        throw config_error("saliency: no positive images in split '" + cfg.eval_split + "'");

    fs::create_directories(run_dir / "maps");
    fs::create_directories(run_dir / "previews");

    std::vector<PredRecord> preds(targets.size());
    parallel_for(targets.size(), cfg.workers, [&](std::size_t k) {
        const auto& [id, record] = targets[k];
        const Tensor image = read_cdt(data_dir / record->image);

        SaliencyConfig scfg;
        scfg.q_noise_level = cfg.q_noise_level;
        scfg.r_steps = cfg.r_steps;
        scfg.tau = cfg.tau;
        scfg.guidance_scale = scale;
        scfg.seed = cfg.seed;
        scfg.stream = id; // per-image stream in the partitioned seed space
        scfg.normalization = parse_normalize_mode(cfg.normalization);

        SaliencyMap map;
        if (method == "cg-diff")
            map = cg_diff_baseline(*loaded.model, loaded.embedding, image, scfg, sched,
                                   *classifier);
        else
            map = cdm_saliency(*loaded.model, loaded.embedding, image, scfg, sched,
                               classifier.get());

        char name[64];
        std::snprintf(name, sizeof(name), "maps/%06zu.cdt", id);
        write_cdt(run_dir / name, map.normalized);
        PredRecord pred;
        pred.id = id;
        pred.image = record->image;
        pred.mask = record->mask.value_or("");
        pred.map = name;
        std::snprintf(name, sizeof(name), "maps/%06zu_raw.cdt", id);
        write_cdt(run_dir / name, map.raw);
        std::snprintf(name, sizeof(name), "previews/%06zu.pgm", id);
        write_pgm(run_dir / name, map.normalized);
        preds[k] = std::move(pred);
    });

    nlohmann::json manifest = nlohmann::json::array();
    std::ostringstream os;
    for (const PredRecord& p : preds) {
        nlohmann::json j = {{"id", p.id}, {"image", p.image}, {"mask", p.mask}, {"map", p.map}};
        j["method"] = method;
        os << j.dump() << "\n";
    }
    write_text(run_dir / "run_manifest.jsonl", os.str());
    log << "saliency: method=" << method << " wrote " << preds.size() << " maps to "
        << run_dir.string() << "\n";
    return preds;
}

std::vector<PredRecord> read_pred_manifest(const fs::path& run_dir) {
    std::ifstream in(run_dir / "run_manifest.jsonl");
    if (!in)
        throw io_error(io_error::code::open_failed,
                       "eval: cannot open " + (run_dir / "run_manifest.jsonl").string());
    std::vector<PredRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const nlohmann::json j = nlohmann::json::parse(line);
        PredRecord p;
        p.id = j.at("id").get<std::size_t>();
        p.image = j.at("image").get<std::string>();
        p.mask = j.at("mask").get<std::string>();
        p.map = j.at("map").get<std::string>();
        out.push_back(std::move(p));
    }
    return out;
}

struct RunEval {
    std::vector<std::string> csv_rows;
    double dice_mean = 0.0;
    double iou_mean = 0.0;
    double hd95_mean = 0.0;
    std::size_t evaluated = 0;
    std::size_t hd95_skipped = 0;
    std::vector<std::string> missing;
};

RunEval eval_one_run(const RunConfig& cfg, const fs::path& data_dir, const fs::path& run_dir) {
    const std::vector<PredRecord> preds = read_pred_manifest(run_dir);
    RunEval out;

    // Per-image thresholds, or one dataset-average threshold for all.
    std::vector<double> thresholds(preds.size(), 0.0);
    std::vector<Tensor> maps(preds.size());
    std::vector<bool> present(preds.size(), false);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const fs::path map_path = run_dir / preds[i].map;
        if (!fs::exists(map_path)) {
            out.missing.push_back(preds[i].map);
            continue;
        }
        maps[i] = read_cdt(map_path);
        thresholds[i] = otsu_threshold(maps[i], static_cast<int>(cfg.otsu_bins));
        present[i] = true;
    }
    if (cfg.otsu_mode == "dataset_average") {
        double acc = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < preds.size(); ++i)
            if (present[i]) {
                acc += thresholds[i];
                ++n;
            }
        const double avg = n ? acc / static_cast<double>(n) : 0.0;
        for (double& t : thresholds) t = avg;
    } else if (cfg.otsu_mode != "per_image") {
        throw config_error("config: otsu_mode must be per_image or dataset_average");
    }

    double dice_acc = 0.0, iou_acc = 0.0, hd_acc = 0.0;
    std::size_t hd_count = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (!present[i]) continue;
        if (preds[i].mask.empty())
            throw io_error(io_error::code::bad_header, "eval: prediction without a mask entry");
        const BinaryMask gt = read_mask(data_dir / preds[i].mask);
        const BinaryMask pred = threshold_map(maps[i], thresholds[i]);
        const double d = dice(pred, gt);
        const double j = iou(pred, gt);
        bool skipped = false;
        double hd = 0.0;
        try {
            hd = hd95(pred, gt);
            hd_acc += hd;
            ++hd_count;
        } catch (const empty_mask_error&) {
            skipped = true;
            ++out.hd95_skipped;
        }
        dice_acc += d;
        iou_acc += j;
        ++out.evaluated;

        std::ostringstream row;
        row << preds[i].id << "," << preds[i].image << "," << fmt(d) << "," << fmt(j) << ","
            << (skipped ? "" : fmt(hd)) << "," << (skipped ? 1 : 0) << ","
            << fmt(thresholds[i]);
        out.csv_rows.push_back(row.str());
    }
    if (out.evaluated) {
        out.dice_mean = dice_acc / static_cast<double>(out.evaluated);
        out.iou_mean = iou_acc / static_cast<double>(out.evaluated);
    }
    out.hd95_mean = hd_count ? hd_acc / static_cast<double>(hd_count) : 0.0;
    return out;
}

struct Aggregate {
    double mean = 0.0;
    double stddev = 0.0;
};

Aggregate aggregate(const std::vector<double>& values) {
    Aggregate a;
    if (values.empty()) return a;
    for (double v : values) a.mean += v;
    a.mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.stddev = std::sqrt(ss / static_cast<double>(values.size()));
    return a;
}

// Shared by cmd_eval and cmd_ablate.
struct EvalOutcome {
    nlohmann::json report;
    bool any_missing = false;
    double dice_mean = 0.0;
    double dice_std = 0.0;
    double iou_mean = 0.0;
    double hd95_mean = 0.0;
};

EvalOutcome eval_runs(const RunConfig& cfg, const std::vector<fs::path>& pred_dirs,
                      const fs::path& data_dir, const fs::path& out_dir, std::ostream& log) {
    if (pred_dirs.empty()) throw config_error("eval: at least one prediction directory required");
    fs::create_directories(out_dir);

    std::vector<double> dices, ious, hds;
    nlohmann::json runs = nlohmann::json::array();
    EvalOutcome outcome;
    for (std::size_t k = 0; k < pred_dirs.size(); ++k) {
        const RunEval run = eval_one_run(cfg, data_dir, pred_dirs[k]);
        char name[64];
        std::snprintf(name, sizeof(name), "per_image_%02zu.csv", k);
        std::ostringstream csv;
        csv << "id,image,dice,iou,hd95,hd95_skipped,threshold\n";
        for (const std::string& row : run.csv_rows) csv << row << "\n";
        write_text(out_dir / name, csv.str());

        nlohmann::json j = {{"pred_dir", pred_dirs[k].filename().string()},
                            {"per_image_csv", name},
                            {"images", run.evaluated},
                            {"dice_mean", run.dice_mean},
                            {"iou_mean", run.iou_mean},
                            {"hd95_mean", run.hd95_mean},
                            {"hd95_skipped", run.hd95_skipped},
                            {"missing", run.missing}};
        runs.push_back(j);
        if (!run.missing.empty()) {
            outcome.any_missing = true;
            for (const std::string& m : run.missing)
                log << "eval: missing prediction " << m << "\n";
        }
        if (run.evaluated) {
            dices.push_back(run.dice_mean);
            ious.push_back(run.iou_mean);
            hds.push_back(run.hd95_mean);
        }
    }

    const Aggregate da = aggregate(dices), ia = aggregate(ious), ha = aggregate(hds);
    outcome.dice_mean = da.mean;
    outcome.dice_std = da.stddev;
    outcome.iou_mean = ia.mean;
    outcome.hd95_mean = ha.mean;
    outcome.report = {{"runs", runs},
                      {"dice", {{"mean", da.mean}, {"std", da.stddev}}},
                      {"iou", {{"mean", ia.mean}, {"std", ia.stddev}}},
                      {"hd95", {{"mean", ha.mean}, {"std", ha.stddev}}}};
    write_text(out_dir / "aggregate.json", outcome.report.dump(2) + "\n");
    log << "eval: dice " << fmt(da.mean) << " +- " << fmt(da.stddev) << ", iou " << fmt(ia.mean)
        << ", hd95 " << fmt(ha.mean) << "\n";
    return outcome;
}

} // namespace

fs::path default_run_dir(const std::string& verb, std::uint64_t seed) {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%s-%04d%02d%02d-%02d%02d%02d-seed%llu", verb.c_str(),
                  tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec,
                  static_cast<unsigned long long>(seed));
    return fs::path(buf);
}

int cmd_generate(const RunConfig& cfg, const fs::path& out_dir, std::ostream& log) {
    fs::create_directories(out_dir);
    echo_config(cfg, out_dir);

    std::vector<Sample> samples;
    if (cfg.dataset == "gaussian_blocks")
        samples = gen_gaussian_blocks(blocks_from(cfg), cfg.n_images, cfg.seed);
    else if (cfg.dataset == "shapes")
        samples = gen_shapes(shapes_from(cfg), cfg.n_images, cfg.seed);
    else
        throw config_error("config: dataset must be gaussian_blocks or shapes, got '" +
                           cfg.dataset + "'");

    const std::vector<DatasetRecord> records =
        write_dataset(out_dir, samples, cfg.train_frac, cfg.val_frac, cfg.seed);
    std::size_t positives = 0;
    for (const DatasetRecord& r : records) positives += r.label;
    log << "generate: wrote " << records.size() << " images (" << positives << " positive) to "
        << out_dir.string() << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, const fs::path& out_dir, std::ostream& log) {
    fs::create_directories(out_dir);
    echo_config(cfg, out_dir);

    if (cfg.analytic) {
        if (cfg.dataset != "gaussian_blocks")
            throw config_error("config: analytic=1 requires dataset=gaussian_blocks");
        const GaussianBlockSpec spec = blocks_from(cfg);
        spec.validate();
        save_analytic_model(out_dir / "model.ckpt", spec.mu0(), spec.mu1(), spec.sigma0,
                            spec.sigma1, cfg.prior1);
        log << "train: analytic model materialized at "
            << (out_dir / "model.ckpt").string() << "\n";
        return 0;
    }

    const fs::path data_dir = require_data_dir(cfg);
    const std::vector<DatasetRecord> records = read_manifest(data_dir / "manifest.jsonl");
    const std::vector<LabelledImage> train_set = load_split(data_dir, records, "train");
    if (train_set.empty()) throw config_error("train: no training images in dataset");

    const NoiseSchedule sched = schedule_from(cfg);
    TinyCondUNet model({cfg.channels, cfg.embed_dim, cfg.time_dim, 1}, cfg.seed);

    TrainConfig tc;
    tc.lr = cfg.lr;
    tc.weight_decay = cfg.weight_decay;
    tc.batch = cfg.batch;
    tc.iters = cfg.iters;
    tc.seed = cfg.seed;
    tc.checkpoint_interval = cfg.checkpoint_interval;
    tc.log_interval = cfg.log_interval;

    auto checkpoint = [&](std::size_t iteration) {
        char name[64];
        std::snprintf(name, sizeof(name), "model_%06zu.ckpt", iteration);
        save_unet(out_dir / name, model);
    };
    const std::vector<LossPoint> curve =
        train_diffusion(model, train_set, sched, tc, checkpoint);
    save_unet(out_dir / "model.ckpt", model);
    write_loss_csv(out_dir / "loss.csv", curve);
    log << "train: " << cfg.iters << " iterations on " << train_set.size()
        << " images, final loss " << fmt(curve.back().loss) << "\n";
    return 0;
}

int cmd_classify_train(const RunConfig& cfg, const fs::path& out_dir, std::ostream& log) {
    fs::create_directories(out_dir);
    echo_config(cfg, out_dir);

    if (cfg.analytic) {
        if (cfg.dataset != "gaussian_blocks")
            throw config_error("config: analytic=1 requires dataset=gaussian_blocks");
        const GaussianBlockSpec spec = blocks_from(cfg);
        spec.validate();
        save_analytic_model(out_dir / "classifier.ckpt", spec.mu0(), spec.mu1(), spec.sigma0,
                            spec.sigma1, cfg.prior1);
        log << "classify-train: analytic classifier materialized at "
            << (out_dir / "classifier.ckpt").string() << "\n";
        return 0;
    }

    const fs::path data_dir = require_data_dir(cfg);
    const std::vector<DatasetRecord> records = read_manifest(data_dir / "manifest.jsonl");
    const std::vector<LabelledImage> train_set = load_split(data_dir, records, "train");
    const std::vector<LabelledImage> val_set = load_split(data_dir, records, "val");
    if (train_set.empty()) throw config_error("classify-train: no training images in dataset");

    const NoiseSchedule sched = schedule_from(cfg);
    ConvClassifier classifier({cfg.channels, cfg.time_dim, 1}, cfg.seed + 1);

    TrainConfig tc;
    tc.lr = cfg.cls_lr;
    tc.batch = cfg.cls_batch;
    tc.iters = cfg.cls_iters;
    tc.seed = cfg.seed;
    tc.log_interval = cfg.log_interval;
    const std::size_t noise_max = cfg.cls_noise_max ? cfg.cls_noise_max : cfg.q_noise_level;

    const std::vector<LossPoint> curve =
        train_classifier(classifier, train_set, sched, noise_max, tc);
    save_conv_classifier(out_dir / "classifier.ckpt", classifier);
    write_loss_csv(out_dir / "cls_loss.csv", curve);

    nlohmann::json metrics = {{"train_images", train_set.size()}};
    if (!val_set.empty()) {
        const double acc = classifier_accuracy(classifier, val_set, 1, sched, cfg.seed + 17);
        metrics["val_accuracy_t1"] = acc;
        log << "classify-train: val accuracy at t=1: " << fmt(acc) << "\n";
    }
    write_text(out_dir / "metrics.json", metrics.dump(2) + "\n");
    return 0;
}

int cmd_saliency(const RunConfig& cfg, const std::string& method, const fs::path& out_dir,
                 std::ostream& log) {
    fs::create_directories(out_dir);
    echo_config(cfg, out_dir);
    saliency_pass(cfg, method, out_dir, log);
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::vector<fs::path>& pred_dirs,
             const fs::path& manifest_path, const fs::path& out_dir, std::ostream& log) {
    fs::create_directories(out_dir);
    echo_config(cfg, out_dir);
    fs::path data_dir;
    if (!manifest_path.empty())
        data_dir = manifest_path.parent_path();
    else
        data_dir = require_data_dir(cfg);
    const EvalOutcome outcome = eval_runs(cfg, pred_dirs, data_dir, out_dir, log);
    return outcome.any_missing ? 1 : 0;
}

int cmd_ablate(const RunConfig& cfg, const std::string& axis, const std::vector<double>& values,
               const std::string& method, const fs::path& out_dir, std::ostream& log) {
    if (axis != "Q" && axis != "R" && axis != "tau" && axis != "s")
        throw config_error("ablate: axis must be one of Q, R, tau, s");
    if (values.empty()) throw config_error("ablate: at least one value required");
    for (double v : values) {
        if (axis == "tau" && !(v > 0.0 && v <= 1.0))
            throw config_error("ablate: tau values must lie in (0,1]");
        if ((axis == "Q" || axis == "R") && (v < 1.0 || v != std::floor(v)))
            throw config_error("ablate: " + axis + " values must be positive integers");
        if (axis == "s" && v < 0.0) throw config_error("ablate: s values must be >= 0");
    }
    fs::create_directories(out_dir);
    echo_config(cfg, out_dir);

    std::ostringstream csv;
    csv << "axis,value,dice_mean,dice_std,iou_mean,hd95_mean\n";
    std::vector<SeriesPoint> curve;
    for (double v : values) {
        RunConfig point = cfg;
        if (axis == "Q")
            point.q_noise_level = static_cast<std::size_t>(v);
        else if (axis == "R")
            point.r_steps = static_cast<std::size_t>(v);
        else if (axis == "tau")
            point.tau = v;
        else
            point.guidance_scale = v;

        char name[64];
        std::snprintf(name, sizeof(name), "%s_%g", axis.c_str(), v);
        const fs::path point_dir = out_dir / name;
        fs::create_directories(point_dir);
        echo_config(point, point_dir);
        saliency_pass(point, method, point_dir, log);
        const EvalOutcome outcome = eval_runs(point, {point_dir}, require_data_dir(point),
                                              point_dir / "eval", log);
        csv << axis << "," << fmt(v) << "," << fmt(outcome.dice_mean) << ","
            << fmt(outcome.dice_std) << "," << fmt(outcome.iou_mean) << ","
            << fmt(outcome.hd95_mean) << "\n";
        curve.push_back({v, outcome.dice_mean});
        log << "ablate: " << axis << "=" << fmt(v) << " dice " << fmt(outcome.dice_mean) << "\n";
    }
    write_text(out_dir / "sweep.csv", csv.str());
    write_line_plot_png(out_dir / "sweep.png", "Dice - " + axis, axis, "Dice", curve);
    return 0;
}

} // namespace cdiff
