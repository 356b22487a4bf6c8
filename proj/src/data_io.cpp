#include "cdiff/data_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "cdiff/errors.hpp"
#include "cdiff/rng.hpp"

namespace cdiff {

namespace {

constexpr char kMagic[4] = {'C', 'D', 'T', '1'};
constexpr std::uint8_t kDtypeF32 = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 24));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

} // namespace

std::vector<std::uint8_t> encode_cdt(const Tensor& tensor) {
    if (tensor.rank() == 0 || tensor.rank() > 255)
        throw io_error(io_error::code::bad_header, "cdt: rank must be in 1..255");
    std::vector<std::uint8_t> out;
    out.reserve(6 + 4 * tensor.rank() + 4 * tensor.numel());
    out.insert(out.end(), kMagic, kMagic + 4);
    out.push_back(kDtypeF32);
    out.push_back(static_cast<std::uint8_t>(tensor.rank()));
    for (std::size_t d : tensor.shape()) {
        if (d > 0xFFFFFFFFull) throw io_error(io_error::code::bad_header, "cdt: dim too large");
        put_u32(out, static_cast<std::uint32_t>(d));
    }
    for (std::size_t i = 0; i < tensor.numel(); ++i) {
        std::uint32_t bits;
        const float v = tensor[i];
        std::memcpy(&bits, &v, 4);
        put_u32(out, bits);
    }
    return out;
}

Tensor decode_cdt(const std::uint8_t* bytes, std::size_t size) {
    if (size < 6) throw io_error(io_error::code::truncated, "cdt: header truncated");
    if (std::memcmp(bytes, kMagic, 4) != 0)
        throw io_error(io_error::code::bad_magic, "cdt: bad magic");
    if (bytes[4] != kDtypeF32)
        throw io_error(io_error::code::bad_dtype,
                       "cdt: unsupported dtype code " + std::to_string(bytes[4]));
    const std::size_t rank = bytes[5];
    if (rank == 0) throw io_error(io_error::code::bad_header, "cdt: zero rank");
    if (size < 6 + 4 * rank) throw io_error(io_error::code::truncated, "cdt: dims truncated");

    Shape shape(rank);
    std::size_t numel = 1;
    for (std::size_t i = 0; i < rank; ++i) {
        shape[i] = get_u32(bytes + 6 + 4 * i);
        if (shape[i] == 0) throw io_error(io_error::code::bad_header, "cdt: zero extent");
        numel *= shape[i];
    }
    const std::size_t payload_off = 6 + 4 * rank;
    if (size < payload_off + 4 * numel)
        throw io_error(io_error::code::truncated, "cdt: payload truncated");

    std::vector<float> data(numel);
    for (std::size_t i = 0; i < numel; ++i) {
        const std::uint32_t bits = get_u32(bytes + payload_off + 4 * i);
        std::memcpy(&data[i], &bits, 4);
    }
    return Tensor::from_data(std::move(shape), std::move(data));
}

void write_cdt(const std::filesystem::path& path, const Tensor& tensor) {
    const std::vector<std::uint8_t> bytes = encode_cdt(tensor);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error(io_error::code::open_failed, "cdt: cannot open " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw io_error(io_error::code::write_failed, "cdt: write failed " + path.string());
}

Tensor read_cdt(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error(io_error::code::open_failed, "cdt: cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return decode_cdt(bytes.data(), bytes.size());
}

void write_pgm(const std::filesystem::path& path, const Tensor& image) {
    std::size_t height = 0, width = 0;
    if (image.rank() == 2) {
        height = image.dim(0);
        width = image.dim(1);
    } else if (image.rank() == 3 && image.dim(0) == 1) {
        height = image.dim(1);
        width = image.dim(2);
    } else if (image.rank() == 4 && image.dim(0) == 1 && image.dim(1) == 1) {
        height = image.dim(2);
        width = image.dim(3);
    } else {
        throw shape_error("pgm: expected a single-channel 2D image, got " +
                          shape_str(image.shape()));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error(io_error::code::open_failed, "pgm: cannot open " + path.string());
    out << "P5\n" << width << " " << height << "\n255\n";
    for (std::size_t i = 0; i < height * width; ++i) {
        const float v = std::min(1.0f, std::max(0.0f, image[i]));
        out.put(static_cast<char>(static_cast<int>(std::lround(v * 255.0f))));
    }
    if (!out) throw io_error(io_error::code::write_failed, "pgm: write failed " + path.string());
}

// --- Generators --------------------------------------------------------------

void GaussianBlockSpec::validate() const {
    if (height < 2 || width < 2) throw config_error("gaussian blocks: image too small");
    if (block_h == 0 || block_w == 0 || block_y + block_h > height || block_x + block_w > width)
        throw config_error("gaussian blocks: block outside image bounds");
    if (delta == 0.0) throw config_error("gaussian blocks: delta must be nonzero");
    if (sigma0 < 0.0 || sigma1 < 0.0) throw config_error("gaussian blocks: sigma must be >= 0");
    if (positive_fraction < 0.0 || positive_fraction > 1.0)
        throw config_error("gaussian blocks: positive_fraction outside [0,1]");
}

Tensor GaussianBlockSpec::mu0() const {
    return Tensor::full({1, 1, height, width}, static_cast<float>(mu0_level));
}

Tensor GaussianBlockSpec::mu1() const {
    Tensor m = mu0();
    for (std::size_t y = block_y; y < block_y + block_h; ++y)
        for (std::size_t x = block_x; x < block_x + block_w; ++x)
            m.at(0, 0, y, x) += static_cast<float>(delta);
    return m;
}

BinaryMask GaussianBlockSpec::block_mask() const {
    BinaryMask m = BinaryMask::zeros(height, width);
    for (std::size_t y = block_y; y < block_y + block_h; ++y)
        for (std::size_t x = block_x; x < block_x + block_w; ++x) m.set(y, x, true);
    return m;
}

std::vector<Sample> gen_gaussian_blocks(const GaussianBlockSpec& spec, std::size_t n,
                                        std::uint64_t seed) {
    spec.validate();
    if (n < 1) throw config_error("gaussian blocks: n must be >= 1");
    const Tensor mu0 = spec.mu0();
    const Tensor mu1 = spec.mu1();
    const BinaryMask mask = spec.block_mask();

    std::vector<Sample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Philox rng(seed, i); // seed space partitioned by sample index
        Sample s;
        s.label = rng.uniform() < spec.positive_fraction ? 1 : 0;
        const Tensor& mu = s.label == 1 ? mu1 : mu0;
        const double sigma = s.label == 1 ? spec.sigma1 : spec.sigma0;
        s.image = Tensor::zeros(mu.shape());
        for (std::size_t j = 0; j < s.image.numel(); ++j)
            s.image[j] = static_cast<float>(mu[j] + sigma * rng.normal());
        if (s.label == 1) s.mask = mask;
        out.push_back(std::move(s));
    }
    return out;
}

void ShapesSpec::validate() const {
    if (height < 8 || width < 8) throw config_error("shapes: image too small");
    if (min_axis < 1.0 || max_axis < min_axis) throw config_error("shapes: bad axis range");
    if (positive_fraction < 0.0 || positive_fraction > 1.0)
        throw config_error("shapes: positive_fraction outside [0,1]");
    if (lesion_offset == 0.0) throw config_error("shapes: lesion_offset must be nonzero");
}

std::vector<Sample> gen_shapes(const ShapesSpec& spec, std::size_t n, std::uint64_t seed) {
    spec.validate();
    if (n < 1) throw config_error("shapes: n must be >= 1");

    std::vector<Sample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Philox rng(seed, i);
        Sample s;
        s.label = rng.uniform() < spec.positive_fraction ? 1 : 0;
        s.image = Tensor::zeros({1, 1, spec.height, spec.width});
        s.mask = BinaryMask::zeros(spec.height, spec.width);

        // Low-frequency texture: two sinusoids with random phase/frequency.
        const double fy = 1.0 + 2.0 * rng.uniform();
        const double fx = 1.0 + 2.0 * rng.uniform();
        const double py = 2.0 * 3.14159265358979323846 * rng.uniform();
        const double px = 2.0 * 3.14159265358979323846 * rng.uniform();
        for (std::size_t y = 0; y < spec.height; ++y)
            for (std::size_t x = 0; x < spec.width; ++x) {
                const double ty = std::sin(fy * static_cast<double>(y) /
                                               static_cast<double>(spec.height) * 2.0 * 3.14159265358979323846 +
                                           py);
                const double tx = std::sin(fx * static_cast<double>(x) /
                                               static_cast<double>(spec.width) * 2.0 * 3.14159265358979323846 +
                                           px);
                s.image.at(0, 0, y, x) = static_cast<float>(
                    spec.bg_level + spec.bg_texture_amp * 0.5 * (ty + tx) +
                    spec.bg_noise_sigma * rng.normal());
            }

        if (s.label == 1) {
            // Ellipses whose bounding box leaves the image are resampled.
            double cy = 0, cx = 0, ay = 0, ax = 0;
            while (true) {
                ay = spec.min_axis + (spec.max_axis - spec.min_axis) * rng.uniform();
                ax = spec.min_axis + (spec.max_axis - spec.min_axis) * rng.uniform();
                cy = rng.uniform() * static_cast<double>(spec.height);
                cx = rng.uniform() * static_cast<double>(spec.width);
                if (cy - ay >= 0.0 && cy + ay < static_cast<double>(spec.height) &&
                    cx - ax >= 0.0 && cx + ax < static_cast<double>(spec.width))
                    break;
            }
            for (std::size_t y = 0; y < spec.height; ++y)
                for (std::size_t x = 0; x < spec.width; ++x) {
                    const double dy = (static_cast<double>(y) - cy) / ay;
                    const double dx = (static_cast<double>(x) - cx) / ax;
                    if (dy * dy + dx * dx <= 1.0) {
                        s.image.at(0, 0, y, x) += static_cast<float>(spec.lesion_offset);
                        s.mask.set(y, x, true);
                    }
                }
        }
        out.push_back(std::move(s));
    }
    return out;
}

// --- Manifest ----------------------------------------------------------------

void write_manifest(const std::filesystem::path& path,
                    const std::vector<DatasetRecord>& records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw io_error(io_error::code::open_failed, "manifest: cannot open " + path.string());
    for (const DatasetRecord& r : records) {
        nlohmann::json j;
        j["image"] = r.image;
        j["label"] = r.label;
        if (r.mask) j["mask"] = *r.mask;
        j["split"] = r.split;
        out << j.dump() << "\n";
    }
    if (!out)
        throw io_error(io_error::code::write_failed, "manifest: write failed " + path.string());
}

std::vector<DatasetRecord> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw io_error(io_error::code::open_failed, "manifest: cannot open " + path.string());
    std::vector<DatasetRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw io_error(io_error::code::bad_header,
                           "manifest: bad line in " + path.string() + ": " + e.what());
        }
        DatasetRecord r;
        r.image = j.at("image").get<std::string>();
        r.label = j.at("label").get<int>();
        if (j.contains("mask")) r.mask = j.at("mask").get<std::string>();
        r.split = j.at("split").get<std::string>();
        if (r.label != 0 && r.label != 1)
            throw io_error(io_error::code::bad_header, "manifest: label must be 0/1");
        if ((r.label == 1) != r.mask.has_value())
            throw io_error(io_error::code::bad_header,
                           "manifest: masks must be present exactly for positives");
        records.push_back(std::move(r));
    }
    return records;
}

std::vector<DatasetRecord> write_dataset(const std::filesystem::path& dir,
                                         const std::vector<Sample>& samples, double train_frac,
                                         double val_frac, std::uint64_t seed) {
    if (train_frac < 0.0 || val_frac < 0.0 || train_frac + val_frac > 1.0)
        throw config_error("dataset: bad split fractions");
    std::filesystem::create_directories(dir / "images");
    std::filesystem::create_directories(dir / "masks");

    // Deterministic split assignment via a shuffled index permutation.
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Philox rng(seed, 0x5b117);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.next_u32() % i]);
    const std::size_t n_train = static_cast<std::size_t>(
        std::floor(train_frac * static_cast<double>(samples.size())));
    const std::size_t n_val =
        static_cast<std::size_t>(std::floor(val_frac * static_cast<double>(samples.size())));
    std::vector<std::string> split_of(samples.size());
    for (std::size_t pos = 0; pos < order.size(); ++pos)
        split_of[order[pos]] = pos < n_train ? "train" : (pos < n_train + n_val ? "val" : "test");

    std::vector<DatasetRecord> records;
    records.reserve(samples.size());
    char name[64];
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample& s = samples[i];
        std::snprintf(name, sizeof(name), "images/%06zu.cdt", i);
        DatasetRecord r;
        r.image = name;
        r.label = s.label;
        r.split = split_of[i];
        write_cdt(dir / r.image, s.image);
        std::snprintf(name, sizeof(name), "images/%06zu.pgm", i);
        write_pgm(dir / name, s.image);
        if (s.label == 1) {
            std::snprintf(name, sizeof(name), "masks/%06zu.cdt", i);
            r.mask = name;
            Tensor mask_t = Tensor::zeros({1, 1, s.mask.height, s.mask.width});
            for (std::size_t j = 0; j < s.mask.data.size(); ++j)
                mask_t[j] = s.mask.data[j] ? 1.0f : 0.0f;
            write_cdt(dir / *r.mask, mask_t);
        }
        records.push_back(std::move(r));
    }
    write_manifest(dir / "manifest.jsonl", records);
    return records;
}

BinaryMask read_mask(const std::filesystem::path& path) {
    const Tensor t = read_cdt(path);
    BinaryMask m = threshold_map(t, 0.5);
    return m;
}

} // namespace cdiff
