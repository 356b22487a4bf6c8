#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cdiff/checkpoint.hpp"
#include "cdiff/data_io.hpp"
#include "cdiff/errors.hpp"
#include "cdiff/rng.hpp"
#include "cdiff/unet.hpp"

using namespace cdiff;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("cdiff_test_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<std::uint8_t> read_all(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

TEST_CASE("counter-based generator reproduces the published test vectors") {
    // Known-answer vectors for the 4x32-10 configuration.
    const Philox::block_type zero =
        Philox::block({0u, 0u, 0u, 0u}, {0u, 0u});
    CHECK(zero == Philox::block_type{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});

    const Philox::block_type ones = Philox::block(
        {0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
    CHECK(ones == Philox::block_type{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});

    const Philox::block_type pi = Philox::block(
        {0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
    CHECK(pi == Philox::block_type{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("generator streams are independent and deterministic") {
    Philox a(42, 0), b(42, 0), c(42, 1), d(43, 0);
    bool same_ab = true, same_ac = true, same_ad = true;
    for (int i = 0; i < 64; ++i) {
        const std::uint32_t va = a.next_u32();
        same_ab &= va == b.next_u32();
        same_ac &= va == c.next_u32();
        same_ad &= va == d.next_u32();
    }
    CHECK(same_ab);
    CHECK(!same_ac);
    CHECK(!same_ad);

    Philox u(7);
    for (int i = 0; i < 1000; ++i) {
        const double v = u.uniform();
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
    // Normal moments sanity.
    Philox n(9);
    double acc = 0, acc2 = 0;
    const int draws = 200000;
    for (int i = 0; i < draws; ++i) {
        const double z = n.normal();
        acc += z;
        acc2 += z * z;
    }
    CHECK(acc / draws == doctest::Approx(0.0).epsilon(0.01));
    CHECK(acc2 / draws == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("tensor container round trips bit-exactly and rejects corruption") {
    const fs::path dir = temp_dir("cdt");
    Philox rng(5);
    Tensor t = Tensor::zeros({3, 4, 5});
    for (float& v : t.values()) v = rng.normal_f32();

    write_cdt(dir / "t.cdt", t);
    const Tensor back = read_cdt(dir / "t.cdt");
    CHECK(back.shape() == t.shape());
    for (std::size_t i = 0; i < t.numel(); ++i) CHECK(back[i] == t[i]);

    // Header bytes for shape [2,3].
    const std::vector<std::uint8_t> enc = encode_cdt(Tensor::zeros({2, 3}));
    const std::vector<std::uint8_t> want_header{0x43, 0x44, 0x54, 0x31, 0x01, 0x02,
                                                0x02, 0x00, 0x00, 0x00, 0x03, 0x00,
                                                0x00, 0x00};
    REQUIRE(enc.size() >= want_header.size());
    for (std::size_t i = 0; i < want_header.size(); ++i) CHECK(enc[i] == want_header[i]);

    // Truncation and magic corruption yield distinct error codes.
    std::vector<std::uint8_t> bytes = read_all(dir / "t.cdt");
    std::vector<std::uint8_t> truncated(bytes.begin(), bytes.end() - 7);
    try {
        decode_cdt(truncated.data(), truncated.size());
        FAIL("expected truncation error");
    } catch (const io_error& e) {
        CHECK(e.kind() == io_error::code::truncated);
    }
    std::vector<std::uint8_t> corrupted = bytes;
    corrupted[0] = 'X';
    try {
        decode_cdt(corrupted.data(), corrupted.size());
        FAIL("expected magic error");
    } catch (const io_error& e) {
        CHECK(e.kind() == io_error::code::bad_magic);
    }
    std::vector<std::uint8_t> bad_dtype = bytes;
    bad_dtype[4] = 9;
    try {
        decode_cdt(bad_dtype.data(), bad_dtype.size());
        FAIL("expected dtype error");
    } catch (const io_error& e) {
        CHECK(e.kind() == io_error::code::bad_dtype);
    }
}

TEST_CASE("preview images are valid binary PGM") {
    const fs::path dir = temp_dir("pgm");
    Tensor img = Tensor::zeros({1, 1, 2, 3});
    img[0] = -0.5f; // clamps to 0
    img[1] = 0.5f;
    img[2] = 2.0f; // clamps to 1
    write_pgm(dir / "x.pgm", img);
    const std::vector<std::uint8_t> bytes = read_all(dir / "x.pgm");
    const std::string header(bytes.begin(), bytes.begin() + 9);
    CHECK(header == "P5\n3 2\n25"); // "255\n" continues
    CHECK(bytes.size() == 11 + 6);
    CHECK(bytes[11] == 0);
    CHECK(bytes[12] == 128);
    CHECK(bytes[13] == 255);
}

TEST_CASE("block benchmark: degenerate noise, mask identity, sample statistics") {
    GaussianBlockSpec spec;
    spec.sigma0 = 0.0;
    spec.sigma1 = 0.0;
    spec.positive_fraction = 1.0;
    const std::vector<Sample> pure = gen_gaussian_blocks(spec, 8, 3);
    const Tensor mu1 = spec.mu1();
    for (const Sample& s : pure) {
        REQUIRE(s.label == 1);
        for (std::size_t i = 0; i < s.image.numel(); ++i) CHECK(s.image[i] == mu1[i]);
        // Mask equals the block rectangle bit for bit.
        const BinaryMask want = spec.block_mask();
        CHECK(s.mask.data == want.data);
    }

    // CLT bound on the positive-class sample mean.
    GaussianBlockSpec noisy;
    noisy.sigma0 = noisy.sigma1 = 0.1;
    noisy.positive_fraction = 1.0;
    const std::size_t n = 10000;
    const std::vector<Sample> many = gen_gaussian_blocks(noisy, n, 11);
    Tensor acc = Tensor::zeros(many.front().image.shape());
    for (const Sample& s : many)
        for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] += s.image[i];
    const Tensor want_mu = noisy.mu1();
    const double bound = 3.0 * 0.1 / std::sqrt(static_cast<double>(n));
    for (std::size_t i = 0; i < acc.numel(); ++i)
        CHECK(std::fabs(acc[i] / n - want_mu[i]) < bound * 1.5);

    GaussianBlockSpec bad;
    bad.block_x = 20;
    CHECK_THROWS_AS(gen_gaussian_blocks(bad, 4, 1), config_error);
}

TEST_CASE("shapes benchmark: balance, masks and determinism") {
    ShapesSpec spec;
    const std::vector<Sample> a = gen_shapes(spec, 1000, 21);
    std::size_t positives = 0;
    for (const Sample& s : a) {
        positives += s.label;
        if (s.label == 1) {
            CHECK(!s.mask.empty_mask());
        } else {
            CHECK(s.mask.empty_mask());
        }
    }
    // Binomial 3-sigma bound around 500.
    CHECK(positives >= 450);
    CHECK(positives <= 550);

    const std::vector<Sample> b = gen_shapes(spec, 50, 33);
    const std::vector<Sample> c = gen_shapes(spec, 50, 33);
    for (std::size_t i = 0; i < b.size(); ++i) {
        CHECK(b[i].label == c[i].label);
        for (std::size_t j = 0; j < b[i].image.numel(); ++j)
            CHECK(b[i].image[j] == c[i].image[j]);
    }

    // Ellipses stay inside the frame: boundary pixels of the mask never touch
    // the image border.
    for (const Sample& s : a) {
        if (s.label == 0) continue;
        for (std::size_t x = 0; x < spec.width; ++x) {
            CHECK(!s.mask.at(0, x));
            CHECK(!s.mask.at(spec.height - 1, x));
        }
    }
}

TEST_CASE("dataset writer emits byte-identical files across reruns") {
    ShapesSpec spec;
    const std::vector<Sample> samples = gen_shapes(spec, 24, 5);
    const fs::path d1 = temp_dir("ds1");
    const fs::path d2 = temp_dir("ds2");
    write_dataset(d1, samples, 0.8, 0.1, 5);
    write_dataset(d2, samples, 0.8, 0.1, 5);

    for (const auto& entry : fs::recursive_directory_iterator(d1)) {
        if (!entry.is_regular_file()) continue;
        const fs::path rel = fs::relative(entry.path(), d1);
        CHECK(read_all(entry.path()) == read_all(d2 / rel));
    }

    const std::vector<DatasetRecord> records = read_manifest(d1 / "manifest.jsonl");
    CHECK(records.size() == 24);
    for (const DatasetRecord& r : records) {
        CHECK((r.label == 1) == r.mask.has_value());
        CHECK(fs::exists(d1 / r.image));
        if (r.mask) CHECK(fs::exists(d1 / *r.mask));
    }
}

TEST_CASE("checkpoint container round trips models") {
    const fs::path dir = temp_dir("ckpt");
    TinyCondUNet model({8, 16, 16, 1}, 3);
    save_unet(dir / "m.ckpt", model);
    const auto back = load_unet(dir / "m.ckpt");
    for (auto& [name, p] : model.named_params()) {
        bool found = false;
        for (auto& [bname, bp] : back->named_params()) {
            if (bname != name) continue;
            found = true;
            REQUIRE(bp->shape() == p->shape());
            for (std::size_t i = 0; i < p->numel(); ++i) CHECK((*bp)[i] == (*p)[i]);
        }
        CHECK(found);
    }

    // Identical predictions after reload.
    Philox rng(9);
    const Tensor x = normal_tensor({1, 1, 8, 8}, rng);
    const ConditionEmbedding emb = model.condition_embedding();
    const Tensor a = model.predict(x, 5, emb.embed(1));
    const Tensor b = back->predict(x, 5, emb.embed(1));
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);

    // Analytic container loads as both model and classifier.
    const NoiseSchedule sched = NoiseSchedule::linear(10, 0.01, 0.1);
    save_analytic_model(dir / "a.ckpt", Tensor::full({1, 1, 4, 4}, 0.1f),
                        Tensor::full({1, 1, 4, 4}, 0.9f), 0.1, 0.2, 0.5);
    const LoadedEpsilonModel lm = load_epsilon_model(dir / "a.ckpt", sched);
    CHECK(lm.model->embedding_dim() == 2);
    const auto cls = load_noisy_classifier(dir / "a.ckpt", sched);
    const Tensor probe = Tensor::full({1, 1, 4, 4}, 0.9f);
    CHECK(std::exp(cls->log_prob(probe, 1, 1)) > 0.5);
}
