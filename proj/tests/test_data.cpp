#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "ssql/augment.hpp"
#include "ssql/data.hpp"

using namespace ssql;
namespace fs = std::filesystem;

namespace {

uint8_t fixture_byte(int file, int record, size_t p) {
    return static_cast<uint8_t>((record * 31 + p * 7 + file * 13) % 256);
}

// Standard batch layout, but with `records` records per file so fixtures stay
// tiny. Returns the directory containing the six .bin files.
fs::path write_cifar_fixture(const std::string& name, int records) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::create_directories(dir);
    const char* names[] = {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin",
                           "data_batch_4.bin", "data_batch_5.bin", "test_batch.bin"};
    for (int f = 0; f < 6; ++f) {
        std::ofstream out(dir / names[f], std::ios::binary | std::ios::trunc);
        for (int r = 0; r < records; ++r) {
            out.put(static_cast<char>((f + r) % 10));
            for (size_t p = 0; p < 3072; ++p)
                out.put(static_cast<char>(fixture_byte(f, r, p)));
        }
    }
    return dir;
}

std::vector<float> mirror(const std::vector<float>& img, int channels, int size) {
    std::vector<float> out(img.size());
    size_t plane = static_cast<size_t>(size) * size;
    for (int c = 0; c < channels; ++c)
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                out[c * plane + y * size + x] = img[c * plane + y * size + (size - 1 - x)];
    return out;
}

std::vector<float> random_image(int channels, int size, uint64_t seed) {
    Pcg32 rng(seed, 99);
    std::vector<float> img(static_cast<size_t>(channels) * size * size);
    for (float& v : img) v = rng.uniform();
    return img;
}

}  // namespace

TEST_CASE("cifar loader: crafted bytes round-trip to pixels/255") {
    fs::path dir = write_cifar_fixture("ssql_cifar_ok", 2);
    DatasetHandle d = load_cifar10(dir.string());
    CHECK(d.train_count() == 10);
    CHECK(d.test_count() == 2);
    CHECK(d.image_size == 32);
    CHECK(d.channels == 3);
    CHECK(d.num_classes == 10);

    // data_batch_1 record 0 is train image 0; batches append in order.
    CHECK(d.train_labels[0] == 0);
    CHECK(d.train_labels[1] == 1);
    CHECK(d.train_labels[2] == 1);  // data_batch_2 record 0
    CHECK(d.test_labels[0] == 5);
    for (size_t p : {size_t(0), size_t(1), size_t(1023), size_t(1024), size_t(3071)}) {
        float expect = static_cast<float>(fixture_byte(0, 0, p)) * (1.0f / 255.0f);
        CHECK(d.train_image(0)[p] == expect);
    }
    for (size_t p : {size_t(5), size_t(2048)}) {
        float expect = static_cast<float>(fixture_byte(5, 1, p)) * (1.0f / 255.0f);
        CHECK(d.test_image(1)[p] == expect);
    }
    // Third image comes from file 2 (data_batch_2), record 0.
    CHECK(d.train_image(2)[7] == static_cast<float>(fixture_byte(1, 0, 7)) * (1.0f / 255.0f));
}

TEST_CASE("cifar loader: parent directory containing cifar-10-batches-bin works") {
    fs::path parent = fs::temp_directory_path() / "ssql_cifar_parent";
    fs::create_directories(parent);
    fs::path inner = parent / "cifar-10-batches-bin";
    fs::create_directories(inner);
    const char* names[] = {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin",
                           "data_batch_4.bin", "data_batch_5.bin", "test_batch.bin"};
    fs::path src = write_cifar_fixture("ssql_cifar_ok2", 1);
    for (const char* n : names) fs::copy_file(src / n, inner / n, fs::copy_options::overwrite_existing);
    DatasetHandle d = load_cifar10(parent.string());
    CHECK(d.train_count() == 5);
}

TEST_CASE("cifar loader: truncated file is a format error naming byte counts") {
    fs::path dir = write_cifar_fixture("ssql_cifar_bad", 2);
    // Chop the last file to a non-multiple of the record size.
    fs::resize_file(dir / "test_batch.bin", 2 * 3073 - 100);
    try {
        load_cifar10(dir.string());
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        std::string msg = e.what();
        CHECK(msg.find("3073") != std::string::npos);
        CHECK(msg.find(std::to_string(2 * 3073 - 100)) != std::string::npos);
    }
}

TEST_CASE("cifar loader: missing file and bad label are format errors") {
    fs::path dir = write_cifar_fixture("ssql_cifar_missing", 1);
    fs::remove(dir / "data_batch_4.bin");
    CHECK_THROWS_AS(load_cifar10(dir.string()), FormatError);

    fs::path dir2 = write_cifar_fixture("ssql_cifar_badlabel", 1);
    {
        std::fstream f(dir2 / "data_batch_1.bin",
                       std::ios::binary | std::ios::in | std::ios::out);
        f.put(static_cast<char>(37));
    }
    CHECK_THROWS_AS(load_cifar10(dir2.string()), FormatError);
}

TEST_CASE("stratified subset: exact per-class counts, round-robin rows") {
    SyntheticSpec spec;
    spec.num_classes = 5;
    spec.train_per_class = 20;
    spec.test_per_class = 4;
    spec.image_size = 6;
    spec.channels = 2;
    DatasetHandle d = gen_synthetic(spec, 11);

    DatasetHandle s = stratified_subset(d, 25, 7);
    CHECK(s.train_count() == 25);
    CHECK(s.test_count() == d.test_count());
    std::vector<int> counts(5, 0);
    for (int i = 0; i < s.train_count(); ++i) {
        counts[s.train_labels[i]]++;
        CHECK(s.train_labels[i] == i % 5);
    }
    for (int c : counts) CHECK(c == 5);

    // Every subset row is an actual train row with a matching label.
    size_t pp = d.pixels_per_image();
    for (int i = 0; i < s.train_count(); ++i) {
        bool found = false;
        for (int j = 0; j < d.train_count() && !found; ++j) {
            if (d.train_labels[j] != s.train_labels[i]) continue;
            found = std::equal(s.train_image(i), s.train_image(i) + pp, d.train_image(j));
        }
        CHECK(found);
    }
}

TEST_CASE("stratified subset: seed determinism and input validation") {
    SyntheticSpec spec;
    spec.num_classes = 4;
    spec.train_per_class = 10;
    spec.test_per_class = 2;
    spec.image_size = 5;
    DatasetHandle d = gen_synthetic(spec, 3);

    DatasetHandle a = stratified_subset(d, 20, 42);
    DatasetHandle b = stratified_subset(d, 20, 42);
    CHECK(a.train_images == b.train_images);
    CHECK(a.train_labels == b.train_labels);
    DatasetHandle c = stratified_subset(d, 20, 43);
    CHECK(a.train_images != c.train_images);

    CHECK_THROWS(stratified_subset(d, 21, 1));   // not divisible by classes
    CHECK_THROWS(stratified_subset(d, 0, 1));
    CHECK_THROWS(stratified_subset(d, 44, 1));   // exceeds train count
}

TEST_CASE("synthetic: determinism, range, labels") {
    SyntheticSpec spec;
    spec.num_classes = 3;
    spec.train_per_class = 8;
    spec.test_per_class = 3;
    spec.image_size = 7;
    DatasetHandle a = gen_synthetic(spec, 5);
    DatasetHandle b = gen_synthetic(spec, 5);
    CHECK(a.train_images == b.train_images);
    CHECK(a.test_images == b.test_images);
    DatasetHandle c = gen_synthetic(spec, 6);
    CHECK(a.train_images != c.train_images);

    for (float v : a.train_images) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    for (int i = 0; i < a.train_count(); ++i) CHECK(a.train_labels[i] == i % 3);
    for (int i = 0; i < a.test_count(); ++i) CHECK(a.test_labels[i] == i % 3);
}

TEST_CASE("synthetic: separation 0 scores at chance, huge separation is trivial") {
    SyntheticSpec spec;
    spec.num_classes = 4;
    spec.train_per_class = 100;
    spec.test_per_class = 150;
    spec.image_size = 8;
    spec.channels = 3;
    spec.separation = 0.0f;
    DatasetHandle noise = gen_synthetic(spec, 21);
    int dim = static_cast<int>(noise.pixels_per_image());
    double acc0 = oracle::logistic_probe(noise.train_images, noise.train_labels,
                                         noise.test_images, noise.test_labels, 4, dim);
    CHECK(std::abs(acc0 - 0.25) < 0.05);

    spec.separation = 8.0f;
    spec.noise_std = 0.05f;
    spec.train_per_class = 30;
    spec.test_per_class = 30;
    DatasetHandle easy = gen_synthetic(spec, 22);
    double acc1 = oracle::logistic_probe(easy.train_images, easy.train_labels, easy.test_images,
                                         easy.test_labels, 4, dim);
    CHECK(acc1 == 1.0);
}

TEST_CASE("synthetic: spec text round-trip") {
    SyntheticSpec spec;
    spec.num_classes = 7;
    spec.train_per_class = 13;
    spec.separation = 2.5f;
    spec.noise_std = 0.02f;
    SyntheticSpec back = SyntheticSpec::from_text(spec.to_text());
    CHECK(back.to_text() == spec.to_text());
    CHECK(back.num_classes == 7);
    CHECK(back.separation == doctest::Approx(2.5f));
    CHECK_THROWS(SyntheticSpec::from_text("bogus_key=1"));
}

TEST_CASE("norm stats match a direct recomputation") {
    SyntheticSpec spec;
    spec.num_classes = 2;
    spec.train_per_class = 6;
    spec.test_per_class = 2;
    spec.image_size = 5;
    spec.channels = 3;
    DatasetHandle d = gen_synthetic(spec, 9);
    size_t plane = static_cast<size_t>(d.image_size) * d.image_size;
    for (int c = 0; c < 3; ++c) {
        double sum = 0.0, sq = 0.0;
        size_t count = 0;
        for (int i = 0; i < d.train_count(); ++i) {
            const float* px = d.train_image(i) + c * plane;
            for (size_t p = 0; p < plane; ++p) {
                sum += px[p];
                sq += static_cast<double>(px[p]) * px[p];
                ++count;
            }
        }
        double mean = sum / count;
        double sd = std::sqrt(sq / count - mean * mean);
        CHECK(d.norm_mean[c] == doctest::Approx(mean).epsilon(1e-5));
        CHECK(d.norm_std[c] == doctest::Approx(sd).epsilon(1e-5));
    }
}

TEST_CASE("augment: identity config is an exact copy for both views") {
    auto img = random_image(3, 8, 1);
    std::vector<float> v1(img.size()), v2(img.size());
    Pcg32 rng = make_rng(4, RngStream::augment);
    augment_two_views(img.data(), v1.data(), v2.data(), 3, 8, AugmentConfig::identity(), rng);
    CHECK(v1 == img);
    CHECK(v2 == img);
}

TEST_CASE("augment: seeded rng reproduces identical views") {
    auto img = random_image(3, 16, 2);
    AugmentConfig cfg;  // full pipeline
    std::vector<float> a1(img.size()), a2(img.size()), b1(img.size()), b2(img.size());
    Pcg32 r1 = make_rng(123, RngStream::augment);
    Pcg32 r2 = make_rng(123, RngStream::augment);
    augment_two_views(img.data(), a1.data(), a2.data(), 3, 16, cfg, r1);
    augment_two_views(img.data(), b1.data(), b2.data(), 3, 16, cfg, r2);
    CHECK(a1 == b1);
    CHECK(a2 == b2);
    CHECK(a1 != a2);  // two independent draws
    Pcg32 r3 = make_rng(124, RngStream::augment);
    std::vector<float> c1(img.size()), c2(img.size());
    augment_two_views(img.data(), c1.data(), c2.data(), 3, 16, cfg, r3);
    CHECK(a1 != c1);
}

TEST_CASE("augment: flip-only pipeline hits p=0.5 over 1000 draws") {
    auto img = random_image(3, 8, 3);
    auto mirrored = mirror(img, 3, 8);
    AugmentConfig cfg = AugmentConfig::identity();
    cfg.hflip_p = 0.5f;
    Pcg32 rng = make_rng(7, RngStream::augment);
    std::vector<float> out(img.size());
    int flips = 0;
    for (int i = 0; i < 1000; ++i) {
        augment_image(img.data(), out.data(), 3, 8, cfg, rng);
        if (out == mirrored)
            ++flips;
        else
            CHECK(out == img);
    }
    CHECK(std::abs(flips / 1000.0 - 0.5) < 0.03);
}

TEST_CASE("augment: full pipeline keeps values in [0,1] and shape fixed") {
    AugmentConfig cfg;
    Pcg32 rng = make_rng(55, RngStream::augment);
    for (int trial = 0; trial < 50; ++trial) {
        auto img = random_image(3, 12, 100 + trial);
        std::vector<float> out(img.size());
        augment_image(img.data(), out.data(), 3, 12, cfg, rng);
        CHECK(out.size() == img.size());
        for (float v : out) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
    }
}

TEST_CASE("augment: full-area unit-ratio crop is exact identity") {
    auto img = random_image(2, 9, 8);
    AugmentConfig cfg = AugmentConfig::identity();
    cfg.crop = true;
    cfg.crop_scale_min = cfg.crop_scale_max = 1.0f;
    cfg.crop_ratio_min = cfg.crop_ratio_max = 1.0f;
    Pcg32 rng = make_rng(9, RngStream::augment);
    std::vector<float> out(img.size());
    augment_image(img.data(), out.data(), 2, 9, cfg, rng);
    CHECK(out == img);
}

TEST_CASE("augment: pad-crop matches a hand shift with replicated draws") {
    auto img = random_image(1, 4, 10);
    AugmentConfig cfg = AugmentConfig::identity();
    cfg.pad_crop = true;
    cfg.pad = 1;
    Pcg32 rng = make_rng(31, RngStream::augment);
    Pcg32 shadow = rng;
    for (int trial = 0; trial < 20; ++trial) {
        int top = shadow.randint(3);
        int left = shadow.randint(3);
        std::vector<float> expect(img.size(), 0.0f);
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) {
                int sy = y + top - 1, sx = x + left - 1;
                if (sy >= 0 && sy < 4 && sx >= 0 && sx < 4) expect[y * 4 + x] = img[sy * 4 + sx];
            }
        std::vector<float> out(img.size());
        augment_image(img.data(), out.data(), 1, 4, cfg, rng);
        CHECK(out == expect);
        CHECK(rng == shadow);
    }
}

TEST_CASE("augment: jitter with zero magnitudes is identity") {
    auto img = random_image(3, 6, 12);
    AugmentConfig cfg = AugmentConfig::identity();
    cfg.jitter_p = 1.0f;
    cfg.brightness = cfg.contrast = cfg.saturation = cfg.hue = 0.0f;
    Pcg32 rng = make_rng(2, RngStream::augment);
    std::vector<float> out(img.size());
    augment_image(img.data(), out.data(), 3, 6, cfg, rng);
    CHECK(out == img);
}

TEST_CASE("augment: brightness-only jitter matches replicated scale") {
    auto img = random_image(3, 5, 13);
    AugmentConfig cfg = AugmentConfig::identity();
    cfg.jitter_p = 1.0f;
    cfg.brightness = 0.4f;
    cfg.contrast = cfg.saturation = cfg.hue = 0.0f;
    Pcg32 rng = make_rng(77, RngStream::augment);
    Pcg32 shadow = rng;
    float gate = shadow.uniform();
    CHECK(gate < 1.0f);
    std::vector<int> perm{0, 1, 2, 3};
    shadow.shuffle(perm);
    float f = shadow.uniform(0.6f, 1.4f);
    std::vector<float> out(img.size());
    augment_image(img.data(), out.data(), 3, 5, cfg, rng);
    for (size_t i = 0; i < img.size(); ++i)
        CHECK(out[i] == doctest::Approx(std::clamp(img[i] * f, 0.0f, 1.0f)).epsilon(1e-6));
}

TEST_CASE("augment: contrast is identity on a constant image") {
    std::vector<float> img(3 * 6 * 6, 0.42f);
    AugmentConfig cfg = AugmentConfig::identity();
    cfg.jitter_p = 1.0f;
    cfg.contrast = 0.4f;
    cfg.brightness = cfg.saturation = cfg.hue = 0.0f;
    Pcg32 rng = make_rng(14, RngStream::augment);
    std::vector<float> out(img.size());
    augment_image(img.data(), out.data(), 3, 6, cfg, rng);
    for (float v : out) CHECK(v == doctest::Approx(0.42f).epsilon(1e-6));
}

TEST_CASE("augment: hue and saturation leave gray pixels untouched") {
    std::vector<float> img(3 * 4 * 4);
    Pcg32 noise(5, 5);
    for (size_t p = 0; p < 16; ++p) {
        float g = noise.uniform();
        img[p] = img[16 + p] = img[32 + p] = g;
    }
    AugmentConfig cfg = AugmentConfig::identity();
    cfg.jitter_p = 1.0f;
    cfg.brightness = cfg.contrast = 0.0f;
    cfg.saturation = 0.4f;
    cfg.hue = 0.1f;
    Pcg32 rng = make_rng(6, RngStream::augment);
    std::vector<float> out(img.size());
    augment_image(img.data(), out.data(), 3, 4, cfg, rng);
    for (size_t i = 0; i < img.size(); ++i) CHECK(out[i] == doctest::Approx(img[i]).epsilon(1e-5));
}

TEST_CASE("augment: grayscale output has equal channels matching luma") {
    auto img = random_image(3, 5, 20);
    AugmentConfig cfg = AugmentConfig::identity();
    cfg.grayscale_p = 1.0f;
    Pcg32 rng = make_rng(8, RngStream::augment);
    std::vector<float> out(img.size());
    augment_image(img.data(), out.data(), 3, 5, cfg, rng);
    size_t plane = 25;
    for (size_t p = 0; p < plane; ++p) {
        float g = 0.299f * img[p] + 0.587f * img[plane + p] + 0.114f * img[2 * plane + p];
        CHECK(out[p] == doctest::Approx(g).epsilon(1e-6));
        CHECK(out[p] == out[plane + p]);
        CHECK(out[p] == out[2 * plane + p]);
    }
}

TEST_CASE("normalize_image applies per-channel affine") {
    std::vector<float> img{1.0f, 2.0f, 3.0f, 4.0f,   // channel 0
                           5.0f, 6.0f, 7.0f, 8.0f};  // channel 1
    float mean[] = {2.0f, 6.0f};
    float stdv[] = {2.0f, 4.0f};
    normalize_image(img.data(), 2, 2, mean, stdv);
    CHECK(img[0] == doctest::Approx(-0.5f));
    CHECK(img[3] == doctest::Approx(1.0f));
    CHECK(img[4] == doctest::Approx(-0.25f));
    CHECK(img[7] == doctest::Approx(0.5f));
}

TEST_CASE("augment rejects aliased buffers") {
    std::vector<float> img(3 * 4 * 4, 0.5f);
    Pcg32 rng = make_rng(1, RngStream::augment);
    CHECK_THROWS(augment_image(img.data(), img.data(), 3, 4, AugmentConfig::identity(), rng));
}
