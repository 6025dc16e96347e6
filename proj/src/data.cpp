#include "ssql/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace ssql {

void DatasetHandle::validate() const {
    check(image_size > 0 && channels > 0 && num_classes > 0, "dataset: empty geometry");
    check(train_images.size() == pixels_per_image() * train_labels.size(),
          "dataset: train image/label count mismatch");
    check(test_images.size() == pixels_per_image() * test_labels.size(),
          "dataset: test image/label count mismatch");
    for (int y : train_labels)
        check(y >= 0 && y < num_classes, "dataset: train label out of range");
    for (int y : test_labels)
        check(y >= 0 && y < num_classes, "dataset: test label out of range");
    check(norm_mean.size() == static_cast<size_t>(channels) &&
              norm_std.size() == static_cast<size_t>(channels),
          "dataset: normalization stats missing");
}

void compute_norm_stats(DatasetHandle& d) {
    const size_t plane = static_cast<size_t>(d.image_size) * d.image_size;
    const size_t n = d.train_labels.size();
    d.norm_mean.assign(d.channels, 0.0f);
    d.norm_std.assign(d.channels, 1.0f);
    if (n == 0) return;
    for (int c = 0; c < d.channels; ++c) {
        double sum = 0.0, sum_sq = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const float* px = d.train_images.data() + i * d.pixels_per_image() + c * plane;
            for (size_t p = 0; p < plane; ++p) {
                double v = px[p];
                sum += v;
                sum_sq += v * v;
            }
        }
        double count = static_cast<double>(n) * plane;
        double mean = sum / count;
        double var = std::max(0.0, sum_sq / count - mean * mean);
        double sd = std::sqrt(var);
        d.norm_mean[c] = static_cast<float>(mean);
        d.norm_std[c] = sd < 1e-3 ? 1.0f : static_cast<float>(sd);
    }
}

namespace {

constexpr size_t kCifarRecordBytes = 1 + 3 * 32 * 32;

// Appends one batch file worth of records. Count is derived from the size so
// hand-crafted short fixtures load too.
void read_cifar_file(const std::filesystem::path& path, std::vector<float>& images,
                     std::vector<int>& labels) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path.string());
    f.seekg(0, std::ios::end);
    const auto size = static_cast<size_t>(f.tellg());
    f.seekg(0, std::ios::beg);
    if (size == 0 || size % kCifarRecordBytes != 0) {
        size_t below = (size / kCifarRecordBytes) * kCifarRecordBytes;
        std::ostringstream msg;
        msg << path.string() << ": size " << size << " bytes is not a whole number of "
            << kCifarRecordBytes << "-byte records (1 label byte + 3072 pixel bytes); nearest "
            << "valid sizes are " << below << " and " << (below + kCifarRecordBytes);
        throw FormatError(msg.str());
    }
    const size_t records = size / kCifarRecordBytes;
    std::vector<unsigned char> raw(size);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(size));
    if (!f)
        throw FormatError(path.string() + ": short read, expected " + std::to_string(size) +
                          " bytes");
    images.reserve(images.size() + records * 3072);
    labels.reserve(labels.size() + records);
    for (size_t r = 0; r < records; ++r) {
        const unsigned char* rec = raw.data() + r * kCifarRecordBytes;
        int label = rec[0];
        if (label > 9)
            throw FormatError(path.string() + ": record " + std::to_string(r) + " has label " +
                              std::to_string(label) + ", expected 0..9");
        labels.push_back(label);
        for (size_t p = 0; p < 3072; ++p)
            images.push_back(static_cast<float>(rec[1 + p]) * (1.0f / 255.0f));
    }
}

}  // namespace

DatasetHandle load_cifar10(const std::string& dir) {
    namespace fs = std::filesystem;
    fs::path root(dir);
    if (!fs::exists(root / "data_batch_1.bin") && fs::exists(root / "cifar-10-batches-bin"))
        root /= "cifar-10-batches-bin";
    DatasetHandle d;
    d.image_size = 32;
    d.channels = 3;
    d.num_classes = 10;
    for (int b = 1; b <= 5; ++b)
        read_cifar_file(root / ("data_batch_" + std::to_string(b) + ".bin"), d.train_images,
                        d.train_labels);
    read_cifar_file(root / "test_batch.bin", d.test_images, d.test_labels);
    compute_norm_stats(d);
    d.validate();
    return d;
}

DatasetHandle stratified_subset(const DatasetHandle& d, int n, uint64_t seed) {
    check(n > 0 && n <= d.train_count(), "subset: n out of range");
    check(n % d.num_classes == 0, "subset: n must be divisible by the class count");
    const int per_class = n / d.num_classes;

    std::vector<std::vector<int>> by_class(d.num_classes);
    for (int i = 0; i < d.train_count(); ++i) by_class[d.train_labels[i]].push_back(i);

    Pcg32 rng = make_rng(seed, RngStream::shuffle);
    for (auto& idx : by_class) {
        check(static_cast<int>(idx.size()) >= per_class,
              "subset: a class has fewer than n/num_classes train samples");
        rng.shuffle(idx);
        idx.resize(per_class);
        std::sort(idx.begin(), idx.end());
    }

    DatasetHandle out;
    out.image_size = d.image_size;
    out.channels = d.channels;
    out.num_classes = d.num_classes;
    out.test_images = d.test_images;
    out.test_labels = d.test_labels;
    out.train_images.reserve(static_cast<size_t>(n) * d.pixels_per_image());
    out.train_labels.reserve(n);
    for (int k = 0; k < per_class; ++k) {
        for (int c = 0; c < d.num_classes; ++c) {
            int i = by_class[c][k];
            const float* px = d.train_image(i);
            out.train_images.insert(out.train_images.end(), px, px + d.pixels_per_image());
            out.train_labels.push_back(c);
        }
    }
    compute_norm_stats(out);
    out.validate();
    return out;
}

void SyntheticSpec::validate() const {
    check(num_classes >= 2, "synthetic: need at least 2 classes");
    check(train_per_class >= 1 && test_per_class >= 0, "synthetic: sample counts");
    check(image_size >= 2 && channels >= 1, "synthetic: geometry");
    check(blobs_per_class >= 1, "synthetic: blobs_per_class >= 1");
    check(separation >= 0.0f && noise_std >= 0.0f, "synthetic: separation/noise must be >= 0");
}

std::string SyntheticSpec::to_text() const {
    std::ostringstream s;
    s << "num_classes=" << num_classes << ";train_per_class=" << train_per_class
      << ";test_per_class=" << test_per_class << ";image_size=" << image_size
      << ";channels=" << channels << ";blobs_per_class=" << blobs_per_class
      << ";separation=" << separation << ";noise_std=" << noise_std;
    return s.str();
}

SyntheticSpec SyntheticSpec::from_text(const std::string& text) {
    SyntheticSpec spec;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ';')) {
        if (item.empty()) continue;
        auto eq = item.find('=');
        check(eq != std::string::npos, "synthetic spec: expected key=value, got '" + item + "'");
        std::string key = item.substr(0, eq);
        std::string val = item.substr(eq + 1);
        if (key == "num_classes") spec.num_classes = std::stoi(val);
        else if (key == "train_per_class") spec.train_per_class = std::stoi(val);
        else if (key == "test_per_class") spec.test_per_class = std::stoi(val);
        else if (key == "image_size") spec.image_size = std::stoi(val);
        else if (key == "channels") spec.channels = std::stoi(val);
        else if (key == "blobs_per_class") spec.blobs_per_class = std::stoi(val);
        else if (key == "separation") spec.separation = std::stof(val);
        else if (key == "noise_std") spec.noise_std = std::stof(val);
        else throw Error("synthetic spec: unknown key '" + key + "'");
    }
    spec.validate();
    return spec;
}

namespace {

struct Blob {
    float cx, cy, sigma;
    std::vector<float> amp;  // per channel
};

// Standardized over all pixels so `separation` has a fixed meaning.
std::vector<float> class_template(const SyntheticSpec& spec, const std::vector<Blob>& blobs) {
    const int s = spec.image_size;
    std::vector<float> t(static_cast<size_t>(spec.channels) * s * s, 0.0f);
    for (const Blob& b : blobs) {
        float inv = 1.0f / (2.0f * b.sigma * b.sigma);
        for (int y = 0; y < s; ++y) {
            for (int x = 0; x < s; ++x) {
                float dx = static_cast<float>(x) - b.cx;
                float dy = static_cast<float>(y) - b.cy;
                float g = std::exp(-(dx * dx + dy * dy) * inv);
                for (int c = 0; c < spec.channels; ++c)
                    t[(static_cast<size_t>(c) * s + y) * s + x] += b.amp[c] * g;
            }
        }
    }
    double sum = 0.0, sum_sq = 0.0;
    for (float v : t) {
        sum += v;
        sum_sq += static_cast<double>(v) * v;
    }
    double mean = sum / static_cast<double>(t.size());
    double sd = std::sqrt(std::max(1e-12, sum_sq / static_cast<double>(t.size()) - mean * mean));
    for (float& v : t) v = static_cast<float>((v - mean) / sd);
    return t;
}

}  // namespace

DatasetHandle gen_synthetic(const SyntheticSpec& spec, uint64_t seed) {
    spec.validate();
    Pcg32 rng = make_rng(seed, RngStream::synthetic);
    const int s = spec.image_size;

    std::vector<std::vector<float>> templates;
    templates.reserve(spec.num_classes);
    for (int c = 0; c < spec.num_classes; ++c) {
        std::vector<Blob> blobs(spec.blobs_per_class);
        for (Blob& b : blobs) {
            b.cx = rng.uniform(0.15f, 0.85f) * static_cast<float>(s - 1);
            b.cy = rng.uniform(0.15f, 0.85f) * static_cast<float>(s - 1);
            b.sigma = rng.uniform(0.08f, 0.18f) * static_cast<float>(s);
            b.amp.resize(spec.channels);
            for (float& a : b.amp) a = rng.uniform(-1.0f, 1.0f);
        }
        templates.push_back(class_template(spec, blobs));
    }

    DatasetHandle d;
    d.image_size = s;
    d.channels = spec.channels;
    d.num_classes = spec.num_classes;
    const size_t pp = d.pixels_per_image();

    // Rows are round-robin over classes so any prefix is near-stratified and
    // sequential batches mix classes.
    auto fill_split = [&](int per_class, std::vector<float>& images, std::vector<int>& labels) {
        const int n = per_class * spec.num_classes;
        images.resize(static_cast<size_t>(n) * pp);
        labels.resize(n);
        for (int i = 0; i < n; ++i) {
            int cls = i % spec.num_classes;
            labels[i] = cls;
            float* dst = images.data() + static_cast<size_t>(i) * pp;
            const float* t = templates[cls].data();
            for (size_t p = 0; p < pp; ++p) {
                float v = 0.5f + 0.25f * spec.separation * t[p] + spec.noise_std * rng.normal();
                dst[p] = std::clamp(v, 0.0f, 1.0f);
            }
        }
    };
    fill_split(spec.train_per_class, d.train_images, d.train_labels);
    fill_split(spec.test_per_class, d.test_images, d.test_labels);
    compute_norm_stats(d);
    d.validate();
    return d;
}

}  // namespace ssql
