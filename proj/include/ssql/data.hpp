#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssql/rng.hpp"
#include "ssql/tensor.hpp"

namespace ssql {

// Malformed input files (sizes, magic bytes, label ranges).
struct FormatError : Error {
    using Error::Error;
};

// In-memory dataset. Images are row-major [N, channels*size*size] floats in
// [0,1], stored plane-major per image (all of channel 0, then channel 1, ...).
// norm_mean/norm_std are per-channel statistics of the train split; callers
// normalize with them, the stored pixels stay raw.
struct DatasetHandle {
    int image_size = 0;
    int channels = 0;
    int num_classes = 0;

    std::vector<float> train_images;
    std::vector<int> train_labels;
    std::vector<float> test_images;
    std::vector<int> test_labels;

    std::vector<float> norm_mean;
    std::vector<float> norm_std;

    size_t pixels_per_image() const {
        return static_cast<size_t>(channels) * image_size * image_size;
    }
    int train_count() const { return static_cast<int>(train_labels.size()); }
    int test_count() const { return static_cast<int>(test_labels.size()); }
    const float* train_image(int i) const { return train_images.data() + pixels_per_image() * i; }
    const float* test_image(int i) const { return test_images.data() + pixels_per_image() * i; }

    void validate() const;
};

// Fills norm_mean/norm_std from the train split (population std, double
// accumulation). Degenerate channels get std 1 so normalization stays finite.
void compute_norm_stats(DatasetHandle& d);

// Reads the standard binary batches (data_batch_1..5.bin + test_batch.bin,
// each record 1 label byte + 3072 pixel bytes as R,G,B planes). `dir` may be
// the batch directory itself or its parent containing cifar-10-batches-bin.
// Record count per file is derived from the file size; a size that is not a
// whole number of records is a FormatError naming expected and actual bytes.
DatasetHandle load_cifar10(const std::string& dir);

// Seeded stratified sample of the train split, test split kept whole.
// n must be divisible by num_classes and available per class. Rows of the
// result are interleaved round-robin over classes so every prefix is
// approximately stratified too.
DatasetHandle stratified_subset(const DatasetHandle& d, int n, uint64_t seed);

// Class-conditional Gaussian-blob images: each class owns a fixed set of
// blobs (position, width, per-channel amplitude); samples are
//   clamp(0.5 + 0.25*separation*template + noise_std*eps, 0, 1)
// with the template standardized to zero mean / unit std over pixels.
// separation 0 makes every class pure noise.
struct SyntheticSpec {
    int num_classes = 4;
    int train_per_class = 125;
    int test_per_class = 50;
    int image_size = 12;
    int channels = 3;
    int blobs_per_class = 3;
    float separation = 1.0f;
    float noise_std = 0.15f;

    void validate() const;
    std::string to_text() const;
    static SyntheticSpec from_text(const std::string& text);
};

DatasetHandle gen_synthetic(const SyntheticSpec& spec, uint64_t seed);

}  // namespace ssql
