#pragma once

// Dataset handling: IDX (MNIST-style) and CIFAR-10 binary loaders plus the
// seeded synthetic generators used by the tests and the desk benchmark.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "shiftopt/network.hpp"

namespace shiftopt {

struct Sample {
    Eigen::VectorXd image;  // flattened channel-major c*h*w, values in [0, 1]
    int label = 0;
};

struct DatasetSplits {
    std::vector<Sample> train, val, test;
    int num_classes = 0;
    TensorShape input_shape;

    // Sizes positive, labels in range. Split disjointness is a property of
    // the constructors (they slice non-overlapping index ranges).
    void validate() const;
};

// Assembles a batch design matrix (rows = samples) plus the label vector.
void make_batch(const std::vector<Sample>& samples, const std::vector<int>& indices,
                std::size_t begin, std::size_t end, Matrix& x, std::vector<int>& y);

// IDX binary format: magic 0x00000803 (images, 3 dims) / 0x00000801 (labels),
// big-endian u32 dimensions, u8 payload.
std::vector<Eigen::VectorXd> load_idx_images(const std::string& path, TensorShape& shape);
std::vector<int> load_idx_labels(const std::string& path);

// Splits `train_count` + `val_count` samples off the training pair and
// `test_count` off the test pair.
DatasetSplits load_idx_splits(const std::string& train_images, const std::string& train_labels,
                              const std::string& test_images, const std::string& test_labels,
                              std::size_t train_count, std::size_t val_count,
                              std::size_t test_count);

// CIFAR-10 binary batches: 3073-byte records, 1 label byte + 3x32x32 pixels.
std::vector<Sample> load_cifar10_batch(const std::string& path);
DatasetSplits load_cifar10_splits(const std::vector<std::string>& batch_paths,
                                  std::size_t train_count, std::size_t val_count,
                                  std::size_t test_count);

// Gaussian class blobs rendered to images: each class owns a fixed set of
// bumps; samples jitter the bump centers and add pixel noise. Deterministic
// in `seed`; the three splits draw from disjoint sample streams.
DatasetSplits make_synthetic_blobs(int num_classes, int height, int width, std::size_t train_count,
                                   std::size_t val_count, std::size_t test_count,
                                   std::uint64_t seed, double noise = 0.1);

// Linearly separable point clouds (features stored as 1x1xF "images");
// used by the optimizer sanity checks.
DatasetSplits make_separable_points(int num_classes, int features, std::size_t train_count,
                                    std::size_t val_count, std::size_t test_count,
                                    std::uint64_t seed);

}  // namespace shiftopt
