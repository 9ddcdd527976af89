#include "shiftopt/data.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace shiftopt {

void DatasetSplits::validate() const {
    if (num_classes < 2) throw std::invalid_argument("dataset: need at least 2 classes");
    if (train.empty() || val.empty() || test.empty())
        throw std::invalid_argument("dataset: every split needs at least one sample");
    auto check = [&](const std::vector<Sample>& split, const char* name) {
        for (const auto& s : split) {
            if (s.label < 0 || s.label >= num_classes) {
                std::ostringstream oss;
                oss << "dataset: label " << s.label << " out of range in " << name << " split";
                throw std::invalid_argument(oss.str());
            }
            if (s.image.size() != input_shape.features())
                throw std::invalid_argument("dataset: sample feature size mismatch");
        }
    };
    check(train, "train");
    check(val, "val");
    check(test, "test");
}

void make_batch(const std::vector<Sample>& samples, const std::vector<int>& indices,
                std::size_t begin, std::size_t end, Matrix& x, std::vector<int>& y) {
    const auto n = end - begin;
    x.resize(static_cast<Eigen::Index>(n), samples[0].image.size());
    y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Sample& s = samples[static_cast<std::size_t>(indices[begin + i])];
        x.row(static_cast<Eigen::Index>(i)) = s.image.transpose();
        y[i] = s.label;
    }
}

// ---------------------------------------------------------------------------
// IDX loader
// ---------------------------------------------------------------------------

namespace {

std::uint32_t read_be_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("idx: truncated header in '" + path + "'");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

}  // namespace

std::vector<Eigen::VectorXd> load_idx_images(const std::string& path, TensorShape& shape) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("idx: cannot open '" + path + "'");
    const std::uint32_t magic = read_be_u32(in, path);
    if (magic != 0x00000803u) {
        std::ostringstream oss;
        oss << "idx: bad image magic 0x" << std::hex << magic << " in '" << path << "'";
        throw std::runtime_error(oss.str());
    }
    const std::uint32_t count = read_be_u32(in, path);
    const std::uint32_t rows = read_be_u32(in, path);
    const std::uint32_t cols = read_be_u32(in, path);
    shape = TensorShape{1, static_cast<int>(rows), static_cast<int>(cols)};

    std::vector<Eigen::VectorXd> images(count);
    std::vector<unsigned char> buf(static_cast<std::size_t>(rows) * cols);
    for (std::uint32_t i = 0; i < count; ++i) {
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!in) throw std::runtime_error("idx: truncated image payload in '" + path + "'");
        Eigen::VectorXd v(buf.size());
        for (std::size_t p = 0; p < buf.size(); ++p) v[static_cast<Eigen::Index>(p)] = buf[p] / 255.0;
        images[i] = std::move(v);
    }
    return images;
}

std::vector<int> load_idx_labels(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("idx: cannot open '" + path + "'");
    const std::uint32_t magic = read_be_u32(in, path);
    if (magic != 0x00000801u) {
        std::ostringstream oss;
        oss << "idx: bad label magic 0x" << std::hex << magic << " in '" << path << "'";
        throw std::runtime_error(oss.str());
    }
    const std::uint32_t count = read_be_u32(in, path);
    std::vector<unsigned char> buf(count);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count));
    if (!in) throw std::runtime_error("idx: truncated label payload in '" + path + "'");
    return std::vector<int>(buf.begin(), buf.end());
}

DatasetSplits load_idx_splits(const std::string& train_images, const std::string& train_labels,
                              const std::string& test_images, const std::string& test_labels,
                              std::size_t train_count, std::size_t val_count,
                              std::size_t test_count) {
    DatasetSplits ds;
    TensorShape shape_train, shape_test;
    auto tr_imgs = load_idx_images(train_images, shape_train);
    auto tr_lbls = load_idx_labels(train_labels);
    auto te_imgs = load_idx_images(test_images, shape_test);
    auto te_lbls = load_idx_labels(test_labels);
    if (tr_imgs.size() != tr_lbls.size() || te_imgs.size() != te_lbls.size())
        throw std::runtime_error("idx: image/label count mismatch");
    if (!(shape_train == shape_test)) throw std::runtime_error("idx: train/test shape mismatch");
    if (tr_imgs.size() < train_count + val_count || te_imgs.size() < test_count)
        throw std::runtime_error("idx: requested split sizes exceed file contents");

    ds.input_shape = shape_train;
    ds.num_classes = 10;
    for (std::size_t i = 0; i < train_count; ++i)
        ds.train.push_back({std::move(tr_imgs[i]), tr_lbls[i]});
    for (std::size_t i = 0; i < val_count; ++i)
        ds.val.push_back({std::move(tr_imgs[train_count + i]), tr_lbls[train_count + i]});
    for (std::size_t i = 0; i < test_count; ++i)
        ds.test.push_back({std::move(te_imgs[i]), te_lbls[i]});
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------
// CIFAR-10 binary loader
// ---------------------------------------------------------------------------

std::vector<Sample> load_cifar10_batch(const std::string& path) {
    constexpr std::size_t kRecord = 3073;  // label byte + 3*32*32
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cifar10: cannot open '" + path + "'");
    std::vector<Sample> samples;
    std::vector<unsigned char> rec(kRecord);
    while (in.read(reinterpret_cast<char*>(rec.data()), kRecord)) {
        Sample s;
        s.label = rec[0];
        s.image.resize(3072);
        for (std::size_t p = 0; p < 3072; ++p) s.image[static_cast<Eigen::Index>(p)] = rec[p + 1] / 255.0;
        samples.push_back(std::move(s));
    }
    if (in.gcount() != 0) throw std::runtime_error("cifar10: trailing partial record in '" + path + "'");
    if (samples.empty()) throw std::runtime_error("cifar10: no records in '" + path + "'");
    return samples;
}

DatasetSplits load_cifar10_splits(const std::vector<std::string>& batch_paths,
                                  std::size_t train_count, std::size_t val_count,
                                  std::size_t test_count) {
    std::vector<Sample> all;
    for (const auto& p : batch_paths) {
        auto batch = load_cifar10_batch(p);
        all.insert(all.end(), std::make_move_iterator(batch.begin()),
                   std::make_move_iterator(batch.end()));
    }
    if (all.size() < train_count + val_count + test_count)
        throw std::runtime_error("cifar10: requested split sizes exceed file contents");
    DatasetSplits ds;
    ds.num_classes = 10;
    ds.input_shape = TensorShape{3, 32, 32};
    std::size_t k = 0;
    for (std::size_t i = 0; i < train_count; ++i) ds.train.push_back(std::move(all[k++]));
    for (std::size_t i = 0; i < val_count; ++i) ds.val.push_back(std::move(all[k++]));
    for (std::size_t i = 0; i < test_count; ++i) ds.test.push_back(std::move(all[k++]));
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------
// Synthetic generators
// ---------------------------------------------------------------------------

namespace {

struct Bump {
    double cy, cx, sigma, amp;
};

Sample render_blob_sample(const std::vector<Bump>& bumps, int label, int height, int width,
                          double noise, double jitter, Rng& rng) {
    Sample s;
    s.label = label;
    s.image = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(height) * width);
    for (const Bump& bump : bumps) {
        const double cy = bump.cy + jitter * normal(rng);
        const double cx = bump.cx + jitter * normal(rng);
        const double inv2s2 = 1.0 / (2.0 * bump.sigma * bump.sigma);
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                s.image[static_cast<Eigen::Index>(y) * width + x] += bump.amp * std::exp(-d2 * inv2s2);
            }
        }
    }
    for (Eigen::Index p = 0; p < s.image.size(); ++p) {
        const double v = s.image[p] + noise * normal(rng);
        s.image[p] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    }
    return s;
}

std::vector<Sample> make_blob_split(const std::vector<std::vector<Bump>>& class_bumps,
                                    std::size_t count, int height, int width, double noise,
                                    double jitter, std::uint64_t seed, std::uint64_t split_tag) {
    std::vector<Sample> split(count);
    const int classes = static_cast<int>(class_bumps.size());
    for (std::size_t i = 0; i < count; ++i) {
        const int label = static_cast<int>(i % static_cast<std::size_t>(classes));
        Rng rng(mix_seed(seed, split_tag, i));
        split[i] = render_blob_sample(class_bumps[static_cast<std::size_t>(label)], label, height,
                                      width, noise, jitter, rng);
    }
    return split;
}

}  // namespace

DatasetSplits make_synthetic_blobs(int num_classes, int height, int width, std::size_t train_count,
                                   std::size_t val_count, std::size_t test_count,
                                   std::uint64_t seed, double noise) {
    if (num_classes < 2 || height < 4 || width < 4)
        throw std::invalid_argument("make_synthetic_blobs: degenerate parameters");
    const double span = static_cast<double>(std::min(height, width));
    const double jitter = 0.06 * span;

    Rng class_rng(mix_seed(seed, 0x626c6f62ULL));
    std::vector<std::vector<Bump>> class_bumps(static_cast<std::size_t>(num_classes));
    for (auto& bumps : class_bumps) {
        bumps.resize(3);
        for (auto& b : bumps) {
            b.cy = uniform_real(class_rng, 0.15, 0.85) * (height - 1);
            b.cx = uniform_real(class_rng, 0.15, 0.85) * (width - 1);
            b.sigma = uniform_real(class_rng, 0.08, 0.14) * span;
            b.amp = uniform_real(class_rng, 0.7, 1.0);
        }
    }

    DatasetSplits ds;
    ds.num_classes = num_classes;
    ds.input_shape = TensorShape{1, height, width};
    ds.train = make_blob_split(class_bumps, train_count, height, width, noise, jitter, seed, 1);
    ds.val = make_blob_split(class_bumps, val_count, height, width, noise, jitter, seed, 2);
    ds.test = make_blob_split(class_bumps, test_count, height, width, noise, jitter, seed, 3);
    ds.validate();
    return ds;
}

DatasetSplits make_separable_points(int num_classes, int features, std::size_t train_count,
                                    std::size_t val_count, std::size_t test_count,
                                    std::uint64_t seed) {
    if (num_classes < 2 || features < 1)
        throw std::invalid_argument("make_separable_points: degenerate parameters");
    // Well-separated class centers with tight noise keep the classes linearly
    // separable with margin.
    Rng center_rng(mix_seed(seed, 0x73657061ULL));
    std::vector<Eigen::VectorXd> centers(static_cast<std::size_t>(num_classes));
    for (auto& c : centers) {
        c.resize(features);
        for (int f = 0; f < features; ++f) c[f] = normal(center_rng);
        c.normalize();
    }

    auto gen = [&](std::size_t count, std::uint64_t tag) {
        std::vector<Sample> split(count);
        for (std::size_t i = 0; i < count; ++i) {
            const int label = static_cast<int>(i % static_cast<std::size_t>(num_classes));
            Rng rng(mix_seed(seed, tag, i));
            Sample s;
            s.label = label;
            s.image = centers[static_cast<std::size_t>(label)];
            for (int f = 0; f < features; ++f) s.image[f] += 0.05 * normal(rng);
            split[i] = std::move(s);
        }
        return split;
    };

    DatasetSplits ds;
    ds.num_classes = num_classes;
    ds.input_shape = TensorShape{1, 1, features};
    ds.train = gen(train_count, 11);
    ds.val = gen(val_count, 12);
    ds.test = gen(test_count, 13);
    ds.validate();
    return ds;
}

}  // namespace shiftopt
