#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ugmm/errors.hpp"
#include "ugmm/matrix.hpp"
#include "ugmm/rng.hpp"

namespace ugmm {

struct FeatureStats {
    std::vector<double> mean;
    std::vector<double> std_dev;
    bool empty() const { return mean.empty(); }
};

struct Dataset {
    Matrix x;                 // samples x features
    std::vector<int> y;       // labels in [0, class_count)
    std::size_t class_count = 0;
    FeatureStats stats;       // train-split statistics, when standardized

    std::size_t size() const { return x.rows; }
};

struct Batch {
    Matrix x;
    std::vector<int> y;
};

namespace detail {

inline std::uint32_t read_be_u32(std::istream& in, const std::string& path, const char* what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw DataError(path + ": truncated file while reading " + what);
    }
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace detail

/// Load an MNIST-style IDX image/label pair. Big-endian headers: images are
/// magic 0x00000803 then count, rows, cols and unsigned bytes; labels are
/// magic 0x00000801 then count and bytes. Pixels are scaled to [0,1] by /255.
inline Dataset load_mnist(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw DataError(images_path + ": cannot open");
    const std::uint32_t img_magic = detail::read_be_u32(img, images_path, "magic");
    if (img_magic != 2051) {
        throw DataError(images_path + ": bad magic number " + std::to_string(img_magic) +
                        " (expected 2051 for IDX images)");
    }
    const std::uint32_t n_images = detail::read_be_u32(img, images_path, "count");
    const std::uint32_t n_rows = detail::read_be_u32(img, images_path, "rows");
    const std::uint32_t n_cols = detail::read_be_u32(img, images_path, "cols");

    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw DataError(labels_path + ": cannot open");
    const std::uint32_t lab_magic = detail::read_be_u32(lab, labels_path, "magic");
    if (lab_magic != 2049) {
        throw DataError(labels_path + ": bad magic number " + std::to_string(lab_magic) +
                        " (expected 2049 for IDX labels)");
    }
    const std::uint32_t n_labels = detail::read_be_u32(lab, labels_path, "count");
    if (n_images != n_labels) {
        throw DataError("IDX count mismatch: " + std::to_string(n_images) + " images vs " +
                        std::to_string(n_labels) + " labels");
    }

    const std::size_t n_pixels = std::size_t(n_rows) * n_cols;
    Dataset ds;
    ds.class_count = 10;
    ds.x = Matrix(n_images, n_pixels);
    std::vector<unsigned char> buf(n_pixels);
    for (std::uint32_t i = 0; i < n_images; ++i) {
        if (!img.read(reinterpret_cast<char*>(buf.data()), std::streamsize(n_pixels))) {
            throw DataError(images_path + ": truncated at image " + std::to_string(i));
        }
        double* row = ds.x.data.data() + std::size_t(i) * n_pixels;
        for (std::size_t p = 0; p < n_pixels; ++p) row[p] = buf[p] / 255.0;
    }
    ds.y.resize(n_labels);
    std::vector<unsigned char> labels(n_labels);
    if (!lab.read(reinterpret_cast<char*>(labels.data()), std::streamsize(n_labels))) {
        throw DataError(labels_path + ": truncated label data");
    }
    for (std::uint32_t i = 0; i < n_labels; ++i) {
        if (labels[i] > 9) {
            throw DataError(labels_path + ": label " + std::to_string(int(labels[i])) +
                            " out of range at index " + std::to_string(i));
        }
        ds.y[i] = labels[i];
    }
    return ds;
}

/// Load the Iris CSV: 4 numeric features plus a species label per row.
/// A header row is auto-detected (non-numeric first field). Species are
/// mapped to {0,1,2,...} in first-appearance order; features are kept raw
/// (standardization happens after the split).
inline Dataset load_iris(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError(path + ": cannot open");
    std::vector<std::array<double, 4>> rows;
    std::vector<int> labels;
    std::vector<std::string> species;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        if (line.back() == '\r') line.pop_back();
        std::stringstream ss(line);
        std::string field;
        std::array<double, 4> vals{};
        bool bad = false;
        for (int f = 0; f < 4; ++f) {
            if (!std::getline(ss, field, ',')) {
                bad = true;
                break;
            }
            try {
                std::size_t used = 0;
                vals[f] = std::stod(field, &used);
                if (used != field.size()) bad = true;
            } catch (const std::exception&) {
                bad = true;
            }
            if (bad) break;
        }
        if (bad) {
            if (line_no == 1 && rows.empty()) continue;  // header row
            throw DataError(path + ": malformed row at line " + std::to_string(line_no));
        }
        std::string label;
        if (!std::getline(ss, label) || label.empty()) {
            throw DataError(path + ": missing label at line " + std::to_string(line_no));
        }
        auto it = std::find(species.begin(), species.end(), label);
        int cls;
        if (it == species.end()) {
            species.push_back(label);
            cls = static_cast<int>(species.size()) - 1;
        } else {
            cls = static_cast<int>(it - species.begin());
        }
        rows.push_back(vals);
        labels.push_back(cls);
    }
    if (rows.empty()) throw DataError(path + ": no data rows");
    Dataset ds;
    ds.class_count = species.size();
    ds.x = Matrix(rows.size(), 4);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t f = 0; f < 4; ++f) ds.x(i, f) = rows[i][f];
    }
    ds.y = std::move(labels);
    return ds;
}

/// Per-feature mean and population standard deviation; zero-variance
/// features get std 1 so standardization is always well defined.
inline FeatureStats compute_stats(const Matrix& x) {
    FeatureStats s;
    s.mean.assign(x.cols, 0.0);
    s.std_dev.assign(x.cols, 0.0);
    for (std::size_t i = 0; i < x.rows; ++i) {
        for (std::size_t f = 0; f < x.cols; ++f) s.mean[f] += x(i, f);
    }
    for (std::size_t f = 0; f < x.cols; ++f) s.mean[f] /= double(x.rows);
    for (std::size_t i = 0; i < x.rows; ++i) {
        for (std::size_t f = 0; f < x.cols; ++f) {
            const double d = x(i, f) - s.mean[f];
            s.std_dev[f] += d * d;
        }
    }
    for (std::size_t f = 0; f < x.cols; ++f) {
        s.std_dev[f] = std::sqrt(s.std_dev[f] / double(x.rows));
        if (s.std_dev[f] == 0.0) s.std_dev[f] = 1.0;
    }
    return s;
}

inline void apply_stats(Matrix& x, const FeatureStats& s) {
    for (std::size_t i = 0; i < x.rows; ++i) {
        for (std::size_t f = 0; f < x.cols; ++f) {
            x(i, f) = (x(i, f) - s.mean[f]) / s.std_dev[f];
        }
    }
}

/// Deterministic stratified split. Per class, indices are shuffled with an
/// Rng seeded from `seed` (classes processed in label order) and
/// round(n_c * test_fraction) samples go to the test side. Standardization
/// statistics are computed on the train split only and applied to both.
inline std::pair<Dataset, Dataset> stratified_split(const Dataset& ds, double test_fraction,
                                                    std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw std::invalid_argument("stratified_split: test_fraction must be in (0,1)");
    }
    std::vector<std::vector<std::size_t>> by_class(ds.class_count);
    for (std::size_t i = 0; i < ds.y.size(); ++i) by_class[ds.y[i]].push_back(i);
    Rng rng(seed);
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t c = 0; c < ds.class_count; ++c) {
        auto& idx = by_class[c];
        if (idx.size() < 2) {
            throw DataError("stratified_split: class " + std::to_string(c) +
                            " has fewer than 2 samples");
        }
        // Fisher-Yates
        for (std::size_t i = idx.size(); i-- > 1;) {
            std::swap(idx[i], idx[rng.next_below(i + 1)]);
        }
        const auto n_test = static_cast<std::size_t>(
            std::llround(static_cast<double>(idx.size()) * test_fraction));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            (i < n_test ? test_idx : train_idx).push_back(idx[i]);
        }
    }
    auto gather = [&ds](const std::vector<std::size_t>& idx) {
        Dataset out;
        out.class_count = ds.class_count;
        out.x = Matrix(idx.size(), ds.x.cols);
        out.y.resize(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            std::copy(ds.x.row(idx[i]).begin(), ds.x.row(idx[i]).end(), out.x.row(i).begin());
            out.y[i] = ds.y[idx[i]];
        }
        return out;
    };
    Dataset train = gather(train_idx);
    Dataset test = gather(test_idx);
    const FeatureStats stats = compute_stats(train.x);
    apply_stats(train.x, stats);
    apply_stats(test.x, stats);
    train.stats = stats;
    test.stats = stats;
    return {std::move(train), std::move(test)};
}

/// Slice the dataset into minibatches; every sample appears exactly once and
/// the last block may be short. Shuffling consumes rng via one Fisher-Yates
/// pass over the index vector.
inline std::vector<Batch> batches(const Dataset& ds, std::size_t batch_size, bool shuffle,
                                  Rng& rng) {
    if (batch_size == 0) throw std::invalid_argument("batches: batch_size must be >= 1");
    std::vector<std::size_t> idx(ds.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (shuffle) {
        for (std::size_t i = idx.size(); i-- > 1;) {
            std::swap(idx[i], idx[rng.next_below(i + 1)]);
        }
    }
    std::vector<Batch> out;
    for (std::size_t start = 0; start < idx.size(); start += batch_size) {
        const std::size_t n = std::min(batch_size, idx.size() - start);
        Batch b;
        b.x = Matrix(n, ds.x.cols);
        b.y.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t src = idx[start + i];
            std::copy(ds.x.row(src).begin(), ds.x.row(src).end(), b.x.row(i).begin());
            b.y[i] = ds.y[src];
        }
        out.push_back(std::move(b));
    }
    return out;
}

/// Keep only the first n samples (used by the desk-scale MNIST runs).
inline Dataset head(const Dataset& ds, std::size_t n) {
    if (n >= ds.size()) return ds;
    Dataset out;
    out.class_count = ds.class_count;
    out.stats = ds.stats;
    out.x = Matrix(n, ds.x.cols);
    std::copy(ds.x.data.begin(), ds.x.data.begin() + std::ptrdiff_t(n * ds.x.cols),
              out.x.data.begin());
    out.y.assign(ds.y.begin(), ds.y.begin() + std::ptrdiff_t(n));
    return out;
}

}  // namespace ugmm
