// SPDX-License-Identifier: Apache-2.0
#include "quarc/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace quarc {

void Dataset::validate() const {
    if (!features.defined() || features.ndim() < 2)
        throw ContractError("dataset features must be at least 2-D");
    if (features.dim(0) != labels.size())
        throw ContractError("dataset feature count " + std::to_string(features.dim(0)) +
                            " != label count " + std::to_string(labels.size()));
    if (classes < 2) throw ContractError("dataset needs at least 2 classes");
    for (int y : labels) {
        if (y < 0 || y >= classes)
            throw ContractError("label " + std::to_string(y) + " outside [0," +
                                std::to_string(classes) + ")");
    }
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.classes < 2) throw ConfigError("synthetic data needs classes >= 2");
    if (spec.per_class < 1) throw ConfigError("synthetic data needs per_class >= 1");
    if (spec.noise < real(0)) throw ConfigError("synthetic noise must be >= 0");

    const std::size_t n = std::size_t(spec.classes) * std::size_t(spec.per_class);
    std::vector<real> feats(n * 2);
    std::vector<int> labels(n);
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<real> gauss(real(0), real(1));

    std::size_t idx = 0;
    for (int k = 0; k < spec.classes; ++k) {
        const real phase = real(2) * std::numbers::pi_v<real> * real(k) / real(spec.classes);
        for (int i = 0; i < spec.per_class; ++i, ++idx) {
            real x, y;
            if (spec.gen == Generator::GaussianBlobs) {
                x = real(3) * std::cos(phase);
                y = real(3) * std::sin(phase);
            } else {
                const real t = (real(i) + real(0.5)) / real(spec.per_class);
                const real theta = real(3) * std::numbers::pi_v<real> * t + phase;
                const real r = real(0.25) + real(2.75) * t;
                x = r * std::cos(theta);
                y = r * std::sin(theta);
            }
            // draw noise unconditionally so sigma=0 and sigma>0 datasets
            // share the same stream layout
            const real nx = gauss(rng), ny = gauss(rng);
            feats[idx * 2] = x + spec.noise * nx;
            feats[idx * 2 + 1] = y + spec.noise * ny;
            labels[idx] = k;
        }
    }

    Dataset ds;
    ds.features = Tensor::from({n, 2}, std::move(feats));
    ds.labels = std::move(labels);
    ds.classes = spec.classes;
    ds.validate();
    return ds;
}

namespace {

std::uint32_t read_be_u32(std::istream& in, const std::string& field) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError("idx: truncated file while reading " + field);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw FormatError("idx: cannot open images file " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw FormatError("idx: cannot open labels file " + labels_path);

    const std::uint32_t img_magic = read_be_u32(img, "images magic");
    if (img_magic != 0x00000803u)
        throw FormatError("idx: bad images magic (expected 0x00000803)");
    const std::uint32_t n_img = read_be_u32(img, "images count");
    const std::uint32_t rows = read_be_u32(img, "images rows");
    const std::uint32_t cols = read_be_u32(img, "images cols");

    const std::uint32_t lab_magic = read_be_u32(lab, "labels magic");
    if (lab_magic != 0x00000801u)
        throw FormatError("idx: bad labels magic (expected 0x00000801)");
    const std::uint32_t n_lab = read_be_u32(lab, "labels count");
    if (n_img != n_lab)
        throw FormatError("idx: image count " + std::to_string(n_img) + " != label count " +
                          std::to_string(n_lab));
    if (n_img == 0) throw FormatError("idx: empty dataset");

    const std::size_t pix = std::size_t(n_img) * rows * cols;
    std::vector<unsigned char> raw(pix);
    img.read(reinterpret_cast<char*>(raw.data()), std::streamsize(pix));
    if (!img || img.gcount() != std::streamsize(pix))
        throw FormatError("idx: truncated images data");

    std::vector<unsigned char> raw_lab(n_lab);
    lab.read(reinterpret_cast<char*>(raw_lab.data()), std::streamsize(n_lab));
    if (!lab || lab.gcount() != std::streamsize(n_lab))
        throw FormatError("idx: truncated labels data");

    std::vector<real> feats(pix);
    for (std::size_t i = 0; i < pix; ++i) feats[i] = real(raw[i]) / real(255);
    std::vector<int> labels(n_lab);
    int max_label = 0;
    for (std::size_t i = 0; i < n_lab; ++i) {
        labels[i] = int(raw_lab[i]);
        max_label = std::max(max_label, labels[i]);
    }

    Dataset ds;
    ds.features = Tensor::from({n_img, 1, rows, cols}, std::move(feats));
    ds.labels = std::move(labels);
    ds.classes = max_label + 1;
    if (ds.classes < 2) ds.classes = 2;
    ds.validate();
    return ds;
}

Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("csv: empty file " + path);
    if (line.rfind("label", 0) != 0)
        throw FormatError("csv: header must start with 'label', got: " + line);

    std::vector<real> feats;
    std::vector<int> labels;
    std::size_t dim = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<real> row;
        bool first = true;
        int label = 0;
        while (std::getline(ss, cell, ',')) {
            try {
                if (first) {
                    label = std::stoi(cell);
                    first = false;
                } else {
                    row.push_back(real(std::stod(cell)));
                }
            } catch (const std::exception&) {
                throw FormatError("csv: bad value '" + cell + "' at line " +
                                  std::to_string(line_no));
            }
        }
        if (first) throw FormatError("csv: missing label at line " + std::to_string(line_no));
        if (dim == 0) dim = row.size();
        if (row.size() != dim)
            throw FormatError("csv: inconsistent column count at line " + std::to_string(line_no));
        labels.push_back(label);
        feats.insert(feats.end(), row.begin(), row.end());
    }
    if (labels.empty()) throw FormatError("csv: no data rows in " + path);

    int max_label = *std::max_element(labels.begin(), labels.end());
    Dataset ds;
    ds.features = Tensor::from({labels.size(), dim}, std::move(feats));
    ds.labels = std::move(labels);
    ds.classes = std::max(max_label + 1, 2);
    ds.validate();
    return ds;
}

namespace {

Dataset subset(const Dataset& ds, const std::vector<int>& ids, std::string split_tag) {
    Dataset out;
    out.features = gather_features(ds, ids);
    out.labels = gather_labels(ds, ids);
    out.classes = ds.classes;
    out.split = std::move(split_tag);
    out.feat_mean = ds.feat_mean;
    out.feat_std = ds.feat_std;
    return out;
}

}  // namespace

SplitResult split_dataset(const Dataset& ds, double eval_fraction, std::uint64_t seed) {
    ds.validate();
    if (!(eval_fraction > 0.0 && eval_fraction < 1.0))
        throw ConfigError("eval_fraction must lie in (0,1)");

    std::vector<std::vector<int>> per_class(std::size_t(ds.classes));
    for (std::size_t i = 0; i < ds.size(); ++i) per_class[std::size_t(ds.labels[i])].push_back(int(i));

    std::mt19937_64 rng(seed);
    std::vector<int> train_ids, eval_ids;
    for (auto& ids : per_class) {
        std::shuffle(ids.begin(), ids.end(), rng);
        const std::size_t n_eval = std::size_t(std::floor(eval_fraction * double(ids.size())));
        for (std::size_t i = 0; i < ids.size(); ++i) {
            (i < n_eval ? eval_ids : train_ids).push_back(ids[i]);
        }
    }
    std::sort(train_ids.begin(), train_ids.end());
    std::sort(eval_ids.begin(), eval_ids.end());
    if (train_ids.empty() || eval_ids.empty())
        throw ConfigError("split produced an empty train or eval set");

    return {subset(ds, train_ids, "train"), subset(ds, eval_ids, "eval")};
}

void normalize_splits(SplitResult& split) {
    Dataset& tr = split.train;
    const std::size_t n = tr.size();
    const std::size_t d = tr.feature_dim();
    std::vector<real> mean(d, real(0)), sd(d, real(0));
    auto fv = tr.features.values();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += fv[i * d + j];
    for (std::size_t j = 0; j < d; ++j) mean[j] /= real(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const real dv = fv[i * d + j] - mean[j];
            sd[j] += dv * dv;
        }
    for (std::size_t j = 0; j < d; ++j) sd[j] = std::max(std::sqrt(sd[j] / real(n)), real(1e-8));

    auto apply = [&](Dataset& ds) {
        auto v = ds.features.values();
        const std::size_t m = ds.size();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < d; ++j) v[i * d + j] = (v[i * d + j] - mean[j]) / sd[j];
        ds.feat_mean = mean;
        ds.feat_std = sd;
    };
    apply(split.train);
    apply(split.eval);
}

Tensor denormalize(const Dataset& ds, const Tensor& x) {
    if (ds.feat_mean.empty()) return x.clone();
    const std::size_t d = ds.feat_mean.size();
    if (x.size() % d != 0) throw ShapeError("denormalize: size not a multiple of feature dim");
    Tensor out = x.clone();
    auto v = out.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
        const std::size_t j = i % d;
        v[i] = v[i] * ds.feat_std[j] + ds.feat_mean[j];
    }
    return out;
}

std::vector<std::vector<int>> epoch_batches(std::span<const int> ids, std::size_t batch_size,
                                            std::uint64_t seed, int epoch) {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    std::vector<int> order(ids.begin(), ids.end());
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(epoch)};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::vector<int>> batches;
    for (std::size_t i = 0; i < order.size(); i += batch_size) {
        const std::size_t e = std::min(i + batch_size, order.size());
        batches.emplace_back(order.begin() + std::ptrdiff_t(i), order.begin() + std::ptrdiff_t(e));
    }
    return batches;
}

std::vector<std::vector<int>> sequential_batches(std::span<const int> ids,
                                                 std::size_t batch_size) {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    std::vector<std::vector<int>> batches;
    for (std::size_t i = 0; i < ids.size(); i += batch_size) {
        const std::size_t e = std::min(i + batch_size, ids.size());
        batches.emplace_back(ids.begin() + std::ptrdiff_t(i), ids.begin() + std::ptrdiff_t(e));
    }
    return batches;
}

Tensor gather_features(const Dataset& ds, std::span<const int> ids) {
    const std::size_t d = ds.feature_dim();
    std::vector<real> out(ids.size() * d);
    auto fv = ds.features.values();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const std::size_t src = std::size_t(ids[i]);
        std::copy(fv.begin() + std::ptrdiff_t(src * d), fv.begin() + std::ptrdiff_t((src + 1) * d),
                  out.begin() + std::ptrdiff_t(i * d));
    }
    Shape shape = ds.features.shape();
    shape[0] = ids.size();
    return Tensor::from(std::move(shape), std::move(out));
}

std::vector<int> gather_labels(const Dataset& ds, std::span<const int> ids) {
    std::vector<int> out(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) out[i] = ds.labels[std::size_t(ids[i])];
    return out;
}

std::vector<int> all_ids(const Dataset& ds) {
    std::vector<int> ids(ds.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = int(i);
    return ids;
}

BatchPlan::BatchPlan(const Dataset& ds, double eval_fraction, std::size_t batch_size,
                     std::uint64_t seed)
    : split_(split_dataset(ds, eval_fraction, seed)), batch_size_(batch_size), seed_(seed) {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

std::vector<std::vector<int>> BatchPlan::batches(int epoch) const {
    auto ids = all_ids(split_.train);
    return epoch_batches(ids, batch_size_, seed_, epoch);
}

}  // namespace quarc
