#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>
#include <zlib.h>

#include <json.hpp>

#include "msggan/data/image_io.hpp"

namespace msggan {

namespace fs = std::filesystem;

struct DatasetManifest {
    fs::path root;
    std::vector<std::string> files;  // sorted paths relative to root
    std::uint32_t checksum = 0;

    std::size_t count() const { return files.size(); }

    nlohmann::json to_json() const {
        return {{"root", root.string()}, {"files", files}, {"checksum", checksum}};
    }

    static DatasetManifest from_json(const nlohmann::json& j) {
        DatasetManifest m;
        m.root = j.at("root").get<std::string>();
        m.files = j.at("files").get<std::vector<std::string>>();
        m.checksum = j.at("checksum").get<std::uint32_t>();
        return m;
    }
};

inline std::uint32_t file_list_checksum(const std::vector<std::string>& files) {
    uLong crc = crc32(0L, Z_NULL, 0);
    for (const auto& f : files) {
        crc = crc32(crc, reinterpret_cast<const Bytef*>(f.data()),
                    static_cast<uInt>(f.size()));
        crc = crc32(crc, reinterpret_cast<const Bytef*>("\n"), 1);
    }
    return static_cast<std::uint32_t>(crc);
}

inline bool has_image_extension(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

// Recursive, deterministic scan of PNG/JPEG files under root. Unreadable
// entries are reported collectively, never skipped.
inline DatasetManifest scan_corpus(const fs::path& root) {
    if (!fs::exists(root) || !fs::is_directory(root))
        throw IngestionError("corpus root is not a directory: " + root.string());
    DatasetManifest m;
    m.root = root;
    std::vector<std::string> unreadable;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file() || !has_image_extension(entry.path())) continue;
        const std::string rel = fs::relative(entry.path(), root).generic_string();
        std::ifstream probe(entry.path(), std::ios::binary);
        if (!probe.good())
            unreadable.push_back(rel);
        else
            m.files.push_back(rel);
    }
    if (!unreadable.empty()) {
        std::string msg = "unreadable corpus files:";
        for (const auto& f : unreadable) msg += " " + f;
        throw IngestionError(msg);
    }
    if (m.files.empty()) throw IngestionError("no PNG/JPEG images under " + root.string());
    std::sort(m.files.begin(), m.files.end());
    m.checksum = file_list_checksum(m.files);
    return m;
}

inline void save_manifest(const DatasetManifest& m, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw IngestionError("cannot write manifest: " + path.string());
    out << m.to_json().dump(2) << "\n";
}

inline DatasetManifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot read manifest: " + path.string());
    nlohmann::json j;
    in >> j;
    return DatasetManifest::from_json(j);
}

// Decode, grayscale-reduce, bilinear-resize to target x target and map into
// the requested range ([0,1]: x/255, [-1,1]: x/127.5 - 1).
template <typename T = float>
ImageBatch<T> load_and_preprocess(const DatasetManifest& m,
                                  const std::vector<std::size_t>& indices, std::size_t target,
                                  RangeTag range) {
    if (indices.empty()) throw ConfigError("load_and_preprocess: empty index list");
    ImageBatch<T> batch;
    batch.range = range;
    batch.data = Tensor<T>({indices.size(), 1, target, target});
    std::vector<double> src, resized(target * target);
    for (std::size_t bi = 0; bi < indices.size(); ++bi) {
        if (indices[bi] >= m.count())
            throw ConfigError("load_and_preprocess: index out of range");
        const GrayImage8 img = read_image_gray(m.root / m.files[indices[bi]]);
        src.resize(img.h * img.w);
        for (std::size_t i = 0; i < src.size(); ++i) src[i] = static_cast<double>(img.px[i]);
        bilinear_resize_plane(src.data(), img.h, img.w, resized.data(), target, target);
        T* dst = batch.data.data() + bi * target * target;
        for (std::size_t i = 0; i < resized.size(); ++i) {
            const double v = range == RangeTag::unit ? resized[i] / 255.0
                                                     : resized[i] / 127.5 - 1.0;
            dst[i] = static_cast<T>(v);
        }
    }
    return batch;
}

// Deterministic shuffled epochs with the partial final batch dropped; the
// flip stream is per-epoch so any (epoch, batch) position can be recreated
// exactly for checkpoint resume.
class EpochIterator {
public:
    EpochIterator(DatasetManifest manifest, std::size_t batch_size, std::uint64_t seed,
                  bool flip, std::size_t target = 64, RangeTag range = RangeTag::symmetric)
        : manifest_(std::move(manifest)),
          batch_size_(batch_size),
          seed_(seed),
          flip_(flip),
          target_(target),
          range_(range),
          flip_rng_(0) {
        if (batch_size_ == 0) throw ConfigError("epoch_iterator: batch_size must be positive");
        if (batch_size_ > manifest_.count())
            throw ConfigError("epoch_iterator: batch_size " + std::to_string(batch_size_) +
                              " exceeds corpus size " + std::to_string(manifest_.count()));
        seek(0, 0);
    }

    std::size_t batches_per_epoch() const { return manifest_.count() / batch_size_; }
    std::size_t epoch() const { return epoch_; }
    std::size_t batch_index() const { return batch_; }

    // Index schedule for one epoch; exposed for determinism tests.
    static std::vector<std::size_t> epoch_schedule(std::size_t count, std::uint64_t seed,
                                                   std::size_t epoch) {
        std::vector<std::size_t> idx(count);
        for (std::size_t i = 0; i < count; ++i) idx[i] = i;
        Rng rng(Rng::mix(seed, 0x5c4ed001ull + epoch));
        rng.shuffle(idx.begin(), idx.end());
        return idx;
    }

    void seek(std::size_t epoch, std::size_t batch) {
        if (batch >= batches_per_epoch()) throw ConfigError("epoch_iterator: seek out of range");
        epoch_ = epoch;
        batch_ = batch;
        schedule_ = epoch_schedule(manifest_.count(), seed_, epoch_);
        flip_rng_ = Rng(Rng::mix(seed_, 0xf11b0001ull + epoch_));
        for (std::size_t i = 0; i < batch * batch_size_; ++i) (void)flip_rng_.uniform();
    }

    ImageBatch<float> next() {
        std::vector<std::size_t> idx(schedule_.begin() + batch_ * batch_size_,
                                     schedule_.begin() + (batch_ + 1) * batch_size_);
        ImageBatch<float> batch = load_and_preprocess<float>(manifest_, idx, target_, range_);
        batch = augment_hflip(batch, flip_, flip_rng_);
        if (++batch_ >= batches_per_epoch()) seek(epoch_ + 1, 0);
        return batch;
    }

private:
    DatasetManifest manifest_;
    std::size_t batch_size_;
    std::uint64_t seed_;
    bool flip_;
    std::size_t target_;
    RangeTag range_;
    std::size_t epoch_ = 0;
    std::size_t batch_ = 0;
    std::vector<std::size_t> schedule_;
    Rng flip_rng_;
};

}  // namespace msggan
