#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "reid/error.hpp"
#include "reid/image.hpp"
#include "reid/rng.hpp"
#include "reid/schema.hpp"
#include "reid/serialize.hpp"
#include "reid/tensor.hpp"

namespace reid {

struct DatasetDescriptor {
    int dataset_id = 0;
    std::string name;
    int num_identities = 0; // identities in the dataset, train and test together
    bool has_attributes = false;
    int camera_count = 1;

    bool operator==(const DatasetDescriptor& o) const {
        return dataset_id == o.dataset_id && name == o.name &&
               num_identities == o.num_identities && has_attributes == o.has_attributes &&
               camera_count == o.camera_count;
    }
};

struct Sample {
    Image image;
    int local_identity = 0;
    std::int64_t global_identity = 0; // assigned at registration: dataset offset + local
    int dataset_id = 0;
    int camera_id = 0;
    std::optional<AttributeAnnotation> attributes;
    std::int64_t sample_id = 0; // unique across datasets: (dataset_id << 32) | index
};

inline std::int64_t make_sample_id(int dataset_id, std::int64_t index) {
    return (static_cast<std::int64_t>(dataset_id) << 32) | index;
}

/// Several identity datasets merged into one training universe. Identities
/// get disjoint global id ranges by cumulative offset in registration order;
/// per-class image counts over the training samples drive the identity loss
/// weights.
class DatasetRegistry {
public:
    static DatasetRegistry
    register_datasets(const std::vector<std::pair<DatasetDescriptor, std::vector<Sample>>>& datasets) {
        DatasetRegistry reg;
        std::int64_t offset = 0;
        for (const auto& [desc, samples] : datasets) {
            if (desc.num_identities <= 0)
                throw Error("dataset '" + desc.name + "': num_identities must be positive");
            if (reg.offsets_.count(desc.dataset_id))
                throw Error("duplicate dataset_id " + std::to_string(desc.dataset_id));
            reg.offsets_[desc.dataset_id] = offset;
            reg.descriptors_.push_back(desc);
            for (Sample s : samples) {
                if (s.local_identity < 0 || s.local_identity >= desc.num_identities)
                    throw Error("dataset '" + desc.name + "': local identity " +
                                std::to_string(s.local_identity) + " out of range [0, " +
                                std::to_string(desc.num_identities) + ")");
                if (s.dataset_id != desc.dataset_id)
                    throw Error("sample dataset_id does not match descriptor");
                if (s.attributes && !desc.has_attributes)
                    throw Error("dataset '" + desc.name +
                                "': sample carries attributes but has_attributes is false");
                s.global_identity = offset + s.local_identity;
                reg.class_counts_[s.global_identity] += 1;
                reg.samples_.push_back(std::move(s));
            }
            offset += desc.num_identities;
        }
        reg.total_identities_ = offset;
        reg.check_uniform_images();
        return reg;
    }

    const std::vector<DatasetDescriptor>& descriptors() const { return descriptors_; }
    const std::vector<Sample>& samples() const { return samples_; }
    const std::map<std::int64_t, std::int64_t>& class_counts() const { return class_counts_; }
    std::int64_t total_identities() const { return total_identities_; }

    std::int64_t offset_of(int dataset_id) const {
        auto it = offsets_.find(dataset_id);
        if (it == offsets_.end())
            throw Error("unknown dataset_id " + std::to_string(dataset_id));
        return it->second;
    }

    // Maps a sample from a registered dataset into the global identity space.
    std::int64_t globalize(int dataset_id, int local_identity) const {
        return offset_of(dataset_id) + local_identity;
    }

    bool empty() const { return samples_.empty(); }

    int image_height() const { return img_h_; }
    int image_width() const { return img_w_; }
    int image_channels() const { return img_c_; }

    // Hash over descriptors, identities and pixel data; pins checkpoints to
    // the exact training corpus.
    std::uint64_t digest() const {
        Digest d;
        for (const auto& desc : descriptors_) {
            d.update(desc.name);
            d.update_value(desc.dataset_id);
            d.update_value(desc.num_identities);
            d.update_value(desc.has_attributes);
            d.update_value(desc.camera_count);
        }
        for (const auto& s : samples_) {
            d.update_value(s.sample_id);
            d.update_value(s.global_identity);
            d.update_value(s.camera_id);
            if (!s.image.px.empty())
                d.update(s.image.px.data(), s.image.px.size() * sizeof(float));
        }
        return d.value();
    }

private:
    void check_uniform_images() {
        bool first = true;
        for (const auto& s : samples_) {
            if (first) {
                img_h_ = s.image.height;
                img_w_ = s.image.width;
                img_c_ = s.image.channels;
                first = false;
            } else if (s.image.height != img_h_ || s.image.width != img_w_ ||
                       s.image.channels != img_c_) {
                throw Error("registry requires a uniform image size across samples");
            }
        }
    }

    std::vector<DatasetDescriptor> descriptors_;
    std::vector<Sample> samples_;
    std::map<std::int64_t, std::int64_t> class_counts_;
    std::map<int, std::int64_t> offsets_;
    std::int64_t total_identities_ = 0;
    int img_h_ = 0, img_w_ = 0, img_c_ = 0;
};

/// One training batch. attribute_mask[i] is true exactly when sample i
/// carries an annotation; the attribute loss is computed on that subset only.
struct Batch {
    Tensor<float> images; // N x H x W x C
    std::vector<std::int64_t> global_identities;
    std::vector<std::uint8_t> attribute_mask;
    std::vector<std::optional<AttributeAnnotation>> attribute_labels;

    std::size_t size() const { return global_identities.size(); }
};

inline Batch make_batch(const DatasetRegistry& reg, const std::vector<std::size_t>& indices) {
    Batch b;
    const auto n = static_cast<std::int64_t>(indices.size());
    b.images = Tensor<float>::zeros(
        {n, reg.image_height(), reg.image_width(), reg.image_channels()});
    const std::size_t stride = static_cast<std::size_t>(reg.image_height()) *
                               reg.image_width() * reg.image_channels();
    for (std::int64_t i = 0; i < n; ++i) {
        const Sample& s = reg.samples()[indices[static_cast<std::size_t>(i)]];
        std::copy(s.image.px.begin(), s.image.px.end(),
                  b.images.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
        b.global_identities.push_back(s.global_identity);
        b.attribute_mask.push_back(s.attributes.has_value() ? 1 : 0);
        b.attribute_labels.push_back(s.attributes);
    }
    return b;
}

/// Seeded epoch iterator: each epoch is one permutation of the training
/// samples, cut into consecutive batches (the final batch of an epoch may be
/// short). Everything is derived from (seed, stage, step), so a resumed run
/// reproduces the exact batch sequence.
class BatchSampler {
public:
    BatchSampler(const DatasetRegistry& reg, int batch_size, std::uint64_t seed, int stage = 0)
        : reg_(&reg), batch_size_(batch_size), seed_(seed), stage_(stage) {
        if (reg.empty()) throw Error("cannot sample from an empty registry");
        if (batch_size < 1) throw Error("batch_size must be >= 1");
    }

    std::int64_t batches_per_epoch() const {
        const auto n = static_cast<std::int64_t>(reg_->samples().size());
        return (n + batch_size_ - 1) / batch_size_;
    }

    Batch batch_for_step(std::int64_t step) const {
        const auto bpe = batches_per_epoch();
        const std::int64_t epoch = step / bpe;
        const std::int64_t slot = step % bpe;
        const auto perm = epoch_permutation(epoch);
        const auto n = static_cast<std::int64_t>(perm.size());
        const std::int64_t lo = slot * batch_size_;
        const std::int64_t hi = std::min<std::int64_t>(lo + batch_size_, n);
        std::vector<std::size_t> idx(perm.begin() + lo, perm.begin() + hi);
        return make_batch(*reg_, idx);
    }

    std::vector<std::size_t> epoch_permutation(std::int64_t epoch) const {
        Rng rng(derive_seed(seed_, {0x45504F43ull /*EPOC*/, static_cast<std::uint64_t>(stage_),
                                    static_cast<std::uint64_t>(epoch)}));
        return rng.permutation(reg_->samples().size());
    }

private:
    const DatasetRegistry* reg_;
    int batch_size_;
    std::uint64_t seed_;
    int stage_;
};

/// One-shot form: the first batch of a fresh epoch permutation drawn from
/// `rng`. Deterministic given the generator seed.
inline Batch sample_batch(const DatasetRegistry& reg, int batch_size, Rng& rng) {
    if (reg.empty()) throw Error("cannot sample from an empty registry");
    if (batch_size < 1) throw Error("batch_size must be >= 1");
    auto perm = rng.permutation(reg.samples().size());
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(batch_size), perm.size());
    perm.resize(n);
    return make_batch(reg, perm);
}

} // namespace reid
