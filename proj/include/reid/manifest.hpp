#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "reid/dataset.hpp"
#include "reid/error.hpp"
#include "reid/image.hpp"
#include "reid/schema.hpp"

namespace reid {

/// One dataset loaded from a manifest, already separated by the per-line
/// split field.
struct LoadedDataset {
    DatasetDescriptor descriptor;
    std::vector<Sample> train;
    std::vector<Sample> test;

    std::vector<Sample> all() const {
        std::vector<Sample> v = train;
        v.insert(v.end(), test.begin(), test.end());
        return v;
    }
};

namespace detail {

inline IoError manifest_error(const std::string& path, std::size_t line, const std::string& msg) {
    return IoError(path + ": line " + std::to_string(line) + ": " + msg);
}

} // namespace detail

/// Reads a JSON-lines manifest. The first line is a header object declaring
/// the descriptor; every following line is one sample. Images are decoded
/// and, when `target_height`/`target_width` are positive, resized. Samples
/// keep their manifest order within each split.
inline LoadedDataset load_manifest(const std::string& path, int dataset_id,
                                   const AttributeSchema& schema, int target_height = 0,
                                   int target_width = 0) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open manifest: " + path);
    const auto base_dir = std::filesystem::path(path).parent_path();

    std::string line;
    std::size_t line_no = 0;

    // header
    nlohmann::json header;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            header = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw detail::manifest_error(path, line_no, std::string("bad header: ") + e.what());
        }
        break;
    }
    if (header.is_null()) throw IoError(path + ": no samples (empty manifest)");

    LoadedDataset out;
    try {
        out.descriptor.dataset_id = dataset_id;
        out.descriptor.name = header.at("dataset").get<std::string>();
        out.descriptor.num_identities = header.at("num_identities").get<int>();
        out.descriptor.has_attributes = header.at("has_attributes").get<bool>();
        out.descriptor.camera_count = header.at("cameras").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw detail::manifest_error(path, line_no, std::string("bad header: ") + e.what());
    }
    if (out.descriptor.num_identities < 1)
        throw detail::manifest_error(path, line_no, "num_identities must be positive");
    if (out.descriptor.camera_count < 1)
        throw detail::manifest_error(path, line_no, "cameras must be positive");

    std::int64_t sample_index = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw detail::manifest_error(path, line_no, std::string("malformed line: ") + e.what());
        }

        Sample s;
        std::string split;
        std::string image_rel;
        try {
            image_rel = j.at("image_path").get<std::string>();
            s.local_identity = j.at("identity").get<int>();
            s.camera_id = j.at("camera").get<int>();
            split = j.at("split").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw detail::manifest_error(path, line_no, std::string("malformed line: ") + e.what());
        }
        if (split != "train" && split != "test")
            throw detail::manifest_error(path, line_no, "split must be \"train\" or \"test\"");
        if (s.local_identity < 0 || s.local_identity >= out.descriptor.num_identities)
            throw detail::manifest_error(path, line_no,
                                         "identity " + std::to_string(s.local_identity) +
                                             " out of range [0, " +
                                             std::to_string(out.descriptor.num_identities) + ")");
        if (s.camera_id < 0 || s.camera_id >= out.descriptor.camera_count)
            throw detail::manifest_error(path, line_no,
                                         "camera " + std::to_string(s.camera_id) + " out of range");

        if (j.contains("attributes")) {
            if (!out.descriptor.has_attributes)
                throw detail::manifest_error(
                    path, line_no, "attributes present but dataset declares has_attributes=false");
            AttributeAnnotation ann;
            ann.values.assign(schema.size(), 0);
            for (const auto& [name, value] : j.at("attributes").items()) {
                const int idx = schema.index_of(name);
                if (idx < 0)
                    throw detail::manifest_error(path, line_no,
                                                 "unknown attribute '" + name + "'");
                if (!value.is_number_integer())
                    throw detail::manifest_error(path, line_no,
                                                 "attribute '" + name + "' must be an integer");
                ann.values[static_cast<std::size_t>(idx)] = value.get<int>();
            }
            try {
                ann.validate(schema);
            } catch (const Error& e) {
                throw detail::manifest_error(path, line_no, e.what());
            }
            s.attributes = std::move(ann);
        }

        const auto image_path = base_dir / image_rel;
        if (!std::filesystem::exists(image_path))
            throw detail::manifest_error(path, line_no,
                                         "missing image file: " + image_path.string());
        s.image = decode_image(image_path.string());
        if (target_height > 0 && target_width > 0)
            s.image = resize_bilinear(s.image, target_height, target_width);

        s.dataset_id = dataset_id;
        s.global_identity = s.local_identity; // registration assigns the offset
        s.sample_id = make_sample_id(dataset_id, sample_index++);
        if (split == "train")
            out.train.push_back(std::move(s));
        else
            out.test.push_back(std::move(s));
    }

    if (out.train.empty() && out.test.empty()) throw IoError(path + ": no samples");
    return out;
}

/// Writes one dataset as a manifest directory: PNG images under images/ and
/// a manifest.jsonl whose split field follows `test_identities`.
inline std::filesystem::path
write_manifest_dataset(const std::filesystem::path& dir, const DatasetDescriptor& desc,
                       std::span<const Sample> samples, const std::set<int>& test_identities,
                       const AttributeSchema& schema) {
    std::error_code ec;
    std::filesystem::create_directories(dir / "images", ec);
    if (ec) throw IoError("cannot create " + (dir / "images").string() + ": " + ec.message());

    const auto manifest_path = dir / "manifest.jsonl";
    std::ofstream os(manifest_path);
    if (!os) throw IoError("cannot open for writing: " + manifest_path.string());

    nlohmann::json header = {{"dataset", desc.name},
                             {"num_identities", desc.num_identities},
                             {"has_attributes", desc.has_attributes},
                             {"cameras", desc.camera_count}};
    os << header.dump() << '\n';

    std::int64_t index = 0;
    for (const Sample& s : samples) {
        char name[64];
        std::snprintf(name, sizeof(name), "id%04d_cam%d_%05lld.png", s.local_identity, s.camera_id,
                      static_cast<long long>(index));
        const std::string rel = std::string("images/") + name;
        write_png((dir / rel).string(), s.image);

        nlohmann::json j = {{"image_path", rel},
                            {"identity", s.local_identity},
                            {"camera", s.camera_id},
                            {"split", test_identities.count(s.local_identity) ? "test" : "train"}};
        if (s.attributes) {
            nlohmann::json attrs;
            for (std::size_t l = 0; l < schema.size(); ++l) {
                attrs[schema.at(l).name] = s.attributes->values[l];
            }
            j["attributes"] = attrs;
        }
        os << j.dump() << '\n';
        ++index;
    }
    if (!os) throw IoError("write failed: " + manifest_path.string());
    return manifest_path;
}

} // namespace reid
