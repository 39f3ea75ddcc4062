#pragma once

#include <string>
#include <unordered_set>
#include <vector>

#include "reid/error.hpp"

namespace reid {

enum class AttributeKind { binary, categorical };

struct AttributeEntry {
    std::string name;
    AttributeKind kind = AttributeKind::binary;
    int cardinality = 2;
};

/// Ordered list of attribute definitions. Binary attributes have exactly two
/// classes and are scored with a single sigmoid logit; categorical attributes
/// use one softmax logit per class.
class AttributeSchema {
public:
    AttributeSchema() = default;

    explicit AttributeSchema(std::vector<AttributeEntry> entries) : entries_(std::move(entries)) {
        std::unordered_set<std::string> names;
        for (const auto& e : entries_) {
            if (e.kind == AttributeKind::binary && e.cardinality != 2)
                throw Error("attribute '" + e.name + "': binary attributes have cardinality 2");
            if (e.kind == AttributeKind::categorical && e.cardinality < 2)
                throw Error("attribute '" + e.name + "': categorical cardinality must be >= 2");
            if (!names.insert(e.name).second)
                throw Error("duplicate attribute name '" + e.name + "'");
        }
    }

    // The standard 9-attribute pedestrian schema.
    static AttributeSchema standard() {
        auto cat = [](std::string n, int c) {
            return AttributeEntry{std::move(n), AttributeKind::categorical, c};
        };
        auto bin = [](std::string n) { return AttributeEntry{std::move(n), AttributeKind::binary, 2}; };
        return AttributeSchema({
            bin("gender"),
            cat("top_color", 8),
            cat("bottom_color", 9),
            bin("top_length"),
            bin("bottom_length"),
            bin("backpack"),
            bin("hand_bag"),
            bin("other_bag"),
            bin("hair_length"),
        });
    }

    const std::vector<AttributeEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const AttributeEntry& at(std::size_t i) const { return entries_.at(i); }

    // Width of attribute head i: 1 for binary (single sigmoid logit),
    // cardinality for categorical.
    int head_width(std::size_t i) const {
        const auto& e = entries_.at(i);
        return e.kind == AttributeKind::binary ? 1 : e.cardinality;
    }

    int index_of(const std::string& name) const {
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (entries_[i].name == name) return static_cast<int>(i);
        }
        return -1;
    }

    bool operator==(const AttributeSchema& o) const {
        if (entries_.size() != o.entries_.size()) return false;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (entries_[i].name != o.entries_[i].name || entries_[i].kind != o.entries_[i].kind ||
                entries_[i].cardinality != o.entries_[i].cardinality)
                return false;
        }
        return true;
    }

private:
    std::vector<AttributeEntry> entries_;
};

/// Per-sample attribute labels: one class index per schema entry.
struct AttributeAnnotation {
    std::vector<int> values;

    void validate(const AttributeSchema& schema) const {
        if (values.size() != schema.size())
            throw Error("annotation length " + std::to_string(values.size()) +
                        " does not match schema size " + std::to_string(schema.size()));
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (values[i] < 0 || values[i] >= schema.at(i).cardinality)
                throw Error("attribute '" + schema.at(i).name + "': class index " +
                            std::to_string(values[i]) + " out of range [0, " +
                            std::to_string(schema.at(i).cardinality) + ")");
        }
    }

    bool operator==(const AttributeAnnotation& o) const { return values == o.values; }
};

} // namespace reid
