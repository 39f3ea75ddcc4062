#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "reid/dataset.hpp"
#include "reid/error.hpp"
#include "reid/image.hpp"
#include "reid/rng.hpp"
#include "reid/schema.hpp"

namespace reid {

struct SyntheticConfig {
    int num_datasets = 3;
    int identities_per_dataset = 10;
    int images_per_identity = 8; // spread round-robin over cameras
    int image_height = 16;
    int image_width = 16;
    int cameras = 2;
    double attribute_fraction = 1.0 / 3.0; // fraction of datasets that carry labels
    double appearance_noise = 0.05;        // per-pixel gaussian sigma
    int position_jitter = 1;               // per-image shift in pixels

    void validate() const {
        if (num_datasets < 1 || identities_per_dataset < 1 || images_per_identity < 1 ||
            cameras < 1)
            throw Error("generate_synthetic: all counts must be positive");
        if (!(attribute_fraction >= 0.0 && attribute_fraction <= 1.0))
            throw Error("generate_synthetic: attribute_fraction must be in [0, 1]");
        if (image_height < 12 || image_width < 12)
            throw Error("generate_synthetic: image size too small to render the pattern "
                        "(need at least 12x12)");
        if (appearance_noise < 0.0) throw Error("generate_synthetic: negative noise");
        if (position_jitter < 0) throw Error("generate_synthetic: negative jitter");
    }
};

namespace detail {

struct Rgb {
    float r, g, b;
};

inline const std::array<Rgb, 8>& top_palette() {
    static const std::array<Rgb, 8> p = {{{0.05f, 0.05f, 0.05f},
                                          {0.10f, 0.20f, 0.85f},
                                          {0.10f, 0.70f, 0.15f},
                                          {0.50f, 0.50f, 0.50f},
                                          {0.55f, 0.10f, 0.70f},
                                          {0.85f, 0.10f, 0.10f},
                                          {0.95f, 0.95f, 0.95f},
                                          {0.90f, 0.85f, 0.10f}}};
    return p;
}

inline const std::array<Rgb, 9>& bottom_palette() {
    static const std::array<Rgb, 9> p = {{{0.05f, 0.05f, 0.05f},
                                          {0.10f, 0.20f, 0.85f},
                                          {0.45f, 0.28f, 0.10f},
                                          {0.50f, 0.50f, 0.50f},
                                          {0.10f, 0.70f, 0.15f},
                                          {0.95f, 0.55f, 0.70f},
                                          {0.55f, 0.10f, 0.70f},
                                          {0.95f, 0.95f, 0.95f},
                                          {0.90f, 0.85f, 0.10f}}};
    return p;
}

// Appearance parameters of one identity. Attribute labels, when a dataset is
// annotated, are exactly these values, so the labels are learnable from the
// rendering by construction.
struct IdentityLook {
    AttributeAnnotation attrs; // standard schema order
    std::array<float, 3> top_shade{};
    std::array<float, 3> bottom_shade{};
    float body_shift = 0.0f; // identity-specific horizontal offset (fraction of W)
};

inline IdentityLook draw_identity_look(Rng& rng) {
    IdentityLook look;
    look.attrs.values = {
        static_cast<int>(rng.below(2)), // gender
        static_cast<int>(rng.below(8)), // top color
        static_cast<int>(rng.below(9)), // bottom color
        static_cast<int>(rng.below(2)), // top length
        static_cast<int>(rng.below(2)), // bottom length
        static_cast<int>(rng.below(2)), // backpack
        static_cast<int>(rng.below(2)), // hand bag
        static_cast<int>(rng.below(2)), // other bag
        static_cast<int>(rng.below(2)), // hair length
    };
    for (auto& v : look.top_shade) v = static_cast<float>(rng.uniform(-0.04, 0.04));
    for (auto& v : look.bottom_shade) v = static_cast<float>(rng.uniform(-0.04, 0.04));
    look.body_shift = static_cast<float>(rng.uniform(-0.05, 0.05));
    return look;
}

inline void fill_rect(Image& im, int y0, int y1, int x0, int x1, Rgb c) {
    y0 = std::max(y0, 0);
    x0 = std::max(x0, 0);
    y1 = std::min(y1, im.height);
    x1 = std::min(x1, im.width);
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            im.at(y, x, 0) = c.r;
            im.at(y, x, 1) = c.g;
            im.at(y, x, 2) = c.b;
        }
    }
}

inline Image render_identity_image(const SyntheticConfig& cfg, const IdentityLook& look,
                                   int camera, Rng& rng) {
    const int H = cfg.image_height, W = cfg.image_width;
    Image im = Image::zeros(H, W, 3);

    // camera-dependent brightness and a fixed horizontal shift
    const double cam_t = cfg.cameras > 1
                             ? static_cast<double>(camera) / static_cast<double>(cfg.cameras - 1)
                             : 0.5;
    const float brightness =
        static_cast<float>((0.90 + 0.18 * cam_t) * (1.0 + rng.uniform(-0.04, 0.04)));
    const int cam_shift = cfg.cameras > 1 ? (camera % 2 == 0 ? -1 : 1) : 0;

    const int jx = cfg.position_jitter > 0
                       ? static_cast<int>(rng.below(2 * cfg.position_jitter + 1)) - cfg.position_jitter
                       : 0;
    const int jy = cfg.position_jitter > 0
                       ? static_cast<int>(rng.below(2 * cfg.position_jitter + 1)) - cfg.position_jitter
                       : 0;

    // background with a slight camera tint
    const Rgb bg{0.10f, 0.11f, static_cast<float>(0.10 + 0.04 * cam_t)};
    fill_rect(im, 0, H, 0, W, bg);

    const auto& v = look.attrs.values;
    const bool male = v[0] == 0;
    const Rgb top_base = top_palette()[static_cast<std::size_t>(v[1])];
    const Rgb bot_base = bottom_palette()[static_cast<std::size_t>(v[2])];
    const Rgb top{top_base.r + look.top_shade[0], top_base.g + look.top_shade[1],
                  top_base.b + look.top_shade[2]};
    const Rgb bot{bot_base.r + look.bottom_shade[0], bot_base.g + look.bottom_shade[1],
                  bot_base.b + look.bottom_shade[2]};
    const bool top_long = v[3] == 0;
    const bool bot_long = v[4] == 0;
    const bool backpack = v[5] == 0;
    const bool hand_bag = v[6] == 0;
    const bool other_bag = v[7] == 0;
    const bool hair_long = v[8] == 0;

    const int cx = W / 2 + cam_shift + jx + static_cast<int>(std::lround(look.body_shift * W));
    const int body_half = std::max(2, static_cast<int>(std::lround((male ? 0.27 : 0.17) * W)));

    auto row = [&](double f) { return static_cast<int>(std::lround(f * H)) + jy; };

    // hair, face, torso, legs as stacked bands
    const int hair_top = row(0.02);
    const int hair_bot = row(hair_long ? 0.18 : 0.09);
    const int hair_half = std::max(1, static_cast<int>(std::lround((hair_long ? 0.24 : 0.14) * W)));
    fill_rect(im, hair_top, hair_bot, cx - hair_half, cx + hair_half, {0.14f, 0.09f, 0.05f});

    const int face_bot = row(0.24);
    fill_rect(im, hair_bot, face_bot, cx - std::max(1, W / 8), cx + std::max(1, W / 8),
              {0.90f, 0.74f, 0.60f});

    const int torso_bot = row(top_long ? 0.54 : 0.44);
    fill_rect(im, face_bot, torso_bot, cx - body_half, cx + body_half, top);

    // legs render as two bars; the gap gives lower-body colors a texture
    // signature convolution kernels can tell apart from the solid torso
    const int legs_bot = row(bot_long ? 0.96 : 0.76);
    const int leg_half = std::max(2, static_cast<int>(std::lround(0.26 * W)));
    const int leg_gap = std::max(1, static_cast<int>(std::lround(0.07 * W)));
    fill_rect(im, torso_bot, legs_bot, cx - leg_half, cx - leg_gap, bot);
    fill_rect(im, torso_bot, legs_bot, cx + leg_gap, cx + leg_half, bot);

    if (backpack) {
        const int bw = std::max(1, static_cast<int>(std::lround(0.15 * W)));
        fill_rect(im, face_bot + 1, torso_bot, cx - body_half - bw, cx - body_half,
                  {0.50f, 0.08f, 0.08f});
    }
    if (hand_bag) {
        fill_rect(im, row(0.50), row(0.64), cx + body_half, cx + body_half + std::max(2, W / 8),
                  {0.92f, 0.78f, 0.12f});
    }
    if (other_bag) {
        fill_rect(im, row(0.62), row(0.76), cx - leg_half - std::max(2, W / 8), cx - leg_half,
                  {0.10f, 0.55f, 0.85f});
    }

    // brightness, pixel noise, quantization to 8-bit levels
    for (auto& p : im.px) {
        double val = static_cast<double>(p) * brightness;
        if (cfg.appearance_noise > 0.0) val += rng.normal() * cfg.appearance_noise;
        p = static_cast<float>(val);
    }
    quantize8(im);
    return im;
}

} // namespace detail

/// Deterministic desk-scale corpus. Every identity gets a distinct attribute
/// combination (unique across the whole corpus) plus identity-specific color
/// shades; cameras perturb brightness and position. The first
/// round(attribute_fraction * num_datasets) datasets carry attribute labels.
inline std::vector<std::pair<DatasetDescriptor, std::vector<Sample>>>
generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const int annotated_datasets =
        static_cast<int>(std::lround(cfg.attribute_fraction * cfg.num_datasets));

    std::vector<std::pair<DatasetDescriptor, std::vector<Sample>>> out;
    std::set<std::vector<int>> used_combos;
    std::set<std::pair<int, int>> used_color_pairs; // the dominant appearance cue
    for (int ds = 0; ds < cfg.num_datasets; ++ds) {
        DatasetDescriptor desc;
        desc.dataset_id = ds;
        desc.name = "synth" + std::to_string(ds);
        desc.num_identities = cfg.identities_per_dataset;
        desc.has_attributes = ds < annotated_datasets;
        desc.camera_count = cfg.cameras;

        std::vector<Sample> samples;
        std::int64_t next_sample_index = 0;
        for (int id = 0; id < cfg.identities_per_dataset; ++id) {
            Rng look_rng(derive_seed(seed, {0x4C4F4F4Bull /*LOOK*/, static_cast<std::uint64_t>(ds),
                                            static_cast<std::uint64_t>(id)}));
            detail::IdentityLook look = detail::draw_identity_look(look_rng);
            // identities get distinct top/bottom color pairs while the 72
            // combinations last, and always a distinct full attribute vector
            for (int attempt = 0; attempt < 256; ++attempt) {
                const std::pair<int, int> colors{look.attrs.values[1], look.attrs.values[2]};
                const bool pair_ok =
                    !used_color_pairs.count(colors) || used_color_pairs.size() >= 72;
                if (pair_ok && !used_combos.count(look.attrs.values)) break;
                look = detail::draw_identity_look(look_rng);
            }
            used_combos.insert(look.attrs.values);
            used_color_pairs.insert({look.attrs.values[1], look.attrs.values[2]});
            for (int img = 0; img < cfg.images_per_identity; ++img) {
                const int camera = img % cfg.cameras;
                Rng img_rng(derive_seed(seed, {0x494D4147ull /*IMAG*/,
                                               static_cast<std::uint64_t>(ds),
                                               static_cast<std::uint64_t>(id),
                                               static_cast<std::uint64_t>(img)}));
                Sample s;
                s.image = detail::render_identity_image(cfg, look, camera, img_rng);
                s.local_identity = id;
                s.global_identity = id; // registration assigns the real offset
                s.dataset_id = ds;
                s.camera_id = camera;
                if (desc.has_attributes) s.attributes = look.attrs;
                s.sample_id = make_sample_id(ds, next_sample_index++);
                samples.push_back(std::move(s));
            }
        }
        out.emplace_back(std::move(desc), std::move(samples));
    }
    return out;
}

} // namespace reid
