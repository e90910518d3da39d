#include "videdit/scene.hpp"

#include <cmath>
#include <stdexcept>

#include "videdit/rng.hpp"

namespace videdit {

std::vector<std::string> scene_colors() { return {"red", "green", "blue", "yellow", "purple", "orange"}; }
std::vector<std::string> scene_shapes() { return {"square", "circle", "triangle"}; }
std::vector<std::string> scene_directions() { return {"left", "right", "up", "down", "still"}; }

namespace {

// 4-channel sprite colors; the last channel is a saliency-like band that
// separates sprites from the dim background texture.
std::vector<double> color_values(const std::string& name) {
    if (name == "red") return {0.95, 0.15, 0.15, 0.90};
    if (name == "green") return {0.15, 0.90, 0.20, 0.90};
    if (name == "blue") return {0.15, 0.25, 0.95, 0.90};
    if (name == "yellow") return {0.95, 0.90, 0.10, 0.90};
    if (name == "purple") return {0.70, 0.20, 0.90, 0.90};
    if (name == "orange") return {0.95, 0.55, 0.10, 0.90};
    throw std::invalid_argument("unknown sprite color: " + name);
}

bool sprite_hit(const std::string& shape, int r, int c, int size) {
    double ctr = (size - 1) / 2.0;
    if (shape == "square") return true;
    if (shape == "circle") {
        double dr = r - ctr, dc = c - ctr;
        return dr * dr + dc * dc <= (size / 2.0) * (size / 2.0);
    }
    if (shape == "triangle") return std::fabs(c - ctr) <= (r + 1) * 0.5;
    throw std::invalid_argument("unknown sprite shape: " + shape);
}

std::pair<int, int> velocity_of(const std::string& direction, int speed) {
    if (direction == "left") return {0, -speed};
    if (direction == "right") return {0, speed};
    if (direction == "up") return {-speed, 0};
    if (direction == "down") return {speed, 0};
    if (direction == "still") return {0, 0};
    throw std::invalid_argument("unknown direction: " + direction);
}

// Smooth static texture from a few random low-frequency waves.
Tensor make_background(int channels, int h, int w, Rng& rng) {
    Tensor bg({channels, h, w});
    for (int c = 0; c < channels; ++c) {
        double fx = rng.uniform(0.5, 1.5), fy = rng.uniform(0.5, 1.5);
        double px = rng.uniform(0.0, 2.0 * M_PI), py = rng.uniform(0.0, 2.0 * M_PI);
        double base = rng.uniform(0.18, 0.30);
        double amp = rng.uniform(0.05, 0.12);
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                double v = base + amp * std::sin(2.0 * M_PI * fy * i / h + py) *
                                      std::cos(2.0 * M_PI * fx * j / w + px);
                bg.at(c, i, j) = std::min(0.45, std::max(0.08, v));
            }
    }
    return bg;
}

}  // namespace

Scene generate_scene(const SceneParams& p, uint64_t seed) {
    require(p.frames >= 1 && p.height > 0 && p.width > 0 && p.channels > 0, "generate_scene: bad dimensions");
    require(p.sprite_size >= 1 && p.sprite_size <= std::min(p.height, p.width),
            "generate_scene: sprite larger than canvas");
    Rng rng(Rng::derive(seed, string_hash("scene")));
    auto [vr, vc] = velocity_of(p.direction, p.speed);

    // pick a start position that keeps the sprite on canvas over all frames
    auto pick_start = [&](int extent, int v, int canvas) {
        int lo = 0, hi = canvas - p.sprite_size;
        int travel = v * (p.frames - 1);
        if (travel > 0) hi -= travel;
        if (travel < 0) lo -= travel;
        if (!p.wrap) {
            require(lo <= hi, "generate_scene: sprite leaves the canvas (enable wrap or shrink motion)");
            return rng.uniform_int(lo, hi);
        }
        (void)extent;
        return rng.uniform_int(0, canvas - 1);
    };
    int r0 = pick_start(p.height, vr, p.height);
    int c0 = pick_start(p.width, vc, p.width);

    Tensor bg = make_background(p.channels, p.height, p.width, rng);
    std::vector<double> col = color_values(p.color);
    require(static_cast<int>(col.size()) >= p.channels, "generate_scene: channels exceed color depth");

    Scene scene;
    scene.params = p;
    scene.caption = "a " + p.color + " " + p.shape + " moving " + p.direction;
    scene.video = Tensor({p.frames, p.channels, p.height, p.width});
    scene.masks.alpha = Tensor({p.frames, p.height, p.width});

    for (int f = 0; f < p.frames; ++f) {
        int rr = r0 + vr * f, cc = c0 + vc * f;
        for (int c = 0; c < p.channels; ++c)
            std::copy_n(bg.data() + static_cast<int64_t>(c) * p.height * p.width,
                        static_cast<int64_t>(p.height) * p.width,
                        scene.video.data() + (static_cast<int64_t>(f) * p.channels + c) * p.height * p.width);
        for (int i = 0; i < p.sprite_size; ++i)
            for (int j = 0; j < p.sprite_size; ++j) {
                if (!sprite_hit(p.shape, i, j, p.sprite_size)) continue;
                int y = rr + i, x = cc + j;
                if (p.wrap) {
                    y = ((y % p.height) + p.height) % p.height;
                    x = ((x % p.width) + p.width) % p.width;
                } else if (y < 0 || y >= p.height || x < 0 || x >= p.width) {
                    continue;
                }
                for (int c = 0; c < p.channels; ++c) scene.video.at(f, c, y, x) = col[static_cast<size_t>(c)];
                scene.masks.alpha.at(f, y, x) = 1.0;
            }
    }
    return scene;
}

std::vector<CaptionedImage> make_pretrain_dataset(int count, int height, int width, int channels,
                                                  uint64_t seed) {
    std::vector<CaptionedImage> out;
    out.reserve(static_cast<size_t>(count));
    Rng rng(Rng::derive(seed, string_hash("pretrain-data")));
    auto colors = scene_colors();
    auto shapes = scene_shapes();
    auto dirs = scene_directions();
    for (int i = 0; i < count; ++i) {
        SceneParams p;
        p.frames = 1;
        p.height = height;
        p.width = width;
        p.channels = channels;
        p.color = colors[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(colors.size()) - 1))];
        p.shape = shapes[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(shapes.size()) - 1))];
        p.direction = dirs[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(dirs.size()) - 1))];
        p.speed = 0;
        p.sprite_size = rng.uniform_int(5, std::min(9, std::min(height, width) - 1));
        Scene s = generate_scene(p, Rng::derive(seed, static_cast<uint64_t>(i) + 101));
        CaptionedImage ci;
        ci.caption = s.caption;
        ci.image = Tensor({channels, height, width});
        std::copy_n(s.video.data(), ci.image.numel(), ci.image.data());
        out.push_back(std::move(ci));
    }
    return out;
}

}  // namespace videdit
