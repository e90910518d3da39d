#pragma once

#include <string>
#include <vector>

#include "videdit/blending.hpp"
#include "videdit/model.hpp"
#include "videdit/training.hpp"

namespace videdit {

// Procedural sprite-over-texture scenes. Captions come from the closed
// grammar "a <color> <shape> moving <direction>"; ground-truth masks cover
// exactly the sprite pixels and stand in for a saliency detector.
struct SceneParams {
    int frames = 8;
    int height = 16;
    int width = 16;
    int channels = 4;
    std::string color = "red";
    std::string shape = "square";
    std::string direction = "right";  // left/right/up/down/still
    int sprite_size = 7;
    int speed = 1;  // pixels per frame
    bool wrap = false;
};

struct Scene {
    Tensor video;     // [F,C,H,W] in [0,1]
    std::string caption;
    BlendMask masks;  // [F,H,W] ground truth sprite coverage
    SceneParams params;
};

Scene generate_scene(const SceneParams& params, uint64_t seed);

// Random single-frame scenes for pretraining the 2D model.
std::vector<CaptionedImage> make_pretrain_dataset(int count, int height, int width, int channels,
                                                  uint64_t seed);

std::vector<std::string> scene_colors();
std::vector<std::string> scene_shapes();
std::vector<std::string> scene_directions();

}  // namespace videdit
