#pragma once

#include <string>
#include <vector>

#include "videdit/tensor.hpp"

namespace videdit {

// 8-bit PNG round trips quantize to 1/255; the archive path is bitwise.
void save_png(const std::string& path, const Tensor& frame);  // [C,H,W], C<=4, values clamped to [0,1]
Tensor load_png(const std::string& path, int channels);

// Per-frame PNGs plus an index manifest (manifest.json) in `dir`.
void save_video_png(const std::string& dir, const Tensor& video);
Tensor load_video_png(const std::string& dir);

void save_video_archive(const std::string& path, const Tensor& video);
Tensor load_video_archive(const std::string& path);

// Binary mask [H,W] as PGM (P5, 0/255).
void save_pgm(const std::string& path, const Tensor& mask);

// One image per method row, frames left to right, 1px separators.
Tensor frame_grid(const std::vector<Tensor>& videos);

}  // namespace videdit
