#include "videdit/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "videdit/archive.hpp"

namespace videdit {

namespace {

uint8_t quant(double v) {
    double c = std::min(1.0, std::max(0.0, v));
    return static_cast<uint8_t>(std::lround(c * 255.0));
}

struct PngWriteCloser {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* fp = nullptr;
    ~PngWriteCloser() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (fp) std::fclose(fp);
    }
};

struct PngReadCloser {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* fp = nullptr;
    ~PngReadCloser() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (fp) std::fclose(fp);
    }
};

}  // namespace

void save_png(const std::string& path, const Tensor& frame) {
    require(frame.ndim() == 3 && frame.dim(0) >= 1 && frame.dim(0) <= 4, "save_png: expected [C<=4,H,W]");
    int c = frame.dim(0), h = frame.dim(1), w = frame.dim(2);

    PngWriteCloser ctx;
    ctx.fp = std::fopen(path.c_str(), "wb");
    require(ctx.fp != nullptr, "save_png: cannot open " + path);
    ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    require(ctx.png != nullptr, "save_png: png_create_write_struct failed");
    ctx.info = png_create_info_struct(ctx.png);
    require(ctx.info != nullptr, "save_png: png_create_info_struct failed");
    if (setjmp(png_jmpbuf(ctx.png))) throw std::runtime_error("save_png: libpng error for " + path);

    png_init_io(ctx.png, ctx.fp);
    png_set_IHDR(ctx.png, ctx.info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_RGBA, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(ctx.png, ctx.info);

    std::vector<uint8_t> row(static_cast<size_t>(w) * 4);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            uint8_t rgba[4] = {0, 0, 0, 255};
            if (c == 1) {
                uint8_t g = quant(frame.at(0, i, j));
                rgba[0] = rgba[1] = rgba[2] = g;
            } else {
                for (int k = 0; k < c; ++k) rgba[k] = quant(frame.at(k, i, j));
                if (c == 2) rgba[2] = 0;
            }
            std::copy_n(rgba, 4, row.data() + static_cast<size_t>(j) * 4);
        }
        png_write_row(ctx.png, row.data());
    }
    png_write_end(ctx.png, nullptr);
}

Tensor load_png(const std::string& path, int channels) {
    require(channels >= 1 && channels <= 4, "load_png: channels must be 1..4");
    PngReadCloser ctx;
    ctx.fp = std::fopen(path.c_str(), "rb");
    require(ctx.fp != nullptr, "load_png: cannot open " + path);
    ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    require(ctx.png != nullptr, "load_png: png_create_read_struct failed");
    ctx.info = png_create_info_struct(ctx.png);
    require(ctx.info != nullptr, "load_png: png_create_info_struct failed");
    if (setjmp(png_jmpbuf(ctx.png))) throw std::runtime_error("load_png: libpng error for " + path);

    png_init_io(ctx.png, ctx.fp);
    png_read_info(ctx.png, ctx.info);
    png_set_expand(ctx.png);
    png_set_strip_16(ctx.png);
    png_set_gray_to_rgb(ctx.png);
    png_set_add_alpha(ctx.png, 0xFF, PNG_FILLER_AFTER);
    png_read_update_info(ctx.png, ctx.info);

    int w = static_cast<int>(png_get_image_width(ctx.png, ctx.info));
    int h = static_cast<int>(png_get_image_height(ctx.png, ctx.info));
    require(png_get_channels(ctx.png, ctx.info) == 4, "load_png: unexpected channel layout");

    std::vector<uint8_t> data(static_cast<size_t>(w) * h * 4);
    std::vector<png_bytep> rows(static_cast<size_t>(h));
    for (int i = 0; i < h; ++i) rows[static_cast<size_t>(i)] = data.data() + static_cast<size_t>(i) * w * 4;
    png_read_image(ctx.png, rows.data());

    Tensor out({channels, h, w});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int k = 0; k < channels; ++k)
                out.at(k, i, j) = data[(static_cast<size_t>(i) * w + j) * 4 + k] / 255.0;
    return out;
}

void save_video_png(const std::string& dir, const Tensor& video) {
    require(video.ndim() == 4, "save_video_png: expected [F,C,H,W]");
    std::filesystem::create_directories(dir);
    int f = video.dim(0), c = video.dim(1), h = video.dim(2), w = video.dim(3);
    nlohmann::json manifest;
    manifest["frames"] = f;
    manifest["channels"] = c;
    manifest["height"] = h;
    manifest["width"] = w;
    nlohmann::json files = nlohmann::json::array();
    for (int i = 0; i < f; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%03d.png", i);
        Tensor frame({c, h, w});
        std::copy_n(video.data() + static_cast<int64_t>(i) * c * h * w, frame.numel(), frame.data());
        save_png(dir + "/" + name, frame);
        files.push_back(name);
    }
    manifest["files"] = files;
    std::ofstream mf(dir + "/manifest.json");
    require(mf.good(), "save_video_png: cannot write manifest in " + dir);
    mf << manifest.dump(2) << "\n";
}

Tensor load_video_png(const std::string& dir) {
    std::ifstream mf(dir + "/manifest.json");
    require(mf.good(), "load_video_png: missing manifest in " + dir);
    nlohmann::json manifest = nlohmann::json::parse(mf);
    int f = manifest.at("frames").get<int>();
    int c = manifest.at("channels").get<int>();
    int h = manifest.at("height").get<int>();
    int w = manifest.at("width").get<int>();
    require(f >= 1, "load_video_png: empty video");
    Tensor out({f, c, h, w});
    auto files = manifest.at("files");
    require(static_cast<int>(files.size()) == f, "load_video_png: manifest frame count mismatch");
    for (int i = 0; i < f; ++i) {
        Tensor frame = load_png(dir + "/" + files[static_cast<size_t>(i)].get<std::string>(), c);
        require(frame.dim(1) == h && frame.dim(2) == w, "load_video_png: frame size mismatch");
        std::copy_n(frame.data(), frame.numel(), out.data() + static_cast<int64_t>(i) * c * h * w);
    }
    return out;
}

void save_video_archive(const std::string& path, const Tensor& video) {
    TensorArchive ar;
    ar.meta["kind"] = "video";
    ar.put("video", video);
    ar.save(path);
}

Tensor load_video_archive(const std::string& path) {
    TensorArchive ar = TensorArchive::load(path);
    return ar.get("video");
}

void save_pgm(const std::string& path, const Tensor& mask) {
    require(mask.ndim() == 2, "save_pgm: expected [H,W]");
    std::ofstream f(path, std::ios::binary);
    require(f.good(), "save_pgm: cannot open " + path);
    f << "P5\n" << mask.dim(1) << " " << mask.dim(0) << "\n255\n";
    for (int64_t i = 0; i < mask.numel(); ++i) f.put(mask[i] != 0.0 ? static_cast<char>(255) : static_cast<char>(0));
}

Tensor frame_grid(const std::vector<Tensor>& videos) {
    require(!videos.empty(), "frame_grid: no videos");
    int f = videos[0].dim(0), c = videos[0].dim(1), h = videos[0].dim(2), w = videos[0].dim(3);
    for (const auto& v : videos) require(v.same_shape(videos[0]), "frame_grid: video shape mismatch");
    int rows = static_cast<int>(videos.size());
    int gh = rows * h + (rows - 1);
    int gw = f * w + (f - 1);
    Tensor grid = Tensor::full({c, gh, gw}, 1.0);
    for (int r = 0; r < rows; ++r)
        for (int i = 0; i < f; ++i)
            for (int cc = 0; cc < c; ++cc)
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x)
                        grid.at(cc, r * (h + 1) + y, i * (w + 1) + x) = videos[static_cast<size_t>(r)].at(i, cc, y, x);
    return grid;
}

}  // namespace videdit
