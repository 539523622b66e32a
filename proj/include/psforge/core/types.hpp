#pragma once

#include <cstdint>
#include <cstdlib>
#include <string>
#include <vector>

#include "psforge/core/error.hpp"
#include "psforge/core/vec3.hpp"

namespace psforge {

// 2-D float image, row-major. Pixel values are linear radiometric floats;
// 16-bit integer sources are divided by 65535 on load.
class Image {
public:
    Image() = default;
    Image(int height, int width, float fill = 0.0f)
        : height_(height), width_(width), px_(size_t(height) * width, fill) {}

    int height() const { return height_; }
    int width() const { return width_; }
    float& at(int r, int c) { return px_[size_t(r) * width_ + c]; }
    float at(int r, int c) const { return px_[size_t(r) * width_ + c]; }
    const std::vector<float>& data() const { return px_; }
    std::vector<float>& data() { return px_; }

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<float> px_;
};

class Mask {
public:
    Mask() = default;
    Mask(int height, int width, bool fill = false)
        : height_(height), width_(width), bits_(size_t(height) * width, fill ? 1 : 0) {}

    int height() const { return height_; }
    int width() const { return width_; }
    bool at(int r, int c) const { return bits_[size_t(r) * width_ + c] != 0; }
    void set(int r, int c, bool v) { bits_[size_t(r) * width_ + c] = v ? 1 : 0; }
    size_t count() const {
        size_t n = 0;
        for (uint8_t b : bits_) n += b;
        return n;
    }

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<uint8_t> bits_;
};

// m unit lighting directions (camera coordinates, z toward the viewer) with
// one positive scalar intensity each.
struct LightSet {
    std::vector<Vec3> directions;
    std::vector<double> intensities;

    size_t size() const { return directions.size(); }

    void validate() const {
        if (directions.size() != intensities.size())
            throw DataError("LightSet: direction/intensity count mismatch");
        for (size_t j = 0; j < directions.size(); ++j) {
            const Vec3& l = directions[j];
            if (!l.finite()) throw DataError("LightSet: non-finite direction");
            if (std::abs(l.norm() - 1.0) > 1e-9)
                throw DataError("LightSet: direction " + std::to_string(j) + " is not unit length");
            if (l.z <= 0.0)
                throw DataError("LightSet: direction " + std::to_string(j) + " is not front-facing");
            if (!(intensities[j] > 0.0))
                throw DataError("LightSet: intensity " + std::to_string(j) + " is not positive");
        }
    }
};

// m grayscale images plus a shared foreground mask, aligned with a LightSet.
struct ImageStack {
    std::vector<Image> images;
    Mask mask;

    size_t count() const { return images.size(); }
    int height() const { return images.empty() ? mask.height() : images[0].height(); }
    int width() const { return images.empty() ? mask.width() : images[0].width(); }

    void validate(const LightSet& lights) const {
        if (images.size() != lights.size())
            throw DataError("ImageStack: image count does not match light count");
        for (const Image& im : images) {
            if (im.height() != height() || im.width() != width())
                throw DataError("ImageStack: inconsistent image dimensions");
            for (float v : im.data())
                if (v < 0.0f) throw DataError("ImageStack: negative pixel value");
        }
        if (mask.height() != height() || mask.width() != width())
            throw DataError("ImageStack: mask dimensions do not match images");
    }
};

// Per-pixel unit normals; entries outside the mask are zero.
struct NormalMap {
    int height = 0;
    int width = 0;
    std::vector<Vec3> normals;
    Mask mask;

    NormalMap() = default;
    NormalMap(int h, int w) : height(h), width(w), normals(size_t(h) * w), mask(h, w) {}

    Vec3& at(int r, int c) { return normals[size_t(r) * width + c]; }
    const Vec3& at(int r, int c) const { return normals[size_t(r) * width + c]; }

    void validate() const {
        for (int r = 0; r < height; ++r)
            for (int c = 0; c < width; ++c)
                if (mask.at(r, c) && std::abs(at(r, c).norm() - 1.0) > 1e-6)
                    throw DataError("NormalMap: masked normal is not unit length");
    }
};

}  // namespace psforge
