#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "psforge/core/error.hpp"
#include "psforge/core/normal_image.hpp"
#include "psforge/core/png_io.hpp"
#include "psforge/core/tensor_file.hpp"
#include "psforge/core/types.hpp"
#include "psforge/synth/render.hpp"

namespace psforge {

// Directory layout shared by rendered outputs and DiLiGenT-style ingestion:
//   images.tf      float image stack [m,H,W] (preferred when present)
//   img_###.png    numbered 16-bit grayscale images (fallback source)
//   lights.txt     one "lx ly lz" per line
//   intensities.txt  one or three scalars per line (optional, default 1)
//   mask.png       8-bit foreground mask (optional, default all-on)
//   normals_gt.tf / normals_gt.png   ground truth (optional)
//   filenames.txt  explicit image list (optional)
struct Dataset {
    ImageStack stack;
    LightSet lights;
    NormalMap gt;
    bool has_gt = false;
};

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line) {
    std::istringstream ss(line);
    std::vector<std::string> out;
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

inline bool is_comment_or_blank(const std::string& line) {
    for (char c : line) {
        if (c == '#') return true;
        if (!std::isspace(static_cast<unsigned char>(c))) return false;
    }
    return true;
}

}  // namespace detail

inline LightSet load_lights_file(const std::string& lights_path,
                                 const std::string& intensities_path) {
    LightSet ls;
    std::ifstream lf(lights_path);
    if (!lf) throw DataError("load_dataset: missing lights file " + lights_path);
    std::string line;
    while (std::getline(lf, line)) {
        if (detail::is_comment_or_blank(line)) continue;
        const auto tok = detail::split_ws(line);
        if (tok.size() != 3) throw DataError("load_dataset: bad lights line: " + line);
        Vec3 l{std::stod(tok[0]), std::stod(tok[1]), std::stod(tok[2])};
        ls.directions.push_back(l.normalized());
    }
    ls.intensities.assign(ls.directions.size(), 1.0);

    std::ifstream inf(intensities_path);
    if (inf) {
        size_t j = 0;
        while (std::getline(inf, line)) {
            if (detail::is_comment_or_blank(line)) continue;
            const auto tok = detail::split_ws(line);
            if (tok.empty() || tok.size() > 3)
                throw DataError("load_dataset: bad intensities line: " + line);
            if (j >= ls.directions.size())
                throw DataError("load_dataset: more intensities than lights");
            double s = 0.0;
            for (const std::string& t : tok) s += std::stod(t);
            ls.intensities[j++] = s / double(tok.size());  // per-channel values averaged
        }
        if (j != 0 && j != ls.directions.size())
            throw DataError("load_dataset: intensity count does not match light count");
    }
    return ls;
}

inline Image image_from_png(const PngImage& png) {
    Image img(png.height, png.width);
    const float scale = 1.0f / float(png.max_value());
    for (int r = 0; r < png.height; ++r) {
        for (int c = 0; c < png.width; ++c) {
            float v = 0.0f;
            for (int ch = 0; ch < png.channels; ++ch) v += float(png.at(r, c, ch));
            img.at(r, c) = v / float(png.channels) * scale;  // gray = channel mean
        }
    }
    return img;
}

inline Mask mask_from_png(const PngImage& png) {
    Mask m(png.height, png.width);
    for (int r = 0; r < png.height; ++r)
        for (int c = 0; c < png.width; ++c) m.set(r, c, png.at(r, c, 0) > png.max_value() / 2);
    return m;
}

inline Dataset load_dataset(const std::string& dir, const std::vector<int>& exclude = {}) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw DataError("load_dataset: no such directory: " + dir);

    Dataset ds;
    ds.lights = load_lights_file(dir + "/lights.txt", dir + "/intensities.txt");

    const std::set<int> drop(exclude.begin(), exclude.end());
    for (int j : exclude)
        if (j < 0 || j >= int(ds.lights.size()))
            throw DataError("load_dataset: exclusion index out of range: " + std::to_string(j));

    if (fs::exists(dir + "/images.tf")) {
        Tensor t = read_tensor(dir + "/images.tf");
        if (t.dims.size() != 3) throw DataError("load_dataset: images.tf must be rank 3");
        const int m = int(t.dims[0]), h = int(t.dims[1]), w = int(t.dims[2]);
        if (size_t(m) != ds.lights.size())
            throw DataError("load_dataset: image count does not match light count");
        for (int j = 0; j < m; ++j) {
            if (drop.count(j)) continue;
            Image img(h, w);
            std::copy(t.data.begin() + size_t(j) * h * w, t.data.begin() + size_t(j + 1) * h * w,
                      img.data().begin());
            ds.stack.images.push_back(std::move(img));
        }
    } else {
        std::vector<std::string> names;
        if (fs::exists(dir + "/filenames.txt")) {
            std::ifstream f(dir + "/filenames.txt");
            std::string line;
            while (std::getline(f, line)) {
                if (!detail::is_comment_or_blank(line)) names.push_back(line);
            }
        } else {
            for (const auto& e : fs::directory_iterator(dir)) {
                const std::string n = e.path().filename().string();
                if (e.path().extension() != ".png") continue;
                if (n == "mask.png" || n == "normals_gt.png" || n == "normals_est.png" ||
                    n == "error_map.png")
                    continue;
                names.push_back(n);
            }
            std::sort(names.begin(), names.end());
        }
        if (names.size() != ds.lights.size())
            throw DataError("load_dataset: image count (" + std::to_string(names.size()) +
                            ") does not match light count (" + std::to_string(ds.lights.size()) +
                            ")");
        for (size_t j = 0; j < names.size(); ++j) {
            if (drop.count(int(j))) continue;
            ds.stack.images.push_back(image_from_png(read_png(dir + "/" + names[j])));
        }
    }

    // drop the excluded lights in lockstep with the images
    if (!drop.empty()) {
        LightSet kept;
        for (size_t j = 0; j < ds.lights.size(); ++j) {
            if (drop.count(int(j))) continue;
            kept.directions.push_back(ds.lights.directions[j]);
            kept.intensities.push_back(ds.lights.intensities[j]);
        }
        ds.lights = std::move(kept);
    }
    if (ds.stack.images.empty()) throw DataError("load_dataset: no images in " + dir);

    const int h = ds.stack.images[0].height(), w = ds.stack.images[0].width();
    if (fs::exists(dir + "/mask.png"))
        ds.stack.mask = mask_from_png(read_png(dir + "/mask.png"));
    else
        ds.stack.mask = Mask(h, w, true);

    if (fs::exists(dir + "/normals_gt.tf")) {
        Tensor t = read_tensor(dir + "/normals_gt.tf");
        if (t.dims.size() != 3 || t.dims[2] != 3)
            throw DataError("load_dataset: normals_gt.tf must be [H,W,3]");
        ds.gt = NormalMap(int(t.dims[0]), int(t.dims[1]));
        for (int r = 0; r < ds.gt.height; ++r) {
            for (int c = 0; c < ds.gt.width; ++c) {
                const size_t base = (size_t(r) * ds.gt.width + c) * 3;
                Vec3 n{t.data[base], t.data[base + 1], t.data[base + 2]};
                if (n.norm() > 0.5) {
                    ds.gt.at(r, c) = n.normalized();
                    ds.gt.mask.set(r, c, true);
                }
            }
        }
        ds.has_gt = true;
    } else if (fs::exists(dir + "/normals_gt.png")) {
        PngImage png = read_png(dir + "/normals_gt.png");
        if (png.channels != 3) throw DataError("load_dataset: normals_gt.png is not RGB");
        ds.gt = decode_normal_image(png.height, png.width, png.samples);
        ds.has_gt = true;
    }

    ds.stack.validate(ds.lights);
    return ds;
}

// --- writers ----------------------------------------------------------------

inline void save_normal_map(const std::string& tf_path, const std::string& png_path,
                            const NormalMap& nm) {
    std::vector<float> payload(size_t(nm.height) * nm.width * 3, 0.0f);
    for (int r = 0; r < nm.height; ++r) {
        for (int c = 0; c < nm.width; ++c) {
            if (!nm.mask.at(r, c)) continue;
            const size_t base = (size_t(r) * nm.width + c) * 3;
            payload[base] = float(nm.at(r, c).x);
            payload[base + 1] = float(nm.at(r, c).y);
            payload[base + 2] = float(nm.at(r, c).z);
        }
    }
    write_tensor(tf_path,
                 std::vector<uint32_t>{uint32_t(nm.height), uint32_t(nm.width), 3}, payload);
    if (!png_path.empty())
        write_png_rgb16(png_path, nm.width, nm.height, encode_normal_image(nm));
}

inline NormalMap load_normal_map(const std::string& path) {
    if (path.size() > 3 && path.substr(path.size() - 3) == ".tf") {
        Tensor t = read_tensor(path);
        if (t.dims.size() != 3 || t.dims[2] != 3)
            throw DataError("load_normal_map: tensor must be [H,W,3]: " + path);
        NormalMap nm(int(t.dims[0]), int(t.dims[1]));
        for (int r = 0; r < nm.height; ++r) {
            for (int c = 0; c < nm.width; ++c) {
                const size_t base = (size_t(r) * nm.width + c) * 3;
                Vec3 n{t.data[base], t.data[base + 1], t.data[base + 2]};
                if (n.norm() > 0.5) {
                    nm.at(r, c) = n.normalized();
                    nm.mask.set(r, c, true);
                }
            }
        }
        return nm;
    }
    PngImage png = read_png(path);
    if (png.channels != 3) throw DataError("load_normal_map: " + path + " is not a 3-channel image");
    return decode_normal_image(png.height, png.width, png.samples);
}

// Writes a rendered sample in the dataset layout. PNG previews share one
// exposure so they stay a valid (quantized, globally rescaled) dataset.
inline void save_rendered_sample(const std::string& dir, const RenderedSample& rs) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const int h = rs.stack.height(), w = rs.stack.width();
    const int m = int(rs.stack.count());

    float peak = 0.0f;
    for (const Image& img : rs.stack.images)
        for (float v : img.data()) peak = std::max(peak, v);
    const double exposure = peak > 1.0f ? 1.0 / double(peak) : 1.0;

    std::vector<float> stack_payload;
    stack_payload.reserve(size_t(m) * h * w);
    for (const Image& img : rs.stack.images)
        stack_payload.insert(stack_payload.end(), img.data().begin(), img.data().end());
    write_tensor(dir + "/images.tf",
                 std::vector<uint32_t>{uint32_t(m), uint32_t(h), uint32_t(w)}, stack_payload);

    std::vector<uint16_t> png_buf(size_t(h) * w);
    for (int j = 0; j < m; ++j) {
        for (size_t i = 0; i < png_buf.size(); ++i) {
            const double v = std::clamp(double(rs.stack.images[j].data()[i]) * exposure, 0.0, 1.0);
            png_buf[i] = uint16_t(std::lround(v * 65535.0));
        }
        char name[32];
        std::snprintf(name, sizeof(name), "/img_%03d.png", j);
        write_png_gray16(dir + name, w, h, png_buf);
    }

    std::ofstream lf(dir + "/lights.txt");
    lf.precision(17);
    for (const Vec3& l : rs.lights.directions) lf << l.x << ' ' << l.y << ' ' << l.z << '\n';
    std::ofstream inf(dir + "/intensities.txt");
    inf.precision(17);
    for (double L : rs.lights.intensities) inf << L << '\n';

    std::vector<uint16_t> mask_buf(size_t(h) * w, 0);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (rs.stack.mask.at(r, c)) mask_buf[size_t(r) * w + c] = 255;
    write_png_gray8(dir + "/mask.png", w, h, mask_buf);

    save_normal_map(dir + "/normals_gt.tf", dir + "/normals_gt.png", rs.gt_normals);

    std::ofstream meta(dir + "/meta.txt");
    meta << "scene = " << rs.scene.name << "\n";
    meta << "exposure = " << exposure << "\n";
    meta << "lights = " << m << "\n";
}

}  // namespace psforge
