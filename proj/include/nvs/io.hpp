// Copyright (c) 2026 the nvs authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <png.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nvs/camera.hpp"
#include "nvs/scene.hpp"
#include "nvs/tensor.hpp"

namespace nvs {

enum class IoCode {
    kMalformedHeader,
    kDimensionOverflow,
    kNonFinitePayload,
    kInvalidPose,
    kEmptyManifest,
    kMissingFile,
    kBadImage,
    kParseError,
};

class IoError : public std::runtime_error {
public:
    IoError(IoCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}
    IoCode code() const { return code_; }

private:
    IoCode code_;
};

// ---------------------------------------------------------------------------
// Tensor files: magic "NVT1", little-endian u32 rank, rank x u32 dims,
// C-order little-endian f32 payload, no padding.

namespace detail {

inline void write_u32_le(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline bool read_u32_le(std::istream& is, uint32_t& v) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
    v = uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) |
        (uint32_t(b[3]) << 24);
    return true;
}

inline void write_f32_le(std::ostream& os, float f) {
    uint32_t v;
    std::memcpy(&v, &f, 4);
    write_u32_le(os, v);
}

inline bool read_f32_le(std::istream& is, float& f) {
    uint32_t v;
    if (!read_u32_le(is, v)) return false;
    std::memcpy(&f, &v, 4);
    return true;
}

}  // namespace detail

inline void save_tensor(const std::string& path, const Tensor& t) {
    if (!t.all_finite())
        throw IoError(IoCode::kNonFinitePayload, "save_tensor: non-finite payload");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError(IoCode::kMissingFile, "save_tensor: cannot open " + path);
    os.write("NVT1", 4);
    detail::write_u32_le(os, uint32_t(t.rank()));
    for (uint32_t d : t.dims()) detail::write_u32_le(os, d);
    for (size_t i = 0; i < t.numel(); ++i) detail::write_f32_le(os, t[i]);
    if (!os) throw IoError(IoCode::kMissingFile, "save_tensor: write failed: " + path);
}

inline Tensor load_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(IoCode::kMissingFile, "load_tensor: cannot open " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "NVT1", 4) != 0)
        throw IoError(IoCode::kMalformedHeader, "load_tensor: bad magic in " + path);
    uint32_t rank = 0;
    if (!detail::read_u32_le(is, rank) || rank == 0 || rank > 8)
        throw IoError(IoCode::kMalformedHeader, "load_tensor: bad rank in " + path);
    std::vector<uint32_t> dims(rank);
    uint64_t numel = 1;
    for (uint32_t& d : dims) {
        if (!detail::read_u32_le(is, d))
            throw IoError(IoCode::kMalformedHeader, "load_tensor: truncated dims");
        if (d == 0)
            throw IoError(IoCode::kMalformedHeader, "load_tensor: zero dimension");
        numel *= d;
        if (numel > (uint64_t(1) << 33))
            throw IoError(IoCode::kDimensionOverflow, "load_tensor: dimensions overflow");
    }
    std::vector<float> data(size_t(numel), 0.0f);
    for (float& f : data) {
        if (!detail::read_f32_le(is, f))
            throw IoError(IoCode::kMalformedHeader, "load_tensor: truncated payload");
        if (!std::isfinite(f))
            throw IoError(IoCode::kNonFinitePayload, "load_tensor: non-finite payload");
    }
    return Tensor(std::move(dims), std::move(data));
}

// ---------------------------------------------------------------------------
// Scene manifests: UTF-8 JSON
//   {"near": f, "far": f,
//    "frames": [{"image": path, "pose": [16 row-major floats], "fov_y_deg": f}]}
// Poses are camera-to-world; image paths resolve relative to the manifest.

struct ManifestFrame {
    std::string image_path;  // may be empty for pose-only (trajectory) frames
    Eigen::Matrix4d pose = Eigen::Matrix4d::Identity();
    double fov_y_deg = 60.0;
};

struct SceneManifest {
    double near = 0.1;
    double far = 10.0;
    std::vector<ManifestFrame> frames;
    std::filesystem::path base_dir;  // set on load; resolves image paths

    Camera camera(size_t index, int width, int height) const {
        const ManifestFrame& f = frames.at(index);
        Camera cam;
        cam.pose = f.pose;
        cam.fov_y_deg = f.fov_y_deg;
        cam.width = width;
        cam.height = height;
        cam.near = near;
        cam.far = far;
        return cam;
    }
};

namespace detail {

inline void check_rigid(const Eigen::Matrix4d& pose, const std::string& context) {
    const Eigen::Matrix3d r = pose.block<3, 3>(0, 0);
    const Eigen::Matrix3d err = r.transpose() * r - Eigen::Matrix3d::Identity();
    if (!pose.allFinite() || err.cwiseAbs().maxCoeff() >= 1e-6 ||
        r.determinant() < 0.0)
        throw IoError(IoCode::kInvalidPose, context + ": invalid pose");
    if (pose(3, 0) != 0.0 || pose(3, 1) != 0.0 || pose(3, 2) != 0.0 ||
        pose(3, 3) != 1.0)
        throw IoError(IoCode::kInvalidPose, context + ": invalid pose (last row)");
}

}  // namespace detail

inline void save_manifest(const std::string& path, const SceneManifest& manifest) {
    if (manifest.frames.empty())
        throw IoError(IoCode::kEmptyManifest, "save_manifest: empty frame list");
    nlohmann::json j;
    j["near"] = manifest.near;
    j["far"] = manifest.far;
    j["frames"] = nlohmann::json::array();
    for (const auto& f : manifest.frames) {
        detail::check_rigid(f.pose, "save_manifest");
        std::vector<double> pose(16);
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) pose[size_t(r * 4 + c)] = f.pose(r, c);
        j["frames"].push_back({{"image", f.image_path},
                               {"pose", pose},
                               {"fov_y_deg", f.fov_y_deg}});
    }
    std::ofstream os(path);
    if (!os) throw IoError(IoCode::kMissingFile, "save_manifest: cannot open " + path);
    os << j.dump(2) << "\n";
}

inline SceneManifest load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError(IoCode::kMissingFile, "load_manifest: cannot open " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(IoCode::kParseError, std::string("load_manifest: ") + e.what());
    }

    SceneManifest m;
    try {
        m.near = j.at("near").get<double>();
        m.far = j.at("far").get<double>();
        if (!(m.near >= 0.0 && m.near < m.far))
            throw IoError(IoCode::kParseError, "load_manifest: invalid near/far");
        for (const auto& jf : j.at("frames")) {
            ManifestFrame f;
            f.image_path = jf.value("image", std::string());
            f.fov_y_deg = jf.at("fov_y_deg").get<double>();
            const auto pose = jf.at("pose").get<std::vector<double>>();
            if (pose.size() != 16)
                throw IoError(IoCode::kParseError, "load_manifest: pose needs 16 floats");
            for (int r = 0; r < 4; ++r)
                for (int c = 0; c < 4; ++c) f.pose(r, c) = pose[size_t(r * 4 + c)];
            detail::check_rigid(f.pose, "load_manifest");
            m.frames.push_back(std::move(f));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(IoCode::kParseError, std::string("load_manifest: ") + e.what());
    }
    if (m.frames.empty())
        throw IoError(IoCode::kEmptyManifest, "load_manifest: empty frame list");
    m.base_dir = std::filesystem::path(path).parent_path();
    return m;
}

// ---------------------------------------------------------------------------
// Decoder weights: one tensor file per layer plus a sidecar manifest that
// pins the layer order, shapes, activation, and the input skip. Weights are
// stored as f32.

namespace detail {

inline Tensor matrix_tensor(const Eigen::MatrixXd& m) {
    Tensor t({uint32_t(m.rows()), uint32_t(m.cols())});
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            t.at(size_t(r), size_t(c)) = float(m(r, c));
    return t;
}

inline Tensor vector_tensor(const Eigen::VectorXd& v) {
    Tensor t({uint32_t(v.size())});
    for (Eigen::Index i = 0; i < v.size(); ++i) t.at(size_t(i)) = float(v[i]);
    return t;
}

inline Eigen::MatrixXd tensor_matrix(const Tensor& t) {
    if (t.rank() != 2)
        throw IoError(IoCode::kParseError, "decoder weights: expected rank-2 tensor");
    Eigen::MatrixXd m(t.dim(0), t.dim(1));
    for (uint32_t r = 0; r < t.dim(0); ++r)
        for (uint32_t c = 0; c < t.dim(1); ++c) m(r, c) = t.at(r, c);
    return m;
}

inline Eigen::VectorXd tensor_vector(const Tensor& t) {
    if (t.rank() != 1)
        throw IoError(IoCode::kParseError, "decoder weights: expected rank-1 tensor");
    Eigen::VectorXd v(t.dim(0));
    for (uint32_t i = 0; i < t.dim(0); ++i) v[i] = t.at(i);
    return v;
}

}  // namespace detail

inline void save_decoder(const std::string& dir, const DecoderMlp& mlp) {
    mlp.validate();
    std::filesystem::create_directories(dir);
    const std::filesystem::path base(dir);
    const std::vector<std::pair<std::string, Tensor>> layers = {
        {"w1", detail::matrix_tensor(mlp.w1)}, {"b1", detail::vector_tensor(mlp.b1)},
        {"w2", detail::matrix_tensor(mlp.w2)}, {"b2", detail::vector_tensor(mlp.b2)},
        {"w3", detail::matrix_tensor(mlp.w3)}, {"b3", detail::vector_tensor(mlp.b3)},
    };
    nlohmann::json manifest;
    manifest["activation"] = "relu";
    manifest["input_skip"] = true;
    manifest["input_dim"] = mlp.input_dim();
    manifest["output_dim"] = mlp.output_dim();
    manifest["layers"] = nlohmann::json::array();
    for (const auto& [name, tensor] : layers) {
        const std::string file = name + ".nvt";
        save_tensor((base / file).string(), tensor);
        manifest["layers"].push_back(
            {{"name", name}, {"file", file}, {"shape", tensor.dims()}});
    }
    std::ofstream os((base / "decoder.json").string());
    if (!os) throw IoError(IoCode::kMissingFile, "save_decoder: cannot open " + dir);
    os << manifest.dump(2) << "\n";
}

inline DecoderMlp load_decoder(const std::string& dir) {
    const std::filesystem::path base(dir);
    std::ifstream is((base / "decoder.json").string());
    if (!is)
        throw IoError(IoCode::kMissingFile, "load_decoder: no decoder.json in " + dir);
    nlohmann::json manifest;
    try {
        is >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(IoCode::kParseError, std::string("load_decoder: ") + e.what());
    }
    auto layer_file = [&](const std::string& name) -> std::string {
        for (const auto& l : manifest.at("layers"))
            if (l.at("name").get<std::string>() == name)
                return (base / l.at("file").get<std::string>()).string();
        throw IoError(IoCode::kParseError, "load_decoder: missing layer " + name);
    };
    DecoderMlp mlp;
    try {
        mlp.w1 = detail::tensor_matrix(load_tensor(layer_file("w1")));
        mlp.b1 = detail::tensor_vector(load_tensor(layer_file("b1")));
        mlp.w2 = detail::tensor_matrix(load_tensor(layer_file("w2")));
        mlp.b2 = detail::tensor_vector(load_tensor(layer_file("b2")));
        mlp.w3 = detail::tensor_matrix(load_tensor(layer_file("w3")));
        mlp.b3 = detail::tensor_vector(load_tensor(layer_file("b3")));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(IoCode::kParseError, std::string("load_decoder: ") + e.what());
    }
    try {
        mlp.validate();
    } catch (const std::invalid_argument& e) {
        throw IoError(IoCode::kParseError, std::string("load_decoder: ") + e.what());
    }
    return mlp;
}

// ---------------------------------------------------------------------------
// Toy scenes: UTF-8 JSON
//   {"channels": c, "primitives": [{"shape": "box"|"sphere", "center": [3],
//    "half_extents": [3] or "radius": f, "density": f, "color": [3],
//    "extra": [...]?}]}

inline void save_scene(const std::string& path, const ToyScene& scene) {
    scene.validate();
    nlohmann::json j;
    j["channels"] = scene.feature_channels;
    j["primitives"] = nlohmann::json::array();
    for (const auto& p : scene.primitives) {
        nlohmann::json jp;
        jp["shape"] = p.shape == Primitive::Shape::kBox ? "box" : "sphere";
        jp["center"] = {p.center.x(), p.center.y(), p.center.z()};
        if (p.shape == Primitive::Shape::kBox)
            jp["half_extents"] = {p.half_extents.x(), p.half_extents.y(),
                                  p.half_extents.z()};
        else
            jp["radius"] = p.radius;
        jp["density"] = p.density;
        jp["color"] = {p.color.x(), p.color.y(), p.color.z()};
        if (p.extra.size() > 0) {
            std::vector<double> extra(p.extra.data(), p.extra.data() + p.extra.size());
            jp["extra"] = extra;
        }
        j["primitives"].push_back(std::move(jp));
    }
    std::ofstream os(path);
    if (!os) throw IoError(IoCode::kMissingFile, "save_scene: cannot open " + path);
    os << j.dump(2) << "\n";
}

inline ToyScene load_scene(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError(IoCode::kMissingFile, "load_scene: cannot open " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(IoCode::kParseError, std::string("load_scene: ") + e.what());
    }
    ToyScene scene;
    try {
        scene.feature_channels = j.value("channels", 16);
        for (const auto& jp : j.at("primitives")) {
            Primitive p;
            const std::string shape = jp.at("shape").get<std::string>();
            if (shape == "box")
                p.shape = Primitive::Shape::kBox;
            else if (shape == "sphere")
                p.shape = Primitive::Shape::kSphere;
            else
                throw IoError(IoCode::kParseError, "load_scene: unknown shape " + shape);
            const auto center = jp.at("center").get<std::vector<double>>();
            if (center.size() != 3)
                throw IoError(IoCode::kParseError, "load_scene: center needs 3 floats");
            p.center = Eigen::Vector3d(center[0], center[1], center[2]);
            if (p.shape == Primitive::Shape::kBox) {
                const auto he = jp.at("half_extents").get<std::vector<double>>();
                if (he.size() != 3)
                    throw IoError(IoCode::kParseError,
                                  "load_scene: half_extents needs 3 floats");
                p.half_extents = Eigen::Vector3d(he[0], he[1], he[2]);
            } else {
                p.radius = jp.at("radius").get<double>();
            }
            p.density = jp.at("density").get<double>();
            const auto color = jp.at("color").get<std::vector<double>>();
            if (color.size() != 3)
                throw IoError(IoCode::kParseError, "load_scene: color needs 3 floats");
            p.color = Eigen::Vector3d(color[0], color[1], color[2]);
            if (jp.contains("extra")) {
                const auto extra = jp.at("extra").get<std::vector<double>>();
                p.extra = Eigen::Map<const Eigen::VectorXd>(extra.data(),
                                                            long(extra.size()));
            }
            scene.primitives.push_back(std::move(p));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(IoCode::kParseError, std::string("load_scene: ") + e.what());
    }
    try {
        scene.validate();
    } catch (const std::invalid_argument& e) {
        throw IoError(IoCode::kParseError, std::string("load_scene: ") + e.what());
    }
    return scene;
}

// ---------------------------------------------------------------------------
// Images: 8-bit RGB PNG, mapped linearly between [-1, 1] and [0, 255].

inline void write_image_png(const std::string& path, const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3)
        throw IoError(IoCode::kBadImage, "write_image_png: expected 3 x H x W");
    const uint32_t h = image.dim(1), w = image.dim(2);

    std::unique_ptr<std::FILE, int (*)(std::FILE*)> fp(std::fopen(path.c_str(), "wb"),
                                                       &std::fclose);
    if (!fp) throw IoError(IoCode::kMissingFile, "write_image_png: cannot open " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                              nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError(IoCode::kBadImage, "write_image_png: libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError(IoCode::kBadImage, "write_image_png: libpng error on " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<unsigned char> row(size_t(w) * 3);
    const size_t plane = size_t(h) * size_t(w);
    for (uint32_t y = 0; y < h; ++y) {
        for (uint32_t x = 0; x < w; ++x) {
            for (int ch = 0; ch < 3; ++ch) {
                const double v = image.data()[size_t(ch) * plane + size_t(y) * w + x];
                const double mapped = (std::clamp(v, -1.0, 1.0) + 1.0) * 0.5 * 255.0;
                row[size_t(x) * 3 + size_t(ch)] =
                    static_cast<unsigned char>(std::lround(mapped));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline Tensor read_image_png(const std::string& path) {
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> fp(std::fopen(path.c_str(), "rb"),
                                                       &std::fclose);
    if (!fp) throw IoError(IoCode::kMissingFile, "read_image_png: cannot open " + path);

    unsigned char header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8) != 0)
        throw IoError(IoCode::kBadImage, "read_image_png: not a PNG: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                             nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(IoCode::kBadImage, "read_image_png: libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(IoCode::kBadImage, "read_image_png: libpng error on " + path);
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const uint32_t w = png_get_image_width(png, info);
    const uint32_t h = png_get_image_height(png, info);
    // Normalize to 8-bit RGB regardless of the stored color type.
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    if (png_get_rowbytes(png, info) != size_t(w) * 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(IoCode::kBadImage, "read_image_png: unsupported format: " + path);
    }

    std::vector<unsigned char> pixels(size_t(w) * size_t(h) * 3);
    std::vector<png_bytep> rows(h);
    for (uint32_t y = 0; y < h; ++y) rows[y] = pixels.data() + size_t(y) * w * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Tensor out({3, h, w});
    const size_t plane = size_t(h) * size_t(w);
    for (uint32_t y = 0; y < h; ++y)
        for (uint32_t x = 0; x < w; ++x)
            for (int ch = 0; ch < 3; ++ch)
                out.data()[size_t(ch) * plane + size_t(y) * w + x] =
                    float(double(pixels[(size_t(y) * w + x) * 3 + size_t(ch)]) / 255.0 *
                              2.0 -
                          1.0);
    return out;
}

/// Loads a posed frame (image + camera) from a manifest entry.
inline Frame load_frame(const SceneManifest& manifest, size_t index) {
    const ManifestFrame& mf = manifest.frames.at(index);
    if (mf.image_path.empty())
        throw IoError(IoCode::kMissingFile, "load_frame: frame has no image path");
    const std::filesystem::path p = manifest.base_dir / mf.image_path;
    Frame frame;
    frame.image = read_image_png(p.string());
    frame.camera = manifest.camera(index, int(frame.image.dim(2)),
                                   int(frame.image.dim(1)));
    frame.camera.validate();
    return frame;
}

}  // namespace nvs
