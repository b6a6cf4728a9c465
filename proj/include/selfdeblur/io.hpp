#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

#include "selfdeblur/generator.hpp"
#include "selfdeblur/image.hpp"

namespace selfdeblur {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// PNG (8-bit, linear [0,255] <-> [0,1])
// ---------------------------------------------------------------------------

inline Image read_png(const std::string& path) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str())) {
        throw IoError("read_png: " + path + ": " + png.message);
    }
    const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
    png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
        const std::string msg = png.message;
        png_image_free(&png);
        throw IoError("read_png: " + path + ": " + msg);
    }
    const int h = static_cast<int>(png.height);
    const int w = static_cast<int>(png.width);
    const int ch = color ? 3 : 1;
    Image img(h, w, ch);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int k = 0; k < ch; ++k)
                img.at(r, c, k) = buf[(static_cast<std::size_t>(r) * w + c) * ch + k] / 255.0;
    return img;
}

inline std::uint8_t quantize8(double v) {
    if (!(v > 0.0)) return 0;
    if (v >= 1.0) return 255;
    return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

inline void write_png(const std::string& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3) {
        throw std::invalid_argument("write_png: expected 1 or 3 channels");
    }
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(img.width);
    png.height = static_cast<png_uint_32>(img.height);
    png.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(png));
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c)
            for (int k = 0; k < img.channels; ++k)
                buf[(static_cast<std::size_t>(r) * img.width + c) * img.channels + k] =
                    quantize8(img.at(r, c, k));
    if (!png_image_write_to_file(&png, path.c_str(), 0, buf.data(), 0, nullptr)) {
        throw IoError("write_png: " + path + ": " + png.message);
    }
}

/// Kernel rendered as a grayscale image scaled so its peak is white.
inline void write_kernel_png(const std::string& path, const Kernel& k) {
    Image img(k.rows, k.cols, 1);
    double peak = 0.0;
    for (double w : k.weights) peak = std::max(peak, w);
    for (std::size_t i = 0; i < k.weights.size(); ++i) {
        img.data[i] = peak > 0.0 ? std::max(0.0, k.weights[i]) / peak : 0.0;
    }
    write_png(path, img);
}

// ---------------------------------------------------------------------------
// Kernel text matrices
// ---------------------------------------------------------------------------

inline std::string format_kernel(const Kernel& k) {
    std::ostringstream os;
    os << std::setprecision(17);
    for (int r = 0; r < k.rows; ++r) {
        for (int c = 0; c < k.cols; ++c) {
            if (c) os << ' ';
            os << k.at(r, c);
        }
        os << '\n';
    }
    return os.str();
}

inline Kernel parse_kernel(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    std::vector<std::vector<double>> rows;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::vector<double> row;
        double v;
        while (ls >> v) row.push_back(v);
        if (!ls.eof()) throw IoError("parse_kernel: malformed number in line: " + line);
        if (!row.empty()) rows.push_back(std::move(row));
    }
    if (rows.empty()) throw IoError("parse_kernel: empty kernel");
    const auto n = rows.front().size();
    for (const auto& r : rows) {
        if (r.size() != n) throw IoError("parse_kernel: ragged rows");
    }
    if (rows.size() % 2 == 0 || n % 2 == 0) throw IoError("parse_kernel: kernel dimensions must be odd");
    Kernel k(static_cast<int>(rows.size()), static_cast<int>(n));
    for (int r = 0; r < k.rows; ++r)
        for (int c = 0; c < k.cols; ++c) k.at(r, c) = rows[r][c];
    return k;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << text;
    if (!out) throw IoError("write failed: " + path);
}

inline void write_kernel_text(const std::string& path, const Kernel& k) {
    write_text_file(path, format_kernel(k));
}

inline Kernel read_kernel_text(const std::string& path) { return parse_kernel(read_text_file(path)); }

// ---------------------------------------------------------------------------
// Little-endian binary helpers
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFFu);
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("unexpected end of binary file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline void put_f32(std::ostream& os, double v) {
    put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

inline float get_f32(std::istream& is) { return std::bit_cast<float>(get_u32(is)); }

}  // namespace detail

// Raw float dump: "SDFD", u32 height, width, channels, then float32 samples
// in the planar layout of Image.
inline void write_float_dump(const std::string& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out.write("SDFD", 4);
    detail::put_u32(out, static_cast<std::uint32_t>(img.height));
    detail::put_u32(out, static_cast<std::uint32_t>(img.width));
    detail::put_u32(out, static_cast<std::uint32_t>(img.channels));
    for (double v : img.data) detail::put_f32(out, v);
}

inline Image read_float_dump(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "SDFD", 4) != 0) throw IoError("not a float dump: " + path);
    const auto h = static_cast<int>(detail::get_u32(in));
    const auto w = static_cast<int>(detail::get_u32(in));
    const auto c = static_cast<int>(detail::get_u32(in));
    Image img(h, w, c);
    for (auto& v : img.data) v = detail::get_f32(in);
    return img;
}

// ---------------------------------------------------------------------------
// Generator checkpoints
// ---------------------------------------------------------------------------
//
// "SDCK", u32 version (1), u32 tensor count, then per tensor:
//   u32 name length, name bytes, u32 rank, u32 dims[rank], float32 data.

inline void save_checkpoint(const std::string& path, const GeneratorParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out.write("SDCK", 4);
    detail::put_u32(out, 1);
    detail::put_u32(out, static_cast<std::uint32_t>(params.tensors.size()));
    for (const auto& t : params.tensors) {
        detail::put_u32(out, static_cast<std::uint32_t>(t.name.size()));
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        detail::put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
        for (int d : t.shape) detail::put_u32(out, static_cast<std::uint32_t>(d));
        for (double v : t.data) detail::put_f32(out, v);
    }
    if (!out) throw IoError("write failed: " + path);
}

/// Reads every tensor in the container, independent of any generator layout.
inline std::vector<ParamTensor> read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "SDCK", 4) != 0) throw IoError("not a checkpoint: " + path);
    if (detail::get_u32(in) != 1) throw IoError("unsupported checkpoint version");
    const std::uint32_t count = detail::get_u32(in);
    std::vector<ParamTensor> out(count);
    for (auto& t : out) {
        const std::uint32_t len = detail::get_u32(in);
        t.name.resize(len);
        if (!in.read(t.name.data(), len)) throw IoError("truncated checkpoint");
        const std::uint32_t rank = detail::get_u32(in);
        std::size_t n = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            t.shape.push_back(static_cast<int>(detail::get_u32(in)));
            n *= static_cast<std::size_t>(t.shape.back());
        }
        t.data.resize(n);
        for (auto& v : t.data) v = detail::get_f32(in);
    }
    return out;
}

/// Loads checkpoint values into `params`; names and shapes must match.
inline void load_checkpoint(const std::string& path, GeneratorParams& params) {
    auto tensors = read_checkpoint(path);
    if (tensors.size() != params.tensors.size()) throw IoError("checkpoint tensor count mismatch");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (tensors[i].name != params.tensors[i].name || tensors[i].shape != params.tensors[i].shape) {
            throw IoError("checkpoint layout mismatch at " + tensors[i].name);
        }
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) params.tensors[i].data = std::move(tensors[i].data);
}

}  // namespace selfdeblur
