#include "gwcosal/image_io.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <mutex>
#include <thread>

#include <jpeglib.h>
#include <png.h>

namespace gwcosal::pipeline {

namespace {

enum class FileKind { png, jpeg, unknown };

FileKind sniff(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image file: " + path);
    unsigned char magic[8] = {0};
    in.read(reinterpret_cast<char*>(magic), 8);
    if (in.gcount() >= 8 && png_sig_cmp(magic, 0, 8) == 0) return FileKind::png;
    if (in.gcount() >= 2 && magic[0] == 0xFF && magic[1] == 0xD8) return FileKind::jpeg;
    return FileKind::unknown;
}

ImageU8 decode_png(const std::string& path, bool gray) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        throw IoError("corrupt PNG file: " + path + ": " + image.message);
    }
    image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    ImageU8 out;
    out.h = static_cast<long>(image.height);
    out.w = static_cast<long>(image.width);
    out.channels = gray ? 1 : 3;
    out.pixels.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
        png_image_free(&image);
        throw IoError("corrupt PNG file: " + path + ": " + image.message);
    }
    return out;
}

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    std::longjmp(mgr->jump, 1);
}

ImageU8 decode_jpeg(const std::string& path, bool gray) {
    std::FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw IoError("cannot open image file: " + path);

    jpeg_decompress_struct cinfo;
    JpegErrorMgr err;
    cinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = jpeg_error_exit;
    ImageU8 out;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        std::fclose(fp);
        throw IoError("corrupt JPEG file: " + path);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, fp);
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = gray ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_start_decompress(&cinfo);
    out.h = static_cast<long>(cinfo.output_height);
    out.w = static_cast<long>(cinfo.output_width);
    out.channels = cinfo.output_components;
    out.pixels.resize(static_cast<std::size_t>(out.h * out.w * out.channels));
    const std::size_t stride = static_cast<std::size_t>(out.w * out.channels);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = out.pixels.data() + cinfo.output_scanline * stride;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    std::fclose(fp);
    return out;
}

ImageU8 decode(const std::string& path, bool gray) {
    switch (sniff(path)) {
        case FileKind::png:
            return decode_png(path, gray);
        case FileKind::jpeg:
            return decode_jpeg(path, gray);
        default:
            throw IoError("unsupported image format (want 8-bit PNG or JPEG): " + path);
    }
}

void write_png(const std::string& path, long h, long w, long channels,
               const std::vector<std::uint8_t>& pixels) {
    if (h < 1 || w < 1 || pixels.size() != static_cast<std::size_t>(h * w * channels)) {
        throw ShapeError("write_png: pixel buffer does not match " + std::to_string(h) + "x" +
                         std::to_string(w));
    }
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(w);
    image.height = static_cast<png_uint_32>(h);
    image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, pixels.data(), 0, nullptr)) {
        throw IoError("cannot write PNG file: " + path + ": " + image.message);
    }
}

} // namespace

ImageU8 decode_rgb8(const std::string& path) { return decode(path, /*gray=*/false); }

ImageU8 decode_gray8(const std::string& path) { return decode(path, /*gray=*/true); }

void write_gray_png(const std::string& path, long h, long w,
                    const std::vector<std::uint8_t>& pixels) {
    write_png(path, h, w, 1, pixels);
}

void write_rgb_png(const std::string& path, long h, long w,
                   const std::vector<std::uint8_t>& pixels) {
    write_png(path, h, w, 3, pixels);
}

Tensor<float> image_to_tensor(const ImageU8& img) {
    Tensor<float> t(Shape4{1, img.channels, img.h, img.w});
    for (long c = 0; c < img.channels; ++c) {
        for (long i = 0; i < img.h; ++i) {
            for (long j = 0; j < img.w; ++j) {
                t.at(0, c, i, j) = static_cast<float>(
                    img.pixels[static_cast<std::size_t>((i * img.w + j) * img.channels + c)]);
            }
        }
    }
    return t;
}

Tensor<float> bilinear_resize(const Tensor<float>& x, long out_h, long out_w) {
    if (out_h < 1 || out_w < 1) throw ShapeError("bilinear_resize: output size must be positive");
    if (x.shape.h == out_h && x.shape.w == out_w) return x;

    Tensor<float> y(Shape4{x.shape.n, x.shape.c, out_h, out_w});
    const double sy = static_cast<double>(x.shape.h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(x.shape.w) / static_cast<double>(out_w);
    for (long n = 0; n < x.shape.n; ++n) {
        for (long c = 0; c < x.shape.c; ++c) {
            for (long i = 0; i < out_h; ++i) {
                const double src_y = (static_cast<double>(i) + 0.5) * sy - 0.5;
                const double fy = std::clamp(src_y, 0.0, static_cast<double>(x.shape.h - 1));
                const long y0 = static_cast<long>(std::floor(fy));
                const long y1 = std::min(y0 + 1, x.shape.h - 1);
                const double wy = fy - static_cast<double>(y0);
                for (long j = 0; j < out_w; ++j) {
                    const double src_x = (static_cast<double>(j) + 0.5) * sx - 0.5;
                    const double fx = std::clamp(src_x, 0.0, static_cast<double>(x.shape.w - 1));
                    const long x0 = static_cast<long>(std::floor(fx));
                    const long x1 = std::min(x0 + 1, x.shape.w - 1);
                    const double wx = fx - static_cast<double>(x0);
                    const double v00 = x.at(n, c, y0, x0);
                    const double v01 = x.at(n, c, y0, x1);
                    const double v10 = x.at(n, c, y1, x0);
                    const double v11 = x.at(n, c, y1, x1);
                    const double top = v00 + (v01 - v00) * wx;
                    const double bot = v10 + (v11 - v10) * wx;
                    y.at(n, c, i, j) = static_cast<float>(top + (bot - top) * wy);
                }
            }
        }
    }
    return y;
}

Tensor<float> load_image_raw01(const std::string& path) {
    Tensor<float> t = image_to_tensor(decode_rgb8(path));
    for (float& v : t.data) v /= 255.0f;
    return t;
}

Tensor<float> load_image_resized(const std::string& path, long h, long w,
                                 const std::array<float, 3>& mean) {
    Tensor<float> t = bilinear_resize(image_to_tensor(decode_rgb8(path)), h, w);
    for (long c = 0; c < 3; ++c) {
        const float m = mean[static_cast<std::size_t>(c)];
        float* p = t.data.data() + t.index(0, c, 0, 0);
        const std::size_t plane = static_cast<std::size_t>(h * w);
        for (std::size_t i = 0; i < plane; ++i) p[i] = p[i] / 255.0f - m;
    }
    return t;
}

Tensor<float> load_mask_resized(const std::string& path, long h, long w) {
    Tensor<float> t = bilinear_resize(image_to_tensor(decode_gray8(path)), h, w);
    for (float& v : t.data) v /= 255.0f;
    return t;
}

void save_saliency_png(const std::string& path, const Tensor<float>& map) {
    if (map.shape.n != 1 || map.shape.c != 1) {
        throw ShapeError("save_saliency_png: expected a (1, 1, h, w) map, got " +
                         map.shape.str());
    }
    std::vector<std::uint8_t> pixels(map.numel());
    for (std::size_t i = 0; i < map.data.size(); ++i) {
        const float v = std::clamp(map.data[i], 0.0f, 1.0f);
        pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
    write_gray_png(path, map.shape.h, map.shape.w, pixels);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("GWCOSAL_THREADS")) {
        const long cap = std::strtol(env, nullptr, 10);
        if (cap >= 1) threads = std::min<std::size_t>(threads, static_cast<std::size_t>(cap));
    }
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (std::thread& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

} // namespace gwcosal::pipeline
