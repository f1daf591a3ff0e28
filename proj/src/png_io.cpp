#include <png.h>

#include "uwbg/error.hpp"
#include "uwbg/preprocess.hpp"

namespace uwbg::preprocess {

void write_png(const RgbaRaster& raster, const std::filesystem::path& path)
{
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(raster.width);
    image.height = static_cast<png_uint_32>(raster.height);
    image.format = PNG_FORMAT_RGBA;
    if (!png_image_write_to_file(&image, path.c_str(), 0, raster.pixels.data(), 0, nullptr)) {
        throw IoError("PNG write failed for " + path.string() + ": " + image.message);
    }
}

RgbaRaster read_png(const std::filesystem::path& path)
{
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        throw IoError("PNG read failed for " + path.string() + ": " + image.message);
    }
    image.format = PNG_FORMAT_RGBA;
    RgbaRaster out(static_cast<int>(image.width), static_cast<int>(image.height));
    if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
        png_image_free(&image);
        throw IoError("PNG decode failed for " + path.string() + ": " + image.message);
    }
    return out;
}

} // namespace uwbg::preprocess
