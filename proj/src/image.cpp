#include "splitgs/image.hpp"

#include <cmath>

namespace splitgs {

ImageU8 to_u8(const ImageF& img) {
    ImageU8 out(img.width(), img.height(), img.channels());
    for (size_t i = 0; i < img.size(); ++i) {
        double v = std::clamp(img[i], 0.0, 1.0);
        out[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    return out;
}

ImageF to_float(const ImageU8& img) {
    ImageF out(img.width(), img.height(), img.channels());
    for (size_t i = 0; i < img.size(); ++i) out[i] = img[i] / 255.0;
    return out;
}

}  // namespace splitgs
