#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "splitgs/errors.hpp"

namespace splitgs {

/// Dense row-major image, `channels` interleaved per pixel.
template <typename T>
class Image {
public:
    Image() = default;
    Image(int width, int height, int channels, T fill = T{})
        : width_(width), height_(height), channels_(channels),
          data_(static_cast<size_t>(width) * height * channels, fill) {
        if (width <= 0 || height <= 0 || channels <= 0)
            throw InvalidParameterError("Image: non-positive dimensions");
    }

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& at(int x, int y, int c = 0) {
        return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
    }
    T at(int x, int y, int c = 0) const {
        return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
    }

    T& operator[](size_t i) { return data_[i]; }
    T operator[](size_t i) const { return data_[i]; }

    bool same_shape(const Image& other) const {
        return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    bool operator==(const Image& other) const {
        return width_ == other.width_ && height_ == other.height_ &&
               channels_ == other.channels_ && data_ == other.data_;
    }

private:
    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<T> data_;
};

using ImageF = Image<double>;
using ImageU8 = Image<unsigned char>;

/// Quantize [0,1] floats to 8-bit, clamping out-of-range values.
ImageU8 to_u8(const ImageF& img);

/// 8-bit to [0,1] floats.
ImageF to_float(const ImageU8& img);

}  // namespace splitgs
