#include "tbs/image.hpp"

#include <algorithm>

namespace tbs {

std::size_t count_foreground(const BinaryMask& mask) {
  auto v = mask.values();
  return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [](std::uint8_t b) { return b != 0; }));
}

ChannelRaster::ChannelRaster(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
  if (width < 0 || height < 0 || channels < 0) throw std::invalid_argument("negative raster size");
  data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) *
                   static_cast<std::size_t>(channels),
               fill);
}

RealRaster ChannelRaster::channel(int c) const {
  RealRaster out(width_, height_);
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x) out(x, y) = at(x, y, c);
  return out;
}

void ChannelRaster::set_channel(int c, const RealRaster& values) {
  if (!values.same_shape(*this)) throw std::invalid_argument("channel shape mismatch");
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x) at(x, y, c) = values(x, y);
}

}  // namespace tbs
