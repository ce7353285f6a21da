// Copyright 2026 The compsearch Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef COMPSEARCH_IMAGING_H_
#define COMPSEARCH_IMAGING_H_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "compsearch/common.h"

namespace compsearch {

// Axis-aligned rectangle in normalized image coordinates.
struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  bool Valid() const;
  double Area() const { return w * h; }
  double CenterX() const { return x + 0.5 * w; }
  double CenterY() const { return y + 0.5 * h; }
  // Aspect ratio (width / height) in pixels for an image_w x image_h image.
  double AspectRatio(int image_w, int image_h) const {
    return (w * image_w) / (h * image_h);
  }
  bool Contains(const Box& other, double tol = 1e-12) const;

  friend bool operator==(const Box&, const Box&) = default;
};

std::string ToString(const Box& box);
void ValidateBox(const Box& box, const std::string& what);

// Integer pixel rectangle [x0, x1) x [y0, y1).
struct PixelRect {
  int x0, y0, x1, y1;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
};

PixelRect ToPixels(const Box& box, int image_w, int image_h);

// Three-channel image with values in [0, 1], row-major, interleaved.
class Raster {
 public:
  static constexpr int kChannels = 3;

  Raster() = default;
  Raster(int width, int height, float fill = 0.0f);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }

  float& at(int x, int y, int c) { return data_[(static_cast<size_t>(y) * width_ + x) * 3 + c]; }
  float at(int x, int y, int c) const { return data_[(static_cast<size_t>(y) * width_ + x) * 3 + c]; }

  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

  // Rounds every value to the nearest multiple of 1/255, the precision a
  // PNG round trip preserves.
  void Quantize();

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> data_;
};

std::array<double, 3> ChannelMean(const Raster& raster);

// Color helpers; all components in [0, 1].
std::array<float, 3> HsvToRgb(double h, double s, double v);
std::array<double, 3> RgbToHsv(float r, float g, float b);

namespace imaging {

// Pixels whose channels are all at least this value count as white margin.
inline constexpr float kWhiteThreshold = 0.98f;

// Bilinear sampling of `box` in `img` into an out_w x out_h raster. Uses
// the align-corners=false convention: output pixel i samples the source at
// box_left + (i + 0.5) * box_width / out_w - 0.5, clamped to the border.
Raster CropAndResize(const Raster& img, const Box& box, int out_w, int out_h);

// Tight bounding rectangle of non-white pixels; the full raster when the
// raster is entirely white.
PixelRect TightGlyphRect(const Raster& fg);

Raster Crop(const Raster& img, const PixelRect& rect);

// Glyph aspect ratio (width / height) in pixels of the tight glyph rectangle.
double GlyphAspectRatio(const Raster& fg);

// Pads to a square white canvas, content centered.
Raster PadToSquare(const Raster& img);

// Synthetic composite: the tight glyph crop of `foreground` resized into the
// pixel rectangle of `query_box`, pasted opaquely. Pixels outside the box
// are copied from `background` unchanged.
Raster Composite(const Raster& background, const Box& query_box,
                 const Raster& foreground);

struct CropBox {
  Box box;
  // area(query_box) / area(box); 0.5 unless clamped at the image size.
  double area_ratio = 0.5;
  bool clamped = false;
};

// Context crop around a query box: concentric, same pixel aspect ratio,
// sides scaled by sqrt(2) so the query box covers half of it. A crop
// overflowing the image is translated back inside; a crop larger than the
// image along an axis is clamped to the full extent on that axis.
CropBox ComputeCropBox(const Box& query_box, int image_w, int image_h);

// Random positive augmentation: hue and brightness shifts of the glyph and
// a Gaussian blur. The glyph geometry is unchanged.
struct PositiveAugmentation {
  double hue_shift = 0.0;         // in [-0.05, 0.05]
  double brightness_shift = 0.0;  // in [-0.05, 0.05]
  double blur_sigma = 0.0;        // in [0.3, 1.0]; <= 0 disables blur
};

PositiveAugmentation SamplePositiveAugmentation(uint64_t seed);
Raster AugmentPositive(const Raster& fg, const PositiveAugmentation& aug);
Raster AugmentPositive(const Raster& fg, uint64_t seed);

// Random negative augmentation: a rotation whose magnitude lies in
// [2 * geo_tolerance, 4 * geo_tolerance], sign random.
struct NegativeAugmentation {
  double rotation = 0.0;  // radians, image coordinates (y down)
};

NegativeAugmentation SampleNegativeAugmentation(uint64_t seed,
                                                double geo_tolerance);
Raster AugmentNegative(const Raster& fg, const NegativeAugmentation& aug);
Raster AugmentNegative(const Raster& fg, uint64_t seed, double geo_tolerance);

Raster GaussianBlur(const Raster& img, double sigma);

// Rotates the tight glyph crop about its center on a white canvas large
// enough to hold it, then pads to square.
Raster RotateGlyph(const Raster& fg, double angle);

// Each side is pushed outward by u_side * max_fraction * (w or h), then the
// box is clipped to the unit square. u = {left, top, right, bottom}.
Box PadBox(const Box& box, const std::array<double, 4>& u,
           double max_fraction = 0.3);
Box PadBox(const Box& box, uint64_t seed, double max_fraction = 0.3);

}  // namespace imaging

// 8-bit RGB PNG I/O. Values map to [0, 1] by /255.
Raster ReadPng(const std::string& path);
void WritePng(const Raster& raster, const std::string& path);
std::vector<uint8_t> EncodePng(const Raster& raster);
Raster DecodePng(const std::vector<uint8_t>& bytes);

}  // namespace compsearch

#endif  // COMPSEARCH_IMAGING_H_
