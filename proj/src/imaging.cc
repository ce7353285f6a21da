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

#include "compsearch/imaging.h"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "compsearch/rng.h"

namespace compsearch {

bool Box::Valid() const {
  constexpr double kTol = 1e-9;
  return std::isfinite(x) && std::isfinite(y) && std::isfinite(w) &&
         std::isfinite(h) && x >= -kTol && y >= -kTol && w > 0.0 && h > 0.0 &&
         x + w <= 1.0 + kTol && y + h <= 1.0 + kTol;
}

bool Box::Contains(const Box& o, double tol) const {
  return o.x >= x - tol && o.y >= y - tol && o.x + o.w <= x + w + tol &&
         o.y + o.h <= y + h + tol;
}

std::string ToString(const Box& box) {
  std::ostringstream os;
  os << "(" << box.x << ", " << box.y << ", " << box.w << ", " << box.h << ")";
  return os.str();
}

void ValidateBox(const Box& box, const std::string& what) {
  Check(box.Valid(), ErrorCode::kInvalidArgument,
        what + " " + ToString(box) +
            " is not a valid normalized box (need x,y >= 0, w,h > 0, "
            "x+w <= 1, y+h <= 1)");
}

PixelRect ToPixels(const Box& box, int image_w, int image_h) {
  auto px = [](double v, int n) {
    return std::clamp(static_cast<int>(std::lround(v * n)), 0, n);
  };
  return {px(box.x, image_w), px(box.y, image_h), px(box.x + box.w, image_w),
          px(box.y + box.h, image_h)};
}

Raster::Raster(int width, int height, float fill)
    : width_(width), height_(height) {
  Check(width > 0 && height > 0, ErrorCode::kInvalidArgument,
        "raster dimensions must be positive, got " + std::to_string(width) +
            "x" + std::to_string(height));
  data_.assign(static_cast<size_t>(width) * height * kChannels, fill);
}

void Raster::Quantize() {
  for (float& v : data_) {
    v = static_cast<float>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)) / 255.0f;
  }
}

std::array<double, 3> ChannelMean(const Raster& raster) {
  std::array<double, 3> sum{0.0, 0.0, 0.0};
  const auto& d = raster.data();
  for (size_t i = 0; i < d.size(); i += 3) {
    sum[0] += d[i];
    sum[1] += d[i + 1];
    sum[2] += d[i + 2];
  }
  const double n = static_cast<double>(raster.width()) * raster.height();
  return {sum[0] / n, sum[1] / n, sum[2] / n};
}

std::array<float, 3> HsvToRgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double hh = h * 6.0;
  const int sector = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  double r = 0, g = 0, b = 0;
  switch (sector) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
  return {static_cast<float>(r), static_cast<float>(g), static_cast<float>(b)};
}

std::array<double, 3> RgbToHsv(float rf, float gf, float bf) {
  const double r = rf, g = gf, b = bf;
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double d = mx - mn;
  double h = 0.0;
  if (d > 0.0) {
    if (mx == r) {
      h = (g - b) / d;
    } else if (mx == g) {
      h = 2.0 + (b - r) / d;
    } else {
      h = 4.0 + (r - g) / d;
    }
    h /= 6.0;
    if (h < 0.0) h += 1.0;
  }
  return {h, mx > 0.0 ? d / mx : 0.0, mx};
}

namespace imaging {
namespace {

// Bilinear read with clamp-to-border, in pixel-center coordinates.
void SampleBilinear(const Raster& img, double sx, double sy, float* out) {
  sx = std::clamp(sx, 0.0, static_cast<double>(img.width() - 1));
  sy = std::clamp(sy, 0.0, static_cast<double>(img.height() - 1));
  const int x0 = static_cast<int>(std::floor(sx));
  const int y0 = static_cast<int>(std::floor(sy));
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double fx = sx - x0, fy = sy - y0;
  for (int c = 0; c < 3; ++c) {
    const double top = img.at(x0, y0, c) * (1 - fx) + img.at(x1, y0, c) * fx;
    const double bot = img.at(x0, y1, c) * (1 - fx) + img.at(x1, y1, c) * fx;
    out[c] = static_cast<float>(top * (1 - fy) + bot * fy);
  }
}

bool IsWhite(const Raster& img, int x, int y) {
  return img.at(x, y, 0) >= kWhiteThreshold && img.at(x, y, 1) >= kWhiteThreshold &&
         img.at(x, y, 2) >= kWhiteThreshold;
}

}  // namespace

Raster CropAndResize(const Raster& img, const Box& box, int out_w, int out_h) {
  Check(!img.empty(), ErrorCode::kInvalidArgument, "crop_and_resize: empty raster");
  Check(out_w > 0 && out_h > 0, ErrorCode::kInvalidArgument,
        "crop_and_resize: output size must be positive");
  Check(box.w > 0 && box.h > 0, ErrorCode::kInvalidArgument,
        "crop_and_resize: degenerate box " + ToString(box));
  Raster out(out_w, out_h);
  const double bx = box.x * img.width(), by = box.y * img.height();
  const double sx_step = box.w * img.width() / out_w;
  const double sy_step = box.h * img.height() / out_h;
  for (int j = 0; j < out_h; ++j) {
    const double sy = by + (j + 0.5) * sy_step - 0.5;
    for (int i = 0; i < out_w; ++i) {
      const double sx = bx + (i + 0.5) * sx_step - 0.5;
      SampleBilinear(img, sx, sy, &out.at(i, j, 0));
    }
  }
  return out;
}

PixelRect TightGlyphRect(const Raster& fg) {
  int x0 = fg.width(), y0 = fg.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < fg.height(); ++y) {
    for (int x = 0; x < fg.width(); ++x) {
      if (!IsWhite(fg, x, y)) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
    }
  }
  if (x1 < 0) return {0, 0, fg.width(), fg.height()};
  return {x0, y0, x1 + 1, y1 + 1};
}

Raster Crop(const Raster& img, const PixelRect& r) {
  Check(r.x0 >= 0 && r.y0 >= 0 && r.x1 <= img.width() && r.y1 <= img.height() &&
            r.width() > 0 && r.height() > 0,
        ErrorCode::kInvalidArgument, "crop: rectangle outside raster");
  Raster out(r.width(), r.height());
  for (int y = 0; y < r.height(); ++y) {
    const float* src = &img.data()[(static_cast<size_t>(r.y0 + y) * img.width() + r.x0) * 3];
    std::copy(src, src + r.width() * 3, &out.at(0, y, 0));
  }
  return out;
}

double GlyphAspectRatio(const Raster& fg) {
  const PixelRect r = TightGlyphRect(fg);
  return static_cast<double>(r.width()) / r.height();
}

Raster PadToSquare(const Raster& img) {
  const int side = std::max(img.width(), img.height());
  Raster out(side, side, 1.0f);
  const int ox = (side - img.width()) / 2, oy = (side - img.height()) / 2;
  for (int y = 0; y < img.height(); ++y) {
    const float* src = &img.data()[static_cast<size_t>(y) * img.width() * 3];
    std::copy(src, src + img.width() * 3, &out.at(ox, oy + y, 0));
  }
  return out;
}

Raster Composite(const Raster& background, const Box& query_box,
                 const Raster& foreground) {
  ValidateBox(query_box, "composite: query box");
  Check(!foreground.empty() && foreground.width() == foreground.height(),
        ErrorCode::kInvalidArgument, "composite: foreground must be square");
  const PixelRect r = ToPixels(query_box, background.width(), background.height());
  Check(r.width() > 0 && r.height() > 0, ErrorCode::kInvalidArgument,
        "composite: query box " + ToString(query_box) + " covers zero pixels");
  const Raster glyph = Crop(foreground, TightGlyphRect(foreground));
  const Raster patch = CropAndResize(glyph, Box{0, 0, 1, 1}, r.width(), r.height());
  Raster out = background;
  for (int y = 0; y < r.height(); ++y) {
    const float* src = &patch.data()[static_cast<size_t>(y) * r.width() * 3];
    std::copy(src, src + r.width() * 3, &out.at(r.x0, r.y0 + y, 0));
  }
  return out;
}

CropBox ComputeCropBox(const Box& query_box, int image_w, int image_h) {
  ValidateBox(query_box, "crop_box: query box");
  const double qw = query_box.w * image_w, qh = query_box.h * image_h;
  const double cx = query_box.CenterX() * image_w;
  const double cy = query_box.CenterY() * image_h;
  double bw = qw * std::sqrt(2.0), bh = qh * std::sqrt(2.0);
  CropBox out;
  if (bw > image_w) {
    bw = image_w;
    out.clamped = true;
  }
  if (bh > image_h) {
    bh = image_h;
    out.clamped = true;
  }
  const double x0 = std::clamp(cx - 0.5 * bw, 0.0, image_w - bw);
  const double y0 = std::clamp(cy - 0.5 * bh, 0.0, image_h - bh);
  out.box = Box{x0 / image_w, y0 / image_h, bw / image_w, bh / image_h};
  out.area_ratio = (qw * qh) / (bw * bh);
  return out;
}

PositiveAugmentation SamplePositiveAugmentation(uint64_t seed) {
  Rng rng(MixSeed(seed, 0x706f73));
  PositiveAugmentation aug;
  aug.hue_shift = rng.Uniform(-0.05, 0.05);
  aug.brightness_shift = rng.Uniform(-0.05, 0.05);
  aug.blur_sigma = rng.Uniform(0.3, 1.0);
  return aug;
}

Raster GaussianBlur(const Raster& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += k[i + radius];
  }
  for (double& v : k) v /= total;
  const int w = img.width(), h = img.height();
  Raster tmp(w, h), out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += k[i + radius] * img.at(std::clamp(x + i, 0, w - 1), y, c);
        }
        tmp.at(x, y, c) = static_cast<float>(acc);
      }
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += k[i + radius] * tmp.at(x, std::clamp(y + i, 0, h - 1), c);
        }
        out.at(x, y, c) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
      }
    }
  }
  return out;
}

Raster AugmentPositive(const Raster& fg, const PositiveAugmentation& aug) {
  Raster out = fg;
  for (int y = 0; y < fg.height(); ++y) {
    for (int x = 0; x < fg.width(); ++x) {
      if (IsWhite(fg, x, y)) continue;
      auto hsv = RgbToHsv(fg.at(x, y, 0), fg.at(x, y, 1), fg.at(x, y, 2));
      const auto rgb = HsvToRgb(hsv[0] + aug.hue_shift, hsv[1],
                                std::clamp(hsv[2] + aug.brightness_shift, 0.0, 1.0));
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = rgb[c];
    }
  }
  return GaussianBlur(out, aug.blur_sigma);
}

Raster AugmentPositive(const Raster& fg, uint64_t seed) {
  return AugmentPositive(fg, SamplePositiveAugmentation(seed));
}

NegativeAugmentation SampleNegativeAugmentation(uint64_t seed, double geo_tolerance) {
  Rng rng(MixSeed(seed, 0x6e6567));
  const double magnitude = rng.Uniform(2.0 * geo_tolerance, 4.0 * geo_tolerance);
  return {rng.Uniform() < 0.5 ? -magnitude : magnitude};
}

Raster RotateGlyph(const Raster& fg, double angle) {
  const Raster glyph = Crop(fg, TightGlyphRect(fg));
  const double cw = glyph.width(), ch = glyph.height();
  const double ca = std::cos(angle), sa = std::sin(angle);
  const int ow = std::max(1, static_cast<int>(std::ceil(std::abs(cw * ca) + std::abs(ch * sa))));
  const int oh = std::max(1, static_cast<int>(std::ceil(std::abs(cw * sa) + std::abs(ch * ca))));
  Raster out(ow, oh, 1.0f);
  for (int v = 0; v < oh; ++v) {
    for (int u = 0; u < ow; ++u) {
      const double dx = u + 0.5 - 0.5 * ow, dy = v + 0.5 - 0.5 * oh;
      // Inverse rotation back into glyph coordinates.
      const double gx = ca * dx + sa * dy + 0.5 * cw;
      const double gy = -sa * dx + ca * dy + 0.5 * ch;
      if (gx < 0 || gy < 0 || gx >= cw || gy >= ch) continue;
      SampleBilinear(glyph, gx - 0.5, gy - 0.5, &out.at(u, v, 0));
    }
  }
  return PadToSquare(out);
}

Raster AugmentNegative(const Raster& fg, const NegativeAugmentation& aug) {
  return RotateGlyph(fg, aug.rotation);
}

Raster AugmentNegative(const Raster& fg, uint64_t seed, double geo_tolerance) {
  return AugmentNegative(fg, SampleNegativeAugmentation(seed, geo_tolerance));
}

Box PadBox(const Box& box, const std::array<double, 4>& u, double max_fraction) {
  const double left = std::max(0.0, box.x - u[0] * max_fraction * box.w);
  const double top = std::max(0.0, box.y - u[1] * max_fraction * box.h);
  const double right = std::min(1.0, box.x + box.w + u[2] * max_fraction * box.w);
  const double bottom = std::min(1.0, box.y + box.h + u[3] * max_fraction * box.h);
  return Box{left, top, right - left, bottom - top};
}

Box PadBox(const Box& box, uint64_t seed, double max_fraction) {
  Rng rng(MixSeed(seed, 0x706164));
  std::array<double, 4> u{};
  for (double& v : u) v = rng.Uniform();
  return PadBox(box, u, max_fraction);
}

}  // namespace imaging

namespace {

Raster FromRgb8(const std::vector<uint8_t>& pixels, int w, int h) {
  Raster out(w, h);
  for (size_t i = 0; i < pixels.size(); ++i) out.data()[i] = pixels[i] / 255.0f;
  return out;
}

std::vector<uint8_t> ToRgb8(const Raster& r) {
  std::vector<uint8_t> px(r.data().size());
  for (size_t i = 0; i < px.size(); ++i) {
    px[i] = static_cast<uint8_t>(std::lround(std::clamp(r.data()[i], 0.0f, 1.0f) * 255.0f));
  }
  return px;
}

Raster FinishRead(png_image& image, const std::string& what) {
  image.format = PNG_FORMAT_RGB;
  std::vector<uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    Fail(ErrorCode::kCorrupt, "png decode failed for " + what + ": " + msg);
  }
  return FromRgb8(buffer, image.width, image.height);
}

}  // namespace

Raster ReadPng(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    Fail(ErrorCode::kIo, "cannot read png " + path + ": " + image.message);
  }
  return FinishRead(image, path);
}

Raster DecodePng(const std::vector<uint8_t>& bytes) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    Fail(ErrorCode::kCorrupt, std::string("cannot decode png: ") + image.message);
  }
  return FinishRead(image, "memory buffer");
}

namespace {

png_image MakeWriteImage(const Raster& r) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = r.width();
  image.height = r.height();
  image.format = PNG_FORMAT_RGB;
  return image;
}

}  // namespace

void WritePng(const Raster& raster, const std::string& path) {
  png_image image = MakeWriteImage(raster);
  const auto px = ToRgb8(raster);
  if (!png_image_write_to_file(&image, path.c_str(), 0, px.data(), 0, nullptr)) {
    Fail(ErrorCode::kIo, "cannot write png " + path + ": " + image.message);
  }
}

std::vector<uint8_t> EncodePng(const Raster& raster) {
  png_image image = MakeWriteImage(raster);
  const auto px = ToRgb8(raster);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, px.data(), 0, nullptr)) {
    Fail(ErrorCode::kIo, std::string("png size query failed: ") + image.message);
  }
  std::vector<uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, px.data(), 0, nullptr)) {
    Fail(ErrorCode::kIo, std::string("png encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

}  // namespace compsearch
