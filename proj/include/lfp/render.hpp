#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lfp/error.hpp"
#include "lfp/grid.hpp"

namespace lfp {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend constexpr bool operator==(Rgb, Rgb) = default;
};

// Row-major RGB8 raster, top row first.
class Frame {
public:
  Frame() = default;
  Frame(int width, int height) : Frame(width, height, std::vector<std::uint8_t>(bytes_for(width, height))) {}
  Frame(int width, int height, std::vector<std::uint8_t> pixels)
      : width_(width), height_(height), pixels_(std::move(pixels)) {
    if (width <= 0 || height <= 0)
      throw DomainError("frame dimensions must be positive");
    if (pixels_.size() != bytes_for(width, height))
      throw DomainError("frame pixel buffer has " + std::to_string(pixels_.size()) +
                        " bytes, expected " + std::to_string(bytes_for(width, height)));
  }

  static Frame filled(int width, int height, Rgb c) {
    Frame f(width, height);
    for (std::size_t i = 0; i < f.pixels_.size(); i += 3) {
      f.pixels_[i] = c.r;
      f.pixels_[i + 1] = c.g;
      f.pixels_[i + 2] = c.b;
    }
    return f;
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return pixels_.empty(); }
  std::span<const std::uint8_t> pixels() const { return pixels_; }
  std::span<std::uint8_t> pixels() { return pixels_; }

  Rgb at(int px, int py) const {
    const std::size_t i = offset(px, py);
    return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
  }
  void set(int px, int py, Rgb c) {
    const std::size_t i = offset(px, py);
    pixels_[i] = c.r;
    pixels_[i + 1] = c.g;
    pixels_[i + 2] = c.b;
  }

  bool same_shape(const Frame& o) const { return width_ == o.width_ && height_ == o.height_; }

  friend bool operator==(const Frame&, const Frame&) = default;

private:
  static std::size_t bytes_for(int w, int h) {
    return static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
  }
  std::size_t offset(int px, int py) const {
    return (static_cast<std::size_t>(py) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(px)) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

struct RenderConfig {
  int cell_px = 8;
  Rgb background{222, 206, 178};
  Rgb grid_line{255, 255, 255};
  Rgb object{24, 24, 28};
  int object_radius = 3;
  // Synthetic demonstrator arm: a vertical band from the bottom image edge up
  // to the object centre. Only ever applied to expert demonstration frames.
  bool arm_on_expert_frames = false;
  Rgb arm{150, 96, 70};
  int arm_width = 4;

  int width() const { return kGridWidth * cell_px; }
  int height() const { return kGridHeight * cell_px; }

  void validate() const {
    if (cell_px < 2)
      throw ConfigError("cell_px must be at least 2");
    if (object_radius < 1 || 2 * object_radius >= cell_px)
      throw ConfigError("object radius must satisfy 1 <= r < cell_px/2");
    if (arm_width < 1 || arm_width > cell_px)
      throw ConfigError("arm width must be in [1, cell_px]");
  }

  friend bool operator==(const RenderConfig&, const RenderConfig&) = default;
};

// Pixel-space centre of a cell, in continuous coordinates where pixel (px, py)
// covers [px, px+1) x [py, py+1).
inline std::array<double, 2> cell_center_px(GridPos p, const RenderConfig& cfg) {
  const double cx = p.x() * cfg.cell_px + cfg.cell_px / 2.0;
  const double cy = (kGridHeight - 1 - p.y()) * cfg.cell_px + cfg.cell_px / 2.0;
  return {cx, cy};
}

inline Frame render(GridPos pos, const RenderConfig& cfg, bool arm_visible) {
  cfg.validate();
  const int w = cfg.width();
  const int h = cfg.height();
  Frame f = Frame::filled(w, h, cfg.background);

  for (int py = 0; py < h; ++py)
    for (int px = 0; px < w; ++px)
      if (px % cfg.cell_px == 0 || py % cfg.cell_px == 0)
        f.set(px, py, cfg.grid_line);

  // A pixel belongs to the disc iff its centre lies within the radius.
  const auto [cx, cy] = cell_center_px(pos, cfg);
  const double r2 = static_cast<double>(cfg.object_radius) * cfg.object_radius;
  for (int py = 0; py < h; ++py) {
    for (int px = 0; px < w; ++px) {
      const double dx = px + 0.5 - cx;
      const double dy = py + 0.5 - cy;
      if (dx * dx + dy * dy <= r2)
        f.set(px, py, cfg.object);
    }
  }

  if (arm_visible) {
    const int left = static_cast<int>(cx) - cfg.arm_width / 2;
    const int top = static_cast<int>(cy);
    for (int py = top; py < h; ++py)
      for (int px = std::max(0, left); px < std::min(w, left + cfg.arm_width); ++px)
        f.set(px, py, cfg.arm);
  }
  return f;
}

// Mean squared error over subpixels, channels scaled to [0, 1].
inline double frame_mse(const Frame& a, const Frame& b) {
  if (!a.same_shape(b))
    throw DomainError("frame_mse: dimension mismatch " + std::to_string(a.width()) + "x" +
                      std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                      std::to_string(b.height()));
  const auto pa = a.pixels();
  const auto pb = b.pixels();
  // Accumulate integer squared differences exactly, then normalise once.
  std::uint64_t acc = 0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const int d = static_cast<int>(pa[i]) - static_cast<int>(pb[i]);
    acc += static_cast<std::uint64_t>(d * d);
  }
  return static_cast<double>(acc) / (255.0 * 255.0) / static_cast<double>(pa.size());
}

// Block-mean downsampling with per-channel round-half-up.
inline Frame downsample(const Frame& f, int factor) {
  if (factor < 1 || f.width() % factor != 0 || f.height() % factor != 0)
    throw DomainError("downsample factor " + std::to_string(factor) + " does not divide " +
                      std::to_string(f.width()) + "x" + std::to_string(f.height()));
  if (factor == 1)
    return f;
  const int ow = f.width() / factor;
  const int oh = f.height() / factor;
  const int n = factor * factor;
  Frame out(ow, oh);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      int sum[3] = {0, 0, 0};
      for (int dy = 0; dy < factor; ++dy) {
        for (int dx = 0; dx < factor; ++dx) {
          const Rgb c = f.at(ox * factor + dx, oy * factor + dy);
          sum[0] += c.r;
          sum[1] += c.g;
          sum[2] += c.b;
        }
      }
      auto mean = [n](int s) { return static_cast<std::uint8_t>((2 * s + n) / (2 * n)); };
      out.set(ox, oy, {mean(sum[0]), mean(sum[1]), mean(sum[2])});
    }
  }
  return out;
}

// Nearest-neighbour enlargement; used to overlay low-resolution predictions
// on native frames.
inline Frame upsample_nearest(const Frame& f, int factor) {
  if (factor < 1)
    throw DomainError("upsample factor must be positive");
  Frame out(f.width() * factor, f.height() * factor);
  for (int py = 0; py < out.height(); ++py)
    for (int px = 0; px < out.width(); ++px)
      out.set(px, py, f.at(px / factor, py / factor));
  return out;
}

// Brings `f` to (width, height) by an integer block downsample.
inline Frame to_resolution(const Frame& f, int width, int height) {
  if (f.width() == width && f.height() == height)
    return f;
  if (f.width() % width != 0 || f.height() % height != 0 ||
      f.width() / width != f.height() / height)
    throw DomainError("cannot bring " + std::to_string(f.width()) + "x" + std::to_string(f.height()) +
                      " frame to " + std::to_string(width) + "x" + std::to_string(height));
  return downsample(f, f.width() / width);
}

// 50/50 blend, rounding half up.
inline Frame blend_half(const Frame& a, const Frame& b) {
  if (!a.same_shape(b))
    throw DomainError("blend_half: dimension mismatch");
  Frame out(a.width(), a.height());
  const auto pa = a.pixels();
  const auto pb = b.pixels();
  auto po = out.pixels();
  for (std::size_t i = 0; i < pa.size(); ++i)
    po[i] = static_cast<std::uint8_t>((pa[i] + pb[i] + 1) / 2);
  return out;
}

// Side-by-side concatenation; all frames must share dimensions.
inline Frame hconcat(std::span<const Frame> frames) {
  if (frames.empty())
    throw DomainError("hconcat: no frames");
  const int w = frames[0].width();
  const int h = frames[0].height();
  Frame out(w * static_cast<int>(frames.size()), h);
  for (std::size_t k = 0; k < frames.size(); ++k) {
    if (frames[k].width() != w || frames[k].height() != h)
      throw DomainError("hconcat: dimension mismatch");
    for (int py = 0; py < h; ++py)
      for (int px = 0; px < w; ++px)
        out.set(static_cast<int>(k) * w + px, py, frames[k].at(px, py));
  }
  return out;
}

// Binary P6, maxval 255, single-byte separators.
inline std::vector<std::uint8_t> encode_ppm(const Frame& f) {
  const std::string header =
      "P6\n" + std::to_string(f.width()) + " " + std::to_string(f.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), f.pixels().begin(), f.pixels().end());
  return out;
}

namespace detail {

inline bool is_ppm_space(std::uint8_t c) {
  return c == ' ' || c == '\n' || c == '\r' || c == '\t';
}

// Reads a decimal header field followed by exactly one whitespace byte.
inline int read_ppm_field(std::span<const std::uint8_t> bytes, std::size_t& pos, std::string_view what) {
  if (pos >= bytes.size() || bytes[pos] < '0' || bytes[pos] > '9')
    throw FormatError("ppm: malformed " + std::string(what));
  long value = 0;
  while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
    value = value * 10 + (bytes[pos] - '0');
    if (value > 1'000'000)
      throw FormatError("ppm: " + std::string(what) + " too large");
    ++pos;
  }
  if (pos >= bytes.size() || !is_ppm_space(bytes[pos]))
    throw FormatError("ppm: missing separator after " + std::string(what));
  ++pos;
  return static_cast<int>(value);
}

} // namespace detail

inline Frame decode_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 3 || bytes[0] != 'P' || bytes[1] != '6' || !detail::is_ppm_space(bytes[2]))
    throw FormatError("ppm: missing P6 magic");
  std::size_t pos = 3;
  const int w = detail::read_ppm_field(bytes, pos, "width");
  const int h = detail::read_ppm_field(bytes, pos, "height");
  const int maxval = detail::read_ppm_field(bytes, pos, "maxval");
  if (w <= 0 || h <= 0)
    throw FormatError("ppm: non-positive dimensions");
  if (maxval != 255)
    throw FormatError("ppm: maxval must be 255, got " + std::to_string(maxval));
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
  if (bytes.size() - pos < need)
    throw FormatError("ppm: truncated pixel data (" + std::to_string(bytes.size() - pos) + " of " +
                      std::to_string(need) + " bytes)");
  if (bytes.size() - pos > need)
    throw FormatError("ppm: trailing bytes after pixel data");
  return Frame(w, h, std::vector<std::uint8_t>(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end()));
}

} // namespace lfp
