#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "avil/numerics/tensor.hpp"
#include "avil/sim/world.hpp"

namespace avil::sim {

/// Fixed side-view camera: an axis-aligned world window mapped onto the image.
struct Camera {
  double x_min = 0.0, x_max = 0.58;
  double y_min = -0.03, y_max = 0.55;

  double column(double x, int width) const { return (x - x_min) / (x_max - x_min) * width; }
  double row(double y, int height) const { return (y_max - y) / (y_max - y_min) * height; }
  Vec2 pixel_center(int i, int j, int height, int width) const;
  double pixel_size(int height, int width) const;
};

const Camera& default_camera();

enum class Label : std::uint8_t { kBackground, kTable, kDistractor, kBowl, kFood, kArm };

struct Raster {
  int height = 0, width = 0;
  nn::Tensor image;  // 3xHxW, values are multiples of 1/255
  std::vector<Label> labels;
  Label label(int i, int j) const { return labels[static_cast<std::size_t>(i) * width + j]; }
};

inline constexpr Rgb kBackgroundColor{0.22, 0.24, 0.28};
inline constexpr Rgb kTableColor{0.45, 0.33, 0.22};
inline constexpr double kGlassAlpha = 0.3;

/// Colour as it lands in the 8-bit frame.
Rgb quantize(Rgb c);
Rgb blend(Rgb under, Rgb over, double alpha);

Raster rasterize(const WorldState& world, int height, int width);
nn::Tensor render(const WorldState& world, int height, int width);

/// 1 inside the bounding box of visible bowl pixels, else 0 (1xHxW).
nn::Tensor bowl_mask(const WorldState& world, int height, int width);
nn::Tensor bbox_mask(const Raster& raster, Label label);

/// Binary P6 / P5 files, 8 bits per channel.
void write_ppm(const std::filesystem::path& path, const nn::Tensor& image);
nn::Tensor read_ppm(const std::filesystem::path& path);
std::string encode_ppm(const nn::Tensor& image);
nn::Tensor decode_ppm(const std::string& bytes);
void write_pgm(const std::filesystem::path& path, const nn::Tensor& mask);
nn::Tensor read_pgm(const std::filesystem::path& path);

}  // namespace avil::sim
