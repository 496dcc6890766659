#include "avil/sim/render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace avil::sim {

Vec2 Camera::pixel_center(int i, int j, int height, int width) const {
  return {x_min + (j + 0.5) * (x_max - x_min) / width, y_max - (i + 0.5) * (y_max - y_min) / height};
}

double Camera::pixel_size(int height, int width) const {
  return std::max((x_max - x_min) / width, (y_max - y_min) / height);
}

const Camera& default_camera() {
  static const Camera camera;
  return camera;
}

Rgb quantize(Rgb c) {
  auto q = [](double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; };
  return {q(c.r), q(c.g), q(c.b)};
}

Rgb blend(Rgb under, Rgb over, double alpha) {
  return {under.r + alpha * (over.r - under.r), under.g + alpha * (over.g - under.g),
          under.b + alpha * (over.b - under.b)};
}

namespace {

constexpr Rgb kArmColor{0.08, 0.08, 0.10};
constexpr Rgb kPedestalColor{0.18, 0.18, 0.20};
constexpr Rgb kSpoonColor{0.40, 0.40, 0.42};

double segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  const double t = len2 > 0.0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
  return norm(p - (a + t * ab));
}

class Canvas {
 public:
  Canvas(int h, int w) : h_(h), w_(w), camera_(default_camera()) {
    raster_.height = h;
    raster_.width = w;
    raster_.image = nn::Tensor({3, h, w});
    raster_.labels.assign(static_cast<std::size_t>(h) * w, Label::kBackground);
    colors_.assign(static_cast<std::size_t>(h) * w, quantize(kBackgroundColor));
  }

  double px() const { return camera_.pixel_size(h_, w_); }

  /// Paints every pixel whose centre satisfies `inside`.
  void fill(const std::function<bool(Vec2)>& inside, Rgb color, Label label) {
    const Rgb c = quantize(color);
    for (int i = 0; i < h_; ++i) {
      for (int j = 0; j < w_; ++j) {
        if (inside(camera_.pixel_center(i, j, h_, w_))) set(i, j, c, label);
      }
    }
  }

  /// Blends `color` over whatever is already there.
  void tint(const std::function<bool(Vec2)>& inside, Rgb color, double alpha, Label label) {
    for (int i = 0; i < h_; ++i) {
      for (int j = 0; j < w_; ++j) {
        if (!inside(camera_.pixel_center(i, j, h_, w_))) continue;
        const auto k = static_cast<std::size_t>(i) * w_ + j;
        set(i, j, quantize(blend(colors_[k], color, alpha)), label);
      }
    }
  }

  void segment(Vec2 a, Vec2 b, double half_width, Rgb color, Label label) {
    const double hw = std::max(half_width, 0.55 * px());
    fill([&](Vec2 p) { return segment_distance(p, a, b) <= hw; }, color, label);
  }

  void disk(Vec2 center, double radius, Rgb color, Label label) {
    const double r = std::max(radius, 0.6 * px());
    fill([&](Vec2 p) { return norm(p - center) <= r; }, color, label);
  }

  void rect(double x0, double x1, double y0, double y1, Rgb color, Label label) {
    fill([&](Vec2 p) { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; }, color, label);
  }

  Raster finish() {
    for (int i = 0; i < h_; ++i) {
      for (int j = 0; j < w_; ++j) {
        const Rgb& c = colors_[static_cast<std::size_t>(i) * w_ + j];
        raster_.image.at(0, i, j) = static_cast<float>(c.r);
        raster_.image.at(1, i, j) = static_cast<float>(c.g);
        raster_.image.at(2, i, j) = static_cast<float>(c.b);
      }
    }
    return std::move(raster_);
  }

 private:
  void set(int i, int j, Rgb c, Label label) {
    const auto k = static_cast<std::size_t>(i) * w_ + j;
    colors_[k] = c;
    raster_.labels[k] = label;
  }

  int h_, w_;
  Camera camera_;
  Raster raster_;
  std::vector<Rgb> colors_;
};

void draw_distractor(Canvas& canvas, const Distractor& d) {
  const double x = d.x, hw = d.half_width;
  const Label l = Label::kDistractor;
  switch (d.shape) {
    case DistractorShape::kBottle:
      canvas.rect(x - hw, x + hw, 0.0, 0.12, {0.10, 0.20, 0.55}, l);
      canvas.rect(x - 0.008, x + 0.008, 0.12, 0.15, {0.10, 0.20, 0.55}, l);
      canvas.rect(x - 0.009, x + 0.009, 0.15, 0.16, {0.20, 0.60, 0.30}, l);
      break;
    case DistractorShape::kApple:
      canvas.disk({x, hw}, hw, {0.80, 0.12, 0.10}, l);
      canvas.rect(x - 0.002, x + 0.002, 2 * hw - 0.002, 2 * hw + 0.012, {0.35, 0.22, 0.10}, l);
      break;
    case DistractorShape::kJar:
      canvas.rect(x - hw, x + hw, 0.0, 0.065, {0.85, 0.55, 0.10}, l);
      canvas.rect(x - hw - 0.002, x + hw + 0.002, 0.065, 0.075, {0.70, 0.60, 0.20}, l);
      break;
    case DistractorShape::kKnife:
      canvas.rect(x - hw, x + 0.4 * hw, 0.0, 0.008, {0.62, 0.64, 0.66}, l);
      canvas.rect(x + 0.4 * hw, x + hw, 0.0, 0.012, {0.15, 0.10, 0.08}, l);
      break;
  }
}

void draw_bowl(Canvas& canvas, const BowlConfig& b) {
  const double t = b.wall_thickness, top = b.rim_height();
  auto outer_hw = [&](double y) { return b.bottom_half_width() + t + (y / top) * (b.rim_radius - b.bottom_half_width()); };
  auto inside_outer = [&](Vec2 p) { return p.y >= 0.0 && p.y <= top && std::abs(p.x - b.center_x) <= outer_hw(p.y); };
  if (!b.transparent) {
    canvas.fill(inside_outer, b.material_color, Label::kBowl);
    return;
  }
  canvas.tint(inside_outer, b.material_color, kGlassAlpha, Label::kBowl);
  const Vec2 bl{b.center_x - outer_hw(0.0), 0.0}, br{b.center_x + outer_hw(0.0), 0.0};
  const Vec2 tl{b.center_x - outer_hw(top), top}, tr{b.center_x + outer_hw(top), top};
  canvas.segment(tl, bl, 0.0, b.material_color, Label::kBowl);
  canvas.segment(bl, br, 0.0, b.material_color, Label::kBowl);
  canvas.segment(br, tr, 0.0, b.material_color, Label::kBowl);
}

void draw_arm(Canvas& canvas, const WorldState& w) {
  canvas.rect(w.arm.base.x - 0.02, w.arm.base.x + 0.02, 0.0, w.arm.base.y, kPedestalColor, Label::kArm);
  const Kinematics k = fk(w.arm, w.joints);
  for (int i = 0; i < kJoints - 1; ++i) canvas.segment(k.points[i], k.points[i + 1], 0.010, kArmColor, Label::kArm);
  canvas.segment(k.points[kJoints - 1], k.points[kJoints], 0.003, kSpoonColor, Label::kArm);
  const Vec2 head = k.tip.position - 0.008 * spoon_axis(k.tip.pitch);
  canvas.disk(head, 0.009, kSpoonColor, Label::kArm);
}

}  // namespace

Raster rasterize(const WorldState& w, int height, int width) {
  if (height < 1 || width < 1) throw nn::DimensionError("render size must be positive");
  Canvas canvas(height, width);
  canvas.fill([](Vec2 p) { return p.y < 0.0; }, kTableColor, Label::kTable);
  for (const auto& d : w.distractors) draw_distractor(canvas, d);
  draw_bowl(canvas, w.bowl);
  for (const auto& p : w.particles) canvas.disk(p.position, w.food.particle_radius, w.food.color, Label::kFood);
  draw_arm(canvas, w);
  return canvas.finish();
}

nn::Tensor render(const WorldState& w, int height, int width) { return rasterize(w, height, width).image; }

nn::Tensor bbox_mask(const Raster& r, Label label) {
  int i0 = r.height, i1 = -1, j0 = r.width, j1 = -1;
  for (int i = 0; i < r.height; ++i) {
    for (int j = 0; j < r.width; ++j) {
      if (r.label(i, j) != label) continue;
      i0 = std::min(i0, i), i1 = std::max(i1, i);
      j0 = std::min(j0, j), j1 = std::max(j1, j);
    }
  }
  nn::Tensor mask({1, r.height, r.width});
  for (int i = i0; i <= i1; ++i) {
    for (int j = j0; j <= j1; ++j) mask.at(0, i, j) = 1.0f;
  }
  return mask;
}

nn::Tensor bowl_mask(const WorldState& w, int height, int width) {
  return bbox_mask(rasterize(w, height, width), Label::kBowl);
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

unsigned char to_byte(float v) { return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); }

// Parses "P5"/"P6" headers: magic, width, height, maxval, one whitespace byte.
std::size_t parse_header(const std::string& bytes, const char* magic, int& width, int& height) {
  std::size_t pos = 0;
  auto next_token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  if (next_token() != magic) throw std::runtime_error(std::string("not a ") + magic + " file");
  try {
    width = std::stoi(next_token());
    height = std::stoi(next_token());
    if (std::stoi(next_token()) != 255) throw std::runtime_error("only 8-bit images are supported");
  } catch (const std::logic_error&) {
    throw std::runtime_error("malformed image header");
  }
  if (width < 1 || height < 1) throw std::runtime_error("malformed image size");
  return pos + 1;
}

}  // namespace

std::string encode_ppm(const nn::Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) throw nn::DimensionError("PPM expects a 3xHxW image");
  const int h = image.dim(1), w = image.dim(2);
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.reserve(out.size() + static_cast<std::size_t>(h) * w * 3);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      for (int c = 0; c < 3; ++c) out.push_back(static_cast<char>(to_byte(image.at(c, i, j))));
    }
  }
  return out;
}

nn::Tensor decode_ppm(const std::string& bytes) {
  int w = 0, h = 0;
  const std::size_t offset = parse_header(bytes, "P6", w, h);
  if (bytes.size() != offset + static_cast<std::size_t>(w) * h * 3) throw std::runtime_error("PPM payload size mismatch");
  nn::Tensor image({3, h, w});
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + offset);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      for (int c = 0; c < 3; ++c) image.at(c, i, j) = static_cast<float>(*p++) / 255.0f;
    }
  }
  return image;
}

void write_ppm(const std::filesystem::path& path, const nn::Tensor& image) { write_file(path, encode_ppm(image)); }

nn::Tensor read_ppm(const std::filesystem::path& path) { return decode_ppm(read_file(path)); }

void write_pgm(const std::filesystem::path& path, const nn::Tensor& mask) {
  if (mask.rank() != 3 || mask.dim(0) != 1) throw nn::DimensionError("PGM expects a 1xHxW mask");
  const int h = mask.dim(1), w = mask.dim(2);
  std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (float v : mask.data()) out.push_back(static_cast<char>(to_byte(v)));
  write_file(path, out);
}

nn::Tensor read_pgm(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  int w = 0, h = 0;
  const std::size_t offset = parse_header(bytes, "P5", w, h);
  if (bytes.size() != offset + static_cast<std::size_t>(w) * h) throw std::runtime_error("PGM payload size mismatch");
  nn::Tensor mask({1, h, w});
  for (std::size_t k = 0; k < mask.size(); ++k) {
    mask[k] = static_cast<float>(static_cast<unsigned char>(bytes[offset + k])) / 255.0f;
  }
  return mask;
}

}  // namespace avil::sim
