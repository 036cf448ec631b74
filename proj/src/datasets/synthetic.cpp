#include "sseg/datasets/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "sseg/core/errors.hpp"
#include "sseg/core/random.hpp"
#include "sseg/datasets/png.hpp"

namespace sseg {
namespace {

namespace fs = std::filesystem;

constexpr double kPi = 3.14159265358979323846;
constexpr int kMaxShapes = 5;
constexpr int kPlacementAttempts = 60;

struct Box {
  int y0, x0, h, w;
  bool overlaps(const Box& o, int margin) const {
    return !(y0 + h + margin <= o.y0 || o.y0 + o.h + margin <= y0 || x0 + w + margin <= o.x0 ||
             o.x0 + o.w + margin <= x0);
  }
};

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0);
  const double c = v * s;
  const double x = c * (1 - std::fabs(std::fmod(h / 60.0, 2.0) - 1));
  const double m = v - c;
  double r = 0, g = 0, b = 0;
  if (h < 60) { r = c; g = x; }
  else if (h < 120) { r = x; g = c; }
  else if (h < 180) { g = c; b = x; }
  else if (h < 240) { g = x; b = c; }
  else if (h < 300) { r = x; b = c; }
  else { r = c; b = x; }
  return {(r + m) * 255.0, (g + m) * 255.0, (b + m) * 255.0};
}

double class_hue(int cls, int num_classes) {
  return 15.0 + 360.0 * (cls - 1) / (num_classes - 1);
}

std::uint8_t clamp_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

// Inside-test for a shape occupying `box`, evaluated at pixel centers.
bool inside(ShapeKind kind, const Box& box, int y, int x) {
  const double u = (x + 0.5 - box.x0) / box.w;  // [0,1) across the box
  const double v = (y + 0.5 - box.y0) / box.h;
  if (u < 0 || u >= 1 || v < 0 || v >= 1) return false;
  const double du = (u - 0.5) * 2.0;
  const double dv = (v - 0.5) * 2.0;
  const double r2 = du * du + dv * dv;
  switch (kind) {
    case ShapeKind::Rectangle:
      return true;
    case ShapeKind::Ellipse:
      return r2 <= 1.0;
    case ShapeKind::Triangle:
      // Apex at top center, base along the bottom edge.
      return std::fabs(du) <= v;
    case ShapeKind::Ring:
      return r2 <= 1.0 && r2 >= 0.36;
    case ShapeKind::Cross:
      return std::fabs(du) <= 0.34 || std::fabs(dv) <= 0.34;
  }
  return false;
}

void render_sample(const SyntheticOptions& opt, std::uint64_t index, Raster& image, Raster& mask) {
  Rng rng = Rng::from({opt.seed, index});
  const int H = opt.height;
  const int W = opt.width;

  // Textured background: gray base, low-frequency stripes, per-pixel noise.
  const double base = rng.uniform(85.0, 150.0);
  const std::array<double, 3> tint{rng.uniform(-12, 12), rng.uniform(-12, 12), rng.uniform(-12, 12)};
  const double angle = rng.uniform(0.0, kPi);
  const double freq = rng.uniform(0.15, 0.45);
  const double phase = rng.uniform(0.0, 2 * kPi);
  const double amplitude = rng.uniform(8.0, 22.0);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double stripe =
          amplitude * std::sin(freq * (x * std::cos(angle) + y * std::sin(angle)) + phase);
      for (int c = 0; c < 3; ++c) {
        image.at(y, x, c) = clamp_byte(base + tint[c] + stripe + rng.uniform(-10.0, 10.0));
      }
      mask.at(y, x) = 0;
    }
  }

  const int min_side = std::max(4, static_cast<int>(std::lround(0.22 * std::min(H, W))));
  const int max_side = std::max(min_side, static_cast<int>(std::lround(0.42 * std::min(H, W))));
  const int shapes = static_cast<int>(rng.uniform_int(1, kMaxShapes));
  const double hue_spacing = 360.0 / (opt.num_classes - 1);

  std::vector<Box> placed;
  for (int s = 0; s < shapes; ++s) {
    const int cls = static_cast<int>(rng.uniform_int(1, opt.num_classes - 1));
    const int side = static_cast<int>(rng.uniform_int(min_side, max_side));
    const double aspect = rng.uniform(0.75, 1.33);
    Box box{0, 0, std::clamp(side, 3, H), std::clamp(static_cast<int>(std::lround(side * aspect)), 3, W)};
    bool ok = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !ok; ++attempt) {
      box.y0 = static_cast<int>(rng.uniform_int(0, H - box.h));
      box.x0 = static_cast<int>(rng.uniform_int(0, W - box.w));
      ok = std::none_of(placed.begin(), placed.end(),
                        [&](const Box& other) { return box.overlaps(other, 1); });
    }
    if (!ok) continue;
    placed.push_back(box);

    const double hue = class_hue(cls, opt.num_classes) + rng.uniform(-0.18, 0.18) * hue_spacing;
    const auto color = hsv_to_rgb(hue, rng.uniform(0.6, 0.95), rng.uniform(0.7, 1.0));
    const ShapeKind kind = shape_kind_for_class(cls);
    for (int y = box.y0; y < box.y0 + box.h; ++y) {
      for (int x = box.x0; x < box.x0 + box.w; ++x) {
        if (!inside(kind, box, y, x)) continue;
        mask.at(y, x) = static_cast<std::uint8_t>(cls);
        for (int c = 0; c < 3; ++c) image.at(y, x, c) = clamp_byte(color[c] + rng.uniform(-12.0, 12.0));
      }
    }
  }
}

std::string sample_id(std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06llu", static_cast<unsigned long long>(index));
  return buf;
}

}  // namespace

ShapeKind shape_kind_for_class(int cls) { return static_cast<ShapeKind>((cls - 1) % 5); }

DatasetDescriptor generate_synthetic_dataset(const SyntheticOptions& opt, const fs::path& out_dir) {
  check(opt.num_classes >= 2, ErrorCode::InvalidSpec, "synthetic data needs num_classes >= 2");
  check(opt.num_classes <= 255, ErrorCode::InvalidSpec, "num_classes must fit an 8-bit index PNG");
  check(opt.count >= 1, ErrorCode::InvalidSpec, "synthetic data needs count >= 1");
  check(opt.val_count >= 0, ErrorCode::InvalidSpec, "val_count must be non-negative");
  check(opt.height >= 8 && opt.width >= 8, ErrorCode::InvalidSpec, "synthetic images must be at least 8x8");

  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (!ec) fs::create_directories(out_dir / "annotations", ec);
  if (ec) fail(ErrorCode::IOError, "cannot create " + out_dir.string() + ": " + ec.message());

  static constexpr const char* kKindNames[] = {"rectangle", "ellipse", "triangle", "ring", "cross"};
  DatasetMeta meta;
  meta.num_classes = opt.num_classes;
  meta.ignore_index = kDefaultIgnoreIndex;
  meta.palette.push_back({0, 0, 0});
  meta.class_names.push_back("background");
  for (int cls = 1; cls < opt.num_classes; ++cls) {
    const auto rgb = hsv_to_rgb(class_hue(cls, opt.num_classes), 0.9, 1.0);
    meta.palette.push_back({clamp_byte(rgb[0]), clamp_byte(rgb[1]), clamp_byte(rgb[2])});
    std::string name = kKindNames[(cls - 1) % 5];
    if (cls > 5) name += "_" + std::to_string((cls - 1) / 5 + 1);
    meta.class_names.push_back(name);
  }

  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
  const std::uint64_t total = static_cast<std::uint64_t>(opt.count) + opt.val_count;
  for (std::uint64_t i = 0; i < total; ++i) {
    Raster image(opt.height, opt.width, 3);
    Raster mask(opt.height, opt.width, 1);
    render_sample(opt, i, image, mask);
    const auto id = sample_id(i);
    write_png(out_dir / "images" / (id + ".png"), image);
    write_png(out_dir / "annotations" / (id + ".png"), mask);
    (i < static_cast<std::uint64_t>(opt.count) ? train_ids : val_ids).push_back(id);
  }
  meta.splits = {{"train", train_ids}, {"val", val_ids}};
  save_dataset_meta(out_dir, meta);
  return load_descriptor(out_dir, "train");
}

}  // namespace sseg
