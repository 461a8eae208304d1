#include "steerkit/data.hpp"

#include "bytes.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace steerkit {

namespace {

struct Segment {
  double x0, y0, x1, y1;
};

// Glyph strokes in a [-1, 1]^2 box.
const std::vector<std::vector<Segment>>& glyph_strokes() {
  static const std::vector<std::vector<Segment>> strokes{
      {{-0.8, 0.0, 0.8, 0.0}},
      {{-0.5, 0.8, -0.5, -0.8}, {-0.5, -0.8, 0.6, -0.8}},
      {{-0.8, 0.8, 0.8, 0.8}, {0.0, 0.8, 0.0, -0.8}},
      {{-0.8, 0.0, 0.8, 0.0}, {0.0, -0.8, 0.0, 0.8}},
      {{-0.7, -0.7, 0.7, -0.7}, {0.7, -0.7, 0.7, 0.7}, {0.7, 0.7, -0.7, 0.7}, {-0.7, 0.7, -0.7, -0.7}},
      {{-0.7, 0.8, 0.7, 0.8}, {0.7, 0.8, -0.7, -0.8}, {-0.7, -0.8, 0.7, -0.8}},
  };
  return strokes;
}

constexpr double kGlyphScale = 0.35;   // glyph half-width as a fraction of the grid size
constexpr double kHalfStroke = 0.12;   // in glyph units
constexpr int kSupersample = 4;

double segment_distance(const Segment& s, double x, double y) {
  const double vx = s.x1 - s.x0, vy = s.y1 - s.y0;
  const double t = std::clamp(((x - s.x0) * vx + (y - s.y0) * vy) / (vx * vx + vy * vy), 0.0, 1.0);
  return std::hypot(x - s.x0 - t * vx, y - s.y0 - t * vy);
}

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

}  // namespace

const std::vector<std::string>& glyph_names() {
  static const std::vector<std::string> names{"bar", "L", "T", "cross", "box", "Z"};
  return names;
}

std::vector<double> render_glyph(int glyph, int size, double angle, double dx, double dy) {
  const auto& strokes = glyph_strokes();
  if (glyph < 0 || glyph >= static_cast<int>(strokes.size()))
    throw std::invalid_argument("unknown glyph " + std::to_string(glyph));
  if (size < 1) throw std::invalid_argument("glyph size must be positive");
  const double scale = kGlyphScale * size;
  const double half = 0.5 * (size - 1);
  const auto inv = Rotation::so2(angle).inverse();
  std::vector<double> img(static_cast<size_t>(size) * size, 0.0);
  for (int iy = 0; iy < size; ++iy)
    for (int ix = 0; ix < size; ++ix) {
      int hits = 0;
      for (int sy = 0; sy < kSupersample; ++sy)
        for (int sx = 0; sx < kSupersample; ++sx) {
          const double px = ix - half + (sx + 0.5) / kSupersample - 0.5 - dx;
          const double py = iy - half + (sy + 0.5) / kSupersample - 0.5 - dy;
          const Vec3 q = inv.apply(Vec3{px, py, 0.0});
          const double gx = q[0] / scale, gy = q[1] / scale;
          for (const auto& s : strokes[glyph])
            if (segment_distance(s, gx, gy) <= kHalfStroke) {
              ++hits;
              break;
            }
        }
      img[static_cast<size_t>(iy) * size + ix] = static_cast<double>(hits) / (kSupersample * kSupersample);
    }
  return img;
}

std::vector<ShapeSample> sample_shapes(int n, int num_classes, std::mt19937_64& rng) {
  if (num_classes < 1 || num_classes > static_cast<int>(glyph_names().size()))
    throw std::invalid_argument("requested " + std::to_string(num_classes) + " classes but only " +
                                std::to_string(glyph_names().size()) + " glyphs exist");
  if (n < 0) throw std::invalid_argument("sample count must be non-negative");
  std::uniform_int_distribution<int> label(0, num_classes - 1);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> offset(-0.5, 0.5);
  std::vector<ShapeSample> out(n);
  for (auto& s : out) {
    s.label = label(rng);
    s.angle = angle(rng);
    s.dx = offset(rng);
    s.dy = offset(rng);
  }
  return out;
}

std::vector<std::vector<double>> render_shapes(const std::vector<ShapeSample>& samples, int size, double extra_angle) {
  const auto r = Rotation::so2(extra_angle);
  std::vector<std::vector<double>> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const Vec3 d = r.apply(Vec3{s.dx, s.dy, 0.0});
    out.push_back(render_glyph(s.label, size, s.angle + extra_angle, d[0], d[1]));
  }
  return out;
}

Batch lift_images(const std::vector<std::vector<double>>& images, const std::vector<int>& labels, int size, int cutoff) {
  if (images.size() != labels.size()) throw std::invalid_argument("lift_images: image and label counts differ");
  Batch b;
  b.labels = labels;
  for (const auto& img : images) b.fields.push_back(lift_scalar_image(img, 2, {size, size, 1}, cutoff, 1));
  return b;
}

Batch make_synthetic_rotated_shapes(int n, int size, int num_classes, std::mt19937_64& rng, int cutoff) {
  if (size < 12) throw std::invalid_argument("synthetic shapes need size >= 12, got " + std::to_string(size));
  const auto samples = sample_shapes(n, num_classes, rng);
  std::vector<int> labels;
  for (const auto& s : samples) labels.push_back(s.label);
  return lift_images(render_shapes(samples, size), labels, size, cutoff);
}

IdxImages read_idx_images(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  detail::ByteReader r(bytes);
  const auto magic = r.be<std::uint32_t>("magic");
  if (magic != kImageMagic)
    throw FormatError(FormatError::Kind::BadMagic, "magic",
                      path.string() + ": not an IDX image file (magic " + std::to_string(magic) + ")");
  IdxImages img;
  img.count = static_cast<int>(r.be<std::uint32_t>("count"));
  img.rows = static_cast<int>(r.be<std::uint32_t>("rows"));
  img.cols = static_cast<int>(r.be<std::uint32_t>("cols"));
  const size_t n = static_cast<size_t>(img.count) * img.rows * img.cols;
  const auto payload = r.take(n, "pixels");
  img.pixels.assign(payload.begin(), payload.end());
  if (r.remaining() != 0) throw FormatError(FormatError::Kind::BadHeader, "pixels", path.string() + ": trailing bytes");
  return img;
}

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  detail::ByteReader r(bytes);
  const auto magic = r.be<std::uint32_t>("magic");
  if (magic != kLabelMagic)
    throw FormatError(FormatError::Kind::BadMagic, "magic",
                      path.string() + ": not an IDX label file (magic " + std::to_string(magic) + ")");
  const auto count = r.be<std::uint32_t>("count");
  const auto payload = r.take(count, "labels");
  if (r.remaining() != 0) throw FormatError(FormatError::Kind::BadHeader, "labels", path.string() + ": trailing bytes");
  return {payload.begin(), payload.end()};
}

void write_idx_images(const std::filesystem::path& path, const IdxImages& images) {
  if (images.pixels.size() != static_cast<size_t>(images.count) * images.rows * images.cols)
    throw std::invalid_argument("write_idx_images: pixel count does not match the declared shape");
  detail::ByteWriter w;
  w.be(kImageMagic);
  w.be(static_cast<std::uint32_t>(images.count));
  w.be(static_cast<std::uint32_t>(images.rows));
  w.be(static_cast<std::uint32_t>(images.cols));
  w.bytes(images.pixels.data(), images.pixels.size());
  detail::write_file_bytes(path, w.buffer());
}

void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels) {
  detail::ByteWriter w;
  w.be(kLabelMagic);
  w.be(static_cast<std::uint32_t>(labels.size()));
  w.bytes(labels.data(), labels.size());
  detail::write_file_bytes(path, w.buffer());
}

Batch load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, int cutoff) {
  const auto img = read_idx_images(images);
  const auto lab = read_idx_labels(labels);
  if (lab.size() != static_cast<size_t>(img.count))
    throw FormatError(FormatError::Kind::CountMismatch, "count",
                      "image file holds " + std::to_string(img.count) + " images but label file holds " +
                          std::to_string(lab.size()) + " labels");
  if (img.rows != img.cols)
    throw FormatError(FormatError::Kind::BadHeader, "rows", "only square IDX images are supported");
  Batch b;
  const size_t px = static_cast<size_t>(img.rows) * img.cols;
  for (int i = 0; i < img.count; ++i) {
    std::vector<double> v(px);
    for (size_t p = 0; p < px; ++p) v[p] = img.pixels[i * px + p] / 255.0;
    b.fields.push_back(lift_scalar_image(v, 2, {img.cols, img.rows, 1}, cutoff, 1));
    b.labels.push_back(lab[i]);
  }
  return b;
}

}  // namespace steerkit
