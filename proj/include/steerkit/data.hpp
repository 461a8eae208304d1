#pragma once

#include "steerkit/field.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace steerkit {

struct Batch {
  std::vector<FourierField> fields;
  std::vector<int> labels;
};

/// bar, L, T, cross, box, Z.
const std::vector<std::string>& glyph_names();

/// One synthetic sample: glyph class, orientation and sub-pixel offset.
struct ShapeSample {
  int label = 0;
  double angle = 0.0;
  double dx = 0.0;
  double dy = 0.0;
};

/// Anti-aliased glyph on a size x size grid centred on the origin, row-major
/// (row = y). Intensities lie in [0, 1].
std::vector<double> render_glyph(int glyph, int size, double angle, double dx, double dy);

/// Uniform labels, Haar-random angles, offsets uniform in [-0.5, 0.5) pixels.
std::vector<ShapeSample> sample_shapes(int n, int num_classes, std::mt19937_64& rng);

/// Renders samples after rotating each one about the grid centre by
/// `extra_angle` (offsets rotate along with the glyph).
std::vector<std::vector<double>> render_shapes(const std::vector<ShapeSample>& samples, int size,
                                               double extra_angle = 0.0);

/// Lifted batch of randomly oriented glyphs; deterministic given rng state.
Batch make_synthetic_rotated_shapes(int n, int size, int num_classes, std::mt19937_64& rng, int cutoff = 2);

/// Lifts row-major images into 2D grid fields.
Batch lift_images(const std::vector<std::vector<double>>& images, const std::vector<int>& labels, int size, int cutoff);

struct IdxImages {
  int count = 0;
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> pixels;  // count x rows x cols
};

IdxImages read_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);
void write_idx_images(const std::filesystem::path& path, const IdxImages& images);
void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels);

/// Images scaled to [0, 1] and lifted; counts cross-checked between files.
Batch load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, int cutoff = 2);

}  // namespace steerkit
