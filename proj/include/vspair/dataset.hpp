#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vspair/rng.hpp"
#include "vspair/tensor.hpp"

namespace vspair {

// Which pixels of an image-shaped sample were destroyed.
struct CorruptionMask {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<std::uint8_t> on;  // 1 = corrupted

  std::size_t popcount() const;
  bool empty() const { return on.empty(); }
};

// Paired (QoI, observation) samples stored as row-major matrices, one row per
// item. Image-shaped QoIs carry their geometry and per-item corruption masks.
struct PairedDataset {
  std::string kind;
  std::size_t dim_x = 0;
  std::size_t dim_y = 0;
  std::size_t img_h = 0;  // zero when x is not an image
  std::size_t img_w = 0;
  Tensor x;  // n x dim_x
  Tensor y;  // n x dim_y
  std::vector<CorruptionMask> masks;  // empty when not applicable
  Tensor forward_matrix;              // linear kinds only

  std::size_t size() const { return x.rank() == 2 ? x.dim(0) : 0; }
  Tensor x_row(std::size_t i) const;
  Tensor y_row(std::size_t i) const;
};

// Copy of the selected rows, in the given order.
Tensor gather_rows(const Tensor& m, const std::vector<std::size_t>& idx);

// Blind-inpainting corruption: n_patches square patches of side `patch`,
// top-left corners uniform over valid positions (overlap allowed), filled
// with the image's own minimum value. Draws two uniforms per patch, row
// first. Returns the corrupted copy and the union mask.
std::pair<Tensor, CorruptionMask> corrupt(const Tensor& image, Rng& rng,
                                          std::size_t n_patches = 10, std::size_t patch = 5);

enum class SynthKind { kLinearGaussian, kToyDigits };

SynthKind synth_kind_from_name(const std::string& name);
std::string synth_kind_name(SynthKind k);

struct SynthOptions {
  // linear_gaussian: y = A x + noise_sd * eps with x ~ N(0, I); A is derived
  // from the generator so equal seeds share the forward operator.
  std::size_t dim_x = 6;
  std::size_t dim_y = 4;
  double noise_sd = 0.1;
  // toy_digits: square glyph canvas; observations use the standard corruption
  // protocol (ten 5x5 patches, min-fill) regardless of canvas size.
  std::size_t img = 16;
  std::size_t n_patches = 10;
  std::size_t patch = 5;
};

// Deterministic synthetic pairs. toy_digits emits procedurally drawn
// seven-segment glyphs (classes cycle 0..9) with per-item jitter; y is the
// corrupt() observation of x.
PairedDataset synth_dataset(SynthKind kind, std::size_t n, Rng& rng, SynthOptions opt = {});

}  // namespace vspair
