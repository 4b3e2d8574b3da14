#include "vspair/dataset.hpp"

#include <algorithm>
#include <cmath>

namespace vspair {

std::size_t CorruptionMask::popcount() const {
  std::size_t n = 0;
  for (std::uint8_t b : on) n += b != 0;
  return n;
}

Tensor PairedDataset::x_row(std::size_t i) const {
  if (i >= size()) throw ShapeError("dataset: row " + std::to_string(i) + " of " +
                                    std::to_string(size()));
  Tensor r{Shape{dim_x}};
  for (std::size_t c = 0; c < dim_x; ++c) r[c] = x[i * dim_x + c];
  return r;
}

Tensor PairedDataset::y_row(std::size_t i) const {
  if (i >= size()) throw ShapeError("dataset: row " + std::to_string(i) + " of " +
                                    std::to_string(size()));
  Tensor r{Shape{dim_y}};
  for (std::size_t c = 0; c < dim_y; ++c) r[c] = y[i * dim_y + c];
  return r;
}

Tensor gather_rows(const Tensor& m, const std::vector<std::size_t>& idx) {
  if (m.rank() != 2) throw ShapeError("gather_rows: expected rank-2, got " + shape_str(m.shape()));
  std::size_t cols = m.dim(1);
  Tensor out{Shape{idx.size(), cols}};
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= m.dim(0))
      throw ShapeError("gather_rows: row " + std::to_string(idx[r]) + " of " +
                       std::to_string(m.dim(0)));
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = m[idx[r] * cols + c];
  }
  return out;
}

std::pair<Tensor, CorruptionMask> corrupt(const Tensor& image, Rng& rng, std::size_t n_patches,
                                          std::size_t patch) {
  if (image.rank() != 2)
    throw ShapeError("corrupt: expected an h x w image, got shape " + shape_str(image.shape()));
  std::size_t h = image.dim(0), w = image.dim(1);
  if (patch == 0 || h < patch || w < patch)
    throw ShapeError("corrupt: patch " + std::to_string(patch) + " does not fit a " +
                     std::to_string(h) + " x " + std::to_string(w) + " image");

  double fill = image[0];
  for (std::size_t i = 1; i < image.size(); ++i) fill = std::min(fill, image[i]);

  Tensor out = image;
  CorruptionMask mask;
  mask.h = h;
  mask.w = w;
  mask.on.assign(h * w, 0);
  for (std::size_t p = 0; p < n_patches; ++p) {
    std::size_t r0 = rng.next_below(h - patch + 1);
    std::size_t c0 = rng.next_below(w - patch + 1);
    for (std::size_t r = r0; r < r0 + patch; ++r)
      for (std::size_t c = c0; c < c0 + patch; ++c) {
        out[r * w + c] = fill;
        mask.on[r * w + c] = 1;
      }
  }
  return {out, mask};
}

SynthKind synth_kind_from_name(const std::string& name) {
  if (name == "linear_gaussian") return SynthKind::kLinearGaussian;
  if (name == "toy_digits") return SynthKind::kToyDigits;
  throw ValueError("unknown dataset kind '" + name + "', expected linear_gaussian|toy_digits");
}

std::string synth_kind_name(SynthKind k) {
  return k == SynthKind::kLinearGaussian ? "linear_gaussian" : "toy_digits";
}

namespace {

// Seven-segment endpoints in a unit box, (row, col) pairs.
struct Seg {
  double r0, c0, r1, c1;
};
constexpr Seg kSegments[7] = {
    {0.08, 0.22, 0.08, 0.78},  // A top
    {0.08, 0.78, 0.50, 0.78},  // B upper right
    {0.50, 0.78, 0.92, 0.78},  // C lower right
    {0.92, 0.22, 0.92, 0.78},  // D bottom
    {0.50, 0.22, 0.92, 0.22},  // E lower left
    {0.08, 0.22, 0.50, 0.22},  // F upper left
    {0.50, 0.22, 0.50, 0.78},  // G middle
};
// Active segments per digit class, bit k = segment k.
constexpr unsigned kDigitSegs[10] = {
    0b0111111,  // 0: ABCDEF
    0b0000110,  // 1: BC
    0b1011011,  // 2: ABDEG
    0b1001111,  // 3: ABCDG
    0b1000110,  // 4: BCG  (+F below)
    0b1101101,  // 5: ACDFG
    0b1111101,  // 6: ACDEFG
    0b0000111,  // 7: ABC
    0b1111111,  // 8
    0b1101111,  // 9: ABCDFG
};

double point_segment_dist(double r, double c, const Seg& s) {
  double dr = s.r1 - s.r0, dc = s.c1 - s.c0;
  double len2 = dr * dr + dc * dc;
  double t = len2 > 0.0 ? ((r - s.r0) * dr + (c - s.c0) * dc) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  double pr = s.r0 + t * dr, pc = s.c0 + t * dc;
  return std::hypot(r - pr, c - pc);
}

// One jittered glyph; five uniforms for the pose, one per pixel for noise.
Tensor draw_glyph(std::size_t cls, std::size_t img, Rng& rng) {
  double shift_r = (rng.uniform() - 0.5) * 3.0;              // pixels
  double shift_c = (rng.uniform() - 0.5) * 3.0;
  double scale = 0.85 + 0.3 * rng.uniform();
  double thick = 0.8 + 0.6 * rng.uniform();                  // pixels
  double glow = 0.85 + 0.15 * rng.uniform();                 // stroke intensity

  unsigned segs = kDigitSegs[cls];
  if (cls == 4) segs |= 0b0100000;  // 4 keeps its upper-left stroke

  double half = static_cast<double>(img) / 2.0;
  Tensor out{Shape{img, img}};
  for (std::size_t r = 0; r < img; ++r) {
    for (std::size_t c = 0; c < img; ++c) {
      // pixel center -> jittered unit-box coordinates
      double ur = ((static_cast<double>(r) + 0.5 - half - shift_r) / scale + half) /
                  static_cast<double>(img);
      double uc = ((static_cast<double>(c) + 0.5 - half - shift_c) / scale + half) /
                  static_cast<double>(img);
      double d = 1e9;
      for (int k = 0; k < 7; ++k)
        if (segs & (1u << k))
          d = std::min(d, point_segment_dist(ur, uc, kSegments[k]));
      d *= static_cast<double>(img) * scale;  // back to pixel units
      double v = glow * std::clamp(thick + 0.5 - d, 0.0, 1.0);
      v += 0.02 * rng.uniform();  // faint sensor noise keeps pixels off exact 0
      out[r * img + c] = std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

}  // namespace

PairedDataset synth_dataset(SynthKind kind, std::size_t n, Rng& rng, SynthOptions opt) {
  if (n == 0) throw ValueError("synth_dataset: size must be positive");
  PairedDataset d;
  d.kind = synth_kind_name(kind);

  if (kind == SynthKind::kLinearGaussian) {
    if (opt.dim_x == 0 || opt.dim_y == 0)
      throw ShapeError("synth_dataset: zero dimension for linear_gaussian");
    d.dim_x = opt.dim_x;
    d.dim_y = opt.dim_y;
    // The forward operator comes from a fixed substream so datasets drawn
    // from the same seed share it regardless of n.
    Rng arng = rng.substream(0xA);
    Tensor a{Shape{opt.dim_y, opt.dim_x}};
    double s = 1.0 / std::sqrt(static_cast<double>(opt.dim_x));
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = arng.gaussian() * s;
    d.forward_matrix = a;
    d.x = Tensor{Shape{n, opt.dim_x}};
    d.y = Tensor{Shape{n, opt.dim_y}};
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < opt.dim_x; ++j) d.x[i * opt.dim_x + j] = rng.gaussian();
      for (std::size_t k = 0; k < opt.dim_y; ++k) {
        double acc = 0.0;
        for (std::size_t j = 0; j < opt.dim_x; ++j)
          acc += a[k * opt.dim_x + j] * d.x[i * opt.dim_x + j];
        d.y[i * opt.dim_y + k] = acc + opt.noise_sd * rng.gaussian();
      }
    }
    return d;
  }

  // toy_digits
  if (opt.img < opt.patch) throw ShapeError("synth_dataset: patch larger than canvas");
  d.dim_x = opt.img * opt.img;
  d.dim_y = d.dim_x;
  d.img_h = opt.img;
  d.img_w = opt.img;
  d.x = Tensor{Shape{n, d.dim_x}};
  d.y = Tensor{Shape{n, d.dim_y}};
  d.masks.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor glyph = draw_glyph(i % 10, opt.img, rng);
    auto [obs, mask] = corrupt(glyph, rng, opt.n_patches, opt.patch);
    for (std::size_t p = 0; p < d.dim_x; ++p) {
      d.x[i * d.dim_x + p] = glyph[p];
      d.y[i * d.dim_y + p] = obs[p];
    }
    d.masks[i] = std::move(mask);
  }
  return d;
}

}  // namespace vspair
