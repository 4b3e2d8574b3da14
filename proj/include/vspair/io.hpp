#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vspair/dataset.hpp"
#include "vspair/model.hpp"
#include "vspair/tensor.hpp"
#include "vspair/train.hpp"

namespace vspair {

// File and format failures; messages carry the path and, for binary formats,
// the byte offset of the problem.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- IDX --------------------------------------------------------------------

// Big-endian IDX reader. Magic 0x00000803 (u8 images, rank 3) yields a
// (n, h, w) tensor scaled to [0,1]; magic 0x00000801 (u8 labels, rank 1)
// yields the raw label values as f64. Bad magic, truncation, and oversized
// dims raise IoError naming the byte offset.
Tensor read_idx(const std::string& path);
Tensor read_idx_bytes(const std::vector<std::uint8_t>& bytes, const std::string& origin);

// ---- PGM / CSV ----------------------------------------------------------------

// Binary PGM ("P5", maxval 255) of a (h, w) image; values are clamped to
// [0,1] and quantized to round(v * 255). read_pgm maps back to [0,1], so a
// round trip agrees within 1/255 quantization.
void write_pgm(const Tensor& image, const std::string& path);
Tensor read_pgm(const std::string& path);

// CSV with a header row; fields containing comma, quote, CR, or LF are
// quoted with doubled inner quotes. Numeric cells use shortest
// round-trip formatting.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);
void write_csv_text(const std::string& path, const std::vector<std::vector<std::string>>& rows);
std::string csv_field(const std::string& raw);
std::string format_double(double v);

// ---- Checkpoint container -----------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

// "VSPR" magic, u32 LE version, a named-tensor table (u16 LE name length,
// name bytes, u8 rank, u32 LE dims, f64 LE row-major values), then trailing
// key=value metadata lines. Round trips are bitwise for tensors and metadata.
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::vector<std::pair<std::string, std::string>> metadata;

  const Tensor* find(const std::string& name) const;
  const std::string* meta(const std::string& key) const;
};

void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Model persistence: tensors are the named parameters; metadata stores the
// run configuration plus the data dims so the architecture can be rebuilt.
void save_model(const PairedModel& model, const TrainConfig& cfg, const std::string& path);

struct LoadedModel {
  PairedModel model;
  TrainConfig config;
};
LoadedModel load_model(const std::string& path);

// Dataset persistence through the same container (content = dataset).
void save_dataset(const PairedDataset& data, const std::string& path);
PairedDataset load_dataset(const std::string& path);

// ---- Run configuration ---------------------------------------------------------

// Flat `key = value` lines with `#` comments. Unknown keys and malformed
// values are rejected with the offending line number; every key has a
// default, so the empty string parses to the default configuration.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::string& path);

// parse(serialize(c)) == c, and serialize . parse . serialize is a fixed
// point of the textual form.
std::string serialize_config(const TrainConfig& cfg);

// FNV-1a (64-bit) over the serialized form; recorded in model checkpoints.
std::uint64_t config_hash(const TrainConfig& cfg);

}  // namespace vspair
