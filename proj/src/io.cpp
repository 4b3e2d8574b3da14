#include "vspair/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

namespace vspair {

namespace {

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                  std::istreambuf_iterator<char>()};
  if (in.bad()) throw IoError("read failed on '" + path + "'");
  return bytes;
}

void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed on '" + path + "'");
}

std::uint32_t be32(const std::uint8_t* b) {
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
         std::uint32_t{b[3]};
}

std::string hex32(std::uint32_t v) {
  char buf[11];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---- little-endian emit / parse for the checkpoint container ----

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

struct ByteReader {
  const std::vector<std::uint8_t>& bytes;
  std::string origin;
  std::size_t off = 0;

  void need(std::size_t n, const std::string& what) {
    if (bytes.size() - off < n)
      throw IoError(origin + ": truncated at byte " + std::to_string(off) + ": need " +
                    std::to_string(n) + " bytes for " + what + ", have " +
                    std::to_string(bytes.size() - off));
  }
  std::uint8_t u8(const std::string& what) {
    need(1, what);
    return bytes[off++];
  }
  std::uint16_t u16(const std::string& what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(bytes[off] | (bytes[off + 1] << 8));
    off += 2;
    return v;
  }
  std::uint32_t u32(const std::string& what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes[off + i]} << (8 * i);
    off += 4;
    return v;
  }
  std::uint64_t u64(const std::string& what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes[off + i]} << (8 * i);
    off += 8;
    return v;
  }
  double f64(const std::string& what) { return std::bit_cast<double>(u64(what)); }
  std::string str(std::size_t n, const std::string& what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes.data()) + off, n);
    off += n;
    return s;
  }
};

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// ---- config key/value table ----

double parse_double(const std::string& v, const std::string& where) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw ValueError(where + ": cannot parse '" + v + "' as a number");
  return out;
}

std::uint64_t parse_u64(const std::string& v, const std::string& where) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw ValueError(where + ": cannot parse '" + v + "' as a non-negative integer");
  return out;
}

std::size_t parse_size(const std::string& v, const std::string& where) {
  return static_cast<std::size_t>(parse_u64(v, where));
}

std::vector<std::size_t> parse_size_list(const std::string& v, const std::string& where) {
  std::vector<std::size_t> out;
  std::string item;
  std::istringstream ss(v);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ValueError(where + ": empty entry in size list '" + v + "'");
    out.push_back(parse_size(item, where));
  }
  return out;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

// One row per config key; serialization and parsing share this table so the
// two stay in lockstep and parse(serialize(c)) == c by construction.
std::vector<std::pair<std::string, std::string>> config_kv(const TrainConfig& c) {
  return {
      {"variant", variant_name(c.variant)},
      {"lambda1", format_double(c.weights.lambda1)},
      {"lambda2", format_double(c.weights.lambda2)},
      {"lambda3", format_double(c.weights.lambda3)},
      {"lambda_rho", format_double(c.weights.lambda_rho)},
      {"lambda_b", format_double(c.weights.lambda_b)},
      {"gamma_x", format_double(c.weights.gamma_x)},
      {"gamma_y", format_double(c.weights.gamma_y)},
      {"alpha0", format_double(c.alpha0)},
      {"beta0", format_double(c.beta0)},
      {"gate_temperature", format_double(c.gate_temperature)},
      {"gate_threshold", format_double(c.gate_threshold)},
      {"lr", format_double(c.lr)},
      {"epochs", std::to_string(c.epochs)},
      {"batch_size", std::to_string(c.batch_size)},
      {"seed", std::to_string(c.seed)},
      {"lx", std::to_string(c.lx)},
      {"ly", std::to_string(c.ly)},
      {"hidden_x", join_sizes(c.hidden_x)},
      {"hidden_y", join_sizes(c.hidden_y)},
      {"hidden_map", join_sizes(c.hidden_map)},
      {"map_mode", map_mode_name(c.map_mode)},
      {"eval_samples", std::to_string(c.eval_samples)},
  };
}

void apply_config_kv(TrainConfig& c, const std::string& key, const std::string& value,
                     const std::string& where) {
  if (key == "variant")
    c.variant = variant_from_name(value);
  else if (key == "lambda1")
    c.weights.lambda1 = parse_double(value, where);
  else if (key == "lambda2")
    c.weights.lambda2 = parse_double(value, where);
  else if (key == "lambda3")
    c.weights.lambda3 = parse_double(value, where);
  else if (key == "lambda_rho")
    c.weights.lambda_rho = parse_double(value, where);
  else if (key == "lambda_b")
    c.weights.lambda_b = parse_double(value, where);
  else if (key == "gamma_x")
    c.weights.gamma_x = parse_double(value, where);
  else if (key == "gamma_y")
    c.weights.gamma_y = parse_double(value, where);
  else if (key == "alpha0")
    c.alpha0 = parse_double(value, where);
  else if (key == "beta0")
    c.beta0 = parse_double(value, where);
  else if (key == "gate_temperature")
    c.gate_temperature = parse_double(value, where);
  else if (key == "gate_threshold")
    c.gate_threshold = parse_double(value, where);
  else if (key == "lr")
    c.lr = parse_double(value, where);
  else if (key == "epochs")
    c.epochs = parse_size(value, where);
  else if (key == "batch_size")
    c.batch_size = parse_size(value, where);
  else if (key == "seed")
    c.seed = parse_u64(value, where);
  else if (key == "lx")
    c.lx = parse_size(value, where);
  else if (key == "ly")
    c.ly = parse_size(value, where);
  else if (key == "hidden_x")
    c.hidden_x = parse_size_list(value, where);
  else if (key == "hidden_y")
    c.hidden_y = parse_size_list(value, where);
  else if (key == "hidden_map")
    c.hidden_map = parse_size_list(value, where);
  else if (key == "map_mode")
    c.map_mode = map_mode_from_name(value);
  else if (key == "eval_samples")
    c.eval_samples = parse_size(value, where);
  else
    throw ValueError(where + ": unknown key '" + key + "'");
}

constexpr std::size_t kMaxIdxElems = 100'000'000;  // desk-scale sanity bound

}  // namespace

// ---- IDX --------------------------------------------------------------------

Tensor read_idx_bytes(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  if (bytes.size() < 4)
    throw IoError(origin + ": truncated at byte 0: need 4 bytes for magic, have " +
                  std::to_string(bytes.size()));
  std::uint32_t magic = be32(bytes.data());
  std::size_t rank = 0;
  bool scale = false;
  if (magic == 0x00000803u) {
    rank = 3;
    scale = true;  // u8 images -> [0,1]
  } else if (magic == 0x00000801u) {
    rank = 1;  // u8 labels, raw values
  } else {
    throw IoError(origin + ": bad magic " + hex32(magic) +
                  " at byte 0 (expected 0x00000803 u8 images or 0x00000801 u8 labels)");
  }

  std::size_t off = 4;
  Shape dims(rank);
  std::size_t total = 1;
  for (std::size_t k = 0; k < rank; ++k) {
    if (bytes.size() - off < 4)
      throw IoError(origin + ": truncated at byte " + std::to_string(off) +
                    ": need 4 bytes for dim " + std::to_string(k));
    std::uint32_t d = be32(bytes.data() + off);
    off += 4;
    dims[k] = d;
    if (d != 0 && total > kMaxIdxElems / d)
      throw IoError(origin + ": dim overflow at byte " + std::to_string(off - 4) +
                    ": product of dims exceeds " + std::to_string(kMaxIdxElems) + " elements");
    total *= d;
  }

  if (bytes.size() - off != total)
    throw IoError(origin + ": payload at byte " + std::to_string(off) + ": expected " +
                  std::to_string(total) + " bytes, got " + std::to_string(bytes.size() - off));

  Tensor t(dims);
  const double s = scale ? 1.0 / 255.0 : 1.0;
  for (std::size_t i = 0; i < total; ++i) t[i] = static_cast<double>(bytes[off + i]) * s;
  return t;
}

Tensor read_idx(const std::string& path) { return read_idx_bytes(read_file_bytes(path), path); }

// ---- PGM --------------------------------------------------------------------

void write_pgm(const Tensor& image, const std::string& path) {
  if (image.rank() != 2)
    throw ShapeError("write_pgm: expected a rank-2 image, got " + shape_str(image.shape()));
  std::size_t h = image.dim(0), w = image.dim(1);
  if (h == 0 || w == 0) throw ShapeError("write_pgm: empty image");
  std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (std::size_t i = 0; i < h * w; ++i) {
    double v = std::clamp(image[i], 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  }
  write_file_bytes(path, out);
}

Tensor read_pgm(const std::string& path) {
  std::vector<std::uint8_t> bytes = read_file_bytes(path);
  std::size_t off = 0;

  auto skip_space = [&] {
    while (off < bytes.size()) {
      if (std::isspace(bytes[off])) {
        ++off;
      } else if (bytes[off] == '#') {  // header comment to end of line
        while (off < bytes.size() && bytes[off] != '\n') ++off;
      } else {
        break;
      }
    }
  };
  auto token = [&](const char* what) {
    skip_space();
    std::size_t start = off;
    while (off < bytes.size() && !std::isspace(bytes[off])) ++off;
    if (start == off)
      throw IoError(path + ": truncated at byte " + std::to_string(off) + ": missing " + what);
    return std::string(reinterpret_cast<const char*>(bytes.data()) + start, off - start);
  };

  if (token("format tag") != "P5") throw IoError(path + ": not a binary PGM (expected P5)");
  std::size_t w = parse_size(token("width"), path);
  std::size_t h = parse_size(token("height"), path);
  std::string maxval = token("maxval");
  if (maxval != "255") throw IoError(path + ": unsupported maxval " + maxval + " (expected 255)");
  if (off >= bytes.size()) throw IoError(path + ": truncated after header");
  ++off;  // single whitespace byte after the header
  if (w == 0 || h == 0 || bytes.size() - off != h * w)
    throw IoError(path + ": payload at byte " + std::to_string(off) + ": expected " +
                  std::to_string(h * w) + " bytes, got " + std::to_string(bytes.size() - off));

  Tensor t(Shape{h, w});
  for (std::size_t i = 0; i < h * w; ++i) t[i] = static_cast<double>(bytes[off + i]) / 255.0;
  return t;
}

// ---- CSV --------------------------------------------------------------------

std::string csv_field(const std::string& raw) {
  if (raw.find_first_of(",\"\r\n") == std::string::npos) return raw;
  std::string out = "\"";
  for (char ch : raw) {
    if (ch == '"') out += "\"\"";
    else out.push_back(ch);
  }
  out += '"';
  return out;
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw ValueError("format_double: conversion failed");
  return std::string(buf, ptr);
}

void write_csv_text(const std::string& path, const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ",";
      out += csv_field(row[i]);
    }
    out += "\n";
  }
  write_file_bytes(path, out);
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::vector<std::vector<std::string>> text;
  text.reserve(rows.size() + 1);
  text.push_back(header);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != header.size())
      throw ShapeError("write_csv: row " + std::to_string(r) + " has " +
                       std::to_string(rows[r].size()) + " cells, header has " +
                       std::to_string(header.size()));
    std::vector<std::string> cells;
    cells.reserve(rows[r].size());
    for (double v : rows[r]) cells.push_back(format_double(v));
    text.push_back(std::move(cells));
  }
  write_csv_text(path, text);
}

// ---- checkpoint container -----------------------------------------------------

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

const std::string* Checkpoint::meta(const std::string& key) const {
  for (const auto& [k, v] : metadata)
    if (k == key) return &v;
  return nullptr;
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  std::string out = "VSPR";
  put_u32(out, c.version);
  put_u32(out, static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& [name, t] : c.tensors) {
    if (name.size() > 0xFFFF) throw ValueError("checkpoint: tensor name too long: " + name);
    if (t.rank() > 0xFF) throw ShapeError("checkpoint: tensor rank too large: " + name);
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    out.push_back(static_cast<char>(t.rank()));
    for (std::size_t k = 0; k < t.rank(); ++k)
      put_u32(out, static_cast<std::uint32_t>(t.dim(k)));
    for (std::size_t i = 0; i < t.size(); ++i) put_f64(out, t[i]);
  }
  for (const auto& [k, v] : c.metadata) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos)
      throw ValueError("checkpoint: metadata must be single-line and '='-free keys: " + k);
    out += k + "=" + v + "\n";
  }
  write_file_bytes(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::vector<std::uint8_t> bytes = read_file_bytes(path);
  ByteReader r{bytes, path};

  if (r.str(4, "magic") != "VSPR")
    throw IoError(path + ": bad magic at byte 0 (expected \"VSPR\")");
  Checkpoint c;
  c.version = r.u32("version");
  if (c.version != kCheckpointVersion)
    throw IoError(path + ": unsupported checkpoint version " + std::to_string(c.version));

  std::uint32_t count = r.u32("tensor count");
  c.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string label = "tensor " + std::to_string(i);
    std::uint16_t name_len = r.u16(label + " name length");
    std::string name = r.str(name_len, label + " name");
    std::uint8_t rank = r.u8(name + " rank");
    Shape dims(rank);
    std::size_t total = 1;
    for (std::uint8_t k = 0; k < rank; ++k) {
      dims[k] = r.u32(name + " dim " + std::to_string(k));
      if (dims[k] != 0 && total > kMaxIdxElems / dims[k])
        throw IoError(path + ": tensor '" + name + "' exceeds " +
                      std::to_string(kMaxIdxElems) + " elements");
      total *= dims[k];
    }
    r.need(total * 8, name + " values");
    Tensor t(dims);
    for (std::size_t j = 0; j < total; ++j) t[j] = r.f64(name + " values");
    c.tensors.emplace_back(std::move(name), std::move(t));
  }

  // Remaining bytes: key=value metadata lines.
  std::string meta = r.str(bytes.size() - r.off, "metadata");
  std::istringstream ss(meta);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw IoError(path + ": metadata line " + std::to_string(line_no) + ": missing '='");
    c.metadata.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  return c;
}

// ---- model / dataset persistence ------------------------------------------------

void save_model(const PairedModel& model, const TrainConfig& cfg, const std::string& path) {
  Checkpoint c;
  for (const auto& [name, var] : model.named_params()) c.tensors.emplace_back(name, var.value());
  c.metadata.emplace_back("content", "model");
  c.metadata.emplace_back("dim_x", std::to_string(model.cfg.dim_x));
  c.metadata.emplace_back("dim_y", std::to_string(model.cfg.dim_y));
  c.metadata.emplace_back("config_hash", hex64(config_hash(cfg)));
  for (auto& [k, v] : config_kv(cfg)) c.metadata.emplace_back(k, v);
  save_checkpoint(c, path);
}

LoadedModel load_model(const std::string& path) {
  Checkpoint c = load_checkpoint(path);
  const std::string* content = c.meta("content");
  if (!content || *content != "model")
    throw IoError(path + ": not a model checkpoint (content=" +
                  (content ? *content : "<missing>") + ")");

  TrainConfig cfg;
  std::size_t dim_x = 0, dim_y = 0;
  for (const auto& [k, v] : c.metadata) {
    if (k == "content" || k == "config_hash") continue;
    if (k == "dim_x")
      dim_x = parse_size(v, path + ": dim_x");
    else if (k == "dim_y")
      dim_y = parse_size(v, path + ": dim_y");
    else
      apply_config_kv(cfg, k, v, path + ": metadata");
  }
  if (dim_x == 0 || dim_y == 0) throw IoError(path + ": missing dim_x / dim_y metadata");
  cfg.validate();

  Rng rng(cfg.seed);  // init values are overwritten below
  LoadedModel out{build_model(cfg.model_config(dim_x, dim_y), rng), cfg};

  auto params = out.model.named_params();
  if (params.size() != c.tensors.size())
    throw IoError(path + ": parameter count mismatch: checkpoint has " +
                  std::to_string(c.tensors.size()) + ", architecture has " +
                  std::to_string(params.size()));
  for (auto& [name, var] : params) {
    const Tensor* t = c.find(name);
    if (!t) throw IoError(path + ": missing tensor '" + name + "'");
    if (!t->same_shape(var.value()))
      throw IoError(path + ": tensor '" + name + "' has shape " + shape_str(t->shape()) +
                    ", architecture expects " + shape_str(var.value().shape()));
    var.mutable_value() = *t;
  }
  return out;
}

void save_dataset(const PairedDataset& data, const std::string& path) {
  Checkpoint c;
  c.tensors.emplace_back("x", data.x);
  c.tensors.emplace_back("y", data.y);
  if (data.forward_matrix.size() > 0) c.tensors.emplace_back("forward_matrix", data.forward_matrix);
  if (!data.masks.empty()) {
    std::size_t n = data.masks.size();
    std::size_t hw = data.img_h * data.img_w;
    Tensor masks(Shape{n, hw});
    for (std::size_t i = 0; i < n; ++i) {
      if (data.masks[i].on.size() != hw)
        throw ShapeError("save_dataset: mask " + std::to_string(i) + " does not match img dims");
      for (std::size_t j = 0; j < hw; ++j) masks[i * hw + j] = data.masks[i].on[j] ? 1.0 : 0.0;
    }
    c.tensors.emplace_back("masks", std::move(masks));
  }
  c.metadata.emplace_back("content", "dataset");
  c.metadata.emplace_back("kind", data.kind);
  c.metadata.emplace_back("dim_x", std::to_string(data.dim_x));
  c.metadata.emplace_back("dim_y", std::to_string(data.dim_y));
  c.metadata.emplace_back("img_h", std::to_string(data.img_h));
  c.metadata.emplace_back("img_w", std::to_string(data.img_w));
  save_checkpoint(c, path);
}

PairedDataset load_dataset(const std::string& path) {
  Checkpoint c = load_checkpoint(path);
  const std::string* content = c.meta("content");
  if (!content || *content != "dataset")
    throw IoError(path + ": not a dataset checkpoint (content=" +
                  (content ? *content : "<missing>") + ")");

  PairedDataset d;
  auto meta_size = [&](const char* key) {
    const std::string* v = c.meta(key);
    if (!v) throw IoError(path + ": missing metadata key '" + std::string(key) + "'");
    return parse_size(*v, path + ": " + key);
  };
  const std::string* kind = c.meta("kind");
  if (!kind) throw IoError(path + ": missing metadata key 'kind'");
  d.kind = *kind;
  d.dim_x = meta_size("dim_x");
  d.dim_y = meta_size("dim_y");
  d.img_h = meta_size("img_h");
  d.img_w = meta_size("img_w");

  const Tensor* x = c.find("x");
  const Tensor* y = c.find("y");
  if (!x || !y) throw IoError(path + ": dataset checkpoint needs tensors 'x' and 'y'");
  if (x->rank() != 2 || y->rank() != 2 || x->dim(0) != y->dim(0) || x->dim(1) != d.dim_x ||
      y->dim(1) != d.dim_y)
    throw IoError(path + ": inconsistent dataset tensors (x " + shape_str(x->shape()) + ", y " +
                  shape_str(y->shape()) + ")");
  d.x = *x;
  d.y = *y;
  if (const Tensor* f = c.find("forward_matrix")) d.forward_matrix = *f;
  if (const Tensor* m = c.find("masks")) {
    std::size_t hw = d.img_h * d.img_w;
    if (m->rank() != 2 || m->dim(0) != d.x.dim(0) || m->dim(1) != hw)
      throw IoError(path + ": mask tensor has shape " + shape_str(m->shape()) + ", expected (" +
                    std::to_string(d.x.dim(0)) + ", " + std::to_string(hw) + ")");
    d.masks.resize(m->dim(0));
    for (std::size_t i = 0; i < m->dim(0); ++i) {
      d.masks[i].h = d.img_h;
      d.masks[i].w = d.img_w;
      d.masks[i].on.resize(hw);
      for (std::size_t j = 0; j < hw; ++j) d.masks[i].on[j] = (*m)[i * hw + j] != 0.0 ? 1 : 0;
    }
  }
  return d;
}

// ---- run configuration -----------------------------------------------------------

TrainConfig parse_config(const std::string& text) {
  TrainConfig cfg;
  std::istringstream ss(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    std::string where = "config line " + std::to_string(line_no);
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw ValueError(where + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ValueError(where + ": empty key");
    apply_config_kv(cfg, key, value, where);
  }
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read failed on config '" + path + "'");
  return parse_config(buf.str());
}

std::string serialize_config(const TrainConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_kv(cfg)) out += k + " = " + v + "\n";
  return out;
}

std::uint64_t config_hash(const TrainConfig& cfg) {
  std::string s = serialize_config(cfg);
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace vspair
