#include "uavbeam/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "uavbeam/errors.hpp"
#include "uavbeam/util.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written in host order and declared little endian");

namespace uavbeam::nn {

namespace {

constexpr const char* kMagic = "uavbeam-checkpoint v1";
constexpr const char* kFeatureOrder = "lat_norm,lon_norm,ux,uy,uz";

std::string decoder_h0_name(HyperParams::DecoderInit d) {
  return d == HyperParams::DecoderInit::kContext ? "context" : "zero";
}

HyperParams::DecoderInit decoder_h0_from(const std::string& s) {
  if (s == "context") return HyperParams::DecoderInit::kContext;
  if (s == "zero") return HyperParams::DecoderInit::kZero;
  throw ParseError("unknown decoder_h0 mode '" + s + "'");
}

std::vector<unsigned char> payload_bytes(const Checkpoint& c) {
  std::vector<unsigned char> out;
  const bool f32 = c.dtype == "float32";
  for (const Variable* v : c.params->manifest()) {
    if (f32) {
      for (double d : v->value) {
        const float f = static_cast<float>(d);
        const auto* p = reinterpret_cast<const unsigned char*>(&f);
        out.insert(out.end(), p, p + sizeof(float));
      }
    } else {
      const auto* p = reinterpret_cast<const unsigned char*>(v->value.data());
      out.insert(out.end(), p, p + v->value.size() * sizeof(double));
    }
  }
  return out;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  if (!c.params) throw Error("checkpoint has no parameters");
  if (c.dtype != "float64" && c.dtype != "float32") {
    throw ValidationError("unsupported checkpoint dtype '" + c.dtype + "'");
  }
  const auto payload = payload_bytes(c);

  std::ostringstream h;
  h << kMagic << "\n";
  h << "dtype " << c.dtype << "\n";
  h << "feature_order " << kFeatureOrder << "\n";
  h << "seed " << c.seed << "\n";
  h << "bounds.lat_min " << format_double_hex(c.bounds.lat_min) << "\n";
  h << "bounds.lat_max " << format_double_hex(c.bounds.lat_max) << "\n";
  h << "bounds.lon_min " << format_double_hex(c.bounds.lon_min) << "\n";
  h << "bounds.lon_max " << format_double_hex(c.bounds.lon_max) << "\n";
  h << "hp.epochs " << c.hp.epochs << "\n";
  h << "hp.train_batch " << c.hp.train_batch << "\n";
  h << "hp.val_batch " << c.hp.val_batch << "\n";
  h << "hp.test_batch " << c.hp.test_batch << "\n";
  h << "hp.lr " << format_double_hex(c.hp.lr) << "\n";
  h << "hp.weight_decay " << format_double_hex(c.hp.weight_decay) << "\n";
  h << "hp.lr_drop_factor " << format_double_hex(c.hp.lr_drop_factor) << "\n";
  h << "hp.lr_drop_epochs";
  for (int e : c.hp.lr_drop_epochs) h << " " << e;
  h << "\n";
  h << "hp.window " << c.hp.window << "\n";
  h << "hp.horizon " << c.hp.horizon << "\n";
  h << "hp.codebook " << c.hp.codebook_size << "\n";
  h << "hp.decoder_h0 " << decoder_h0_name(c.hp.decoder_h0) << "\n";
  for (const Variable* v : c.params->manifest()) {
    h << "param " << v->name << " " << (v->trainable ? "trainable" : "buffer");
    for (int d : v->shape) h << " " << d;
    h << "\n";
  }
  h << "payload.bytes " << payload.size() << "\n";
  h << "payload.fnv1a64 " << to_hex(fnv1a64(payload)) << "\n";
  h << "---\n";

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  const std::string header = h.str();
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  f.write(reinterpret_cast<const char*>(payload.data()),
          static_cast<std::streamsize>(payload.size()));
  if (!f) throw Error("write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "'");

  Checkpoint c;
  std::string line;
  if (!std::getline(f, line) || line != kMagic) {
    throw ParseError("'" + path + "' is not a checkpoint file");
  }
  std::size_t expected_bytes = 0;
  std::uint64_t expected_sum = 0;
  bool have_sum = false;
  struct ParamDecl {
    std::string name;
    Shape shape;
  };
  std::vector<ParamDecl> decls;

  while (std::getline(f, line)) {
    if (line == "---") break;
    const auto sp = line.find(' ');
    if (sp == std::string::npos) throw ParseError("malformed checkpoint header line: " + line);
    const std::string key = line.substr(0, sp);
    const std::string rest = line.substr(sp + 1);
    if (key == "dtype") {
      c.dtype = rest;
    } else if (key == "feature_order") {
      if (rest != kFeatureOrder) {
        throw ParseError("checkpoint uses unknown feature order '" + rest + "'");
      }
    } else if (key == "seed") {
      c.seed = static_cast<std::uint64_t>(parse_int(rest));
    } else if (key == "bounds.lat_min") {
      c.bounds.lat_min = parse_double_hex(rest);
    } else if (key == "bounds.lat_max") {
      c.bounds.lat_max = parse_double_hex(rest);
    } else if (key == "bounds.lon_min") {
      c.bounds.lon_min = parse_double_hex(rest);
    } else if (key == "bounds.lon_max") {
      c.bounds.lon_max = parse_double_hex(rest);
    } else if (key == "hp.epochs") {
      c.hp.epochs = static_cast<int>(parse_int(rest));
    } else if (key == "hp.train_batch") {
      c.hp.train_batch = static_cast<int>(parse_int(rest));
    } else if (key == "hp.val_batch") {
      c.hp.val_batch = static_cast<int>(parse_int(rest));
    } else if (key == "hp.test_batch") {
      c.hp.test_batch = static_cast<int>(parse_int(rest));
    } else if (key == "hp.lr") {
      c.hp.lr = parse_double_hex(rest);
    } else if (key == "hp.weight_decay") {
      c.hp.weight_decay = parse_double_hex(rest);
    } else if (key == "hp.lr_drop_factor") {
      c.hp.lr_drop_factor = parse_double_hex(rest);
    } else if (key == "hp.lr_drop_epochs") {
      c.hp.lr_drop_epochs.clear();
      for (const auto& tok : split_string(rest, ' ')) {
        if (!tok.empty()) c.hp.lr_drop_epochs.push_back(static_cast<int>(parse_int(tok)));
      }
    } else if (key == "hp.window") {
      c.hp.window = static_cast<int>(parse_int(rest));
    } else if (key == "hp.horizon") {
      c.hp.horizon = static_cast<int>(parse_int(rest));
    } else if (key == "hp.codebook") {
      c.hp.codebook_size = static_cast<int>(parse_int(rest));
    } else if (key == "hp.decoder_h0") {
      c.hp.decoder_h0 = decoder_h0_from(rest);
    } else if (key == "param") {
      const auto toks = split_string(rest, ' ');
      if (toks.size() < 3) throw ParseError("malformed param line: " + line);
      ParamDecl d;
      d.name = toks[0];
      for (std::size_t i = 2; i < toks.size(); ++i) {
        d.shape.push_back(static_cast<int>(parse_int(toks[i])));
      }
      decls.push_back(std::move(d));
    } else if (key == "payload.bytes") {
      expected_bytes = static_cast<std::size_t>(parse_int(rest));
    } else if (key == "payload.fnv1a64") {
      expected_sum = std::stoull(rest, nullptr, 16);
      have_sum = true;
    } else {
      throw ParseError("unknown checkpoint header key '" + key + "'");
    }
  }
  if (line != "---") throw ParseError("checkpoint header is not terminated");
  if (!have_sum) throw ParseError("checkpoint header has no payload checksum");
  if (c.dtype != "float64" && c.dtype != "float32") {
    throw ParseError("unsupported checkpoint dtype '" + c.dtype + "'");
  }

  std::vector<unsigned char> payload(expected_bytes);
  f.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(expected_bytes));
  if (static_cast<std::size_t>(f.gcount()) != expected_bytes) {
    throw ChecksumMismatch("checkpoint payload truncated: expected " +
                           std::to_string(expected_bytes) + " bytes, got " +
                           std::to_string(f.gcount()));
  }
  if (f.get() != std::ifstream::traits_type::eof()) {
    throw ChecksumMismatch("checkpoint has trailing bytes after the declared payload");
  }
  if (fnv1a64(payload) != expected_sum) {
    throw ChecksumMismatch("checkpoint payload checksum mismatch");
  }

  c.hp.validate();
  c.params = std::make_unique<ModelParams>(c.hp.codebook_size);
  auto manifest = c.params->manifest();
  if (manifest.size() != decls.size()) {
    throw ParseError("checkpoint declares " + std::to_string(decls.size()) +
                     " tensors, model has " + std::to_string(manifest.size()));
  }
  const bool f32 = c.dtype == "float32";
  const std::size_t word = f32 ? sizeof(float) : sizeof(double);
  std::size_t off = 0;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    Variable* v = manifest[i];
    if (decls[i].name != v->name || decls[i].shape != v->shape) {
      throw ParseError("checkpoint tensor '" + decls[i].name + "' " + shape_str(decls[i].shape) +
                       " does not match model tensor '" + v->name + "' " + shape_str(v->shape));
    }
    const std::size_t bytes = v->value.size() * word;
    if (off + bytes > payload.size()) throw ChecksumMismatch("checkpoint payload too short");
    if (f32) {
      for (std::size_t k = 0; k < v->value.size(); ++k) {
        float x;
        std::memcpy(&x, payload.data() + off + k * word, sizeof(float));
        v->value[k] = static_cast<double>(x);
      }
    } else {
      std::memcpy(v->value.data(), payload.data() + off, bytes);
    }
    off += bytes;
  }
  if (off != payload.size()) throw ChecksumMismatch("checkpoint payload has unused bytes");
  return c;
}

}  // namespace uavbeam::nn
