#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ucf/config.hpp"
#include "ucf/parallel.hpp"
#include "ucf/rng.hpp"
#include "ucf/tensor.hpp"

namespace ucf {

// ---------------------------------------------------------------------------
// 8-bit rasters and PNM (PGM/PPM) I/O.
// ---------------------------------------------------------------------------

struct ImageU8 {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::int64_t channels = 0;  // 1 (gray) or 3 (RGB), interleaved row-major
  std::vector<std::uint8_t> pixels;

  static ImageU8 make(std::int64_t h, std::int64_t w, std::int64_t c,
                      std::uint8_t value = 0) {
    if (h <= 0 || w <= 0 || (c != 1 && c != 3))
      throw std::invalid_argument("ImageU8::make: bad dimensions");
    ImageU8 img;
    img.width = w;
    img.height = h;
    img.channels = c;
    img.pixels.assign(std::size_t(h * w * c), value);
    return img;
  }

  std::uint8_t& at(std::int64_t r, std::int64_t c, std::int64_t ch) {
    return pixels[std::size_t((r * width + c) * channels + ch)];
  }
  std::uint8_t at(std::int64_t r, std::int64_t c, std::int64_t ch) const {
    return pixels[std::size_t((r * width + c) * channels + ch)];
  }

  bool operator==(const ImageU8& o) const {
    return width == o.width && height == o.height && channels == o.channels &&
           pixels == o.pixels;
  }
};

namespace detail {

// Reads the next header token, skipping whitespace and '#' comments.
inline std::string pnm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(char(ch));
  }
  if (tok.empty()) throw std::runtime_error("pnm: truncated header");
  return tok;
}

inline std::int64_t pnm_int(std::istream& in, const char* what) {
  const std::string tok = pnm_token(in);
  std::int64_t v = 0;
  for (char c : tok) {
    if (c < '0' || c > '9')
      throw std::runtime_error(std::string("pnm: malformed ") + what + ": " +
                               tok);
    v = v * 10 + (c - '0');
    if (v > (std::int64_t(1) << 40)) throw std::runtime_error("pnm: absurd dimension");
  }
  return v;
}

}  // namespace detail

inline ImageU8 read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("pnm: cannot open " + path);
  const std::string magic = detail::pnm_token(in);
  bool ascii;
  std::int64_t channels;
  if (magic == "P2") {
    ascii = true;
    channels = 1;
  } else if (magic == "P5") {
    ascii = false;
    channels = 1;
  } else if (magic == "P3") {
    ascii = true;
    channels = 3;
  } else if (magic == "P6") {
    ascii = false;
    channels = 3;
  } else {
    throw std::runtime_error("pnm: malformed header, unknown magic '" + magic +
                             "' in " + path);
  }
  const std::int64_t w = detail::pnm_int(in, "width");
  const std::int64_t h = detail::pnm_int(in, "height");
  const std::int64_t maxval = detail::pnm_int(in, "maxval");
  if (w <= 0 || h <= 0)
    throw std::runtime_error("pnm: malformed header, nonpositive size in " +
                             path);
  if (maxval != 255)
    throw std::runtime_error("pnm: unsupported maxval " +
                             std::to_string(maxval) + " in " + path +
                             " (only 255 is supported)");

  ImageU8 img = ImageU8::make(h, w, channels);
  const std::size_t n = img.pixels.size();
  if (ascii) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::int64_t v = detail::pnm_int(in, "pixel");
      if (v > 255)
        throw std::runtime_error("pnm: pixel value " + std::to_string(v) +
                                 " out of range in " + path);
      img.pixels[i] = std::uint8_t(v);
    }
  } else {
    // Exactly one whitespace byte separates the header from the payload;
    // pnm_int has already consumed it.
    in.read(reinterpret_cast<char*>(img.pixels.data()),
            std::streamsize(n));
    if (std::size_t(in.gcount()) != n)
      throw std::runtime_error("pnm: truncated payload in " + path);
  }
  return img;
}

inline void write_pnm(const std::string& path, const ImageU8& img,
                      bool ascii = false) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("write_pnm: raster must have 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("pnm: cannot write " + path);
  const char* magic =
      img.channels == 1 ? (ascii ? "P2" : "P5") : (ascii ? "P3" : "P6");
  out << magic << '\n' << img.width << ' ' << img.height << '\n' << 255 << '\n';
  if (ascii) {
    const std::int64_t per_row = img.width * img.channels;
    for (std::int64_t r = 0; r < img.height; ++r) {
      for (std::int64_t i = 0; i < per_row; ++i) {
        if (i) out << ' ';
        out << int(img.pixels[std::size_t(r * per_row + i)]);
      }
      out << '\n';
    }
  } else {
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              std::streamsize(img.pixels.size()));
  }
  if (!out) throw std::runtime_error("pnm: failed writing " + path);
}

// ---------------------------------------------------------------------------
// Conversions between rasters and tensors.
// ---------------------------------------------------------------------------

/// (1, C, H, W) tensor of raw byte values in [0, 255].
inline Tensor4 image_to_tensor(const ImageU8& img) {
  Tensor4 t = Tensor4::zeros({1, img.channels, img.height, img.width});
  for (std::int64_t c = 0; c < img.channels; ++c)
    for (std::int64_t r = 0; r < img.height; ++r)
      for (std::int64_t col = 0; col < img.width; ++col)
        t.at(0, c, r, col) = double(img.at(r, col, c));
  return t;
}

/// Single-channel raster from values in [0,1]; v -> round(255 v), clamped.
inline ImageU8 gray_from_unit(std::int64_t h, std::int64_t w,
                              const std::vector<double>& v) {
  if (std::int64_t(v.size()) != h * w)
    throw std::invalid_argument("gray_from_unit: size mismatch");
  ImageU8 img = ImageU8::make(h, w, 1);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = std::min(1.0, std::max(0.0, v[i]));
    img.pixels[i] = std::uint8_t(std::lround(255.0 * x));
  }
  return img;
}

// ---------------------------------------------------------------------------
// Synthetic dataset generation.
// ---------------------------------------------------------------------------

enum class ShapeKind { ellipse, rectangle, triangle };

struct SynthSpec {
  std::int64_t count = 0;
  std::int64_t side = 64;
  std::vector<ShapeKind> kinds = {ShapeKind::ellipse, ShapeKind::rectangle,
                                  ShapeKind::triangle};
  double contrast_floor = 60.0;  // min mean |fg - bg| across channels
  double noise_amplitude = 12.0;
  std::uint64_t seed = 0;
};

/// One training example. gt holds {0,1} in memory; it is written to disk as
/// {0,255}.
struct SamplePair {
  ImageU8 image;  // RGB
  ImageU8 gt;     // single channel, values {0,1}
};

namespace detail {

constexpr double kMinFraction = 0.05;
constexpr double kMaxFraction = 0.40;

struct Geometry {
  ShapeKind kind;
  // ellipse: cx, cy, a, b; rectangle: cx, cy, hw, hh; triangle: 3 vertices
  double p[8] = {0};
};

inline Geometry draw_geometry(ShapeKind kind, double side, RngStream& rng) {
  Geometry g;
  g.kind = kind;
  switch (kind) {
    case ShapeKind::ellipse:
      g.p[0] = rng.next_uniform(0.30, 0.70) * side;  // cx
      g.p[1] = rng.next_uniform(0.30, 0.70) * side;  // cy
      g.p[2] = rng.next_uniform(0.15, 0.34) * side;  // a
      g.p[3] = rng.next_uniform(0.15, 0.34) * side;  // b
      break;
    case ShapeKind::rectangle:
      g.p[0] = rng.next_uniform(0.30, 0.70) * side;
      g.p[1] = rng.next_uniform(0.30, 0.70) * side;
      g.p[2] = rng.next_uniform(0.13, 0.31) * side;  // half width
      g.p[3] = rng.next_uniform(0.13, 0.31) * side;  // half height
      break;
    case ShapeKind::triangle: {
      const double cx = rng.next_uniform(0.35, 0.65) * side;
      const double cy = rng.next_uniform(0.35, 0.65) * side;
      const double r = rng.next_uniform(0.22, 0.38) * side;
      const double base = rng.next_uniform(0.0, 2.0 * 3.14159265358979323846);
      for (int v = 0; v < 3; ++v) {
        const double jitter = rng.next_uniform(-0.3, 0.3);
        const double scale = rng.next_uniform(0.8, 1.2);
        const double th =
            base + (2.0 * 3.14159265358979323846 / 3.0) * v + jitter;
        g.p[2 * v] = cx + r * scale * std::cos(th);
        g.p[2 * v + 1] = cy + r * scale * std::sin(th);
      }
      break;
    }
  }
  return g;
}

inline bool inside(const Geometry& g, double x, double y) {
  switch (g.kind) {
    case ShapeKind::ellipse: {
      const double dx = (x - g.p[0]) / g.p[2];
      const double dy = (y - g.p[1]) / g.p[3];
      return dx * dx + dy * dy <= 1.0;
    }
    case ShapeKind::rectangle:
      return std::abs(x - g.p[0]) <= g.p[2] && std::abs(y - g.p[1]) <= g.p[3];
    case ShapeKind::triangle: {
      auto edge = [&](int i, int j) {
        return (g.p[2 * j] - g.p[2 * i]) * (y - g.p[2 * i + 1]) -
               (g.p[2 * j + 1] - g.p[2 * i + 1]) * (x - g.p[2 * i]);
      };
      const double e0 = edge(0, 1), e1 = edge(1, 2), e2 = edge(2, 0);
      return (e0 >= 0 && e1 >= 0 && e2 >= 0) ||
             (e0 <= 0 && e1 <= 0 && e2 <= 0);
    }
  }
  return false;
}

}  // namespace detail

/// Deterministic function of SynthSpec: sample i depends only on (seed, i).
inline std::vector<SamplePair> generate(const SynthSpec& spec) {
  if (spec.count < 0) throw std::invalid_argument("generate: count < 0");
  if (spec.side < 16) throw std::invalid_argument("generate: side must be >= 16");
  if (spec.kinds.empty()) throw std::invalid_argument("generate: no shape kinds");
  if (spec.contrast_floor < 0 || spec.noise_amplitude < 0)
    throw std::invalid_argument("generate: negative contrast or noise");
  if (spec.noise_amplitude > 127)
    throw std::invalid_argument("generate: noise amplitude too large");

  const double side = double(spec.side);
  const std::int64_t amp = std::int64_t(std::llround(spec.noise_amplitude));
  std::vector<SamplePair> out(std::size_t(spec.count));
  std::vector<std::exception_ptr> errors(std::size_t(spec.count));

  parallel_for(spec.count, [&](std::int64_t i) { try {
    RngStream rng =
        RngStream::derive(spec.seed, std::uint64_t(StreamDomain::synth),
                          std::uint64_t(i));

    // Background base color stays >= amp away from the byte range limits so
    // additive noise never clips; the contrast check then covers every
    // realized background pixel, not just the base color.
    std::uint8_t bg[3], fg[3];
    for (int c = 0; c < 3; ++c)
      bg[c] = std::uint8_t(amp + std::int64_t(rng.next_index(
                                     std::uint64_t(256 - 2 * amp))));
    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
      double dist = 0;
      for (int c = 0; c < 3; ++c) {
        fg[c] = std::uint8_t(rng.next_index(256));
        dist += std::abs(double(fg[c]) - double(bg[c]));
      }
      ok = dist / 3.0 >= spec.contrast_floor + spec.noise_amplitude;
    }
    if (!ok)
      throw std::runtime_error(
          "generate: could not satisfy contrast floor " +
          std::to_string(spec.contrast_floor) + " for sample " +
          std::to_string(i));

    const ShapeKind kind =
        spec.kinds[std::size_t(rng.next_index(spec.kinds.size()))];

    ImageU8 gt;
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      const detail::Geometry geo = detail::draw_geometry(kind, side, rng);
      gt = ImageU8::make(spec.side, spec.side, 1);
      std::int64_t fgcount = 0;
      for (std::int64_t r = 0; r < spec.side; ++r)
        for (std::int64_t c = 0; c < spec.side; ++c)
          if (detail::inside(geo, double(c) + 0.5, double(r) + 0.5)) {
            gt.at(r, c, 0) = 1;
            ++fgcount;
          }
      const double frac = double(fgcount) / (side * side);
      placed = frac >= detail::kMinFraction && frac <= detail::kMaxFraction;
    }
    if (!placed)
      throw std::runtime_error(
          "generate: could not place a shape within the foreground-fraction "
          "bounds for sample " +
          std::to_string(i));

    ImageU8 img = ImageU8::make(spec.side, spec.side, 3);
    for (std::int64_t r = 0; r < spec.side; ++r)
      for (std::int64_t c = 0; c < spec.side; ++c) {
        const bool in_shape = gt.at(r, c, 0) != 0;
        for (int ch = 0; ch < 3; ++ch) {
          const std::int64_t noise =
              amp > 0 ? std::int64_t(rng.next_index(std::uint64_t(2 * amp + 1))) - amp
                      : 0;
          img.at(r, c, ch) =
              in_shape ? fg[ch] : std::uint8_t(std::int64_t(bg[ch]) + noise);
        }
      }
    out[std::size_t(i)] = SamplePair{std::move(img), std::move(gt)};
  } catch (...) {
    errors[std::size_t(i)] = std::current_exception();
  } });
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

// ---------------------------------------------------------------------------
// Dataset directory layout: images/NNNN.ppm, gt/NNNN.pgm, manifest.csv.
// ---------------------------------------------------------------------------

inline std::string sample_stem(std::int64_t i) {
  std::ostringstream s;
  s << std::setw(4) << std::setfill('0') << i;
  return s.str();
}

inline void write_dataset(const std::string& dir,
                          const std::vector<SamplePair>& samples) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "gt");
  std::ofstream manifest(fs::path(dir) / "manifest.csv");
  if (!manifest) throw std::runtime_error("cannot write manifest in " + dir);
  manifest << "image,gt\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::string stem = sample_stem(std::int64_t(i));
    const std::string img_rel = "images/" + stem + ".ppm";
    const std::string gt_rel = "gt/" + stem + ".pgm";
    write_pnm((fs::path(dir) / img_rel).string(), samples[i].image);
    ImageU8 gt_disk = samples[i].gt;
    for (auto& p : gt_disk.pixels) p = p ? 255 : 0;
    write_pnm((fs::path(dir) / gt_rel).string(), gt_disk);
    manifest << img_rel << ',' << gt_rel << '\n';
  }
  if (!manifest) throw std::runtime_error("failed writing manifest in " + dir);
}

inline std::vector<SamplePair> load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path manifest_path = fs::path(dir) / "manifest.csv";
  std::ifstream manifest(manifest_path);
  if (!manifest)
    throw std::runtime_error("cannot open manifest " + manifest_path.string());
  std::string line;
  if (!std::getline(manifest, line) || strip(line) != "image,gt")
    throw std::runtime_error("manifest header must be 'image,gt' in " +
                             manifest_path.string());
  std::vector<SamplePair> out;
  while (std::getline(manifest, line)) {
    const std::string t = strip(line);
    if (t.empty()) continue;
    const std::size_t comma = t.find(',');
    if (comma == std::string::npos)
      throw std::runtime_error("manifest row without comma: " + t);
    const std::string img_rel = t.substr(0, comma);
    const std::string gt_rel = t.substr(comma + 1);
    SamplePair pair;
    pair.image = read_pnm((fs::path(dir) / img_rel).string());
    pair.gt = read_pnm((fs::path(dir) / gt_rel).string());
    if (pair.image.channels != 3)
      throw std::runtime_error("dataset image is not RGB: " + img_rel);
    if (pair.gt.channels != 1)
      throw std::runtime_error("dataset gt is not single channel: " + gt_rel);
    if (pair.image.width != pair.gt.width ||
        pair.image.height != pair.gt.height)
      throw std::runtime_error("image/gt size mismatch for " + img_rel);
    for (auto& p : pair.gt.pixels) p = p >= 128 ? 1 : 0;
    out.push_back(std::move(pair));
  }
  return out;
}

}  // namespace ucf
