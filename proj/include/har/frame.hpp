#pragma once

// Frame containers, PNM decoding, grayscale conversion, bilinear resizing and
// frame-sequence loading.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace har {

/// Any failure to turn bytes or files into frames.
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ParseError : public DataError {
public:
  enum class Kind { BadHeader, Truncated, MaxvalTooLarge };

  ParseError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

private:
  Kind kind_;
};

class EmptySequenceError : public DataError {
public:
  using DataError::DataError;
};

/// Grayscale 8-bit image, row-major.
struct Frame {
  int width = 0;
  int height = 0;
  int index = 0;
  std::vector<std::uint8_t> pixels;

  Frame() = default;
  Frame(int w, int h, int idx = 0, std::uint8_t fill = 0)
      : width(w), height(h), index(idx), pixels(static_cast<std::size_t>(w) * h, fill) {}
  Frame(int w, int h, int idx, std::vector<std::uint8_t> px)
      : width(w), height(h), index(idx), pixels(std::move(px)) {
    if (pixels.size() != static_cast<std::size_t>(w) * h)
      throw std::invalid_argument("Frame: pixel count does not match dimensions");
  }

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }

  bool operator==(const Frame&) const = default;
};

/// Interleaved R,G,B 8-bit image, row-major.
struct RgbFrame {
  int width = 0;
  int height = 0;
  int index = 0;
  std::vector<std::uint8_t> pixels;

  bool operator==(const RgbFrame&) const = default;
};

using AnyFrame = std::variant<Frame, RgbFrame>;

/// Round-half-up to the 8-bit range.
inline std::uint8_t round_intensity(double v) {
  double r = std::floor(v + 0.5);
  return static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
}

namespace detail {

class PnmHeaderReader {
public:
  explicit PnmHeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      char c = static_cast<char>(bytes_[pos_]);
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  long read_uint(const char* what) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_]))
      throw ParseError(ParseError::Kind::BadHeader, std::string("PNM: expected ") + what);
    long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1'000'000)
        throw ParseError(ParseError::Kind::BadHeader, std::string("PNM: ") + what + " out of range");
      ++pos_;
    }
    return v;
  }

  // Binary payload starts after exactly one whitespace byte.
  void end_header() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_]))
      throw ParseError(ParseError::Kind::BadHeader, "PNM: missing whitespace after header");
    ++pos_;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 2;
};

}  // namespace detail

/// Decodes P2/P3/P5/P6 with maxval <= 255. Samples are rescaled to 0..255
/// when maxval < 255.
inline AnyFrame decode_pnm(std::span<const std::uint8_t> bytes) {
  using K = ParseError::Kind;
  if (bytes.size() < 2 || bytes[0] != 'P')
    throw ParseError(K::BadHeader, "PNM: missing magic");
  const char type = static_cast<char>(bytes[1]);
  if (type != '2' && type != '3' && type != '5' && type != '6')
    throw ParseError(K::BadHeader, std::string("PNM: unsupported magic P") + type);
  const bool color = type == '3' || type == '6';
  const bool ascii = type == '2' || type == '3';

  detail::PnmHeaderReader rd(bytes);
  const long w = rd.read_uint("width");
  const long h = rd.read_uint("height");
  const long maxval = rd.read_uint("maxval");
  if (w <= 0 || h <= 0) throw ParseError(K::BadHeader, "PNM: zero dimension");
  if (maxval <= 0) throw ParseError(K::BadHeader, "PNM: zero maxval");
  if (maxval > 255) throw ParseError(K::MaxvalTooLarge, "PNM: maxval > 255 is not supported");

  const std::size_t count = static_cast<std::size_t>(w) * h * (color ? 3 : 1);
  std::vector<std::uint8_t> samples(count);
  if (ascii) {
    for (std::size_t i = 0; i < count; ++i) {
      rd.skip_space_and_comments();
      if (rd.pos() >= bytes.size())
        throw ParseError(K::Truncated, "PNM: truncated pixel data");
      long v = rd.read_uint("sample");
      if (v > maxval) throw ParseError(K::BadHeader, "PNM: sample exceeds maxval");
      samples[i] = static_cast<std::uint8_t>(v);
    }
  } else {
    rd.end_header();
    if (bytes.size() - rd.pos() < count)
      throw ParseError(K::Truncated, "PNM: truncated pixel data");
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(rd.pos()), count, samples.begin());
  }
  if (maxval != 255) {
    for (auto& s : samples) s = round_intensity(std::min<long>(s, maxval) * 255.0 / maxval);
  }

  if (color) return RgbFrame{static_cast<int>(w), static_cast<int>(h), 0, std::move(samples)};
  return Frame(static_cast<int>(w), static_cast<int>(h), 0, std::move(samples));
}

inline AnyFrame decode_pnm(std::string_view bytes) {
  return decode_pnm(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

/// Binary P5 encoding.
inline std::string encode_pgm(const Frame& f) {
  std::string out = "P5\n" + std::to_string(f.width) + " " + std::to_string(f.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(f.pixels.data()), f.pixels.size());
  return out;
}

inline void write_pgm(const std::filesystem::path& path, const Frame& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  const std::string data = encode_pgm(f);
  os.write(data.data(), static_cast<std::streamsize>(data.size()));
}

/// Unweighted channel average, round-half-up.
inline Frame to_grayscale(const RgbFrame& f) {
  Frame out(f.width, f.height, f.index);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    int sum = f.pixels[3 * i] + f.pixels[3 * i + 1] + f.pixels[3 * i + 2];
    // (sum + 1.5) / 3 floored == round-half-up of sum / 3
    out.pixels[i] = static_cast<std::uint8_t>((2 * sum + 3) / 6);
  }
  return out;
}

inline Frame to_grayscale(const AnyFrame& f) {
  if (auto* g = std::get_if<Frame>(&f)) return *g;
  return to_grayscale(std::get<RgbFrame>(f));
}

/// Bilinear resampling with pixel-center alignment.
inline Frame resize_bilinear(const Frame& f, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw std::invalid_argument("resize_bilinear: zero output dimension");
  if (out_w == f.width && out_h == f.height) return f;

  const double sx = static_cast<double>(f.width) / out_w;
  const double sy = static_cast<double>(f.height) / out_h;
  Frame out(out_w, out_h, f.index);
  for (int j = 0; j < out_h; ++j) {
    double y = std::clamp((j + 0.5) * sy - 0.5, 0.0, static_cast<double>(f.height - 1));
    int y0 = static_cast<int>(y);
    int y1 = std::min(y0 + 1, f.height - 1);
    double fy = y - y0;
    for (int i = 0; i < out_w; ++i) {
      double x = std::clamp((i + 0.5) * sx - 0.5, 0.0, static_cast<double>(f.width - 1));
      int x0 = static_cast<int>(x);
      int x1 = std::min(x0 + 1, f.width - 1);
      double fx = x - x0;
      double top = f.at(x0, y0) * (1 - fx) + f.at(x1, y0) * fx;
      double bot = f.at(x0, y1) * (1 - fx) + f.at(x1, y1) * fx;
      out.at(i, j) = round_intensity(top * (1 - fy) + bot * fy);
    }
  }
  return out;
}

struct Resolution {
  int width = 160;
  int height = 120;

  bool operator==(const Resolution&) const = default;
};

/// Parses "WxH".
inline Resolution parse_resolution(std::string_view text) {
  auto x = text.find('x');
  if (x == std::string_view::npos) throw std::invalid_argument("resolution must be WxH");
  Resolution r;
  try {
    r.width = std::stoi(std::string(text.substr(0, x)));
    r.height = std::stoi(std::string(text.substr(x + 1)));
  } catch (const std::exception&) {
    throw std::invalid_argument("resolution must be WxH");
  }
  if (r.width < 1 || r.height < 1) throw std::invalid_argument("resolution must be positive");
  return r;
}

/// Layout of a headerless 8-bit stream: `WxH` or `WxH:rgb`.
struct RawFormat {
  Resolution size;
  bool rgb = false;
};

inline RawFormat parse_raw_format(std::string_view text) {
  RawFormat f;
  auto colon = text.find(':');
  if (colon != std::string_view::npos) {
    auto suffix = text.substr(colon + 1);
    if (suffix == "rgb") f.rgb = true;
    else if (suffix != "gray") throw std::invalid_argument("raw format suffix must be rgb or gray");
    text = text.substr(0, colon);
  }
  f.size = parse_resolution(text);
  return f;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(is), {});
}

inline Frame normalize_frame(const AnyFrame& f, Resolution working, int index) {
  Frame g = to_grayscale(f);
  g = resize_bilinear(g, working.width, working.height);
  g.index = index;
  return g;
}

inline bool is_pnm_file(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
}

/// Loads a directory of PNM files in lexicographic order, grayscaled and
/// resized to `working`.
inline std::vector<Frame> load_sequence_dir(const std::filesystem::path& dir, Resolution working) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_pnm_file(e.path())) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw EmptySequenceError("no frames in " + dir.string());

  std::vector<Frame> frames;
  frames.reserve(files.size());
  for (const auto& p : files) {
    try {
      frames.push_back(normalize_frame(decode_pnm(read_file(p)), working,
                                       static_cast<int>(frames.size())));
    } catch (const ParseError& e) {
      throw ParseError(e.kind(), p.string() + ": " + e.what());
    }
  }
  return frames;
}

/// Splits a concatenated raw stream into frames. Trailing partial frames are
/// rejected.
inline std::vector<Frame> load_sequence_raw(std::span<const std::uint8_t> bytes, RawFormat fmt,
                                            Resolution working) {
  const std::size_t frame_bytes =
      static_cast<std::size_t>(fmt.size.width) * fmt.size.height * (fmt.rgb ? 3 : 1);
  if (bytes.empty()) throw EmptySequenceError("raw stream is empty");
  if (bytes.size() % frame_bytes != 0)
    throw ParseError(ParseError::Kind::Truncated, "raw stream length is not a multiple of the frame size");
  std::vector<Frame> frames;
  const std::size_t n = bytes.size() / frame_bytes;
  frames.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<std::uint8_t> px(bytes.begin() + static_cast<std::ptrdiff_t>(k * frame_bytes),
                                 bytes.begin() + static_cast<std::ptrdiff_t>((k + 1) * frame_bytes));
    AnyFrame f = fmt.rgb ? AnyFrame(RgbFrame{fmt.size.width, fmt.size.height, 0, std::move(px)})
                         : AnyFrame(Frame(fmt.size.width, fmt.size.height, 0, std::move(px)));
    frames.push_back(normalize_frame(f, working, static_cast<int>(k)));
  }
  return frames;
}

inline std::vector<Frame> load_sequence_raw(const std::filesystem::path& path, RawFormat fmt,
                                            Resolution working) {
  const std::string data = read_file(path);
  return load_sequence_raw(std::span<const std::uint8_t>(
                               reinterpret_cast<const std::uint8_t*>(data.data()), data.size()),
                           fmt, working);
}

}  // namespace har
