#include "pointvid/io.hpp"

#include <bit>
#include <cmath>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "pointvid/error.hpp"

namespace pointvid {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "the .vpt codec assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'V', 'P', 'T', '1'};

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
  const auto* p = reinterpret_cast<const std::byte*>(&v);
  out.insert(out.end(), p, p + 4);
}

std::uint32_t get_u32(std::span<const std::byte> bytes, std::size_t offset) {
  std::uint32_t v;
  std::memcpy(&v, bytes.data() + offset, 4);
  return v;
}

}  // namespace

std::vector<std::byte> encode_tensor(const TensorF& t) {
  std::vector<std::byte> out;
  out.reserve(8 + 4 * t.rank() + 4 * t.size());
  const auto* m = reinterpret_cast<const std::byte*>(kMagic);
  out.insert(out.end(), m, m + 4);
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.dims()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw ShapeError("extent does not fit in u32");
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  const auto* payload = reinterpret_cast<const std::byte*>(t.data().data());
  out.insert(out.end(), payload, payload + 4 * t.size());
  return out;
}

TensorF decode_tensor(std::span<const std::byte> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("bad magic, expected VPT1", 0);
  }
  if (bytes.size() < 8) throw FormatError("truncated header: missing rank", 4);
  const std::uint32_t ndim = get_u32(bytes, 4);
  if (ndim == 0 || ndim > TensorF::kMaxRank) {
    throw FormatError("rank " + std::to_string(ndim) + " outside [1,5]", 4);
  }
  std::size_t offset = 8;
  Shape dims;
  std::uint64_t numel = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    if (bytes.size() < offset + 4) throw FormatError("truncated header: missing extent", offset);
    const std::uint32_t d = get_u32(bytes, offset);
    if (d == 0) throw FormatError("zero extent", offset);
    numel *= d;
    if (numel > (std::uint64_t{1} << 34)) throw FormatError("dimension overflow", offset);
    dims.push_back(d);
    offset += 4;
  }
  const std::uint64_t payload = numel * 4;
  if (bytes.size() < offset + payload) {
    throw FormatError("truncated payload: need " + std::to_string(payload) + " bytes", bytes.size());
  }
  if (bytes.size() > offset + payload) throw FormatError("trailing bytes after payload", offset + payload);
  std::vector<float> data(numel);
  std::memcpy(data.data(), bytes.data() + offset, payload);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) throw FormatError("non-finite element", offset + 4 * i);
  }
  return TensorF(std::move(dims), std::move(data));
}

void write_file_atomic(const fs::path& path, std::span<const std::byte> bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  write_file_atomic(path, std::as_bytes(std::span(text.data(), text.size())));
}

std::vector<std::byte> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto n = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::byte> bytes(n);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
  return bytes;
}

void write_tensor(const TensorF& t, const fs::path& path) { write_file_atomic(path, encode_tensor(t)); }

TensorF read_tensor(const fs::path& path) { return decode_tensor(read_file(path)); }

void write_ppm(const TensorF& frame, const fs::path& path) {
  if (frame.rank() != 3 || frame.dim(2) != 3) throw ShapeError("PPM frame must be [H,W,3]");
  for (float x : frame.data()) {
    if (!(x >= 0.0f && x <= 1.0f)) throw ValidationError("PPM values must lie in [0,1]");
  }
  std::string header = "P6\n" + std::to_string(frame.dim(1)) + " " + std::to_string(frame.dim(0)) + "\n255\n";
  std::vector<std::byte> bytes(header.size() + frame.size());
  std::memcpy(bytes.data(), header.data(), header.size());
  for (std::size_t i = 0; i < frame.size(); ++i) {
    bytes[header.size() + i] = static_cast<std::byte>(std::lround(255.0 * frame[i]));
  }
  write_file_atomic(path, bytes);
}

void write_ppm_frames(const RgbVideo& video, const fs::path& dir) {
  // RgbVideo already guarantees [0,1]; nothing is written for invalid input.
  fs::create_directories(dir);
  const std::size_t frame_size = video.height() * video.width() * 3;
  for (std::size_t t = 0; t < video.frames(); ++t) {
    const auto src = video.tensor().data().subspan(t * frame_size, frame_size);
    TensorF frame({video.height(), video.width(), 3}, std::vector<float>(src.begin(), src.end()));
    std::ostringstream name;
    name << "frame_" << std::setw(3) << std::setfill('0') << t << ".ppm";
    write_ppm(frame, dir / name.str());
  }
}

TensorF read_ppm(const fs::path& path) {
  const auto bytes = read_file(path);
  std::size_t pos = 0;
  auto next_token = [&]() -> std::string {
    while (pos < bytes.size()) {
      const char c = static_cast<char>(bytes[pos]);
      if (c == '#') {
        while (pos < bytes.size() && static_cast<char>(bytes[pos]) != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos;
      } else {
        break;
      }
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(static_cast<char>(bytes[pos])))) {
      tok.push_back(static_cast<char>(bytes[pos++]));
    }
    return tok;
  };
  if (next_token() != "P6") throw FormatError("not a binary P6 PPM", 0);
  std::size_t width = 0, height = 0, maxval = 0;
  try {
    width = std::stoul(next_token());
    height = std::stoul(next_token());
    maxval = std::stoul(next_token());
  } catch (const std::exception&) {
    throw FormatError("malformed PPM header", pos);
  }
  if (maxval != 255 || width == 0 || height == 0) throw FormatError("unsupported PPM header", pos);
  ++pos;  // single whitespace byte before the raster
  if (bytes.size() < pos + width * height * 3) throw FormatError("truncated PPM raster", bytes.size());
  std::vector<float> data(width * height * 3);
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = static_cast<float>(std::to_integer<unsigned>(bytes[pos + i])) / 255.0f;
  }
  return TensorF({height, width, 3}, std::move(data));
}

void write_ply(std::span<const PlyPoint> points, const fs::path& path) {
  const bool colored = !points.empty() && points.front().rgb.has_value();
  for (const auto& p : points) {
    for (double c : p.xyz) {
      if (!std::isfinite(c)) throw ValidationError("PLY coordinate is not finite");
    }
    if (p.rgb.has_value() != colored) throw ValidationError("PLY points must all carry color or none");
  }
  std::ostringstream out;
  out << "ply\nformat ascii 1.0\nelement vertex " << points.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n";
  if (colored) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";
  out << std::setprecision(9);
  for (const auto& p : points) {
    out << p.xyz[0] << ' ' << p.xyz[1] << ' ' << p.xyz[2];
    if (colored) {
      out << ' ' << int{(*p.rgb)[0]} << ' ' << int{(*p.rgb)[1]} << ' ' << int{(*p.rgb)[2]};
    }
    out << '\n';
  }
  write_text_atomic(path, out.str());
}

}  // namespace pointvid
