#ifndef CORRMVS_IO_HPP_
#define CORRMVS_IO_HPP_

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/SVD>

#include "corrmvs/correlation.hpp"
#include "corrmvs/error.hpp"
#include "corrmvs/geometry.hpp"
#include "corrmvs/grid.hpp"
#include "corrmvs/nn.hpp"

namespace corrmvs::io
{

inline constexpr char kTensorMagic[4] = {'C', 'O', 'R', 'T'};
inline constexpr char kWeightMagic[4] = {'C', 'O', 'R', 'W'};
inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::uint16_t kMaxRank = 8;
inline constexpr std::uint32_t kMaxNameLength = 4096;

/// Camera files accept rotations this far from orthonormal; they are then
/// projected onto SO(3) if they miss the 1e-9 pose tolerance.
inline constexpr double kCameraRotationTolerance = 1e-6;

using Bytes = std::vector<std::uint8_t>;

// ---------------------------------------------------------------------------
// Raw file access

inline Bytes read_file(const std::string & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) { fail(ErrorKind::kIo, "cannot open '" + path + "' for reading"); }
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string & path, const Bytes & bytes)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) { fail(ErrorKind::kIo, "cannot open '" + path + "' for writing"); }
  out.write(reinterpret_cast<const char *>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) { fail(ErrorKind::kIo, "short write to '" + path + "'"); }
}

namespace detail
{

class Writer
{
public:
  void raw(const void * p, std::size_t n)
  {
    const auto * b = static_cast<const std::uint8_t *>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  void u16(std::uint16_t v)
  {
    bytes_.push_back(std::uint8_t(v & 0xFF));
    bytes_.push_back(std::uint8_t(v >> 8));
  }
  void u32(std::uint32_t v)
  {
    for (int s = 0; s < 32; s += 8) { bytes_.push_back(std::uint8_t((v >> s) & 0xFF)); }
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

  Bytes take() { return std::move(bytes_); }

private:
  Bytes bytes_;
};

class Reader
{
public:
  Reader(const Bytes & bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  [[noreturn]] void error(const std::string & what) const { error_at(pos_, what); }
  [[noreturn]] void error_at(std::size_t at, const std::string & what) const
  {
    throw ParseError(source_, ParseError::Unit::kByte, at, what);
  }

  void need(std::size_t n, const char * what) const
  {
    if (remaining() < n) { error(std::string("truncated ") + what); }
  }
  std::uint16_t u16(const char * what)
  {
    need(2, what);
    const std::uint16_t v = std::uint16_t(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char * what)
  {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) { v = (v << 8) | bytes_[pos_ + std::size_t(i)]; }
    pos_ += 4;
    return v;
  }
  float f32(const char * what) { return std::bit_cast<float>(u32(what)); }
  void magic(const char (&expected)[4])
  {
    need(4, "magic");
    if (std::memcmp(bytes_.data() + pos_, expected, 4) != 0) { error("bad magic"); }
    pos_ += 4;
  }
  std::string string(std::size_t n, const char * what)
  {
    need(n, what);
    std::string s(reinterpret_cast<const char *>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void expect_end() const
  {
    if (remaining() != 0) { error(std::to_string(remaining()) + " trailing bytes"); }
  }

private:
  const Bytes & bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

inline void check_finite(const std::vector<float> & data, const std::string & what)
{
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      fail(ErrorKind::kIo, what + ": refusing to write non-finite value at element " + std::to_string(i));
    }
  }
}

inline void write_shape_and_payload(Writer & w, const Tensor & t, const std::string & what)
{
  if (t.rank() > kMaxRank) { fail(ErrorKind::kIo, what + ": rank above " + std::to_string(kMaxRank)); }
  if (t.data.size() != Tensor::element_count(t.shape)) { fail(ErrorKind::kShape, what + ": shape/payload mismatch"); }
  check_finite(t.data, what);
  w.u16(std::uint16_t(t.rank()));
  for (auto d : t.shape) { w.u32(d); }
  for (float v : t.data) { w.f32(v); }
}

inline Tensor read_shape_and_payload(Reader & r)
{
  const std::size_t rank_at = r.offset();
  const std::uint16_t rank = r.u16("rank");
  if (rank > kMaxRank) { r.error_at(rank_at, "rank " + std::to_string(rank) + " exceeds " + std::to_string(kMaxRank)); }
  Tensor t;
  t.shape.resize(rank);
  std::size_t count = 1;
  for (auto & d : t.shape) {
    const std::size_t dim_at = r.offset();
    d = r.u32("dimension");
    if (d == 0) { r.error_at(dim_at, "zero-sized dimension"); }
    if (count > std::numeric_limits<std::size_t>::max() / 4 / d) { r.error_at(dim_at, "dimension overflow"); }
    count *= d;
  }
  if (r.remaining() / 4 < count) { r.error("truncated payload: need " + std::to_string(count * 4) + " bytes"); }
  t.data.resize(count);
  for (auto & v : t.data) {
    v = r.f32("payload");
    if (!std::isfinite(v)) { r.error_at(r.offset() - 4, "non-finite payload value"); }
  }
  return t;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Tensor file: "CORT" u16 version, u16 rank, u32 dims[rank], f32 payload (all LE).

inline Bytes encode_tensor(const Tensor & t)
{
  detail::Writer w;
  w.raw(kTensorMagic, 4);
  w.u16(kFormatVersion);
  detail::write_shape_and_payload(w, t, "tensor");
  return w.take();
}

inline Tensor decode_tensor(const Bytes & bytes, const std::string & source = "<tensor>")
{
  detail::Reader r(bytes, source);
  r.magic(kTensorMagic);
  const std::size_t version_at = r.offset();
  if (r.u16("version") != kFormatVersion) { r.error_at(version_at, "unsupported version"); }
  Tensor t = detail::read_shape_and_payload(r);
  r.expect_end();
  return t;
}

inline void write_tensor(const std::string & path, const Tensor & t) { write_file(path, encode_tensor(t)); }
inline Tensor read_tensor(const std::string & path) { return decode_tensor(read_file(path), path); }

// ---------------------------------------------------------------------------
// Weight file: "CORW" u16 version, u32 count, then per entry
// u32 name length, name bytes, u16 rank, u32 dims[rank], f32 payload.

inline Bytes encode_weights(const NamedTensors & weights)
{
  detail::Writer w;
  w.raw(kWeightMagic, 4);
  w.u16(kFormatVersion);
  w.u32(std::uint32_t(weights.size()));
  for (const auto & [name, t] : weights) {
    if (name.empty() || name.size() > kMaxNameLength) { fail(ErrorKind::kIo, "invalid weight name length"); }
    w.u32(std::uint32_t(name.size()));
    w.raw(name.data(), name.size());
    detail::write_shape_and_payload(w, t, "weight '" + name + "'");
  }
  return w.take();
}

inline NamedTensors decode_weights(const Bytes & bytes, const std::string & source = "<weights>")
{
  detail::Reader r(bytes, source);
  r.magic(kWeightMagic);
  const std::size_t version_at = r.offset();
  if (r.u16("version") != kFormatVersion) { r.error_at(version_at, "unsupported version"); }
  const std::uint32_t count = r.u32("entry count");
  NamedTensors out;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::size_t len_at = r.offset();
    const std::uint32_t len = r.u32("name length");
    if (len == 0 || len > kMaxNameLength) { r.error_at(len_at, "invalid name length " + std::to_string(len)); }
    const std::string name = r.string(len, "name");
    if (out.count(name)) { r.error_at(len_at, "duplicate entry '" + name + "'"); }
    out.emplace(name, detail::read_shape_and_payload(r));
  }
  r.expect_end();
  return out;
}

inline void write_weights(const std::string & path, const NamedTensors & w) { write_file(path, encode_weights(w)); }
inline NamedTensors read_weights(const std::string & path) { return decode_weights(read_file(path), path); }

// ---------------------------------------------------------------------------
// PFM: "Pf" or "PF", "W H", scale (negative => little-endian), rows bottom-to-top.

struct PfmImage
{
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<float> data;  // top-to-bottom, row-major, channels interleaved

  friend bool operator==(const PfmImage &, const PfmImage &) = default;
};

inline Bytes encode_pfm(const PfmImage & img)
{
  if (img.channels != 1 && img.channels != 3) { fail(ErrorKind::kIo, "PFM supports 1 or 3 channels"); }
  if (img.data.size() != img.width * img.height * img.channels) { fail(ErrorKind::kShape, "PFM payload size mismatch"); }
  detail::check_finite(img.data, "pfm");
  detail::Writer w;
  const std::string header = std::string(img.channels == 1 ? "Pf" : "PF") + "\n" + std::to_string(img.width) + " " +
                             std::to_string(img.height) + "\n-1.0\n";
  w.raw(header.data(), header.size());
  const std::size_t row = img.width * img.channels;
  for (std::size_t y = img.height; y-- > 0;) {
    for (std::size_t i = 0; i < row; ++i) { w.f32(img.data[y * row + i]); }
  }
  return w.take();
}

inline PfmImage decode_pfm(const Bytes & bytes, const std::string & source = "<pfm>")
{
  std::size_t pos = 0;
  auto error = [&](std::size_t at, const std::string & what) {
    throw ParseError(source, ParseError::Unit::kByte, at, what);
  };
  auto line = [&](const char * what) {
    const std::size_t start = pos;
    while (pos < bytes.size() && bytes[pos] != '\n') { ++pos; }
    if (pos >= bytes.size()) { error(start, std::string("unterminated ") + what + " line"); }
    std::string s(reinterpret_cast<const char *>(bytes.data() + start), pos - start);
    ++pos;
    return std::pair{s, start};
  };

  PfmImage img;
  const auto [magic, magic_at] = line("magic");
  if (magic == "Pf") {
    img.channels = 1;
  } else if (magic == "PF") {
    img.channels = 3;
  } else {
    error(magic_at, "bad PFM magic");
  }

  const auto [dims, dims_at] = line("dimension");
  {
    std::size_t i = 0;
    auto number = [&]() {
      const std::size_t begin = i;
      std::size_t v = 0;
      while (i < dims.size() && dims[i] >= '0' && dims[i] <= '9') {
        if (v > 1'000'000'000) { error(dims_at + i, "dimension overflow"); }
        v = v * 10 + std::size_t(dims[i] - '0');
        ++i;
      }
      if (i == begin || v == 0) { error(dims_at + begin, "expected a positive integer"); }
      return v;
    };
    img.width = number();
    if (i >= dims.size() || dims[i] != ' ') { error(dims_at + i, "expected a single space"); }
    ++i;
    img.height = number();
    if (i != dims.size()) { error(dims_at + i, "unexpected characters after dimensions"); }
  }

  const auto [scale_text, scale_at] = line("scale");
  char * end = nullptr;
  const double scale = std::strtod(scale_text.c_str(), &end);
  if (scale_text.empty() || end != scale_text.c_str() + scale_text.size() || !std::isfinite(scale) || scale == 0.0) {
    error(scale_at, "bad scale");
  }
  const bool little = scale < 0.0;

  const std::size_t count = img.width * img.height * img.channels;
  if (bytes.size() - pos != count * 4) {
    error(pos, "payload is " + std::to_string(bytes.size() - pos) + " bytes, expected " + std::to_string(count * 4));
  }
  img.data.resize(count);
  const std::size_t row = img.width * img.channels;
  for (std::size_t y = img.height; y-- > 0;) {
    for (std::size_t i = 0; i < row; ++i) {
      std::uint32_t v = 0;
      for (int b = 0; b < 4; ++b) {
        const std::uint32_t byte = bytes[pos + std::size_t(b)];
        v |= little ? byte << (8 * b) : byte << (8 * (3 - b));
      }
      const float f = std::bit_cast<float>(v);
      if (!std::isfinite(f)) { error(pos, "non-finite sample"); }
      img.data[y * row + i] = f;
      pos += 4;
    }
  }
  return img;
}

inline void write_pfm(const std::string & path, const PfmImage & img) { write_file(path, encode_pfm(img)); }
inline PfmImage read_pfm(const std::string & path) { return decode_pfm(read_file(path), path); }

// ---------------------------------------------------------------------------
// Conversions between in-memory maps and the file containers.

inline Tensor depth_to_tensor(const DepthMap & d)
{
  Tensor t({std::uint32_t(d.height()), std::uint32_t(d.width())});
  for (std::size_t i = 0; i < d.pixels(); ++i) { t.data[i] = float(d[i]); }
  return t;
}

inline DepthMap depth_from_tensor(const Tensor & t)
{
  if (t.rank() != 2) { fail(ErrorKind::kShape, "depth tensor must have rank 2"); }
  DepthMap d(t.shape[0], t.shape[1]);
  for (std::size_t i = 0; i < d.pixels(); ++i) { d[i] = double(t.data[i]); }
  return d;
}

inline PfmImage depth_to_pfm(const DepthMap & d)
{
  PfmImage img{d.width(), d.height(), 1, std::vector<float>(d.pixels())};
  for (std::size_t i = 0; i < d.pixels(); ++i) { img.data[i] = float(d[i]); }
  return img;
}

inline DepthMap depth_from_pfm(const PfmImage & img)
{
  if (img.channels != 1) { fail(ErrorKind::kShape, "depth PFM must have one channel"); }
  DepthMap d(img.height, img.width);
  for (std::size_t i = 0; i < d.pixels(); ++i) { d[i] = double(img.data[i]); }
  return d;
}

/// H x W x 2 when every pixel is valid, otherwise H x W x 3 with a 0/1 validity channel.
inline Tensor flow_to_tensor(const FlowField & f)
{
  const std::uint32_t c = f.all_valid() ? 2 : 3;
  Tensor t({std::uint32_t(f.height()), std::uint32_t(f.width()), c});
  for (std::size_t i = 0; i < f.pixels(); ++i) {
    t.data[i * c] = float(f.dx(i));
    t.data[i * c + 1] = float(f.dy(i));
    if (c == 3) { t.data[i * c + 2] = f.valid(i) ? 1.0f : 0.0f; }
  }
  return t;
}

inline FlowField flow_from_tensor(const Tensor & t)
{
  if (t.rank() != 3 || (t.shape[2] != 2 && t.shape[2] != 3)) {
    fail(ErrorKind::kShape, "flow tensor must be H x W x 2 (or x 3 with validity)");
  }
  const std::size_t c = t.shape[2];
  FlowField f(t.shape[0], t.shape[1]);
  for (std::size_t i = 0; i < f.pixels(); ++i) {
    const bool valid = c == 2 || t.data[i * c + 2] != 0.0f;
    f.set(i, valid ? t.data[i * c] : 0.0, valid ? t.data[i * c + 1] : 0.0, valid);
  }
  return f;
}

/// 3-channel PFM (dx, dy, valid) for viewing flow in image tools.
inline PfmImage flow_to_pfm(const FlowField & f)
{
  PfmImage img{f.width(), f.height(), 3, std::vector<float>(f.pixels() * 3)};
  for (std::size_t i = 0; i < f.pixels(); ++i) {
    img.data[3 * i] = float(f.dx(i));
    img.data[3 * i + 1] = float(f.dy(i));
    img.data[3 * i + 2] = f.valid(i) ? 1.0f : 0.0f;
  }
  return img;
}

/// Level-0 volume as an H x W x H' x W' tensor.
inline Tensor volume_to_tensor(const CorrelationVolume & v)
{
  Tensor t({std::uint32_t(v.ref_height()), std::uint32_t(v.ref_width()), std::uint32_t(v.src_height()),
            std::uint32_t(v.src_width())});
  t.data = v.data();
  return t;
}

inline CorrelationVolume volume_from_tensor(const Tensor & t)
{
  if (t.rank() != 4) { fail(ErrorKind::kShape, "correlation tensor must have rank 4"); }
  CorrelationVolume v(0, t.shape[0], t.shape[1], t.shape[2], t.shape[3]);
  v.data() = t.data;
  return v;
}

// ---------------------------------------------------------------------------
// Camera text file. One block per view, reference first:
//   K fx fy cx cy
//   R r00 r01 r02 r10 r11 r12 r20 r21 r22
//   t tx ty tz
// '#' starts a comment. Poses are camera-from-world.

inline Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d & m)
{
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Eigen::Matrix3d u = svd.matrixU();
    u.col(2) *= -1.0;
    r = u * svd.matrixV().transpose();
  }
  return r;
}

inline std::vector<View> parse_cameras(std::string_view text, const std::string & source = "<cameras>")
{
  struct Line
  {
    std::size_t number;
    std::string tag;
    std::vector<double> values;
  };
  std::vector<Line> lines;
  std::size_t number = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) { end = text.size(); }
    ++number;
    std::string raw(text.substr(start, end - start));
    if (auto hash = raw.find('#'); hash != std::string::npos) { raw.resize(hash); }
    std::istringstream ss(raw);
    std::string tag;
    if (ss >> tag) {
      Line l{number, tag, {}};
      std::string tok;
      while (ss >> tok) {
        char * stop = nullptr;
        const double v = std::strtod(tok.c_str(), &stop);
        if (stop != tok.c_str() + tok.size() || !std::isfinite(v)) {
          throw ParseError(source, ParseError::Unit::kLine, number, "bad number '" + tok + "'");
        }
        l.values.push_back(v);
      }
      lines.push_back(std::move(l));
    }
    if (end == text.size()) { break; }
    start = end + 1;
  }

  std::vector<View> views;
  for (std::size_t i = 0; i < lines.size(); i += 3) {
    auto expect = [&](std::size_t j, const char * tag, std::size_t n) -> const Line & {
      if (j >= lines.size()) {
        throw ParseError(source, ParseError::Unit::kLine, number, std::string("missing '") + tag + "' line");
      }
      const Line & l = lines[j];
      if (l.tag != tag) {
        throw ParseError(source, ParseError::Unit::kLine, l.number,
                         std::string("expected '") + tag + "', found '" + l.tag + "'");
      }
      if (l.values.size() != n) {
        throw ParseError(source, ParseError::Unit::kLine, l.number,
                         std::string("'") + tag + "' needs " + std::to_string(n) + " values");
      }
      return l;
    };
    const Line & k = expect(i, "K", 4);
    const Line & r = expect(i + 1, "R", 9);
    const Line & t = expect(i + 2, "t", 3);

    View v;
    v.intrinsics = {k.values[0], k.values[1], k.values[2], k.values[3]};
    if (!(v.intrinsics.fx > 0.0) || !(v.intrinsics.fy > 0.0)) {
      throw ParseError(source, ParseError::Unit::kLine, k.number, "focal lengths must be positive");
    }
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) { v.pose.rotation(a, b) = r.values[std::size_t(3 * a + b)]; }
    }
    if (!is_rotation(v.pose.rotation, kCameraRotationTolerance)) {
      throw ParseError(source, ParseError::Unit::kLine, r.number, "rotation is not orthonormal with det 1");
    }
    if (!is_rotation(v.pose.rotation)) { v.pose.rotation = nearest_rotation(v.pose.rotation); }
    v.pose.translation = {t.values[0], t.values[1], t.values[2]};
    views.push_back(v);
  }
  if (views.empty()) { throw ParseError(source, ParseError::Unit::kLine, number, "no camera blocks"); }
  return views;
}

inline std::string format_cameras(const std::vector<View> & views)
{
  std::string out = "# corrmvs cameras: K fx fy cx cy / R row-major / t; camera-from-world; reference first\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), " %.17g", v);
    out += buf;
  };
  for (const auto & v : views) {
    out += "K";
    for (double x : {v.intrinsics.fx, v.intrinsics.fy, v.intrinsics.cx, v.intrinsics.cy}) { num(x); }
    out += "\nR";
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) { num(v.pose.rotation(a, b)); }
    }
    out += "\nt";
    for (int a = 0; a < 3; ++a) { num(v.pose.translation(a)); }
    out += "\n";
  }
  return out;
}

inline std::vector<View> rig_views(const CameraRig & rig)
{
  std::vector<View> v{rig.reference()};
  v.insert(v.end(), rig.sources().begin(), rig.sources().end());
  return v;
}

inline CameraRig rig_from_views(std::vector<View> views)
{
  if (views.empty()) { fail(ErrorKind::kConfig, "camera list is empty"); }
  View ref = views.front();
  views.erase(views.begin());
  return CameraRig(ref, std::move(views));
}

inline void write_cameras(const std::string & path, const CameraRig & rig)
{
  const std::string text = format_cameras(rig_views(rig));
  write_file(path, Bytes(text.begin(), text.end()));
}

inline CameraRig read_cameras(const std::string & path)
{
  const Bytes b = read_file(path);
  return rig_from_views(parse_cameras(std::string_view(reinterpret_cast<const char *>(b.data()), b.size()), path));
}

}  // namespace corrmvs::io

#endif  // CORRMVS_IO_HPP_
