#include "voxreg/io.hpp"

#include <json.hpp>
#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "voxreg/error.hpp"
#include "voxreg/log.hpp"

namespace voxreg {

// --- raw files -------------------------------------------------------------

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool is_gzip(const std::string& bytes) {
  return bytes.size() >= 2 && std::uint8_t(bytes[0]) == 0x1F && std::uint8_t(bytes[1]) == 0x8B;
}

std::string gunzip(const std::string& in, const std::string& path) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 32) != Z_OK) throw IoError("zlib init failed for " + path);
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(in.data()));
  zs.avail_in = uInt(in.size());
  std::string out;
  char buf[1 << 16];
  int ret = Z_OK;
  while (ret != Z_STREAM_END) {
    zs.next_out = reinterpret_cast<Bytef*>(buf);
    zs.avail_out = sizeof(buf);
    ret = inflate(&zs, Z_NO_FLUSH);
    if (ret != Z_OK && ret != Z_STREAM_END) {
      inflateEnd(&zs);
      throw FormatError(FormatErrc::truncated, "corrupt gzip stream in " + path);
    }
    out.append(buf, sizeof(buf) - zs.avail_out);
    if (ret == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw FormatError(FormatErrc::truncated, "truncated gzip stream in " + path);
    }
  }
  inflateEnd(&zs);
  return out;
}

}  // namespace

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::string& bytes) {
  if (ends_with(path, ".gz")) {
    gzFile f = gzopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot open " + path + " for writing");
    const int written = bytes.empty() ? 0 : gzwrite(f, bytes.data(), unsigned(bytes.size()));
    if (gzclose(f) != Z_OK || std::size_t(written) != bytes.size()) throw IoError("failed writing " + path);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw IoError("failed writing " + path);
}

// --- little-endian helpers ---------------------------------------------------

namespace {

class ByteReader {
 public:
  ByteReader(const std::string& bytes, bool swap) : bytes_(bytes), swap_(swap) {}

  template <class T>
  T get(std::size_t offset) const {
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, bytes_.data() + offset, sizeof(T));
    if (swap_) std::reverse(raw, raw + sizeof(T));
    T v;
    std::memcpy(&v, raw, sizeof(T));
    return v;
  }

 private:
  const std::string& bytes_;
  bool swap_;
};

// Encodes values little-endian regardless of host order.
template <class T>
void put_le(std::string& out, std::size_t offset, T value) {
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  std::memcpy(out.data() + offset, raw, sizeof(T));
}

template <class T>
T get_le(const std::string& in, std::size_t offset) {
  return ByteReader(in, std::endian::native == std::endian::big).get<T>(offset);
}

}  // namespace

// --- NIfTI-1 ---------------------------------------------------------------

namespace {

constexpr std::size_t kNiftiHeader = 348;

struct NiftiHeader {
  Index3 dims{};
  Eigen::Vector3f spacing = Eigen::Vector3f::Ones();
  int datatype = 0;
  std::size_t vox_offset = 0;
  float slope = 0.0f;
  float inter = 0.0f;
  bool swap = false;
  bool single_file = true;
};

std::size_t datatype_bytes(int datatype) {
  switch (datatype) {
    case 2: return 1;
    case 4: return 2;
    case 16: return 4;
    case 64: return 8;
    default: return 0;
  }
}

NiftiHeader parse_nifti_header(const std::string& bytes, const std::string& path) {
  if (bytes.size() < kNiftiHeader) throw FormatError(FormatErrc::truncated, "NIfTI header shorter than 348 bytes: " + path);
  NiftiHeader h;
  const std::int16_t dim0 = get_le<std::int16_t>(bytes, 40);
  h.swap = dim0 < 1 || dim0 > 7;
  const ByteReader r(bytes, h.swap != (std::endian::native == std::endian::big));
  if (r.get<std::int32_t>(0) != 348) throw FormatError(FormatErrc::bad_header, "sizeof_hdr is not 348: " + path);
  const char* magic = bytes.data() + 344;
  if (std::memcmp(magic, "n+1\0", 4) == 0)
    h.single_file = true;
  else if (std::memcmp(magic, "ni1\0", 4) == 0)
    h.single_file = false;
  else
    throw FormatError(FormatErrc::bad_magic, "not a NIfTI-1 file: " + path);

  std::int16_t dim[8];
  for (int i = 0; i < 8; ++i) dim[i] = r.get<std::int16_t>(40 + 2 * std::size_t(i));
  if (dim[0] < 3 || dim[0] > 4 || (dim[0] == 4 && dim[4] > 1))
    throw FormatError(FormatErrc::unsupported_dims, "only 3D volumes are supported: " + path);
  for (int a = 0; a < 3; ++a) {
    if (dim[a + 1] < 2) throw FormatError(FormatErrc::unsupported_dims, "axis shorter than 2 voxels: " + path);
    h.dims[std::size_t(a)] = dim[a + 1];
    const float p = std::fabs(r.get<float>(76 + 4 * std::size_t(a + 1)));
    h.spacing[a] = (p > 0.0f && std::isfinite(p)) ? p : 1.0f;
  }
  h.datatype = r.get<std::int16_t>(70);
  if (datatype_bytes(h.datatype) == 0)
    throw FormatError(FormatErrc::unsupported_datatype, "datatype " + std::to_string(h.datatype) + ": " + path);
  const float off = r.get<float>(108);
  h.vox_offset = off > 0.0f ? std::size_t(off) : 0;
  if (h.single_file) h.vox_offset = std::max<std::size_t>(h.vox_offset, kNiftiHeader);
  h.slope = r.get<float>(112);
  h.inter = r.get<float>(116);

  // Orientation is not modelled; flag anything but an axis-aligned positive frame.
  bool aligned = true;
  const int qform = r.get<std::int16_t>(252);
  const int sform = r.get<std::int16_t>(254);
  if (sform > 0) {
    for (int row = 0; row < 3; ++row)
      for (int col = 0; col < 3; ++col) {
        const float v = r.get<float>(280 + 16 * std::size_t(row) + 4 * std::size_t(col));
        if ((row == col && !(v > 0.0f)) || (row != col && v != 0.0f)) aligned = false;
      }
  } else if (qform > 0) {
    const float qfac = r.get<float>(76);
    if (r.get<float>(256) != 0.0f || r.get<float>(260) != 0.0f || r.get<float>(264) != 0.0f || qfac < 0.0f)
      aligned = false;
  }
  if (!aligned) log::warn("orientation of " + path + " is not axis-aligned; it is ignored");
  return h;
}

}  // namespace

NiftiImage read_nifti(const std::string& path) {
  std::string bytes = read_file(path);
  if (is_gzip(bytes)) bytes = gunzip(bytes, path);
  const NiftiHeader h = parse_nifti_header(bytes, path);

  std::string img_bytes;
  const std::string* payload = &bytes;
  if (!h.single_file) {
    std::string img_path = path;
    if (ends_with(img_path, ".hdr")) img_path.replace(img_path.size() - 4, 4, ".img");
    else if (ends_with(img_path, ".hdr.gz")) img_path.replace(img_path.size() - 7, 7, ".img.gz");
    img_bytes = read_file(img_path);
    if (is_gzip(img_bytes)) img_bytes = gunzip(img_bytes, img_path);
    payload = &img_bytes;
  }

  const GridGeometry geom(h.dims, h.spacing);
  const std::size_t n = geom.voxel_count();
  const std::size_t width = datatype_bytes(h.datatype);
  if (payload->size() < h.vox_offset + n * width)
    throw FormatError(FormatErrc::truncated, "payload shorter than the header declares: " + path);

  const ByteReader r(*payload, h.swap != (std::endian::native == std::endian::big));
  const bool scaled = h.slope != 0.0f && std::isfinite(h.slope) && std::isfinite(h.inter) &&
                      !(h.slope == 1.0f && h.inter == 0.0f);
  const bool integer = h.datatype == 2 || h.datatype == 4;

  auto raw = [&](std::size_t v) -> double {
    const std::size_t at = h.vox_offset + v * width;
    switch (h.datatype) {
      case 2: return double(std::uint8_t((*payload)[at]));
      case 4: return double(r.get<std::int16_t>(at));
      case 16: return double(r.get<float>(at));
      default: return r.get<double>(at);
    }
  };

  if (integer && !scaled) {
    std::vector<std::int32_t> labels(n);
    bool negative = false;
    for (std::size_t v = 0; v < n; ++v) {
      labels[v] = std::int32_t(raw(v));
      negative = negative || labels[v] < 0;
    }
    if (!negative) return LabelVolume(geom, std::move(labels));
  }

  Eigen::ArrayXf data(static_cast<Eigen::Index>(n));
  std::size_t bad = 0;
  for (std::size_t v = 0; v < n; ++v) {
    double value = raw(v);
    if (scaled) value = value * double(h.slope) + double(h.inter);
    const float f = float(value);
    if (!std::isfinite(f)) ++bad;
    data[Eigen::Index(v)] = f;
  }
  if (bad > 0)
    throw FormatError(FormatErrc::non_finite, std::to_string(bad) + " non-finite voxel values in " + path);
  return Volume3(geom, std::move(data));
}

Volume3 read_nifti_volume(const std::string& path) {
  NiftiImage img = read_nifti(path);
  if (auto* v = std::get_if<Volume3>(&img)) return std::move(*v);
  const auto& l = std::get<LabelVolume>(img);
  Eigen::ArrayXf data(static_cast<Eigen::Index>(l.labels.size()));
  for (std::size_t v = 0; v < l.labels.size(); ++v) data[Eigen::Index(v)] = float(l.labels[v]);
  return Volume3(l.geometry, std::move(data));
}

LabelVolume read_nifti_labels(const std::string& path) {
  NiftiImage img = read_nifti(path);
  if (auto* l = std::get_if<LabelVolume>(&img)) return std::move(*l);
  const auto& v = std::get<Volume3>(img);
  std::vector<std::int32_t> labels(static_cast<std::size_t>(v.data.size()));
  for (Eigen::Index i = 0; i < v.data.size(); ++i) {
    const float f = v.data[i];
    if (f < 0.0f || f != std::floor(f) || f > float(std::numeric_limits<std::int32_t>::max()))
      throw FormatError(FormatErrc::unsupported_datatype, "image is not a label map: " + path);
    labels[std::size_t(i)] = std::int32_t(f);
  }
  return LabelVolume(v.geometry, std::move(labels));
}

namespace {

std::string nifti_header(const GridGeometry& g, std::int16_t datatype, std::int16_t bitpix) {
  std::string out(kNiftiHeader + 4, '\0');
  put_le<std::int32_t>(out, 0, 348);
  const std::int16_t dim[8] = {3, std::int16_t(g.dims[0]), std::int16_t(g.dims[1]), std::int16_t(g.dims[2]), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) put_le<std::int16_t>(out, 40 + 2 * std::size_t(i), dim[i]);
  put_le<std::int16_t>(out, 70, datatype);
  put_le<std::int16_t>(out, 72, bitpix);
  const float pixdim[8] = {1.0f, g.spacing.x(), g.spacing.y(), g.spacing.z(), 1.0f, 1.0f, 1.0f, 1.0f};
  for (int i = 0; i < 8; ++i) put_le<float>(out, 76 + 4 * std::size_t(i), pixdim[i]);
  put_le<float>(out, 108, float(kNiftiHeader + 4));
  put_le<float>(out, 112, 0.0f);
  put_le<float>(out, 116, 0.0f);
  out[123] = 2;  // millimetres
  put_le<std::int16_t>(out, 254, 1);  // sform: scanner, axis-aligned
  for (int a = 0; a < 3; ++a) put_le<float>(out, 280 + 16 * std::size_t(a) + 4 * std::size_t(a), g.spacing[a]);
  std::memcpy(out.data() + 344, "n+1\0", 4);
  return out;
}

}  // namespace

void write_nifti(const Volume3& vol, const std::string& path) {
  std::string out = nifti_header(vol.geometry, 16, 32);
  const std::size_t n = vol.geometry.voxel_count();
  const std::size_t base = out.size();
  out.resize(base + 4 * n);
  for (std::size_t v = 0; v < n; ++v) put_le<float>(out, base + 4 * v, vol.data[Eigen::Index(v)]);
  write_file(path, out);
}

void write_nifti(const LabelVolume& labels, const std::string& path) {
  const auto max_label = labels.labels.empty() ? 0 : *std::max_element(labels.labels.begin(), labels.labels.end());
  if (max_label > std::numeric_limits<std::int16_t>::max())
    throw ConfigError("label values above 32767 cannot be stored");
  const bool byte = max_label <= 255;
  std::string out = nifti_header(labels.geometry, byte ? 2 : 4, byte ? 8 : 16);
  const std::size_t base = out.size();
  const std::size_t n = labels.labels.size();
  out.resize(base + (byte ? 1 : 2) * n);
  for (std::size_t v = 0; v < n; ++v) {
    if (byte)
      out[base + v] = char(std::uint8_t(labels.labels[v]));
    else
      put_le<std::int16_t>(out, base + 2 * v, std::int16_t(labels.labels[v]));
  }
  write_file(path, out);
}

// --- FVL1 ------------------------------------------------------------------

std::string encode_fvl1(const FeatureVolume& fv) {
  const std::size_t n = fv.geometry.voxel_count();
  const std::size_t c = std::size_t(fv.channels());
  std::string out(kFvl1HeaderBytes + 4 * n * c, '\0');
  std::memcpy(out.data(), "FVL1", 4);
  put_le<std::uint32_t>(out, 4, 1);
  for (int a = 0; a < 3; ++a) put_le<std::uint32_t>(out, 8 + 4 * std::size_t(a), std::uint32_t(fv.geometry.dims[std::size_t(a)]));
  put_le<std::uint32_t>(out, 20, std::uint32_t(c));
  for (int a = 0; a < 3; ++a) put_le<float>(out, 24 + 4 * std::size_t(a), fv.geometry.spacing[a]);
  put_le<std::uint32_t>(out, 36, std::uint32_t(fv.stride));
  out[40] = 0;  // dtype float32, then three zero padding bytes
  std::size_t at = kFvl1HeaderBytes;
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float* plane = fv.data.col(Eigen::Index(ch)).data();
    for (std::size_t v = 0; v < n; ++v, at += 4) put_le<float>(out, at, plane[v]);
  }
  return out;
}

FeatureVolume decode_fvl1(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "FVL1", 4) != 0)
    throw FormatError(FormatErrc::bad_magic, "expected FVL1 magic");
  if (bytes.size() < kFvl1HeaderBytes) throw FormatError(FormatErrc::truncated, "FVL1 header is incomplete");
  const auto version = get_le<std::uint32_t>(bytes, 4);
  if (version != 1) throw FormatError(FormatErrc::bad_version, "FVL1 version " + std::to_string(version));
  Index3 dims{};
  Eigen::Vector3f spacing;
  for (int a = 0; a < 3; ++a) {
    const auto n = get_le<std::uint32_t>(bytes, 8 + 4 * std::size_t(a));
    if (n < 2 || n > std::uint32_t(std::numeric_limits<int>::max()))
      throw FormatError(FormatErrc::unsupported_dims, "FVL1 axis of " + std::to_string(n) + " voxels");
    dims[std::size_t(a)] = int(n);
    spacing[a] = get_le<float>(bytes, 24 + 4 * std::size_t(a));
    if (!(spacing[a] > 0.0f) || !std::isfinite(spacing[a])) throw FormatError(FormatErrc::bad_header, "FVL1 spacing must be positive");
  }
  const auto channels = get_le<std::uint32_t>(bytes, 20);
  const auto stride = get_le<std::uint32_t>(bytes, 36);
  if (channels == 0) throw FormatError(FormatErrc::bad_header, "FVL1 channel count is zero");
  if (stride == 0) throw FormatError(FormatErrc::bad_header, "FVL1 stride is zero");
  if (bytes[40] != 0) throw FormatError(FormatErrc::unsupported_datatype, "FVL1 dtype " + std::to_string(int(std::uint8_t(bytes[40]))));
  if (bytes[41] != 0 || bytes[42] != 0 || bytes[43] != 0) throw FormatError(FormatErrc::bad_header, "FVL1 padding is not zero");

  const GridGeometry geom(dims, spacing);
  const std::size_t n = geom.voxel_count();
  const std::size_t expected = kFvl1HeaderBytes + 4 * n * channels;
  if (bytes.size() < expected)
    throw FormatError(FormatErrc::truncated, "FVL1 payload has " + std::to_string((bytes.size() - kFvl1HeaderBytes) / 4) +
                                                 " floats, header declares " + std::to_string(n * channels));
  if (bytes.size() > expected) throw FormatError(FormatErrc::size_mismatch, "FVL1 payload is longer than declared");

  Eigen::MatrixXf data(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(channels));
  std::size_t at = kFvl1HeaderBytes, bad = 0;
  for (std::size_t ch = 0; ch < channels; ++ch) {
    float* plane = data.col(Eigen::Index(ch)).data();
    for (std::size_t v = 0; v < n; ++v, at += 4) {
      plane[v] = get_le<float>(bytes, at);
      if (!std::isfinite(plane[v])) ++bad;
    }
  }
  if (bad > 0) throw FormatError(FormatErrc::non_finite, std::to_string(bad) + " non-finite values in FVL1 payload");
  return FeatureVolume(geom, int(stride), std::move(data));
}

FeatureVolume read_fvl1(const std::string& path) {
  try {
    return decode_fvl1(read_file(path));
  } catch (const FormatError& e) {
    std::string msg = e.what();
    msg.erase(0, std::strlen(to_string(e.code())) + 2);
    throw FormatError(e.code(), msg + " (" + path + ")");
  }
}

void write_fvl1(const FeatureVolume& fv, const std::string& path) { write_file(path, encode_fvl1(fv)); }

void write_fvl1(const DisplacementField& u, const std::string& path) {
  write_fvl1(FeatureVolume(u.geometry, u.stride, Eigen::MatrixXf(u.vectors)), path);
}

DisplacementField read_displacement(const std::string& path) {
  FeatureVolume fv = read_fvl1(path);
  if (fv.channels() != 3)
    throw FormatError(FormatErrc::bad_header, "displacement file must have 3 channels: " + path);
  return DisplacementField(fv.geometry, fv.stride, VectorPlanes(fv.data));
}

// --- JSON ------------------------------------------------------------------

void write_metrics(const MetricsReport& report, const std::string& path) { write_file(path, to_json(report) + "\n"); }

MetricsReport read_metrics(const std::string& path) { return metrics_from_json(read_file(path)); }

void write_basis(const PcaBasis& basis, const std::string& path) {
  nlohmann::ordered_json j;
  j["channels"] = basis.input_channels();
  j["components"] = basis.rank();
  j["mean"] = std::vector<double>(basis.mean.data(), basis.mean.data() + basis.mean.size());
  j["singular_values"] =
      std::vector<double>(basis.singular_values.data(), basis.singular_values.data() + basis.singular_values.size());
  auto cols = nlohmann::ordered_json::array();
  for (Eigen::Index c = 0; c < basis.components.cols(); ++c) {
    const Eigen::VectorXd col = basis.components.col(c);
    cols.push_back(std::vector<double>(col.data(), col.data() + col.size()));
  }
  j["basis"] = cols;
  write_file(path, j.dump(2) + "\n");
}

PcaBasis read_basis(const std::string& path) {
  PcaBasis b;
  try {
    const auto j = nlohmann::json::parse(read_file(path));
    const int channels = j.at("channels").get<int>();
    const int k = j.at("components").get<int>();
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto sv = j.at("singular_values").get<std::vector<double>>();
    const auto cols = j.at("basis").get<std::vector<std::vector<double>>>();
    if (int(mean.size()) != channels || int(cols.size()) != k)
      throw FormatError(FormatErrc::size_mismatch, "basis shape does not match its header: " + path);
    b.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), channels);
    b.singular_values = Eigen::Map<const Eigen::VectorXd>(sv.data(), Eigen::Index(sv.size()));
    b.components.resize(channels, k);
    for (int c = 0; c < k; ++c) {
      if (int(cols[std::size_t(c)].size()) != channels)
        throw FormatError(FormatErrc::size_mismatch, "basis column length mismatch: " + path);
      b.components.col(c) = Eigen::Map<const Eigen::VectorXd>(cols[std::size_t(c)].data(), channels);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatErrc::bad_header, std::string("basis file: ") + e.what());
  }
  return b;
}

}  // namespace voxreg
