#include "profuse/container_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "profuse/errors.hpp"

namespace profuse {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kTensorMagic[8] = {'P', 'F', 'T', 'E', 'N', 'S', 'R', '1'};
constexpr char kBundleMagic[8] = {'P', 'F', 'B', 'U', 'N', 'D', 'L', '1'};

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFFu));
}
void put_u64(std::vector<std::byte>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFFu));
}

class Reader {
 public:
  Reader(std::span<const std::byte> bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

  bool has(std::size_t n) const { return pos_ + n <= bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

  std::span<const std::byte> take(std::size_t n, FormatError::Kind kind, const char* what) {
    if (!has(n)) throw FormatError(kind, origin_ + ": truncated " + what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32(FormatError::Kind kind, const char* what) {
    auto s = take(4, kind, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(s[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64(FormatError::Kind kind, const char* what) {
    auto s = take(8, kind, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(s[i]) << (8 * i);
    return v;
  }

 private:
  std::span<const std::byte> bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

std::uint64_t checked_count(const std::vector<std::uint64_t>& shape, const std::string& origin) {
  std::uint64_t n = 1;
  for (auto d : shape) {
    if (d != 0 && n > std::numeric_limits<std::uint64_t>::max() / d)
      throw FormatError(FormatError::Kind::length_mismatch, origin + ": shape overflows");
    n *= d;
  }
  return n;
}

void require_shape(const Tensor& t, DType dtype, std::size_t ndim, const std::string& origin) {
  if (t.dtype != dtype || t.shape.size() != ndim)
    throw FormatError(FormatError::Kind::schema,
                      origin + ": expected dtype " + std::to_string(static_cast<int>(dtype)) + " with " +
                          std::to_string(ndim) + " dimensions");
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

template <int R, int C>
Eigen::Matrix<double, R, C> matrix_from_json(const json& j, const std::string& what) {
  Eigen::Matrix<double, R, C> m;
  if (!j.is_array() || j.size() != R) throw ConfigError(what + ": expected " + std::to_string(R) + " rows");
  for (int r = 0; r < R; ++r) {
    if (!j[r].is_array() || j[r].size() != C) throw ConfigError(what + ": expected " + std::to_string(C) + " columns");
    for (int c = 0; c < C; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

}  // namespace

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::f32: return 4;
    case DType::u16: return 2;
    case DType::u8: return 1;
  }
  throw FormatError(FormatError::Kind::unknown_dtype, "unknown dtype");
}

std::uint64_t Tensor::element_count() const {
  std::uint64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor Tensor::from_f32(std::vector<std::uint64_t> shape, std::span<const float> values) {
  Tensor t{DType::f32, std::move(shape), {}};
  if (t.element_count() != values.size()) throw ConfigError("tensor shape does not match value count");
  t.payload.reserve(values.size() * 4);
  for (float v : values) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) t.payload.push_back(static_cast<std::byte>((bits >> (8 * i)) & 0xFFu));
  }
  return t;
}

Tensor Tensor::from_u16(std::vector<std::uint64_t> shape, std::span<const std::uint16_t> values) {
  Tensor t{DType::u16, std::move(shape), {}};
  if (t.element_count() != values.size()) throw ConfigError("tensor shape does not match value count");
  t.payload.reserve(values.size() * 2);
  for (auto v : values) {
    t.payload.push_back(static_cast<std::byte>(v & 0xFFu));
    t.payload.push_back(static_cast<std::byte>(v >> 8));
  }
  return t;
}

Tensor Tensor::from_u8(std::vector<std::uint64_t> shape, std::span<const std::uint8_t> values) {
  Tensor t{DType::u8, std::move(shape), {}};
  if (t.element_count() != values.size()) throw ConfigError("tensor shape does not match value count");
  t.payload.resize(values.size());
  std::memcpy(t.payload.data(), values.data(), values.size());
  return t;
}

std::vector<float> Tensor::to_f32() const {
  if (dtype != DType::f32) throw FormatError(FormatError::Kind::schema, "tensor is not f32");
  std::vector<float> out(payload.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(payload[4 * i + b]) << (8 * b);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

std::vector<std::uint16_t> Tensor::to_u16() const {
  if (dtype != DType::u16) throw FormatError(FormatError::Kind::schema, "tensor is not u16");
  std::vector<std::uint16_t> out(payload.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<std::uint16_t>(static_cast<unsigned>(payload[2 * i]) |
                                        (static_cast<unsigned>(payload[2 * i + 1]) << 8));
  return out;
}

std::vector<std::uint8_t> Tensor::to_u8() const {
  if (dtype != DType::u8) throw FormatError(FormatError::Kind::schema, "tensor is not u8");
  std::vector<std::uint8_t> out(payload.size());
  std::memcpy(out.data(), payload.data(), payload.size());
  return out;
}

std::vector<std::byte> encode_tensor(const Tensor& tensor) {
  const std::uint64_t expected = tensor.element_count() * dtype_size(tensor.dtype);
  if (expected != tensor.payload.size())
    throw ConfigError("tensor payload has " + std::to_string(tensor.payload.size()) + " bytes, shape requires " +
                      std::to_string(expected));
  std::vector<std::byte> out;
  out.reserve(16 + 8 * tensor.shape.size() + tensor.payload.size());
  for (char c : kTensorMagic) out.push_back(static_cast<std::byte>(c));
  put_u32(out, static_cast<std::uint32_t>(tensor.dtype));
  put_u32(out, static_cast<std::uint32_t>(tensor.shape.size()));
  for (auto d : tensor.shape) put_u64(out, d);
  out.insert(out.end(), tensor.payload.begin(), tensor.payload.end());
  return out;
}

Tensor decode_tensor(std::span<const std::byte> bytes, const std::string& origin) {
  Reader r(bytes, origin);
  auto magic = r.take(8, FormatError::Kind::bad_magic, "magic");
  if (std::memcmp(magic.data(), kTensorMagic, 8) != 0)
    throw FormatError(FormatError::Kind::bad_magic, origin + ": bad magic (not a PFTENSR1 tensor)");
  const std::uint32_t code = r.u32(FormatError::Kind::payload_short, "header");
  if (code < 1 || code > 3)
    throw FormatError(FormatError::Kind::unknown_dtype, origin + ": unknown dtype code " + std::to_string(code));
  Tensor t;
  t.dtype = static_cast<DType>(code);
  const std::uint32_t ndim = r.u32(FormatError::Kind::payload_short, "header");
  if (ndim > 16) throw FormatError(FormatError::Kind::length_mismatch, origin + ": implausible ndim");
  t.shape.resize(ndim);
  for (auto& d : t.shape) d = r.u64(FormatError::Kind::payload_short, "shape");
  const std::uint64_t count = checked_count(t.shape, origin);
  const std::uint64_t need = count * dtype_size(t.dtype);
  if (r.remaining() < need)
    throw FormatError(FormatError::Kind::payload_short, origin + ": payload short (" + std::to_string(r.remaining()) +
                                                            " of " + std::to_string(need) + " bytes)");
  if (r.remaining() > need)
    throw FormatError(FormatError::Kind::length_mismatch,
                      origin + ": " + std::to_string(r.remaining() - need) + " trailing bytes after payload");
  auto payload = r.take(need, FormatError::Kind::payload_short, "payload");
  t.payload.assign(payload.begin(), payload.end());
  return t;
}

std::vector<std::byte> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::byte> bytes(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size)))
    throw IoError("failed reading " + path.string());
  return bytes;
}

void write_file_bytes(const fs::path& path, std::span<const std::byte> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

void write_tensor(const fs::path& path, const Tensor& tensor) { write_file_bytes(path, encode_tensor(tensor)); }

void write_tensor(const fs::path& path, DType dtype, std::vector<std::uint64_t> shape,
                  std::span<const std::byte> payload) {
  Tensor t{dtype, std::move(shape), std::vector<std::byte>(payload.begin(), payload.end())};
  write_tensor(path, t);
}

Tensor read_tensor(const fs::path& path) { return decode_tensor(read_file_bytes(path), path.string()); }

void TensorBundle::add(std::string name, Tensor tensor) {
  for (auto& [n, t] : records_)
    if (n == name) {
      t = std::move(tensor);
      return;
    }
  records_.emplace_back(std::move(name), std::move(tensor));
}

bool TensorBundle::contains(const std::string& name) const {
  for (const auto& [n, t] : records_)
    if (n == name) return true;
  return false;
}

const Tensor& TensorBundle::get(const std::string& name) const {
  for (const auto& [n, t] : records_)
    if (n == name) return t;
  throw FormatError(FormatError::Kind::schema, "missing record '" + name + "'");
}

std::vector<std::byte> encode_bundle(const TensorBundle& bundle) {
  std::vector<std::byte> out;
  for (char c : kBundleMagic) out.push_back(static_cast<std::byte>(c));
  put_u32(out, static_cast<std::uint32_t>(bundle.records().size()));
  for (const auto& [name, tensor] : bundle.records()) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    for (char c : name) out.push_back(static_cast<std::byte>(c));
    const auto blob = encode_tensor(tensor);
    put_u64(out, blob.size());
    out.insert(out.end(), blob.begin(), blob.end());
  }
  return out;
}

TensorBundle decode_bundle(std::span<const std::byte> bytes, const std::string& origin) {
  Reader r(bytes, origin);
  auto magic = r.take(8, FormatError::Kind::bad_magic, "magic");
  if (std::memcmp(magic.data(), kBundleMagic, 8) != 0)
    throw FormatError(FormatError::Kind::bad_magic, origin + ": bad magic (not a PFBUNDL1 record file)");
  const std::uint32_t count = r.u32(FormatError::Kind::payload_short, "record count");
  TensorBundle bundle;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32(FormatError::Kind::payload_short, "record name length");
    auto name_bytes = r.take(name_len, FormatError::Kind::payload_short, "record name");
    std::string name(reinterpret_cast<const char*>(name_bytes.data()), name_bytes.size());
    const std::uint64_t blob_len = r.u64(FormatError::Kind::payload_short, "record length");
    if (!r.has(blob_len))
      throw FormatError(FormatError::Kind::payload_short, origin + ": payload short in record '" + name + "'");
    auto blob = r.take(static_cast<std::size_t>(blob_len), FormatError::Kind::payload_short, "record");
    bundle.add(name, decode_tensor(blob, origin + ":" + name));
  }
  if (r.remaining() != 0)
    throw FormatError(FormatError::Kind::length_mismatch, origin + ": trailing bytes after last record");
  return bundle;
}

void write_bundle(const fs::path& path, const TensorBundle& bundle) { write_file_bytes(path, encode_bundle(bundle)); }

TensorBundle read_bundle(const fs::path& path) { return decode_bundle(read_file_bytes(path), path.string()); }

Tensor label_map_tensor(const LabelMap& labels) {
  return Tensor::from_u16({static_cast<std::uint64_t>(labels.height()), static_cast<std::uint64_t>(labels.width())},
                          labels.data());
}

LabelMap label_map_from(const Tensor& tensor, const std::string& origin) {
  require_shape(tensor, DType::u16, 2, origin);
  LabelMap out(static_cast<int>(tensor.shape[1]), static_cast<int>(tensor.shape[0]));
  out.storage() = tensor.to_u16();
  return out;
}

Tensor mask_tensor(const BinaryMask& mask) {
  return Tensor::from_u8({static_cast<std::uint64_t>(mask.height()), static_cast<std::uint64_t>(mask.width())},
                         mask.data());
}

BinaryMask mask_from(const Tensor& tensor, const std::string& origin) {
  require_shape(tensor, DType::u8, 2, origin);
  BinaryMask out(static_cast<int>(tensor.shape[1]), static_cast<int>(tensor.shape[0]));
  out.storage() = tensor.to_u8();
  return out;
}

Tensor matrix_tensor(const RowMatrixf& m) {
  return Tensor::from_f32({static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())},
                          std::span<const float>(m.data(), static_cast<std::size_t>(m.size())));
}

RowMatrixf matrix_from(const Tensor& tensor, const std::string& origin) {
  require_shape(tensor, DType::f32, 2, origin);
  RowMatrixf m(static_cast<Eigen::Index>(tensor.shape[0]), static_cast<Eigen::Index>(tensor.shape[1]));
  const auto values = tensor.to_f32();
  std::copy(values.begin(), values.end(), m.data());
  return m;
}

void save_warp(const fs::path& path, const WarpField& warp) {
  const auto h = static_cast<std::uint64_t>(warp.height());
  const auto w = static_cast<std::uint64_t>(warp.width());
  std::vector<float> planes;
  planes.reserve(2 * warp.confidence.size());
  planes.insert(planes.end(), warp.warp_x.data().begin(), warp.warp_x.data().end());
  planes.insert(planes.end(), warp.warp_y.data().begin(), warp.warp_y.data().end());
  TensorBundle b;
  b.add("warp", Tensor::from_f32({2, h, w}, planes));
  b.add("confidence", Tensor::from_f32({h, w}, warp.confidence.data()));
  write_bundle(path, b);
}

WarpField load_warp_file(const fs::path& path, ViewId src, ViewId dst) {
  const auto origin = path.string();
  const TensorBundle b = read_bundle(path);
  const Tensor& wt = b.get("warp");
  const Tensor& ct = b.get("confidence");
  require_shape(wt, DType::f32, 3, origin + ":warp");
  require_shape(ct, DType::f32, 2, origin + ":confidence");
  if (wt.shape[0] != 2 || wt.shape[1] != ct.shape[0] || wt.shape[2] != ct.shape[1])
    throw FormatError(FormatError::Kind::schema, origin + ": warp and confidence shapes disagree");
  const int h = static_cast<int>(ct.shape[0]);
  const int w = static_cast<int>(ct.shape[1]);
  WarpField field;
  field.src_view = src;
  field.dst_view = dst;
  field.warp_x = Grid2D<float>(w, h);
  field.warp_y = Grid2D<float>(w, h);
  field.confidence = Grid2D<float>(w, h);
  const auto planes = wt.to_f32();
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  std::copy(planes.begin(), planes.begin() + static_cast<std::ptrdiff_t>(n), field.warp_x.storage().begin());
  std::copy(planes.begin() + static_cast<std::ptrdiff_t>(n), planes.end(), field.warp_y.storage().begin());
  field.confidence.storage() = ct.to_f32();
  for (float c : field.confidence.data())
    if (!(c >= 0.0f && c <= 1.0f)) throw FormatError(FormatError::Kind::schema, origin + ": confidence outside [0, 1]");
  for (float v : planes)
    if (!std::isfinite(v)) throw FormatError(FormatError::Kind::schema, origin + ": non-finite warp coordinate");
  return field;
}

WarpField load_warp(const WarpRef& ref) { return load_warp_file(ref.file, ref.src_view, ref.dst_view); }

Manifest load_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing file: " + path.string());
  json doc;
  try {
    std::ifstream in(path);
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& rel) {
    fs::path p = base / rel;
    if (!fs::exists(p)) throw IoError("missing file: " + p.string());
    return p;
  };

  Manifest m;
  try {
    m.views.descriptor_dim = doc.at("descriptor_dim").get<int>();
    if (m.views.descriptor_dim < 1) throw ConfigError("descriptor_dim must be positive");
    for (const auto& jv : doc.at("views")) {
      View v;
      v.id = jv.at("id").get<ViewId>();
      for (const auto& other : m.views.views)
        if (other.id == v.id) throw ConfigError("duplicate view id " + std::to_string(v.id));
      v.camera.width = jv.at("width").get<int>();
      v.camera.height = jv.at("height").get<int>();
      v.camera.intrinsics = matrix_from_json<3, 3>(jv.at("intrinsics"), "intrinsics");
      v.camera.world_to_camera = matrix_from_json<4, 4>(jv.at("world_to_camera"), "world_to_camera");
      if (auto issues = v.camera.validate(); !issues.empty())
        throw ConfigError("view " + std::to_string(v.id) + ": " + issues.front());

      const fs::path mask_path = resolve(jv.at("masks").get<std::string>());
      const fs::path emb_path = resolve(jv.at("embeddings").get<std::string>());
      v.masks.view_id = v.id;
      v.masks.labels = label_map_from(read_tensor(mask_path), mask_path.string());
      if (v.masks.labels.width() != v.camera.width || v.masks.labels.height() != v.camera.height)
        throw ConfigError("view " + std::to_string(v.id) + ": mask image size differs from camera image size");
      v.masks.embeddings = matrix_from(read_tensor(emb_path), emb_path.string());
      if (v.masks.embeddings.cols() != m.views.descriptor_dim)
        throw ConfigError("view " + std::to_string(v.id) + ": dimension mismatch, embeddings have D=" +
                          std::to_string(v.masks.embeddings.cols()) + " but manifest declares D=" +
                          std::to_string(m.views.descriptor_dim));
      check_mask_set(v.masks, m.views.descriptor_dim);

      if (jv.contains("colors")) {
        const fs::path color_path = resolve(jv.at("colors").get<std::string>());
        const Tensor t = read_tensor(color_path);
        require_shape(t, DType::u8, 3, color_path.string());
        if (t.shape[0] != static_cast<std::uint64_t>(v.camera.height) ||
            t.shape[1] != static_cast<std::uint64_t>(v.camera.width) || t.shape[2] != 3)
          throw ConfigError("view " + std::to_string(v.id) + ": color image size differs from camera image size");
        const auto bytes = t.to_u8();
        v.colors = ColorImage(v.camera.width, v.camera.height);
        for (std::size_t i = 0; i < v.colors.size(); ++i)
          v.colors[i] = {bytes[3 * i], bytes[3 * i + 1], bytes[3 * i + 2]};
      }
      m.views.views.push_back(std::move(v));
    }
    if (doc.contains("warps")) {
      for (const auto& jw : doc.at("warps")) {
        WarpRef ref;
        ref.src_view = jw.at("src").get<ViewId>();
        ref.dst_view = jw.at("dst").get<ViewId>();
        m.views.index_of(ref.src_view);
        m.views.index_of(ref.dst_view);
        if (ref.src_view == ref.dst_view) throw ConfigError("warp maps a view onto itself");
        ref.file = resolve(jw.at("file").get<std::string>());
        m.warps.push_back(std::move(ref));
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return m;
}

void save_manifest(const fs::path& dir, const ViewSet& views, const std::vector<WarpRef>& warps) {
  fs::create_directories(dir);
  json doc;
  doc["format"] = "profuse.manifest";
  doc["version"] = 1;
  doc["descriptor_dim"] = views.descriptor_dim;
  json jviews = json::array();
  for (const auto& v : views.views) {
    const std::string stem = "view_" + std::to_string(v.id);
    write_tensor(dir / (stem + "_masks.pf"), label_map_tensor(v.masks.labels));
    RowMatrixf emb = v.masks.embeddings;
    if (emb.rows() == 0) emb.resize(0, views.descriptor_dim);
    write_tensor(dir / (stem + "_embeddings.pf"), matrix_tensor(emb));
    json jv;
    jv["id"] = v.id;
    jv["width"] = v.camera.width;
    jv["height"] = v.camera.height;
    jv["intrinsics"] = matrix_json(v.camera.intrinsics);
    jv["world_to_camera"] = matrix_json(v.camera.world_to_camera);
    jv["masks"] = stem + "_masks.pf";
    jv["embeddings"] = stem + "_embeddings.pf";
    if (!v.colors.empty()) {
      std::vector<std::uint8_t> bytes;
      bytes.reserve(v.colors.size() * 3);
      for (const auto& c : v.colors.data()) bytes.insert(bytes.end(), c.begin(), c.end());
      write_tensor(dir / (stem + "_colors.pf"),
                   Tensor::from_u8({static_cast<std::uint64_t>(v.colors.height()),
                                    static_cast<std::uint64_t>(v.colors.width()), 3},
                                   bytes));
      jv["colors"] = stem + "_colors.pf";
    }
    jviews.push_back(std::move(jv));
  }
  doc["views"] = std::move(jviews);
  json jwarps = json::array();
  for (const auto& w : warps) {
    json jw;
    jw["src"] = w.src_view;
    jw["dst"] = w.dst_view;
    jw["file"] = w.file.generic_string();
    jwarps.push_back(std::move(jw));
  }
  doc["warps"] = std::move(jwarps);
  const std::string text = doc.dump(2) + "\n";
  write_file_bytes(dir / "manifest.json",
                   std::span<const std::byte>(reinterpret_cast<const std::byte*>(text.data()), text.size()));
}

TensorBundle scene_bundle(const GaussianScene& scene) {
  const auto n = static_cast<std::uint64_t>(scene.size());
  std::vector<float> pos, scl, rot, opa, col;
  pos.reserve(3 * n);
  scl.reserve(3 * n);
  rot.reserve(4 * n);
  opa.reserve(n);
  col.reserve(3 * n);
  for (const auto& g : scene.gaussians) {
    pos.insert(pos.end(), {g.position.x(), g.position.y(), g.position.z()});
    scl.insert(scl.end(), {g.scale.x(), g.scale.y(), g.scale.z()});
    rot.insert(rot.end(), {g.rotation.w(), g.rotation.x(), g.rotation.y(), g.rotation.z()});
    opa.push_back(g.opacity);
    col.insert(col.end(), {g.color.x(), g.color.y(), g.color.z()});
  }
  TensorBundle b;
  b.add("positions", Tensor::from_f32({n, 3}, pos));
  b.add("scales", Tensor::from_f32({n, 3}, scl));
  b.add("rotations", Tensor::from_f32({n, 4}, rot));
  b.add("opacities", Tensor::from_f32({n}, opa));
  b.add("colors", Tensor::from_f32({n, 3}, col));
  if (scene.descriptors) {
    b.add("descriptors", matrix_tensor(*scene.descriptors));
    std::vector<std::uint8_t> labeled = scene.labeled;
    if (labeled.empty()) labeled.assign(scene.size(), 1);
    b.add("labeled", Tensor::from_u8({n}, labeled));
  }
  return b;
}

GaussianScene scene_from(const TensorBundle& b, const std::string& origin) {
  const Tensor& tp = b.get("positions");
  require_shape(tp, DType::f32, 2, origin + ":positions");
  const auto n = tp.shape[0];
  auto fetch = [&](const char* name, std::vector<std::uint64_t> shape) {
    const Tensor& t = b.get(name);
    if (t.dtype != DType::f32 || t.shape != shape)
      throw FormatError(FormatError::Kind::schema, origin + ": record '" + name + "' has unexpected shape");
    return t.to_f32();
  };
  const auto pos = fetch("positions", {n, 3});
  const auto scl = fetch("scales", {n, 3});
  const auto rot = fetch("rotations", {n, 4});
  const auto opa = fetch("opacities", {n});
  const auto col = fetch("colors", {n, 3});
  GaussianScene scene;
  scene.gaussians.resize(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < scene.gaussians.size(); ++i) {
    Gaussian& g = scene.gaussians[i];
    g.position = {pos[3 * i], pos[3 * i + 1], pos[3 * i + 2]};
    g.scale = {scl[3 * i], scl[3 * i + 1], scl[3 * i + 2]};
    g.rotation = Eigen::Quaternionf(rot[4 * i], rot[4 * i + 1], rot[4 * i + 2], rot[4 * i + 3]);
    g.opacity = opa[i];
    g.color = {col[3 * i], col[3 * i + 1], col[3 * i + 2]};
  }
  if (b.contains("descriptors")) {
    RowMatrixf d = matrix_from(b.get("descriptors"), origin + ":descriptors");
    if (static_cast<std::uint64_t>(d.rows()) != n)
      throw FormatError(FormatError::Kind::schema, origin + ": descriptor count differs from gaussian count");
    scene.descriptor_dim = static_cast<int>(d.cols());
    scene.descriptors = std::move(d);
    const Tensor& tl = b.get("labeled");
    if (tl.dtype != DType::u8 || tl.shape != std::vector<std::uint64_t>{n})
      throw FormatError(FormatError::Kind::schema, origin + ": record 'labeled' has unexpected shape");
    scene.labeled = tl.to_u8();
  }
  return scene;
}

void save_scene(const fs::path& path, const GaussianScene& scene) { write_bundle(path, scene_bundle(scene)); }

GaussianScene load_scene(const fs::path& path) { return scene_from(read_bundle(path), path.string()); }

std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (auto b : bytes) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace profuse
