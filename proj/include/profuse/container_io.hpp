#pragma once

// Binary containers and the scene manifest.
//
// Tensor container ("PFTENSR1"), all integers little-endian:
//   offset 0   8 bytes   magic "PFTENSR1"
//   offset 8   u32       dtype code: 1 = f32, 2 = u16, 3 = u8
//   offset 12  u32       ndim
//   offset 16  u64[ndim] shape
//   then       payload   row-major, little-endian, prod(shape) * sizeof(dtype) bytes
//
// Record bundle ("PFBUNDL1") groups named tensors in one file:
//   8 bytes magic "PFBUNDL1", u32 record count, then per record:
//   u32 name length, name bytes (UTF-8), u64 blob length, blob (a tensor container).
//
// Warp coordinates are stored in destination pixel units where the center of
// pixel (x, y) is (x + 0.5, y + 0.5).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "profuse/types.hpp"

namespace profuse {

enum class DType : std::uint32_t { f32 = 1, u16 = 2, u8 = 3 };

std::size_t dtype_size(DType dtype);

struct Tensor {
  DType dtype = DType::f32;
  std::vector<std::uint64_t> shape;
  std::vector<std::byte> payload;  // little-endian element bytes

  std::uint64_t element_count() const;

  static Tensor from_f32(std::vector<std::uint64_t> shape, std::span<const float> values);
  static Tensor from_u16(std::vector<std::uint64_t> shape, std::span<const std::uint16_t> values);
  static Tensor from_u8(std::vector<std::uint64_t> shape, std::span<const std::uint8_t> values);

  std::vector<float> to_f32() const;
  std::vector<std::uint16_t> to_u16() const;
  std::vector<std::uint8_t> to_u8() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::vector<std::byte> encode_tensor(const Tensor& tensor);
/// `origin` names the data source in error messages.
Tensor decode_tensor(std::span<const std::byte> bytes, const std::string& origin);

void write_tensor(const std::filesystem::path& path, const Tensor& tensor);
void write_tensor(const std::filesystem::path& path, DType dtype, std::vector<std::uint64_t> shape,
                  std::span<const std::byte> payload);
Tensor read_tensor(const std::filesystem::path& path);

/// Ordered collection of named tensors.
class TensorBundle {
 public:
  void add(std::string name, Tensor tensor);
  bool contains(const std::string& name) const;
  /// Throws FormatError(schema) naming `name` when missing.
  const Tensor& get(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& records() const { return records_; }

  friend bool operator==(const TensorBundle&, const TensorBundle&) = default;

 private:
  std::vector<std::pair<std::string, Tensor>> records_;
};

std::vector<std::byte> encode_bundle(const TensorBundle& bundle);
TensorBundle decode_bundle(std::span<const std::byte> bytes, const std::string& origin);
void write_bundle(const std::filesystem::path& path, const TensorBundle& bundle);
TensorBundle read_bundle(const std::filesystem::path& path);

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes);

// Image-shaped helpers.
Tensor label_map_tensor(const LabelMap& labels);
LabelMap label_map_from(const Tensor& tensor, const std::string& origin);
Tensor mask_tensor(const BinaryMask& mask);
BinaryMask mask_from(const Tensor& tensor, const std::string& origin);
Tensor matrix_tensor(const RowMatrixf& m);
RowMatrixf matrix_from(const Tensor& tensor, const std::string& origin);

// Warp field files are bundles with "warp" f32 [2, H, W] and "confidence" f32 [H, W].
void save_warp(const std::filesystem::path& path, const WarpField& warp);
WarpField load_warp_file(const std::filesystem::path& path, ViewId src, ViewId dst);

struct WarpRef {
  ViewId src_view = 0;
  ViewId dst_view = 0;
  std::filesystem::path file;
};

WarpField load_warp(const WarpRef& ref);

struct Manifest {
  ViewSet views;
  std::vector<WarpRef> warps;
};

/// Parses and validates a manifest plus every per-view file it references.
/// Warp files are only checked for existence; load them with load_warp.
Manifest load_manifest(const std::filesystem::path& path);

/// Writes manifest.json and per-view files into `dir`. Warp files must
/// already exist at the paths named by `warps` (relative to `dir`).
void save_manifest(const std::filesystem::path& dir, const ViewSet& views, const std::vector<WarpRef>& warps);

// Gaussian scene files: bundle records positions/scales/rotations/opacities/colors,
// plus descriptors f32 [N, D] and labeled u8 [N] once registered.
TensorBundle scene_bundle(const GaussianScene& scene);
GaussianScene scene_from(const TensorBundle& bundle, const std::string& origin);
void save_scene(const std::filesystem::path& path, const GaussianScene& scene);
GaussianScene load_scene(const std::filesystem::path& path);

/// 64-bit FNV-1a over a byte range.
std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace profuse
