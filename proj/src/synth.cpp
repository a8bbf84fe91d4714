#include "profuse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <json.hpp>

#include "profuse/errors.hpp"
#include "profuse/parallel.hpp"

namespace profuse {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr float kNaN = std::numeric_limits<float>::quiet_NaN();

const char* kind_name(ObjectKind k) {
  switch (k) {
    case ObjectKind::sphere: return "sphere";
    case ObjectKind::box: return "box";
    case ObjectKind::mixed: return "mixed";
  }
  return "sphere";
}

ObjectKind kind_from(const std::string& s) {
  if (s == "sphere") return ObjectKind::sphere;
  if (s == "box") return ObjectKind::box;
  if (s == "mixed") return ObjectKind::mixed;
  throw ConfigError("unknown object_kind '" + s + "'");
}

struct Hit {
  int object = -1;
  double t = std::numeric_limits<double>::infinity();
};

Hit cast_ray(const std::vector<SynthObject>& objects, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) {
  Hit best;
  for (std::size_t o = 0; o < objects.size(); ++o) {
    if (auto t = objects[o].intersect(origin, dir); t && *t < best.t) {
      best.t = *t;
      best.object = static_cast<int>(o);
    }
  }
  return best;
}

std::vector<SynthObject> place_objects(const SynthSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double disk = 0.35 * std::sqrt(static_cast<double>(spec.object_count)) + 0.35;
  std::vector<SynthObject> objects;
  for (int o = 0; o < spec.object_count; ++o) {
    SynthObject obj;
    obj.kind = spec.object_kind == ObjectKind::mixed ? (o % 2 == 0 ? ObjectKind::sphere : ObjectKind::box)
                                                     : spec.object_kind;
    if (obj.kind == ObjectKind::sphere) {
      obj.half_extent = Eigen::Vector3d::Constant(0.2 + 0.15 * unit(rng));
    } else {
      obj.half_extent = {0.15 + 0.13 * unit(rng), 0.15 + 0.13 * unit(rng), 0.15 + 0.13 * unit(rng)};
    }
    obj.color = {static_cast<float>(0.2 + 0.8 * unit(rng)), static_cast<float>(0.2 + 0.8 * unit(rng)),
                 static_cast<float>(0.2 + 0.8 * unit(rng))};
    bool placed = false;
    for (int attempt = 0; attempt < 5000 && !placed; ++attempt) {
      const double r = disk * std::sqrt(unit(rng));
      const double a = 2.0 * std::numbers::pi * unit(rng);
      obj.center = {r * std::cos(a), r * std::sin(a), obj.half_extent.z()};
      placed = std::all_of(objects.begin(), objects.end(), [&](const SynthObject& other) {
        const double d = (other.center - obj.center).head<2>().norm();
        return d > other.bounding_radius() + obj.bounding_radius() + 0.08;
      });
    }
    if (!placed) throw ConfigError("cannot place " + std::to_string(spec.object_count) + " non-overlapping objects");
    objects.push_back(obj);
  }
  return objects;
}

RowMatrixf object_embeddings(const SynthSpec& spec, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrixf e(spec.object_count, spec.descriptor_dim);
  for (int o = 0; o < spec.object_count; ++o) {
    for (int attempt = 0;; ++attempt) {
      Eigen::VectorXd v(spec.descriptor_dim);
      for (int d = 0; d < spec.descriptor_dim; ++d) v[d] = normal(rng);
      v.normalize();
      bool distinct = true;
      for (int p = 0; p < o; ++p) distinct &= e.row(p).cast<double>().dot(v) < 0.99;
      if (distinct || attempt > 1000) {
        e.row(o) = v.cast<float>().transpose();
        break;
      }
    }
  }
  return e;
}

std::vector<Camera> place_cameras(const SynthSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double phase = 2.0 * std::numbers::pi * unit(rng);
  const double spacing = spec.view_count == 2 ? std::numbers::pi / 2.0
                                              : 2.0 * std::numbers::pi / spec.view_count;
  std::vector<Camera> cams;
  for (int v = 0; v < spec.view_count; ++v) {
    const double theta = phase + spacing * v + 0.3 * (unit(rng) - 0.5);
    const double elev = (spec.camera_elevation_deg + 10.0 * (unit(rng) - 0.5)) * std::numbers::pi / 180.0;
    const double r = spec.camera_radius * (0.95 + 0.1 * unit(rng));
    const Eigen::Vector3d eye(r * std::cos(elev) * std::cos(theta), r * std::cos(elev) * std::sin(theta),
                              r * std::sin(elev));
    cams.push_back(Camera::look_at(eye, {0.0, 0.0, 0.15}, {0.0, 0.0, 1.0}, spec.focal_scale * spec.width,
                                   spec.width, spec.height));
  }
  return cams;
}

// All centers on one line that also passes through an object.
bool degenerate_layout(const std::vector<Camera>& cams, const std::vector<SynthObject>& objects) {
  const Eigen::Vector3d a = cams.front().center();
  const Eigen::Vector3d b = cams.back().center();
  const Eigen::Vector3d dir = (b - a).normalized();
  for (const auto& c : cams)
    if ((c.center() - a).cross(dir).norm() > 1e-6) return false;
  return std::any_of(objects.begin(), objects.end(), [&](const SynthObject& o) {
    return (o.center - a).cross(dir).norm() <= o.bounding_radius();
  });
}

void render_view(const SynthSpec& spec, const std::vector<SynthObject>& objects, const RowMatrixf& embeddings,
                 std::uint64_t stream_seed, View& view, ViewTruth& truth) {
  const Camera& cam = view.camera;
  const Eigen::Vector3d origin = cam.center();
  truth.object_map = LabelMap(cam.width, cam.height, 0);
  truth.surface = Grid2D<Eigen::Vector3f>(cam.width, cam.height, Eigen::Vector3f::Constant(kNaN));
  view.colors = ColorImage(cam.width, cam.height, {0, 0, 0});
  std::vector<int> pixel_count(objects.size(), 0);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const Eigen::Vector3d dir = cam.ray_direction({x + 0.5, y + 0.5});
      const Hit hit = cast_ray(objects, origin, dir);
      if (hit.object < 0) continue;
      truth.object_map(x, y) = static_cast<std::uint16_t>(hit.object + 1);
      truth.surface(x, y) = (origin + hit.t * dir).cast<float>();
      const Eigen::Vector3f c = objects[static_cast<std::size_t>(hit.object)].color * 255.0f;
      view.colors(x, y) = {static_cast<std::uint8_t>(std::lround(c.x())), static_cast<std::uint8_t>(std::lround(c.y())),
                           static_cast<std::uint8_t>(std::lround(c.z()))};
      ++pixel_count[static_cast<std::size_t>(hit.object)];
    }
  }

  std::mt19937_64 rng(stream_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::uint16_t> mask_of(objects.size(), 0);
  truth.mask_object = {-1};
  std::vector<Eigen::VectorXf> rows;
  for (std::size_t o = 0; o < objects.size(); ++o) {
    const bool dropped = unit(rng) < spec.mask_dropout;
    Eigen::VectorXd noise(spec.descriptor_dim);
    for (int d = 0; d < spec.descriptor_dim; ++d) noise[d] = normal(rng);
    if (dropped || pixel_count[o] < spec.min_mask_pixels) continue;
    Eigen::VectorXd e = embeddings.row(static_cast<Eigen::Index>(o)).cast<double>().transpose() +
                        spec.embedding_noise * noise;
    rows.push_back(e.normalized().cast<float>());
    truth.mask_object.push_back(static_cast<int>(o));
    mask_of[o] = static_cast<std::uint16_t>(truth.mask_object.size() - 1);
  }
  view.masks.view_id = view.id;
  view.masks.labels = LabelMap(cam.width, cam.height, 0);
  for (std::size_t i = 0; i < truth.object_map.size(); ++i)
    if (auto obj = truth.object_map[i]; obj > 0) view.masks.labels[i] = mask_of[obj - 1u];
  view.masks.embeddings.resize(static_cast<Eigen::Index>(rows.size()), spec.descriptor_dim);
  for (std::size_t k = 0; k < rows.size(); ++k) view.masks.embeddings.row(static_cast<Eigen::Index>(k)) = rows[k];
}

WarpField make_warp(const SynthSpec& spec, const std::vector<SynthObject>& objects, const View& src,
                    const ViewTruth& src_truth, const View& dst, std::uint64_t stream_seed) {
  const int w = src.camera.width;
  const int h = src.camera.height;
  WarpField field;
  field.src_view = src.id;
  field.dst_view = dst.id;
  field.warp_x = Grid2D<float>(w, h);
  field.warp_y = Grid2D<float>(w, h);
  field.confidence = Grid2D<float>(w, h, 0.0f);
  std::mt19937_64 rng(stream_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Vector3d dst_center = dst.camera.center();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double jx = normal(rng);
      const double jy = normal(rng);
      const double corrupt = unit(rng);
      const double corrupt_value = unit(rng);
      double u = x + 0.5;
      double v = y + 0.5;
      double conf = 0.0;
      if (src_truth.object_map(x, y) > 0) {
        // Recompute the exact hit instead of using the float copy.
        const Eigen::Vector3d dir = src.camera.ray_direction({x + 0.5, y + 0.5});
        const Hit hit = cast_ray(objects, src.camera.center(), dir);
        const Eigen::Vector3d point = src.camera.center() + hit.t * dir;
        const Eigen::Vector3d in_dst = dst.camera.to_camera(point);
        if (in_dst.z() > 1e-9) {
          const Eigen::Vector2d pix = dst.camera.project(point);
          u = pix.x();
          v = pix.y();
          if (dst.camera.in_image(pix)) {
            const Eigen::Vector3d to_point = point - dst_center;
            const double dist = to_point.norm();
            const Hit seen = cast_ray(objects, dst_center, to_point / dist);
            if (seen.t >= dist - 1e-4) {
              conf = 1.0;
              u += spec.warp_jitter * jx;
              v += spec.warp_jitter * jy;
            }
          }
        }
      }
      if (corrupt < spec.confidence_corruption) conf = corrupt_value;
      field.warp_x(x, y) = static_cast<float>(u);
      field.warp_y(x, y) = static_cast<float>(v);
      field.confidence(x, y) = static_cast<float>(conf);
    }
  }
  return field;
}

json spec_json(const SynthSpec& s) {
  return json{{"object_count", s.object_count},
              {"object_kind", kind_name(s.object_kind)},
              {"descriptor_dim", s.descriptor_dim},
              {"view_count", s.view_count},
              {"width", s.width},
              {"height", s.height},
              {"focal_scale", s.focal_scale},
              {"camera_radius", s.camera_radius},
              {"camera_elevation_deg", s.camera_elevation_deg},
              {"warp_jitter", s.warp_jitter},
              {"confidence_corruption", s.confidence_corruption},
              {"mask_dropout", s.mask_dropout},
              {"embedding_noise", s.embedding_noise},
              {"min_mask_pixels", s.min_mask_pixels},
              {"neighbors_k", s.neighbors_k},
              {"neighbor_lambda", s.neighbor_lambda},
              {"seed", s.seed}};
}

}  // namespace

void SynthSpec::check() const {
  if (object_count < 1) throw ConfigError("object_count must be >= 1");
  if (view_count < 2) throw ConfigError("view_count must be >= 2");
  if (descriptor_dim < 2) throw ConfigError("descriptor_dim must be >= 2");
  if (width < 1 || height < 1) throw ConfigError("image size must be positive");
  if (!(focal_scale > 0.0) || !(camera_radius > 0.0)) throw ConfigError("camera parameters must be positive");
  if (warp_jitter < 0.0 || confidence_corruption < 0.0 || mask_dropout < 0.0 || embedding_noise < 0.0)
    throw ConfigError("noise parameters must be non-negative");
  if (neighbors_k < 1) throw ConfigError("neighbors_k must be >= 1");
  if (min_mask_pixels < 1) throw ConfigError("min_mask_pixels must be >= 1");
}

SynthSpec synth_spec_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synth spec: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("synth spec must be a JSON object");
  SynthSpec s;
  const json defaults = spec_json(s);
  for (const auto& [key, value] : doc.items())
    if (!defaults.contains(key)) throw ConfigError("synth spec: unknown key '" + key + "'");
  try {
    auto get = [&](const char* key, auto& field) {
      if (doc.contains(key)) field = doc.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("object_count", s.object_count);
    if (doc.contains("object_kind")) s.object_kind = kind_from(doc.at("object_kind").get<std::string>());
    get("descriptor_dim", s.descriptor_dim);
    get("view_count", s.view_count);
    get("width", s.width);
    get("height", s.height);
    get("focal_scale", s.focal_scale);
    get("camera_radius", s.camera_radius);
    get("camera_elevation_deg", s.camera_elevation_deg);
    get("warp_jitter", s.warp_jitter);
    get("confidence_corruption", s.confidence_corruption);
    get("mask_dropout", s.mask_dropout);
    get("embedding_noise", s.embedding_noise);
    get("min_mask_pixels", s.min_mask_pixels);
    get("neighbors_k", s.neighbors_k);
    get("neighbor_lambda", s.neighbor_lambda);
    get("seed", s.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synth spec: ") + e.what());
  }
  s.check();
  return s;
}

std::string synth_spec_to_json(const SynthSpec& spec) { return spec_json(spec).dump(2); }

std::optional<double> SynthObject::intersect(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) const {
  if (kind == ObjectKind::box) {
    double t_near = -std::numeric_limits<double>::infinity();
    double t_far = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
      const double lo = center[a] - half_extent[a];
      const double hi = center[a] + half_extent[a];
      if (std::abs(dir[a]) < 1e-15) {
        if (origin[a] < lo || origin[a] > hi) return std::nullopt;
        continue;
      }
      double t0 = (lo - origin[a]) / dir[a];
      double t1 = (hi - origin[a]) / dir[a];
      if (t0 > t1) std::swap(t0, t1);
      t_near = std::max(t_near, t0);
      t_far = std::min(t_far, t1);
    }
    if (t_near > t_far || t_far <= 0.0) return std::nullopt;
    return t_near > 0.0 ? t_near : t_far;
  }
  const double r = half_extent.x();
  const Eigen::Vector3d oc = origin - center;
  const double b = oc.dot(dir);
  const double c = oc.squaredNorm() - r * r;
  const double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  const double s = std::sqrt(disc);
  const double t0 = -b - s;
  const double t1 = -b + s;
  if (t0 > 0.0) return t0;
  if (t1 > 0.0) return t1;
  return std::nullopt;
}

double SynthObject::signed_distance(const Eigen::Vector3d& p) const {
  if (kind == ObjectKind::box) {
    const Eigen::Vector3d q = (p - center).cwiseAbs() - half_extent;
    return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
  }
  return (p - center).norm() - half_extent.x();
}

double SynthObject::bounding_radius() const {
  return kind == ObjectKind::box ? half_extent.norm() : half_extent.x();
}

int GroundTruth::nearest_object(const Eigen::Vector3d& p) const {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t o = 0; o < objects.size(); ++o) {
    const double d = std::abs(objects[o].signed_distance(p));
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(o);
    }
  }
  return best;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

SynthScene generate(const SynthSpec& spec) {
  spec.check();
  SynthScene scene;
  scene.spec = spec;
  std::vector<Camera> cams;
  std::vector<SynthObject> objects;
  RowMatrixf embeddings;
  std::uint64_t layout_seed = spec.seed;
  for (int attempt = 0;; ++attempt) {
    layout_seed = attempt == 0 ? spec.seed : mix_seed(spec.seed, static_cast<std::uint64_t>(attempt));
    std::mt19937_64 rng(layout_seed);
    objects = place_objects(spec, rng);
    embeddings = object_embeddings(spec, rng);
    cams = place_cameras(spec, rng);
    if (!degenerate_layout(cams, objects)) break;
    ++scene.regenerations;
    if (attempt > 100) throw ConfigError("could not find a non-degenerate camera layout");
  }

  scene.views.descriptor_dim = spec.descriptor_dim;
  scene.views.views.resize(cams.size());
  scene.truth.objects = objects;
  scene.truth.object_embeddings = embeddings;
  scene.truth.views.resize(cams.size());
  for (std::size_t v = 0; v < cams.size(); ++v) {
    scene.views.views[v].id = static_cast<ViewId>(v);
    scene.views.views[v].camera = cams[v];
  }
  parallel_for(0, cams.size(), [&](std::size_t v) {
    render_view(spec, objects, embeddings, mix_seed(layout_seed, 1000 + v), scene.views.views[v],
                scene.truth.views[v]);
  });

  std::vector<std::pair<std::size_t, std::size_t>> directed;
  for (auto [a, b] : neighbor_pairs(cams, std::min(spec.neighbors_k, spec.view_count - 1), spec.neighbor_lambda)) {
    directed.emplace_back(a, b);
    directed.emplace_back(b, a);
  }
  scene.warps.resize(directed.size());
  parallel_for(0, directed.size(), [&](std::size_t i) {
    const auto [s, d] = directed[i];
    scene.warps[i] = make_warp(spec, objects, scene.views.views[s], scene.truth.views[s], scene.views.views[d],
                               mix_seed(layout_seed, 100000 + s * 1000 + d));
  });
  return scene;
}

void save_ground_truth(const fs::path& path, const GroundTruth& truth, const ViewSet& views) {
  TensorBundle b;
  std::vector<float> obj;
  for (const auto& o : truth.objects) {
    obj.insert(obj.end(), {static_cast<float>(o.kind), static_cast<float>(o.center.x()),
                           static_cast<float>(o.center.y()), static_cast<float>(o.center.z()),
                           static_cast<float>(o.half_extent.x()), static_cast<float>(o.half_extent.y()),
                           static_cast<float>(o.half_extent.z()), o.color.x(), o.color.y(), o.color.z()});
  }
  b.add("objects", Tensor::from_f32({truth.objects.size(), 10}, obj));
  b.add("object_embeddings", matrix_tensor(truth.object_embeddings));
  for (std::size_t v = 0; v < truth.views.size(); ++v) {
    const auto id = std::to_string(views.views[v].id);
    const ViewTruth& vt = truth.views[v];
    b.add("object_map/" + id, label_map_tensor(vt.object_map));
    std::vector<float> surf;
    surf.reserve(vt.surface.size() * 3);
    for (const auto& p : vt.surface.data()) surf.insert(surf.end(), {p.x(), p.y(), p.z()});
    b.add("surface/" + id, Tensor::from_f32({static_cast<std::uint64_t>(vt.surface.height()),
                                             static_cast<std::uint64_t>(vt.surface.width()), 3},
                                            surf));
    std::vector<std::uint16_t> mo;
    for (int o : vt.mask_object) mo.push_back(static_cast<std::uint16_t>(o + 1));
    b.add("mask_object/" + id, Tensor::from_u16({mo.size()}, mo));
  }
  write_bundle(path, b);
}

GroundTruth load_ground_truth(const fs::path& path, const ViewSet& views) {
  const auto origin = path.string();
  const TensorBundle b = read_bundle(path);
  GroundTruth truth;
  const Tensor& to = b.get("objects");
  if (to.dtype != DType::f32 || to.shape.size() != 2 || to.shape[1] != 10)
    throw FormatError(FormatError::Kind::schema, origin + ": bad objects record");
  const auto obj = to.to_f32();
  for (std::size_t o = 0; o < to.shape[0]; ++o) {
    const float* r = obj.data() + 10 * o;
    SynthObject so;
    so.kind = static_cast<ObjectKind>(static_cast<int>(r[0]));
    so.center = {r[1], r[2], r[3]};
    so.half_extent = {r[4], r[5], r[6]};
    so.color = {r[7], r[8], r[9]};
    truth.objects.push_back(so);
  }
  truth.object_embeddings = matrix_from(b.get("object_embeddings"), origin);
  for (const auto& view : views.views) {
    const auto id = std::to_string(view.id);
    ViewTruth vt;
    vt.object_map = label_map_from(b.get("object_map/" + id), origin);
    const Tensor& ts = b.get("surface/" + id);
    const auto surf = ts.to_f32();
    vt.surface = Grid2D<Eigen::Vector3f>(vt.object_map.width(), vt.object_map.height());
    if (surf.size() != vt.surface.size() * 3)
      throw FormatError(FormatError::Kind::schema, origin + ": surface record size mismatch");
    for (std::size_t i = 0; i < vt.surface.size(); ++i)
      vt.surface[i] = {surf[3 * i], surf[3 * i + 1], surf[3 * i + 2]};
    for (auto m : b.get("mask_object/" + id).to_u16()) vt.mask_object.push_back(static_cast<int>(m) - 1);
    truth.views.push_back(std::move(vt));
  }
  return truth;
}

LabeledPoints sample_surface_points(const GroundTruth& truth, int stride) {
  LabeledPoints out;
  stride = std::max(1, stride);
  for (const auto& vt : truth.views) {
    for (int y = stride / 2; y < vt.object_map.height(); y += stride) {
      for (int x = stride / 2; x < vt.object_map.width(); x += stride) {
        if (vt.object_map(x, y) == 0) continue;
        out.points.push_back(vt.surface(x, y).cast<double>());
        out.labels.push_back(vt.object_map(x, y) - 1);
      }
    }
  }
  return out;
}

void write_synth(const SynthScene& scene, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<WarpRef> refs;
  for (const auto& w : scene.warps) {
    const std::string name = "warp_" + std::to_string(w.src_view) + "_" + std::to_string(w.dst_view) + ".pf";
    save_warp(dir / name, w);
    refs.push_back({w.src_view, w.dst_view, name});
  }
  save_manifest(dir, scene.views, refs);
  save_ground_truth(dir / "ground_truth.pf", scene.truth, scene.views);

  const LabeledPoints pts = sample_surface_points(scene.truth, 4);
  std::vector<float> coords;
  std::vector<std::uint16_t> labels;
  for (std::size_t i = 0; i < pts.points.size(); ++i) {
    coords.insert(coords.end(), {static_cast<float>(pts.points[i].x()), static_cast<float>(pts.points[i].y()),
                                 static_cast<float>(pts.points[i].z())});
    labels.push_back(static_cast<std::uint16_t>(pts.labels[i]));
  }
  write_tensor(dir / "points.pf", Tensor::from_f32({pts.points.size(), 3}, coords));
  write_tensor(dir / "point_labels.pf", Tensor::from_u16({labels.size()}, labels));
  write_tensor(dir / "classes.pf", matrix_tensor(scene.truth.object_embeddings));
  const std::string text = synth_spec_to_json(scene.spec) + "\n";
  write_file_bytes(dir / "synth_spec.json",
                   std::span<const std::byte>(reinterpret_cast<const std::byte*>(text.data()), text.size()));
}

std::vector<std::size_t> select_neighbors(std::span<const Camera> cameras, std::size_t reference, int k,
                                          double lambda) {
  const std::size_t n = cameras.size();
  if (reference >= n) throw ConfigError("reference view out of range");
  if (k < 0 || static_cast<std::size_t>(k) >= n) throw ConfigError("neighbor count must be smaller than view count");
  const Eigen::Vector3d c0 = cameras[reference].center();
  const Eigen::Vector3d d0 = cameras[reference].forward();
  double max_dist = 0.0;
  for (std::size_t j = 0; j < n; ++j)
    if (j != reference) max_dist = std::max(max_dist, (cameras[j].center() - c0).norm());
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == reference) continue;
    const double dist = (cameras[j].center() - c0).norm();
    const double score = d0.dot(cameras[j].forward()) - (max_dist > 0.0 ? lambda * dist / max_dist : 0.0);
    scored.emplace_back(score, j);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<std::size_t> out;
  for (int i = 0; i < k; ++i) out.push_back(scored[static_cast<std::size_t>(i)].second);
  return out;
}

std::vector<ViewId> select_neighbors(const ViewSet& views, ViewId reference, int k, double lambda) {
  const auto cams = views.cameras();
  std::vector<ViewId> out;
  for (auto idx : select_neighbors(cams, views.index_of(reference), k, lambda)) out.push_back(views.views[idx].id);
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> neighbor_pairs(std::span<const Camera> cameras, int k,
                                                                 double lambda) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t r = 0; r < cameras.size(); ++r)
    for (auto n : select_neighbors(cameras, r, k, lambda)) pairs.emplace_back(std::min(r, n), std::max(r, n));
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  return pairs;
}

}  // namespace profuse
