#pragma once

// Synthetic stand-ins for the training data: ellipse phantoms with smooth
// phase, analytic coil sensitivities, record splits, and on-disk datasets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "autosamp/container.hpp"
#include "autosamp/numerics.hpp"
#include "json.hpp"

namespace autosamp {

/// Coil sensitivity maps S_i, each the size of the image.
struct CoilSet {
  std::vector<ComplexImage> maps;

  int count() const { return static_cast<int>(maps.size()); }
  int height() const { return maps.empty() ? 0 : maps.front().height; }
  int width() const { return maps.empty() ? 0 : maps.front().width; }

  bool operator==(const CoilSet&) const = default;
};

struct VolumeRecord {
  std::string id;
  ComplexImage image;
  CoilSet coils;

  bool operator==(const VolumeRecord&) const = default;
};

/// Magnitude of the q-th percentile with linear interpolation between order
/// statistics (q in [0, 1]).
inline double magnitude_percentile(const ComplexImage& img, double q) {
  if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("magnitude_percentile: q must lie in [0, 1]");
  if (img.size() == 0) throw ValidationError("magnitude_percentile: empty image");
  std::vector<double> mags(img.size());
  std::transform(img.data.begin(), img.data.end(), mags.begin(), [](cx v) { return std::abs(v); });
  std::sort(mags.begin(), mags.end());
  const double pos = q * static_cast<double>(mags.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, mags.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return mags[lo] * (1.0 - frac) + mags[hi] * frac;
}

/// Sum of random-intensity ellipses times a random quadratic phase, scaled so
/// the 99th-percentile magnitude is 1, then clipped to magnitude 2.
inline ComplexImage make_phantom(RngStream rng, int height, int width, int n_ellipses) {
  if (height < 2 || width < 2) throw ValidationError("make_phantom: dimensions must be >= 2");
  if (n_ellipses < 1) throw ValidationError("make_phantom: n_ellipses must be >= 1");

  struct Ellipse {
    double cx, cy, a, b, cos_t, sin_t, value;
  };
  std::vector<Ellipse> ellipses;
  for (int e = 0; e < n_ellipses; ++e) {
    Ellipse el{};
    // The first ellipse is the large "body" so at least ~20% of the image is
    // nonzero and the 99th percentile is well defined.
    const bool body = e == 0;
    el.cx = rng.uniform(-1.0, 1.0) * (body ? 0.05 : 0.25);
    el.cy = rng.uniform(-1.0, 1.0) * (body ? 0.05 : 0.25);
    el.a = body ? rng.uniform(0.30, 0.42) : rng.uniform(0.04, 0.20);
    el.b = body ? rng.uniform(0.25, 0.40) : rng.uniform(0.04, 0.20);
    const double t = rng.uniform(0.0, std::numbers::pi);
    el.cos_t = std::cos(t);
    el.sin_t = std::sin(t);
    el.value = body ? rng.uniform(0.6, 1.0) : rng.uniform(-0.4, 0.6);
    ellipses.push_back(el);
  }
  double coef[6];
  coef[0] = rng.uniform(-std::numbers::pi, std::numbers::pi);
  for (int i = 1; i < 6; ++i) coef[i] = rng.uniform(-1.0, 1.0);

  ComplexImage img(height, width);
  for (int r = 0; r < height; ++r) {
    const double y = (r + 0.5) / height - 0.5;
    for (int c = 0; c < width; ++c) {
      const double x = (c + 0.5) / width - 0.5;
      double mag = 0.0;
      for (const auto& el : ellipses) {
        const double dx = x - el.cx;
        const double dy = y - el.cy;
        const double u = (dx * el.cos_t + dy * el.sin_t) / el.a;
        const double v = (-dx * el.sin_t + dy * el.cos_t) / el.b;
        if (u * u + v * v <= 1.0) mag += el.value;
      }
      mag = std::max(mag, 0.0);
      const double phase = coef[0] + coef[1] * x + coef[2] * y + coef[3] * x * x + coef[4] * x * y + coef[5] * y * y;
      img(r, c) = std::polar(mag, phase);
    }
  }
  const double p99 = magnitude_percentile(img, 0.99);
  if (!(p99 > 0.0)) throw NumericalError("make_phantom: degenerate phantom (99th percentile is zero)");
  for (auto& v : img.data) {
    v /= p99;
    const double m = std::abs(v);
    if (m > 2.0) v *= 2.0 / m;
  }
  return img;
}

enum class CoilMode { uniform, gaussian_array };

inline CoilMode coil_mode_from_string(const std::string& s) {
  if (s == "uniform") return CoilMode::uniform;
  if (s == "gaussian-array") return CoilMode::gaussian_array;
  throw ValidationError("unknown coil mode '" + s + "'");
}

/// `uniform`: one all-ones map. `gaussian-array`: `count` smooth Gaussian
/// lobes (width 0.6 FOV) spaced around the FOV perimeter with random linear
/// phase, normalized so sum_i |S_i|^2 = 1 at every pixel.
inline CoilSet make_coils(int height, int width, int count, CoilMode mode, RngStream rng = RngStream(0)) {
  if (count < 1) throw ValidationError("make_coils: coil count must be >= 1");
  if (height < 1 || width < 1) throw ValidationError("make_coils: dimensions must be >= 1");
  CoilSet set;
  if (mode == CoilMode::uniform) {
    if (count != 1) throw ValidationError("make_coils: uniform mode has exactly one coil");
    set.maps.emplace_back(height, width, cx(1.0, 0.0));
    return set;
  }
  constexpr double kLobeWidth = 0.6;
  const double offset = rng.uniform(0.0, 2.0 * std::numbers::pi);
  for (int i = 0; i < count; ++i) {
    const double ang = offset + 2.0 * std::numbers::pi * i / count;
    const double px = 0.5 * std::cos(ang);
    const double py = 0.5 * std::sin(ang);
    const double phase0 = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const double gx = rng.uniform(-0.5, 0.5) * std::numbers::pi;
    const double gy = rng.uniform(-0.5, 0.5) * std::numbers::pi;
    ComplexImage map(height, width);
    for (int r = 0; r < height; ++r) {
      const double y = (r + 0.5) / height - 0.5;
      for (int c = 0; c < width; ++c) {
        const double x = (c + 0.5) / width - 0.5;
        const double d2 = (x - px) * (x - px) + (y - py) * (y - py);
        map(r, c) = std::polar(std::exp(-d2 / (2.0 * kLobeWidth * kLobeWidth)), phase0 + gx * x + gy * y);
      }
    }
    set.maps.push_back(std::move(map));
  }
  for (std::size_t p = 0; p < set.maps.front().size(); ++p) {
    double ss = 0.0;
    for (const auto& m : set.maps) ss += std::norm(m.data[p]);
    const double inv = 1.0 / std::sqrt(ss);
    for (auto& m : set.maps) m.data[p] *= inv;
  }
  return set;
}

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

/// Deterministic shuffle of `ids` into train / val / test with the given
/// counts (test takes whatever remains).
inline DatasetSplit split_records(std::vector<std::string> ids, std::size_t n_train, std::size_t n_val, std::uint64_t seed) {
  if (n_train + n_val > ids.size()) throw ValidationError("split_records: split sizes exceed record count");
  RngStream rng(seed);
  for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);
  DatasetSplit s;
  s.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), ids.end());
  return s;
}

struct SyntheticSpec {
  int n_records = 20;
  int height = 64;
  int width = 64;
  int coils = 4;
  CoilMode coil_mode = CoilMode::gaussian_array;
  int n_ellipses = 8;
  std::uint64_t seed = 1;
};

struct Dataset {
  std::vector<VolumeRecord> records;
  DatasetSplit split;

  const VolumeRecord& get(const std::string& id) const {
    for (const auto& r : records)
      if (r.id == id) return r;
    throw ValidationError("unknown record id '" + id + "'");
  }

  std::vector<const VolumeRecord*> subset(const std::vector<std::string>& ids) const {
    std::vector<const VolumeRecord*> out;
    for (const auto& id : ids) out.push_back(&get(id));
    return out;
  }
};

/// Records are pure functions of (spec.seed, record index). The split uses
/// 70% / 15% / 15% rounded, with at least one validation record.
inline Dataset make_synthetic_dataset(const SyntheticSpec& spec) {
  if (spec.n_records < 3) throw ValidationError("synthetic dataset needs at least 3 records");
  Dataset ds;
  RngStream root(spec.seed);
  std::vector<std::string> ids;
  for (int i = 0; i < spec.n_records; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "vol%04d", i);
    RngStream rec = root.split(static_cast<std::uint64_t>(i));
    VolumeRecord r;
    r.id = id;
    r.image = make_phantom(rec.split(0), spec.height, spec.width, spec.n_ellipses);
    const int coils = spec.coil_mode == CoilMode::uniform ? 1 : spec.coils;
    r.coils = make_coils(spec.height, spec.width, coils, spec.coil_mode, rec.split(1));
    ids.push_back(r.id);
    ds.records.push_back(std::move(r));
  }
  const auto n = static_cast<std::size_t>(spec.n_records);
  const std::size_t n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.15 * static_cast<double>(n))));
  const std::size_t n_test = n_val;
  ds.split = split_records(ids, n - n_val - n_test, n_val, spec.seed ^ 0x5EEDULL);
  return ds;
}

// ---------------------------------------------------------------------------
// Record and dataset files

inline void save_record(const std::filesystem::path& dir, const VolumeRecord& r) {
  save_array(dir / (r.id + "_image"), Array::from_image(r.image));
  CxVec maps;
  for (const auto& m : r.coils.maps) maps.insert(maps.end(), m.data.begin(), m.data.end());
  save_array(dir / (r.id + "_coils"),
             Array::complex({r.coils.count(), r.image.height, r.image.width}, std::move(maps)));
}

inline VolumeRecord load_record(const std::filesystem::path& dir, const std::string& id) {
  VolumeRecord r;
  r.id = id;
  r.image = load_array(dir / (id + "_image")).to_image();
  const auto coils = load_array(dir / (id + "_coils"));
  if (coils.shape.size() != 3 || coils.shape[1] != r.image.height || coils.shape[2] != r.image.width)
    throw IoError("coil array shape does not match image for record " + id);
  const auto values = coils.as_complex();
  const std::size_t plane = r.image.size();
  for (std::int64_t c = 0; c < coils.shape[0]; ++c) {
    ComplexImage m(r.image.height, r.image.width);
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(c * plane), plane, m.data.begin());
    r.coils.maps.push_back(std::move(m));
  }
  return r;
}

/// Writes every record plus `manifest.json` listing ids and split assignment.
inline void save_dataset(const std::filesystem::path& dir, const Dataset& ds, const nlohmann::json& extra = {}) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["format"] = "autosamp-dataset/1";
  auto split_of = [&](const std::string& id) -> std::string {
    auto has = [&](const std::vector<std::string>& v) { return std::find(v.begin(), v.end(), id) != v.end(); };
    if (has(ds.split.train)) return "train";
    if (has(ds.split.val)) return "val";
    if (has(ds.split.test)) return "test";
    return "none";
  };
  nlohmann::ordered_json records = nlohmann::ordered_json::array();
  for (const auto& r : ds.records) {
    save_record(dir, r);
    records.push_back({{"id", r.id}, {"image", r.id + "_image"}, {"coils", r.id + "_coils"}, {"split", split_of(r.id)}});
  }
  manifest["records"] = records;
  manifest["split"] = {{"train", ds.split.train}, {"val", ds.split.val}, {"test", ds.split.test}};
  if (!extra.is_null()) manifest["generator"] = extra;
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write dataset manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("missing dataset manifest in " + dir.string());
  Dataset ds;
  try {
    const auto manifest = nlohmann::json::parse(in);
    for (const auto& rec : manifest.at("records")) {
      const auto id = rec.at("id").get<std::string>();
      ds.records.push_back(load_record(dir, id));
      if (manifest.contains("split")) continue;
      const auto split = rec.at("split").get<std::string>();
      if (split == "train") ds.split.train.push_back(id);
      else if (split == "val") ds.split.val.push_back(id);
      else if (split == "test") ds.split.test.push_back(id);
    }
    if (manifest.contains("split")) {
      const auto& sp = manifest.at("split");
      ds.split.train = sp.at("train").get<std::vector<std::string>>();
      ds.split.val = sp.at("val").get<std::vector<std::string>>();
      ds.split.test = sp.at("test").get<std::vector<std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed dataset manifest: " + std::string(e.what()));
  }
  return ds;
}

}  // namespace autosamp
