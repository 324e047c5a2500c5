#include "psop/synth_stream.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "psop/error.h"

namespace psop {
namespace {

using Rng = std::mt19937_64;

std::vector<double> UniformUnit(int dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(dim));
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : v) {
      x = normal(rng);
      norm += x * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

// Rotates the unit vector `center` by a random tangent direction. The
// tangent components are N(0, sigma^2 / (dim - 1)), so the rotation angle
// concentrates around sigma.
std::vector<double> PerturbOnSphere(const std::vector<double>& center,
                                    double sigma, Rng& rng) {
  const std::size_t d = center.size();
  std::normal_distribution<double> normal(
      0.0, sigma / std::sqrt(static_cast<double>(std::max<std::size_t>(d - 1, 1))));
  std::vector<double> t(d);
  for (double& x : t) x = normal(rng);
  if (sigma == 0.0) return center;
  double along = 0.0;
  for (std::size_t i = 0; i < d; ++i) along += t[i] * center[i];
  double angle = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    t[i] -= along * center[i];
    angle += t[i] * t[i];
  }
  angle = std::sqrt(angle);
  if (angle == 0.0) return center;
  std::vector<double> out(d);
  const double c = std::cos(angle);
  const double s = std::sin(angle) / angle;
  for (std::size_t i = 0; i < d; ++i) out[i] = c * center[i] + s * t[i];
  return out;
}

struct Actor {
  std::string truth_id;
  ObjectKind kind = ObjectKind::kDpo;
  FrameIndex first = 0;
  FrameIndex last = -1;
  int band = 0;
  std::vector<double> center;
  Box2D box;
  bool sensitive = true;
};

}  // namespace

void SynthConfig::Validate() const {
  auto fail = [](const std::string& m) {
    throw Error(ErrorCode::kSynthConfig, m);
  };
  if (identities < 0 || ipo_objects < 0) fail("counts must be non-negative");
  if (embed_dim < 2) fail("embed_dim must be at least 2");
  if (noise_sigma < 0.0 || center_spread < 0.0) fail("angles must be >= 0");
  if (lookalike_groups <= 0) fail("lookalike_groups must be positive");
  if (!(fp_rate >= 0.0 && fp_rate < 1.0)) fail("fp_rate must lie in [0, 1)");
  if (!(fn_rate >= 0.0 && fn_rate <= 1.0)) fail("fn_rate must lie in [0, 1]");
  if (co_occurrence < 1) fail("co_occurrence must be at least 1");
  if (frames < 0) fail("frames must be non-negative");
  if (lifespan_min < 1 || lifespan_max < lifespan_min) {
    fail("lifespan range must satisfy 1 <= min <= max");
  }
  if (!lifespans.empty() &&
      static_cast<int>(lifespans.size()) != identities) {
    fail("explicit lifespans must list every identity");
  }
  if (image_width <= 0 || image_height <= 0 || box_size <= 0.0) {
    fail("image and box sizes must be positive");
  }
  if (streamer && (*streamer < 0 || *streamer >= identities)) {
    fail("streamer index out of range");
  }
}

SynthOutput Generate(const SynthConfig& config) {
  config.Validate();
  Rng rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SynthOutput out;
  out.header.classes[config.object_class] =
      ClassSpec{ObjectKind::kDpo, config.embed_dim};
  if (config.ipo_objects > 0) {
    out.header.classes[config.ipo_class] = ClassSpec{ObjectKind::kIpo, 0};
  }

  // Identity centers.
  std::vector<std::vector<double>> centers;
  std::vector<std::vector<double>> anchors;
  for (int g = 0; g < config.lookalike_groups; ++g) {
    anchors.push_back(UniformUnit(config.embed_dim, rng));
  }
  for (int i = 0; i < config.identities; ++i) {
    const auto& anchor =
        anchors[static_cast<std::size_t>(i % config.lookalike_groups)];
    centers.push_back(config.center_spread > 0.0
                          ? PerturbOnSphere(anchor, config.center_spread, rng)
                          : UniformUnit(config.embed_dim, rng));
  }

  // Lifespans and bands: co_occurrence bands for identities, then one band per
  // IPO object. Bands keep concurrent boxes apart.
  std::vector<Actor> actors;
  const int bands = config.co_occurrence + config.ipo_objects;
  if (!config.lifespans.empty()) {
    std::vector<FrameIndex> band_free(static_cast<std::size_t>(config.co_occurrence), 0);
    std::vector<int> order(static_cast<std::size_t>(config.identities));
    for (int i = 0; i < config.identities; ++i) order[static_cast<std::size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return config.lifespans[static_cast<std::size_t>(a)].first <
             config.lifespans[static_cast<std::size_t>(b)].first;
    });
    actors.resize(static_cast<std::size_t>(config.identities));
    for (int i : order) {
      const auto [first, last] = config.lifespans[static_cast<std::size_t>(i)];
      int band = -1;
      for (int b = 0; b < config.co_occurrence; ++b) {
        if (band_free[static_cast<std::size_t>(b)] <= first) {
          band = b;
          break;
        }
      }
      if (band < 0) {
        throw Error(ErrorCode::kSynthConfig,
                    "explicit lifespans exceed co_occurrence");
      }
      band_free[static_cast<std::size_t>(band)] = last + 1;
      auto& a = actors[static_cast<std::size_t>(i)];
      a.first = first;
      a.last = std::min(last, config.frames - 1);
      a.band = band;
    }
  } else {
    std::uniform_int_distribution<int> life(config.lifespan_min,
                                            config.lifespan_max);
    std::uniform_int_distribution<int> gap(0, 15);
    std::vector<FrameIndex> cursor(static_cast<std::size_t>(config.co_occurrence), 0);
    for (int i = 0; i < config.identities; ++i) {
      Actor a;
      a.band = i % config.co_occurrence;
      auto& c = cursor[static_cast<std::size_t>(a.band)];
      a.first = c;
      a.last = std::min<FrameIndex>(c + life(rng) - 1, config.frames - 1);
      c = a.last + 1 + gap(rng);
      actors.push_back(std::move(a));
    }
  }
  for (int i = 0; i < config.identities; ++i) {
    auto& a = actors[static_cast<std::size_t>(i)];
    a.truth_id = "id" + std::to_string(i);
    a.kind = ObjectKind::kDpo;
    a.center = centers[static_cast<std::size_t>(i)];
    a.sensitive = !(config.streamer && *config.streamer == i);
  }
  for (int i = 0; i < config.ipo_objects; ++i) {
    Actor a;
    a.truth_id = "ipo" + std::to_string(i);
    a.kind = ObjectKind::kIpo;
    a.first = 0;
    a.last = config.frames - 1;
    a.band = config.co_occurrence + i;
    actors.push_back(std::move(a));
  }

  const double band_width =
      static_cast<double>(config.image_width) / static_cast<double>(bands);
  const double size = std::min({config.box_size, 0.8 * band_width,
                                0.8 * static_cast<double>(config.image_height)});
  auto band_x = [&](int band) { return band * band_width; };
  for (auto& a : actors) {
    const double x0 = band_x(a.band);
    a.box = Box2D{x0 + unit(rng) * (band_width - size),
                  unit(rng) * (config.image_height - size), size, size};
  }

  std::normal_distribution<double> step(0.0, config.motion);
  std::uniform_real_distribution<double> score(0.6, 1.0);
  std::vector<bool> anchored(actors.size(), false);
  for (FrameIndex f = 0; f < config.frames; ++f) {
    for (std::size_t ai = 0; ai < actors.size(); ++ai) {
      auto& a = actors[ai];
      if (f < a.first || f > a.last) continue;
      if (f > a.first && config.motion > 0.0) {
        const double x0 = band_x(a.band);
        a.box.x = std::clamp(a.box.x + step(rng), x0, x0 + band_width - size);
        a.box.y = std::clamp(a.box.y + step(rng), 0.0,
                             config.image_height - size);
      }
      const std::string& cls =
          a.kind == ObjectKind::kDpo ? config.object_class : config.ipo_class;
      out.truth.push_back({f, a.truth_id, cls, a.kind, a.box, a.sensitive});
      if (unit(rng) < config.fn_rate) continue;
      DetectionRecord r;
      r.frame = f;
      r.object_class = cls;
      r.kind = a.kind;
      r.box = a.box;
      r.score = score(rng);
      r.truth_id = a.truth_id;
      if (a.kind == ObjectKind::kDpo) {
        r.embedding = PerturbOnSphere(a.center, config.noise_sigma, rng);
      }
      if (!a.sensitive && !anchored[ai]) {
        out.whitelist.push_back({f, a.box});
        anchored[ai] = true;
      }
      out.records.push_back(std::move(r));
    }
    if (config.fp_rate > 0.0 && unit(rng) < config.fp_rate) {
      DetectionRecord r;
      r.frame = f;
      r.object_class = config.object_class;
      r.kind = ObjectKind::kDpo;
      r.box = Box2D{unit(rng) * (config.image_width - size),
                    unit(rng) * (config.image_height - size), size, size};
      r.score = score(rng);
      r.truth_id = std::string(kFalsePositiveTruthId);
      r.embedding = UniformUnit(config.embed_dim, rng);
      out.records.push_back(std::move(r));
    }
  }
  return out;
}

GroundTruthReport GroundTruthSummary(std::span<const DetectionRecord> records) {
  GroundTruthReport report;
  for (const auto& r : records) {
    if (!r.truth_id) continue;
    if (*r.truth_id == kFalsePositiveTruthId) {
      ++report.false_positives;
      continue;
    }
    ++report.per_identity[*r.truth_id];
    ++report.per_frame[r.frame];
    ++report.true_detections;
  }
  return report;
}

}  // namespace psop
