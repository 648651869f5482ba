#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "roomsemble/binary_io.hpp"
#include "roomsemble/error.hpp"
#include "roomsemble/imagecore.hpp"

namespace roomsemble::sift {

inline constexpr double kBaseSigma = 1.6;
inline constexpr double kAssumedInputBlur = 0.5;
inline constexpr double kContrastThreshold = 0.03;
inline constexpr double kEdgeRatio = 10.0;
inline constexpr int kMinImageSide = 32;
inline constexpr int kMinOctaveSide = 8;
inline constexpr int kDefaultScales = 3;
inline constexpr int kDescriptorLength = 128;

struct ScaleSpace {
  int octaves = 0;
  int scales = 0;
  int width = 0;   // original image size
  int height = 0;
  std::vector<std::vector<GrayImage>> gaussians;  // [octave][0 .. scales+2]
  std::vector<std::vector<GrayImage>> dogs;       // [octave][0 .. scales+1]
  std::vector<double> sigmas;                     // octave-relative blur per level
};

struct SiftKeypoint {
  float x = 0, y = 0;  // original image coordinates
  int octave = 0;
  float scale = 0;        // absolute blur sigma in original image units
  float orientation = 0;  // radians, [0, 2pi)
  float response = 0;     // |interpolated DoG|

  // Octave-local placement, needed to sample the matching Gaussian level.
  int layer = 0;
  float octave_x = 0, octave_y = 0;
  float octave_sigma = 0;
};

using SiftDescriptor = std::array<float, kDescriptorLength>;

struct MatchConfig {
  double ratio_threshold = 0.8;
  std::size_t max_keypoints = 500;
};

struct Match {
  std::size_t index_a;
  std::size_t index_b;
  friend bool operator==(const Match&, const Match&) = default;
};

struct Features {
  std::vector<SiftKeypoint> keypoints;
  std::vector<SiftDescriptor> descriptors;
};

/// Octaves available before the coarsest base drops under kMinOctaveSide.
inline int max_octaves(int width, int height) {
  int n = 0;
  for (int side = std::min(width, height); side >= kMinOctaveSide; side /= 2) ++n;
  return std::max(n, 1);
}

/// Gaussian pyramid plus difference-of-Gaussians. Each octave holds scales+3
/// blurred levels at sigma0 * k^i, k = 2^(1/scales); the next octave's base is
/// level `scales` (blur 2 sigma0) subsampled by two. The octave count is
/// truncated once the base would fall below kMinOctaveSide pixels.
inline ScaleSpace build_scale_space(const GrayImage& img, int octaves, int scales = kDefaultScales) {
  if (img.width < kMinImageSide || img.height < kMinImageSide) {
    fail(ErrorKind::ImageTooSmall, "image is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                                       ", minimum " + std::to_string(kMinImageSide));
  }
  if (octaves < 1 || scales < 3) fail(ErrorKind::ConfigError, "need octaves >= 1 and scales >= 3");
  ScaleSpace ss;
  ss.octaves = std::min(octaves, max_octaves(img.width, img.height));
  ss.scales = scales;
  ss.width = img.width;
  ss.height = img.height;
  const int levels = scales + 3;
  const double k = std::pow(2.0, 1.0 / scales);
  ss.sigmas.resize(levels);
  for (int i = 0; i < levels; ++i) ss.sigmas[i] = kBaseSigma * std::pow(k, i);

  GrayImage base = gaussian_blur(img, std::sqrt(kBaseSigma * kBaseSigma - kAssumedInputBlur * kAssumedInputBlur));
  for (int o = 0; o < ss.octaves; ++o) {
    std::vector<GrayImage> levels_o;
    levels_o.reserve(levels);
    levels_o.push_back(std::move(base));
    for (int i = 1; i < levels; ++i) {
      const double inc = std::sqrt(ss.sigmas[i] * ss.sigmas[i] - ss.sigmas[i - 1] * ss.sigmas[i - 1]);
      levels_o.push_back(gaussian_blur(levels_o.back(), inc));
    }
    std::vector<GrayImage> dogs_o;
    dogs_o.reserve(levels - 1);
    for (int i = 0; i + 1 < levels; ++i) {
      GrayImage d(levels_o[i].width, levels_o[i].height);
      for (std::size_t p = 0; p < d.data.size(); ++p) d.data[p] = levels_o[i + 1].data[p] - levels_o[i].data[p];
      dogs_o.push_back(std::move(d));
    }
    if (o + 1 < ss.octaves) base = downsample_by_two(levels_o[scales]);
    ss.gaussians.push_back(std::move(levels_o));
    ss.dogs.push_back(std::move(dogs_o));
  }
  return ss;
}

namespace detail {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr int kBorder = 5;
inline constexpr int kMaxInterpSteps = 5;
inline constexpr int kOrientationBins = 36;
inline constexpr double kOrientationPeakRatio = 0.8;
inline constexpr double kOrientationSigmaFactor = 1.5;
inline constexpr double kOrientationRadiusFactor = 3.0 * kOrientationSigmaFactor;
inline constexpr int kDescWidth = 4;
inline constexpr int kDescBins = 8;
inline constexpr double kDescScaleFactor = 3.0;
inline constexpr float kDescMagThreshold = 0.2f;

inline bool is_extremum(const std::vector<GrayImage>& dog, int layer, int x, int y) {
  const float v = dog[layer].at(x, y);
  if (v > 0) {
    for (int l = layer - 1; l <= layer + 1; ++l)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (l == layer && dx == 0 && dy == 0) continue;
          if (dog[l].at(x + dx, y + dy) > v) return false;
        }
  } else {
    for (int l = layer - 1; l <= layer + 1; ++l)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (l == layer && dx == 0 && dy == 0) continue;
          if (dog[l].at(x + dx, y + dy) < v) return false;
        }
  }
  return true;
}

// Solves H * x = b for a symmetric 3x3 system by Cramer's rule.
inline bool solve3(const double h[3][3], const double b[3], double x[3]) {
  const double det = h[0][0] * (h[1][1] * h[2][2] - h[1][2] * h[2][1]) -
                     h[0][1] * (h[1][0] * h[2][2] - h[1][2] * h[2][0]) +
                     h[0][2] * (h[1][0] * h[2][1] - h[1][1] * h[2][0]);
  if (std::abs(det) < 1e-15) return false;
  for (int c = 0; c < 3; ++c) {
    double m[3][3];
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 3; ++k) m[r][k] = (k == c) ? b[r] : h[r][k];
    x[c] = (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
            m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])) /
           det;
  }
  return true;
}

struct Refined {
  int x, y, layer;
  double off_x, off_y, off_s;
  double contrast;
};

// Quadratic fit of the DoG around a discrete extremum; moves to the
// neighbouring sample while any offset component exceeds 0.5.
inline bool refine(const ScaleSpace& ss, int octave, int layer, int x, int y, Refined& out) {
  const auto& dog = ss.dogs[octave];
  const int w = dog[0].width, h = dog[0].height;
  double off[3] = {0, 0, 0};
  double grad[3] = {0, 0, 0};
  int step = 0;
  for (; step < kMaxInterpSteps; ++step) {
    const GrayImage& cur = dog[layer];
    const GrayImage& prev = dog[layer - 1];
    const GrayImage& next = dog[layer + 1];
    const double v = cur.at(x, y);
    grad[0] = 0.5 * (cur.at(x + 1, y) - cur.at(x - 1, y));
    grad[1] = 0.5 * (cur.at(x, y + 1) - cur.at(x, y - 1));
    grad[2] = 0.5 * (next.at(x, y) - prev.at(x, y));
    double hess[3][3];
    hess[0][0] = cur.at(x + 1, y) + cur.at(x - 1, y) - 2 * v;
    hess[1][1] = cur.at(x, y + 1) + cur.at(x, y - 1) - 2 * v;
    hess[2][2] = next.at(x, y) + prev.at(x, y) - 2 * v;
    hess[0][1] = hess[1][0] =
        0.25 * (cur.at(x + 1, y + 1) - cur.at(x - 1, y + 1) - cur.at(x + 1, y - 1) + cur.at(x - 1, y - 1));
    hess[0][2] = hess[2][0] =
        0.25 * (next.at(x + 1, y) - next.at(x - 1, y) - prev.at(x + 1, y) + prev.at(x - 1, y));
    hess[1][2] = hess[2][1] =
        0.25 * (next.at(x, y + 1) - next.at(x, y - 1) - prev.at(x, y + 1) + prev.at(x, y - 1));
    const double rhs[3] = {-grad[0], -grad[1], -grad[2]};
    if (!solve3(hess, rhs, off)) return false;
    if (std::abs(off[0]) < 0.5 && std::abs(off[1]) < 0.5 && std::abs(off[2]) < 0.5) break;
    if (std::abs(off[0]) > 1e6 || std::abs(off[1]) > 1e6 || std::abs(off[2]) > 1e6) return false;
    x += static_cast<int>(std::lround(off[0]));
    y += static_cast<int>(std::lround(off[1]));
    layer += static_cast<int>(std::lround(off[2]));
    if (layer < 1 || layer > ss.scales || x < kBorder || x >= w - kBorder || y < kBorder || y >= h - kBorder) {
      return false;
    }
  }
  if (step >= kMaxInterpSteps) return false;

  const GrayImage& cur = dog[layer];
  const double contrast = cur.at(x, y) + 0.5 * (grad[0] * off[0] + grad[1] * off[1] + grad[2] * off[2]);
  if (std::abs(contrast) < kContrastThreshold) return false;

  const double v2 = 2.0 * cur.at(x, y);
  const double dxx = cur.at(x + 1, y) + cur.at(x - 1, y) - v2;
  const double dyy = cur.at(x, y + 1) + cur.at(x, y - 1) - v2;
  const double dxy = 0.25 * (cur.at(x + 1, y + 1) - cur.at(x - 1, y + 1) - cur.at(x + 1, y - 1) + cur.at(x - 1, y - 1));
  const double tr = dxx + dyy;
  const double det = dxx * dyy - dxy * dxy;
  if (det <= 0 || tr * tr * kEdgeRatio >= (kEdgeRatio + 1) * (kEdgeRatio + 1) * det) return false;

  out = Refined{x, y, layer, off[0], off[1], off[2], contrast};
  return true;
}

inline double wrap_angle(double a) {
  a = std::fmod(a, kTwoPi);
  if (a < 0) a += kTwoPi;
  if (a >= kTwoPi) a = 0;
  return a;
}

// Dominant gradient orientations around a keypoint (36-bin histogram, every
// smoothed peak at >= 80% of the maximum, parabolic interpolation).
inline std::vector<double> orientations(const GrayImage& img, int cx, int cy, double sigma) {
  const int radius = static_cast<int>(std::lround(kOrientationRadiusFactor * sigma));
  const double weight_denom = 2.0 * (kOrientationSigmaFactor * sigma) * (kOrientationSigmaFactor * sigma);
  std::array<double, kOrientationBins> hist{};
  for (int i = -radius; i <= radius; ++i) {
    const int y = cy + i;
    if (y <= 0 || y >= img.height - 1) continue;
    for (int j = -radius; j <= radius; ++j) {
      const int x = cx + j;
      if (x <= 0 || x >= img.width - 1) continue;
      const double dx = img.at(x + 1, y) - img.at(x - 1, y);
      const double dy = img.at(x, y + 1) - img.at(x, y - 1);
      const double mag = std::sqrt(dx * dx + dy * dy);
      const double angle = wrap_angle(std::atan2(dy, dx));
      const double weight = std::exp(-(i * i + j * j) / weight_denom);
      int bin = static_cast<int>(std::lround(angle * kOrientationBins / kTwoPi));
      bin %= kOrientationBins;
      hist[bin] += weight * mag;
    }
  }
  std::array<double, kOrientationBins> smooth{};
  for (int b = 0; b < kOrientationBins; ++b) {
    auto at = [&](int k) { return hist[(k + kOrientationBins) % kOrientationBins]; };
    smooth[b] = (at(b - 2) + at(b + 2)) * (1.0 / 16) + (at(b - 1) + at(b + 1)) * (4.0 / 16) + at(b) * (6.0 / 16);
  }
  const double max_val = *std::max_element(smooth.begin(), smooth.end());
  std::vector<double> result;
  if (max_val <= 0) return result;
  for (int b = 0; b < kOrientationBins; ++b) {
    const double l = smooth[(b + kOrientationBins - 1) % kOrientationBins];
    const double r = smooth[(b + 1) % kOrientationBins];
    const double c = smooth[b];
    if (c > l && c > r && c >= kOrientationPeakRatio * max_val) {
      const double denom = l - 2 * c + r;
      const double shift = denom != 0 ? 0.5 * (l - r) / denom : 0.0;
      result.push_back(wrap_angle((b + shift) * kTwoPi / kOrientationBins));
    }
  }
  return result;
}

inline bool keypoint_order(const SiftKeypoint& a, const SiftKeypoint& b) {
  if (a.response != b.response) return a.response > b.response;
  if (a.y != b.y) return a.y < b.y;
  if (a.x != b.x) return a.x < b.x;
  if (a.scale != b.scale) return a.scale < b.scale;
  return a.orientation < b.orientation;
}

// Keeps `cap` keypoints by taking the strongest remaining keypoint of each
// octave in turn, so fine-scale detail cannot crowd out the coarse octaves
// that survive downscaling. Input must be sorted by keypoint_order.
inline std::vector<SiftKeypoint> cap_across_octaves(std::vector<SiftKeypoint> sorted, int octaves, std::size_t cap) {
  std::vector<std::vector<SiftKeypoint>> per_octave(static_cast<std::size_t>(octaves));
  for (auto& kp : sorted) per_octave[kp.octave].push_back(kp);
  std::vector<SiftKeypoint> kept;
  kept.reserve(cap);
  std::vector<std::size_t> next(per_octave.size(), 0);
  while (kept.size() < cap) {
    bool progressed = false;
    for (std::size_t o = 0; o < per_octave.size() && kept.size() < cap; ++o) {
      if (next[o] < per_octave[o].size()) {
        kept.push_back(per_octave[o][next[o]++]);
        progressed = true;
      }
    }
    if (!progressed) break;
  }
  std::sort(kept.begin(), kept.end(), keypoint_order);
  return kept;
}

}  // namespace detail

/// Scale-space extrema, refined, filtered for contrast and edge response,
/// each given one keypoint per dominant orientation. At most
/// cfg.max_keypoints survive, strongest first within each octave with the
/// octaves taking turns; output is sorted by descending response.
inline std::vector<SiftKeypoint> detect_keypoints(const ScaleSpace& ss, const MatchConfig& cfg = {}) {
  using namespace detail;
  std::vector<SiftKeypoint> kps;
  const float prefilter = static_cast<float>(0.5 * kContrastThreshold);
  for (int o = 0; o < ss.octaves; ++o) {
    const auto& dog = ss.dogs[o];
    const int w = dog[0].width, h = dog[0].height;
    if (w <= 2 * kBorder || h <= 2 * kBorder) continue;
    const double octave_scale = std::ldexp(1.0, o);
    for (int layer = 1; layer <= ss.scales; ++layer) {
      for (int y = kBorder; y < h - kBorder; ++y) {
        for (int x = kBorder; x < w - kBorder; ++x) {
          if (std::abs(dog[layer].at(x, y)) <= prefilter) continue;
          if (!is_extremum(dog, layer, x, y)) continue;
          Refined r{};
          if (!refine(ss, o, layer, x, y, r)) continue;
          const double ox = r.x + r.off_x;
          const double oy = r.y + r.off_y;
          const double img_x = ox * octave_scale;
          const double img_y = oy * octave_scale;
          if (img_x < 0 || img_y < 0 || img_x >= ss.width || img_y >= ss.height) continue;
          const double octave_sigma = kBaseSigma * std::pow(2.0, (r.layer + r.off_s) / ss.scales);
          SiftKeypoint kp;
          kp.x = static_cast<float>(img_x);
          kp.y = static_cast<float>(img_y);
          kp.octave = o;
          kp.layer = r.layer;
          kp.octave_x = static_cast<float>(ox);
          kp.octave_y = static_cast<float>(oy);
          kp.octave_sigma = static_cast<float>(octave_sigma);
          kp.scale = static_cast<float>(octave_sigma * octave_scale);
          kp.response = static_cast<float>(std::abs(r.contrast));
          for (double angle : orientations(ss.gaussians[o][r.layer], static_cast<int>(std::lround(ox)),
                                           static_cast<int>(std::lround(oy)), octave_sigma)) {
            kp.orientation = static_cast<float>(angle);
            kps.push_back(kp);
          }
        }
      }
    }
  }
  std::sort(kps.begin(), kps.end(), keypoint_order);
  if (kps.size() > cfg.max_keypoints) kps = cap_across_octaves(std::move(kps), ss.octaves, cfg.max_keypoints);
  return kps;
}

/// 4x4 spatial cells x 8 orientation bins, sampled from the keypoint's
/// Gaussian level in a frame rotated to the keypoint orientation, with
/// trilinear vote spreading. Unit-normalized, clamped at 0.2, renormalized.
inline SiftDescriptor compute_descriptor(const ScaleSpace& ss, const SiftKeypoint& kp) {
  using namespace detail;
  const GrayImage& img = ss.gaussians[kp.octave][kp.layer];
  constexpr int d = kDescWidth, n = kDescBins;
  const int cx = static_cast<int>(std::lround(kp.octave_x));
  const int cy = static_cast<int>(std::lround(kp.octave_y));
  const double hist_width = kDescScaleFactor * kp.octave_sigma;
  int radius = static_cast<int>(std::lround(hist_width * std::numbers::sqrt2 * (d + 1) * 0.5));
  radius = std::min(radius, static_cast<int>(std::sqrt(double(img.width) * img.width + double(img.height) * img.height)));
  const double cos_t = std::cos(kp.orientation) / hist_width;
  const double sin_t = std::sin(kp.orientation) / hist_width;
  const double bins_per_rad = n / kTwoPi;
  const double exp_scale = -1.0 / (d * d * 0.5);

  std::vector<double> hist((d + 2) * (d + 2) * (n + 2), 0.0);
  auto cell = [&](int r, int c, int o) -> double& { return hist[((r * (d + 2)) + c) * (n + 2) + o]; };

  for (int i = -radius; i <= radius; ++i) {
    for (int j = -radius; j <= radius; ++j) {
      // (j, i) is the pixel offset; project onto the keypoint frame.
      const double c_rot = j * cos_t + i * sin_t;
      const double r_rot = -j * sin_t + i * cos_t;
      const double rbin = r_rot + d / 2.0 - 0.5;
      const double cbin = c_rot + d / 2.0 - 0.5;
      if (!(rbin > -1 && rbin < d && cbin > -1 && cbin < d)) continue;
      const int y = cy + i, x = cx + j;
      if (y <= 0 || y >= img.height - 1 || x <= 0 || x >= img.width - 1) continue;
      const double dx = img.at(x + 1, y) - img.at(x - 1, y);
      const double dy = img.at(x, y + 1) - img.at(x, y - 1);
      const double mag = std::sqrt(dx * dx + dy * dy) * std::exp((c_rot * c_rot + r_rot * r_rot) * exp_scale);
      const double obin = wrap_angle(std::atan2(dy, dx) - kp.orientation) * bins_per_rad;

      const int r0 = static_cast<int>(std::floor(rbin));
      const int c0 = static_cast<int>(std::floor(cbin));
      int o0 = static_cast<int>(std::floor(obin));
      const double fr = rbin - r0, fc = cbin - c0, fo = obin - o0;
      if (o0 < 0) o0 += n;
      if (o0 >= n) o0 -= n;
      for (int dr = 0; dr <= 1; ++dr) {
        const double wr = dr ? fr : 1 - fr;
        for (int dc = 0; dc <= 1; ++dc) {
          const double wc = dc ? fc : 1 - fc;
          for (int dob = 0; dob <= 1; ++dob) {
            const double wo = dob ? fo : 1 - fo;
            cell(r0 + 1 + dr, c0 + 1 + dc, o0 + dob) += mag * wr * wc * wo;
          }
        }
      }
    }
  }

  SiftDescriptor desc{};
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < d; ++c) {
      cell(r + 1, c + 1, 0) += cell(r + 1, c + 1, n);
      for (int o = 0; o < n; ++o) desc[(r * d + c) * n + o] = static_cast<float>(cell(r + 1, c + 1, o));
    }
  }

  auto normalize = [](SiftDescriptor& v) {
    double sq = 0;
    for (float x : v) sq += double(x) * x;
    if (sq <= 0) return false;
    const double inv = 1.0 / std::sqrt(sq);
    for (float& x : v) x = static_cast<float>(x * inv);
    return true;
  };
  if (!normalize(desc)) {
    desc.fill(static_cast<float>(1.0 / std::sqrt(double(kDescriptorLength))));
    return desc;
  }
  for (float& x : desc) x = std::min(x, kDescMagThreshold);
  normalize(desc);
  return desc;
}

inline std::vector<SiftDescriptor> compute_descriptors(const ScaleSpace& ss, const std::vector<SiftKeypoint>& kps) {
  std::vector<SiftDescriptor> out;
  out.reserve(kps.size());
  for (const auto& kp : kps) out.push_back(compute_descriptor(ss, kp));
  return out;
}

inline double squared_distance(const SiftDescriptor& a, const SiftDescriptor& b) {
  double s = 0;
  for (int i = 0; i < kDescriptorLength; ++i) {
    const double t = double(a[i]) - b[i];
    s += t * t;
  }
  return s;
}

/// Ratio test: a descriptor of `a` matches its nearest neighbour in `b` when
/// d1 <= ratio * d2. Exact duplicates (d1 = 0) always match. At most one
/// match per descriptor of `a`; `b` needs two descriptors for a second
/// neighbour to exist.
inline std::vector<Match> match_keypoints(const std::vector<SiftDescriptor>& a, const std::vector<SiftDescriptor>& b,
                                          const MatchConfig& cfg = {}) {
  std::vector<Match> matches;
  if (b.size() < 2) return matches;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    double second = best;
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double dist = squared_distance(a[i], b[j]);
      if (dist < best) {
        second = best;
        best = dist;
        best_j = j;
      } else if (dist < second) {
        second = dist;
      }
    }
    if (std::sqrt(best) <= cfg.ratio_threshold * std::sqrt(second)) matches.push_back({i, best_j});
  }
  return matches;
}

/// Shared keypoints over the smaller keypoint count, clamped to [0,1].
inline double shared_keypoint_score(std::size_t shared, std::size_t count_a, std::size_t count_b) {
  const std::size_t denom = std::min(count_a, count_b);
  if (denom == 0) return 0.0;
  return std::clamp(static_cast<double>(shared) / static_cast<double>(denom), 0.0, 1.0);
}

/// Similarity of two descriptor sets: the smaller set is matched into the
/// larger one so the match count cannot exceed the denominator.
inline double descriptor_similarity(const std::vector<SiftDescriptor>& a, const std::vector<SiftDescriptor>& b,
                                    const MatchConfig& cfg = {}) {
  if (a.empty() || b.empty()) return 0.0;
  const auto matches = a.size() <= b.size() ? match_keypoints(a, b, cfg) : match_keypoints(b, a, cfg);
  return shared_keypoint_score(matches.size(), a.size(), b.size());
}

inline Features extract(const Image& img, const MatchConfig& cfg = {}) {
  const GrayImage gray = to_gray(img);
  const ScaleSpace ss = build_scale_space(gray, max_octaves(gray.width, gray.height), kDefaultScales);
  Features f;
  f.keypoints = detect_keypoints(ss, cfg);
  f.descriptors = compute_descriptors(ss, f.keypoints);
  return f;
}

inline double sift_similarity(const Image& a, const Image& b, const MatchConfig& cfg = {}) {
  return descriptor_similarity(extract(a, cfg).descriptors, extract(b, cfg).descriptors, cfg);
}

// Descriptor cache: "SIFT", version, count, then per keypoint 5 f32
// (x, y, scale, orientation, response) followed by 128 f32.
inline constexpr std::uint32_t kCacheVersion = 1;

inline void write_cache(std::ostream& out, const Features& f) {
  binio::write_magic(out, "SIFT");
  binio::write_u32(out, kCacheVersion);
  binio::write_u32(out, static_cast<std::uint32_t>(f.keypoints.size()));
  for (std::size_t i = 0; i < f.keypoints.size(); ++i) {
    const auto& kp = f.keypoints[i];
    for (float v : {kp.x, kp.y, kp.scale, kp.orientation, kp.response}) binio::write_f32(out, v);
    for (float v : f.descriptors[i]) binio::write_f32(out, v);
  }
}

inline Features read_cache(std::istream& in) {
  binio::expect_magic(in, "SIFT");
  if (binio::read_u32(in) != kCacheVersion) fail(ErrorKind::FormatError, "unsupported descriptor cache version");
  const auto count = binio::read_u32(in);
  Features f;
  f.keypoints.resize(count);
  f.descriptors.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto& kp = f.keypoints[i];
    kp.x = binio::read_f32(in);
    kp.y = binio::read_f32(in);
    kp.scale = binio::read_f32(in);
    kp.orientation = binio::read_f32(in);
    kp.response = binio::read_f32(in);
    for (float& v : f.descriptors[i]) v = binio::read_f32(in);
  }
  return f;
}

inline void save_cache(const std::string& path, const Features& f) {
  auto out = binio::open_out(path);
  write_cache(out, f);
  if (!out) fail(ErrorKind::IoError, "failed writing " + path);
}

inline Features load_cache(const std::string& path) {
  auto in = binio::open_in(path);
  return read_cache(in);
}

}  // namespace roomsemble::sift
