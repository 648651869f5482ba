#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "roomsemble/binary_io.hpp"
#include "roomsemble/error.hpp"
#include "roomsemble/imagecore.hpp"

namespace roomsemble::embedding {

/// Base image representation x. Components are float-representable so the
/// on-disk f32 formats round-trip exactly.
using FeatureVector = std::vector<double>;
/// f(x) = W x.
using EmbeddingVector = std::vector<double>;

inline constexpr int kThumbSide = 32;
inline constexpr int kHueBins = 4, kSatBins = 4, kValBins = 4;
inline constexpr std::size_t kBaseFeatureDim =
    static_cast<std::size_t>(kThumbSide) * kThumbSide + kHueBins * kSatBins * kValBins;
inline constexpr std::size_t kDefaultEmbeddingDim = 64;

inline double quantize(double v) { return static_cast<double>(static_cast<float>(v)); }

inline void quantize_all(std::vector<double>& v) {
  for (double& x : v) x = quantize(x);
}

/// 32x32 area-averaged luminance (scaled by 1/32 so the block has norm <= 1)
/// followed by a 4x4x4 HSV histogram normalized to unit mass.
inline FeatureVector base_features(const Image& img) {
  FeatureVector out;
  out.reserve(kBaseFeatureDim);
  const GrayImage gray = to_gray(img);
  Image gray_img(gray.width, gray.height, 1);
  gray_img.data = gray.data;
  const Image thumb = resize_area(gray_img, kThumbSide, kThumbSide);
  for (float v : thumb.data) out.push_back(quantize(v / static_cast<double>(kThumbSide)));

  std::vector<double> hist(kHueBins * kSatBins * kValBins, 0.0);
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  for (std::size_t i = 0; i < n; ++i) {
    double r, g, b;
    if (img.channels == 3) {
      r = img.data[i * 3];
      g = img.data[i * 3 + 1];
      b = img.data[i * 3 + 2];
    } else {
      r = g = b = img.data[i];
    }
    const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
    const double delta = mx - mn;
    double h = 0.0;
    if (delta > 0) {
      if (mx == r) h = std::fmod((g - b) / delta, 6.0);
      else if (mx == g) h = (b - r) / delta + 2.0;
      else h = (r - g) / delta + 4.0;
      h /= 6.0;
      if (h < 0) h += 1.0;
    }
    const double s = mx > 0 ? delta / mx : 0.0;
    const double v = mx;
    const auto bin = [](double t, int bins) { return std::min(bins - 1, static_cast<int>(t * bins)); };
    hist[(bin(h, kHueBins) * kSatBins + bin(s, kSatBins)) * kValBins + bin(v, kValBins)] += 1.0;
  }
  for (double c : hist) out.push_back(quantize(n ? c / static_cast<double>(n) : 0.0));
  return out;
}

/// Linear embedding f(x) = W x, W stored row-major (dim_out x dim_in).
struct EmbeddingModel {
  std::size_t dim_in = 0;
  std::size_t dim_out = 0;
  std::vector<double> weights;

  double& w(std::size_t r, std::size_t c) { return weights[r * dim_in + c]; }
  double w(std::size_t r, std::size_t c) const { return weights[r * dim_in + c]; }
};

inline EmbeddingVector embed(const EmbeddingModel& model, const FeatureVector& x) {
  if (x.size() != model.dim_in) {
    fail(ErrorKind::DimensionMismatch,
         "feature has " + std::to_string(x.size()) + " dims, model expects " + std::to_string(model.dim_in));
  }
  EmbeddingVector out(model.dim_out, 0.0);
  for (std::size_t r = 0; r < model.dim_out; ++r) {
    const double* row = &model.weights[r * model.dim_in];
    double acc = 0.0;
    for (std::size_t c = 0; c < model.dim_in; ++c) acc += row[c] * x[c];
    out[r] = acc;
  }
  return out;
}

inline double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) fail(ErrorKind::DimensionMismatch, "vector sizes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

/// ||fa - fp||^2 - ||fa - fn||^2, unclamped.
inline double triplet_loss(const EmbeddingVector& fa, const EmbeddingVector& fp, const EmbeddingVector& fn) {
  if (fa.size() != fp.size() || fa.size() != fn.size()) fail(ErrorKind::DimensionMismatch, "triplet dimensions differ");
  return squared_distance(fa, fp) - squared_distance(fa, fn);
}

inline double hinge_triplet_loss(const EmbeddingVector& fa, const EmbeddingVector& fp, const EmbeddingVector& fn,
                                 double margin) {
  return std::max(0.0, triplet_loss(fa, fp, fn) + margin);
}

/// dL/dW of the hinge loss for f(x) = W x:
///   2 [ W(xa-xp)(xa-xp)^T - W(xa-xn)(xa-xn)^T ]  while loss + margin > 0,
/// zero otherwise. Same layout as EmbeddingModel::weights.
inline std::vector<double> triplet_loss_grad(const EmbeddingModel& model, const FeatureVector& xa,
                                             const FeatureVector& xp, const FeatureVector& xn, double margin) {
  if (xa.size() != model.dim_in || xp.size() != model.dim_in || xn.size() != model.dim_in) {
    fail(ErrorKind::DimensionMismatch, "feature dimension does not match model");
  }
  std::vector<double> grad(model.weights.size(), 0.0);
  const auto fa = embed(model, xa), fp = embed(model, xp), fn = embed(model, xn);
  if (triplet_loss(fa, fp, fn) + margin <= 0.0) return grad;
  std::vector<double> dp(model.dim_in), dn(model.dim_in);
  for (std::size_t c = 0; c < model.dim_in; ++c) {
    dp[c] = xa[c] - xp[c];
    dn[c] = xa[c] - xn[c];
  }
  for (std::size_t r = 0; r < model.dim_out; ++r) {
    const double ep = 2.0 * (fa[r] - fp[r]);
    const double en = 2.0 * (fa[r] - fn[r]);
    double* g = &grad[r * model.dim_in];
    for (std::size_t c = 0; c < model.dim_in; ++c) g[c] = ep * dp[c] - en * dn[c];
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Triplet sampling

struct CatalogEntry {
  std::string image_id;
  std::string listing_id;
  std::string category;
};

struct Triplet {
  std::string anchor_id;
  std::string positive_id;
  std::string negative_id;
  std::string category;
  friend bool operator==(const Triplet&, const Triplet&) = default;
};

struct SkippedGroup {
  std::string listing_id;
  std::string category;
  ErrorKind reason = ErrorKind::NoNegativesAvailable;
};

struct SamplingResult {
  std::vector<Triplet> triplets;
  std::vector<SkippedGroup> skipped;
};

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline bool is_bedroom(std::string_view category) { return lowercase(category) == "bedroom"; }

/// Photos of one listing sharing a category are treated as views of the same
/// room: every ordered pair becomes anchor/positive, with one negative drawn
/// uniformly from the same category in other listings. Bedrooms are skipped
/// (houses usually have several). Groups whose category appears in no other
/// listing are reported in `skipped`.
inline SamplingResult sample_triplets(const std::vector<CatalogEntry>& catalog, std::uint64_t seed) {
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> groups;
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> by_category;  // category -> (id, listing)
  for (const auto& e : catalog) {
    groups[{e.listing_id, e.category}].push_back(e.image_id);
    by_category[e.category].emplace_back(e.image_id, e.listing_id);
  }
  for (auto& [key, ids] : groups) std::sort(ids.begin(), ids.end());
  for (auto& [cat, members] : by_category) std::sort(members.begin(), members.end());

  SamplingResult result;
  std::mt19937_64 rng(seed);
  for (const auto& [key, ids] : groups) {
    const auto& [listing, category] = key;
    if (ids.size() < 2 || is_bedroom(category)) continue;
    std::vector<std::string> negatives;
    for (const auto& [id, other_listing] : by_category[category]) {
      if (other_listing != listing) negatives.push_back(id);
    }
    if (negatives.empty()) {
      result.skipped.push_back({listing, category, ErrorKind::NoNegativesAvailable});
      continue;
    }
    std::uniform_int_distribution<std::size_t> pick(0, negatives.size() - 1);
    for (const auto& anchor : ids) {
      for (const auto& positive : ids) {
        if (anchor == positive) continue;
        result.triplets.push_back({anchor, positive, negatives[pick(rng)], category});
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  double margin = 0.2;
  double learning_rate = 0.01;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::uint64_t seed = 7;
  std::size_t dim_out = kDefaultEmbeddingDim;
};

struct TrainResult {
  EmbeddingModel model;
  std::vector<double> epoch_loss;  // mean hinge loss seen during each epoch
};

/// Gaussian rows orthonormalized by Gram-Schmidt (dim_out <= dim_in).
inline EmbeddingModel random_orthonormal_model(std::size_t dim_in, std::size_t dim_out, std::uint64_t seed) {
  if (dim_out == 0 || dim_out > dim_in) fail(ErrorKind::ConfigError, "embedding needs 0 < dim_out <= dim_in");
  EmbeddingModel m{dim_in, dim_out, std::vector<double>(dim_in * dim_out)};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t r = 0; r < dim_out; ++r) {
    double* row = &m.weights[r * dim_in];
    double norm = 0.0;
    while (norm < 1e-8) {
      for (std::size_t c = 0; c < dim_in; ++c) row[c] = normal(rng);
      for (std::size_t p = 0; p < r; ++p) {
        const double* prev = &m.weights[p * dim_in];
        const double dot = std::inner_product(row, row + dim_in, prev, 0.0);
        for (std::size_t c = 0; c < dim_in; ++c) row[c] -= dot * prev[c];
      }
      norm = std::sqrt(std::inner_product(row, row + dim_in, row, 0.0));
    }
    for (std::size_t c = 0; c < dim_in; ++c) row[c] /= norm;
  }
  quantize_all(m.weights);
  return m;
}

/// Mini-batch gradient descent on the hinge triplet loss. Batches follow a
/// seeded shuffle of the triplets each epoch; the returned weights are
/// rounded to f32 so a saved model reloads bit-identically.
inline TrainResult train_embedding(const std::vector<Triplet>& triplets,
                                   const std::map<std::string, FeatureVector>& features, const TrainConfig& cfg) {
  if (triplets.empty()) fail(ErrorKind::EmptyTripletSet, "no triplets to train on");
  if (cfg.margin < 0 || !(cfg.learning_rate > 0)) fail(ErrorKind::ConfigError, "margin >= 0 and learning_rate > 0 required");
  struct Resolved {
    const FeatureVector* a;
    const FeatureVector* p;
    const FeatureVector* n;
  };
  std::vector<Resolved> resolved;
  resolved.reserve(triplets.size());
  const auto lookup = [&](const std::string& id) -> const FeatureVector* {
    auto it = features.find(id);
    if (it == features.end()) fail(ErrorKind::UnknownImage, "no feature vector for image " + id);
    return &it->second;
  };
  for (const auto& t : triplets) resolved.push_back({lookup(t.anchor_id), lookup(t.positive_id), lookup(t.negative_id)});
  const std::size_t dim_in = resolved.front().a->size();
  for (const auto& r : resolved) {
    if (r.a->size() != dim_in || r.p->size() != dim_in || r.n->size() != dim_in) {
      fail(ErrorKind::DimensionMismatch, "feature vectors differ in dimension");
    }
  }

  TrainResult result;
  result.model = random_orthonormal_model(dim_in, std::min(cfg.dim_out, dim_in), cfg.seed);
  if (cfg.epochs == 0) return result;
  EmbeddingModel& model = result.model;
  const std::size_t batch = std::max<std::size_t>(1, cfg.batch_size);
  std::vector<std::size_t> order(resolved.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed ^ 0x9E3779B97F4A7C15ull);
  std::vector<double> grad_sum(model.weights.size());

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::fill(grad_sum.begin(), grad_sum.end(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const auto& r = resolved[order[k]];
        loss_sum += hinge_triplet_loss(embed(model, *r.a), embed(model, *r.p), embed(model, *r.n), cfg.margin);
        const auto g = triplet_loss_grad(model, *r.a, *r.p, *r.n, cfg.margin);
        for (std::size_t i = 0; i < g.size(); ++i) grad_sum[i] += g[i];
      }
      const double step = cfg.learning_rate / static_cast<double>(end - start);
      for (std::size_t i = 0; i < model.weights.size(); ++i) model.weights[i] -= step * grad_sum[i];
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(order.size()));
  }
  quantize_all(model.weights);
  return result;
}

// ---------------------------------------------------------------------------
// File formats

inline constexpr std::uint32_t kModelVersion = 1;
inline constexpr std::uint32_t kFeatureFileVersion = 1;

/// "TEMB", version, dim_in, dim_out (u32 LE), then row-major f32 weights.
inline void save_model(const std::string& path, const EmbeddingModel& m) {
  auto out = binio::open_out(path);
  binio::write_magic(out, "TEMB");
  binio::write_u32(out, kModelVersion);
  binio::write_u32(out, static_cast<std::uint32_t>(m.dim_in));
  binio::write_u32(out, static_cast<std::uint32_t>(m.dim_out));
  for (double w : m.weights) binio::write_f32(out, static_cast<float>(w));
  if (!out) fail(ErrorKind::IoError, "failed writing " + path);
}

inline EmbeddingModel load_model(const std::string& path) {
  auto in = binio::open_in(path);
  binio::expect_magic(in, "TEMB");
  if (binio::read_u32(in) != kModelVersion) fail(ErrorKind::FormatError, "unsupported model version");
  EmbeddingModel m;
  m.dim_in = binio::read_u32(in);
  m.dim_out = binio::read_u32(in);
  if (m.dim_out == 0 || m.dim_out > m.dim_in) fail(ErrorKind::FormatError, "invalid model dimensions");
  m.weights.resize(m.dim_in * m.dim_out);
  for (double& w : m.weights) w = binio::read_f32(in);
  return m;
}

/// "FEAT", version, dim, count, then per record: id (u32 length + bytes)
/// followed by dim f32 values.
inline void save_features(const std::string& path, const std::map<std::string, FeatureVector>& features) {
  auto out = binio::open_out(path);
  const std::size_t dim = features.empty() ? 0 : features.begin()->second.size();
  binio::write_magic(out, "FEAT");
  binio::write_u32(out, kFeatureFileVersion);
  binio::write_u32(out, static_cast<std::uint32_t>(dim));
  binio::write_u32(out, static_cast<std::uint32_t>(features.size()));
  for (const auto& [id, values] : features) {
    if (values.size() != dim) fail(ErrorKind::DimensionMismatch, "feature " + id + " has the wrong dimension");
    binio::write_string(out, id);
    for (double v : values) binio::write_f32(out, static_cast<float>(v));
  }
  if (!out) fail(ErrorKind::IoError, "failed writing " + path);
}

inline std::map<std::string, FeatureVector> load_features(const std::string& path) {
  auto in = binio::open_in(path);
  binio::expect_magic(in, "FEAT");
  if (binio::read_u32(in) != kFeatureFileVersion) fail(ErrorKind::FormatError, "unsupported feature file version");
  const auto dim = binio::read_u32(in);
  const auto count = binio::read_u32(in);
  std::map<std::string, FeatureVector> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto id = binio::read_string(in);
    FeatureVector v(dim);
    for (double& x : v) x = binio::read_f32(in);
    out.emplace(std::move(id), std::move(v));
  }
  return out;
}

/// One triplet per line: anchor, positive, negative, category (tab separated).
inline void write_triplets(std::ostream& out, const std::vector<Triplet>& triplets) {
  for (const auto& t : triplets) out << t.anchor_id << '\t' << t.positive_id << '\t' << t.negative_id << '\t' << t.category << '\n';
}

inline std::vector<Triplet> read_triplets(std::istream& in) {
  std::vector<Triplet> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() != 4) fail(ErrorKind::FormatError, "triplet line " + std::to_string(line_no) + " needs 4 columns");
    out.push_back({cols[0], cols[1], cols[2], cols[3]});
  }
  return out;
}

inline void save_triplets(const std::string& path, const std::vector<Triplet>& triplets) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IoError, "cannot create " + path);
  write_triplets(out, triplets);
}

inline std::vector<Triplet> load_triplets(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path);
  return read_triplets(in);
}

}  // namespace roomsemble::embedding
