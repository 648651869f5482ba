#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "roomsemble/binary_io.hpp"
#include "roomsemble/embedding.hpp"
#include "roomsemble/error.hpp"
#include "roomsemble/imagecore.hpp"
#include "roomsemble/sift.hpp"

namespace roomsemble::retrieval {

struct IndexEntry {
  std::string image_id;
  std::string listing_id;
  int category_id = -1;
  double price = 0.0;
  std::string city;
  std::string zip;
  embedding::EmbeddingVector embedding;  // f32-representable
  embedding::FeatureVector features;     // base features, f32-representable
  std::vector<sift::SiftDescriptor> descriptors;
  std::string descriptor_file;           // relative to the index directory
};

/// Immutable after construction; entries sorted by image_id.
struct CatalogIndex {
  embedding::EmbeddingModel model;
  std::string model_file;  // relative to the index directory
  std::vector<IndexEntry> entries;

  const IndexEntry* find(const std::string& image_id) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), image_id,
                               [](const IndexEntry& e, const std::string& id) { return e.image_id < id; });
    return (it != entries.end() && it->image_id == image_id) ? &*it : nullptr;
  }
};

struct SearchFilters {
  std::optional<double> min_price;
  std::optional<double> max_price;
  std::optional<std::string> location;  // city or zip, case-insensitive

  void validate() const {
    if (min_price && max_price && *min_price > *max_price) {
      fail(ErrorKind::ConfigError, "min_price must not exceed max_price");
    }
  }

  bool accepts(const IndexEntry& e) const {
    if (min_price && e.price < *min_price) return false;
    if (max_price && e.price > *max_price) return false;
    if (location && !location->empty()) {
      const auto want = embedding::lowercase(*location);
      if (embedding::lowercase(e.city) != want && embedding::lowercase(e.zip) != want) return false;
    }
    return true;
  }
};

struct EnsembleConfig {
  std::size_t shortlist_size = 50;
  double weight_embedding = 0.5;
  double weight_sift = 0.5;
  std::size_t k = 12;

  void validate() const {
    if (weight_embedding < 0 || weight_sift < 0 || !(weight_embedding + weight_sift > 0)) {
      fail(ErrorKind::ConfigError, "ensemble weights must be >= 0 with a positive sum");
    }
    if (k > shortlist_size) fail(ErrorKind::ConfigError, "k must not exceed the shortlist size");
  }
};

struct PoolStats {
  double min_distance = 0.0;
  double max_distance = 0.0;
};

struct RankedResult {
  std::string image_id;
  std::string listing_id;
  int category_id = -1;
  double ensemble_score = 0.0;
  double embedding_distance = 0.0;
  double sift_score = 0.0;
  std::size_t rank = 0;
};

struct RecommendOutcome {
  std::vector<RankedResult> results;
  std::optional<ErrorKind> empty_reason;
  std::string reason_message;
};

/// Weighted mean of the min-max normalized embedding closeness and the SIFT
/// score. A shortlist with a single distance value normalizes to 1.
inline double ensemble_score(double embedding_distance, double sift_score, const PoolStats& pool,
                             const EnsembleConfig& cfg) {
  const double span = pool.max_distance - pool.min_distance;
  const double closeness = span > 0 ? 1.0 - (embedding_distance - pool.min_distance) / span : 1.0;
  return (cfg.weight_embedding * closeness + cfg.weight_sift * sift_score) / (cfg.weight_embedding + cfg.weight_sift);
}

/// What the engine needs to know about the query image.
struct Query {
  int category_id = -1;
  embedding::FeatureVector features;
  embedding::EmbeddingVector embedding;
  std::vector<sift::SiftDescriptor> descriptors;
};

inline Query prepare_query(const Image& img, int category_id, const embedding::EmbeddingModel& model,
                           const sift::MatchConfig& sift_cfg = {}) {
  Query q;
  q.category_id = category_id;
  q.features = embedding::base_features(img);
  q.embedding = embedding::embed(model, q.features);
  embedding::quantize_all(q.embedding);
  q.descriptors = sift::extract(img, sift_cfg).descriptors;
  return q;
}

namespace detail {

// Runs fn(i) for i in [0, n) on a few worker threads. Each slot is written by
// exactly one worker, so results do not depend on scheduling.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace detail

/// Category gate and filters, embedding shortlist of size M, SIFT rerank by
/// ensemble score, top k. Ties break by ascending image_id at both stages.
inline RecommendOutcome recommend(const Query& query, const CatalogIndex& index, const SearchFilters& filters,
                                  const EnsembleConfig& cfg, const sift::MatchConfig& sift_cfg = {}) {
  cfg.validate();
  filters.validate();
  struct Candidate {
    const IndexEntry* entry;
    double distance;
  };
  std::vector<Candidate> pool;
  for (const auto& e : index.entries) {
    if (e.category_id != query.category_id || !filters.accepts(e)) continue;
    pool.push_back({&e, std::sqrt(embedding::squared_distance(query.embedding, e.embedding))});
  }
  RecommendOutcome out;
  if (pool.empty()) {
    out.empty_reason = ErrorKind::EmptyCandidatePool;
    out.reason_message = "no catalog image matches the query category and filters";
    return out;
  }
  std::sort(pool.begin(), pool.end(), [](const Candidate& a, const Candidate& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.entry->image_id < b.entry->image_id;
  });
  if (pool.size() > cfg.shortlist_size) pool.resize(cfg.shortlist_size);

  PoolStats stats{pool.front().distance, pool.front().distance};
  for (const auto& c : pool) {
    stats.min_distance = std::min(stats.min_distance, c.distance);
    stats.max_distance = std::max(stats.max_distance, c.distance);
  }
  std::vector<double> sift_scores(pool.size());
  detail::parallel_for(pool.size(), [&](std::size_t i) {
    sift_scores[i] = sift::descriptor_similarity(query.descriptors, pool[i].entry->descriptors, sift_cfg);
  });

  out.results.reserve(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& e = *pool[i].entry;
    out.results.push_back({e.image_id, e.listing_id, e.category_id,
                           ensemble_score(pool[i].distance, sift_scores[i], stats, cfg), pool[i].distance,
                           sift_scores[i], 0});
  }
  std::sort(out.results.begin(), out.results.end(), [](const RankedResult& a, const RankedResult& b) {
    if (a.ensemble_score != b.ensemble_score) return a.ensemble_score > b.ensemble_score;
    return a.image_id < b.image_id;
  });
  if (out.results.size() > cfg.k) out.results.resize(cfg.k);
  for (std::size_t i = 0; i < out.results.size(); ++i) out.results[i].rank = i + 1;
  return out;
}

// ---------------------------------------------------------------------------
// Gallery ordering

struct PcaRanking {
  std::vector<std::size_t> order;
  std::vector<double> component;  // unit length, empty when degenerate
  bool degenerate = false;
  int iterations = 0;
};

inline constexpr double kPcaTolerance = 1e-8;
inline constexpr int kPcaMaxIterations = 1000;

/// Orders vectors by their projection on the first principal component
/// (descending). The component comes from power iteration on the covariance,
/// applied implicitly as X^T (X v), with its largest-magnitude loading made
/// positive. Identical inputs have no component; input order is returned.
inline PcaRanking pca_rank(const std::vector<embedding::FeatureVector>& features) {
  PcaRanking r;
  if (features.empty()) fail(ErrorKind::DimensionMismatch, "pca_rank needs at least one vector");
  const std::size_t n = features.size(), dim = features.front().size();
  for (const auto& f : features) {
    if (f.size() != dim) fail(ErrorKind::DimensionMismatch, "pca_rank vectors differ in dimension");
  }
  r.order.resize(n);
  std::iota(r.order.begin(), r.order.end(), 0);

  std::vector<double> mean(dim, 0.0);
  for (const auto& f : features)
    for (std::size_t j = 0; j < dim; ++j) mean[j] += f[j];
  for (double& m : mean) m /= static_cast<double>(n);
  std::vector<std::vector<double>> centered(n, std::vector<double>(dim));
  std::size_t start_row = 0;
  double best_norm = 0.0, total_scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double norm = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      centered[i][j] = features[i][j] - mean[j];
      norm += centered[i][j] * centered[i][j];
      total_scale = std::max(total_scale, std::abs(features[i][j]));
    }
    if (norm > best_norm) {
      best_norm = norm;
      start_row = i;
    }
  }
  const double eps = 1e-12 * std::max(1.0, total_scale);
  if (std::sqrt(best_norm) <= eps) {
    r.degenerate = true;
    return r;
  }

  auto normalize = [](std::vector<double>& v) {
    const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (norm > 0)
      for (double& x : v) x /= norm;
    return norm;
  };
  std::vector<double> v = centered[start_row];
  normalize(v);
  std::vector<double> proj(n), next(dim);
  for (r.iterations = 1; r.iterations <= kPcaMaxIterations; ++r.iterations) {
    for (std::size_t i = 0; i < n; ++i) proj[i] = std::inner_product(centered[i].begin(), centered[i].end(), v.begin(), 0.0);
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < dim; ++j) next[j] += proj[i] * centered[i][j];
    if (normalize(next) <= eps * eps) {
      r.degenerate = true;
      return r;
    }
    double delta = 0.0;
    for (std::size_t j = 0; j < dim; ++j) delta += (next[j] - v[j]) * (next[j] - v[j]);
    v.swap(next);
    if (std::sqrt(delta) < kPcaTolerance) break;
  }
  r.iterations = std::min(r.iterations, kPcaMaxIterations);

  std::size_t lead = 0;
  for (std::size_t j = 1; j < dim; ++j)
    if (std::abs(v[j]) > std::abs(v[lead])) lead = j;
  if (v[lead] < 0)
    for (double& x : v) x = -x;

  for (std::size_t i = 0; i < n; ++i) proj[i] = std::inner_product(centered[i].begin(), centered[i].end(), v.begin(), 0.0);
  std::stable_sort(r.order.begin(), r.order.end(), [&](std::size_t a, std::size_t b) { return proj[a] > proj[b]; });
  r.component = std::move(v);
  return r;
}

// ---------------------------------------------------------------------------
// Index construction and persistence

struct CatalogImage {
  std::string image_id;
  std::string listing_id;
  int category_id = -1;
  double price = 0.0;
  std::string city;
  std::string zip;
  std::string image_path;
};

struct BuildFailure {
  std::string image_id;
  std::string message;
};

struct BuildReport {
  CatalogIndex index;
  std::vector<BuildFailure> failures;
};

inline std::string descriptor_file_name(const std::string& image_id) { return "descriptors/" + image_id + ".sift"; }

/// Categories come in with the images (assigned at ingest). When
/// `index_dir` is non-empty each image's descriptors are cached under
/// index_dir/descriptors/. Per-image failures are collected, not thrown.
inline BuildReport build_index(const std::vector<CatalogImage>& images, const embedding::EmbeddingModel& model,
                               const std::string& index_dir = {}, const sift::MatchConfig& sift_cfg = {}) {
  namespace fs = std::filesystem;
  if (!index_dir.empty()) fs::create_directories(fs::path(index_dir) / "descriptors");
  std::vector<std::optional<IndexEntry>> slots(images.size());
  std::vector<std::string> errors(images.size());
  detail::parallel_for(images.size(), [&](std::size_t i) {
    const auto& src = images[i];
    try {
      if (src.category_id < 0) fail(ErrorKind::UnknownImage, "image has no category");
      const Image img = load_image(src.image_path);
      IndexEntry e;
      e.image_id = src.image_id;
      e.listing_id = src.listing_id;
      e.category_id = src.category_id;
      e.price = src.price;
      e.city = src.city;
      e.zip = src.zip;
      e.features = embedding::base_features(img);
      e.embedding = embedding::embed(model, e.features);
      embedding::quantize_all(e.embedding);
      auto feats = sift::extract(img, sift_cfg);
      e.descriptor_file = descriptor_file_name(src.image_id);
      if (!index_dir.empty()) sift::save_cache((fs::path(index_dir) / e.descriptor_file).string(), feats);
      e.descriptors = std::move(feats.descriptors);
      slots[i] = std::move(e);
    } catch (const std::exception& ex) {
      errors[i] = ex.what();
    }
  });
  BuildReport report;
  report.index.model = model;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (slots[i]) report.index.entries.push_back(std::move(*slots[i]));
    else report.failures.push_back({images[i].image_id, errors[i]});
  }
  std::sort(report.index.entries.begin(), report.index.entries.end(),
            [](const IndexEntry& a, const IndexEntry& b) { return a.image_id < b.image_id; });
  for (std::size_t i = 1; i < report.index.entries.size(); ++i) {
    if (report.index.entries[i].image_id == report.index.entries[i - 1].image_id) {
      fail(ErrorKind::FormatError, "duplicate image id " + report.index.entries[i].image_id);
    }
  }
  return report;
}

inline constexpr std::uint32_t kIndexVersion = 1;

/// "RIDX", version, model file, embedding dim, feature dim, entry count, then
/// per entry: image_id, listing_id, category id, price (f64), city, zip,
/// descriptor file, embedding (f32), base features (f32). Paths are relative
/// to the index file's directory; the model file must already exist there.
inline void save_index(const std::string& path, const CatalogIndex& index) {
  auto out = binio::open_out(path);
  const std::size_t emb_dim = index.model.dim_out;
  const std::size_t feat_dim = index.model.dim_in;
  binio::write_magic(out, "RIDX");
  binio::write_u32(out, kIndexVersion);
  binio::write_string(out, index.model_file);
  binio::write_u32(out, static_cast<std::uint32_t>(emb_dim));
  binio::write_u32(out, static_cast<std::uint32_t>(feat_dim));
  binio::write_u32(out, static_cast<std::uint32_t>(index.entries.size()));
  for (const auto& e : index.entries) {
    binio::write_string(out, e.image_id);
    binio::write_string(out, e.listing_id);
    binio::write_u32(out, static_cast<std::uint32_t>(e.category_id));
    binio::write_f64(out, e.price);
    binio::write_string(out, e.city);
    binio::write_string(out, e.zip);
    binio::write_string(out, e.descriptor_file);
    for (double v : e.embedding) binio::write_f32(out, static_cast<float>(v));
    for (double v : e.features) binio::write_f32(out, static_cast<float>(v));
  }
  if (!out) fail(ErrorKind::IoError, "failed writing " + path);
}

inline CatalogIndex load_index(const std::string& path) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(path).parent_path();
  auto in = binio::open_in(path);
  binio::expect_magic(in, "RIDX");
  if (binio::read_u32(in) != kIndexVersion) fail(ErrorKind::FormatError, "unsupported index version");
  CatalogIndex index;
  index.model_file = binio::read_string(in);
  index.model = embedding::load_model((dir / index.model_file).string());
  const auto emb_dim = binio::read_u32(in);
  const auto feat_dim = binio::read_u32(in);
  if (emb_dim != index.model.dim_out || feat_dim != index.model.dim_in) {
    fail(ErrorKind::FormatError, "index dimensions do not match model " + index.model_file);
  }
  const auto count = binio::read_u32(in);
  index.entries.resize(count);
  for (auto& e : index.entries) {
    e.image_id = binio::read_string(in);
    e.listing_id = binio::read_string(in);
    e.category_id = static_cast<int>(binio::read_u32(in));
    e.price = binio::read_f64(in);
    e.city = binio::read_string(in);
    e.zip = binio::read_string(in);
    e.descriptor_file = binio::read_string(in);
    e.embedding.resize(emb_dim);
    for (double& v : e.embedding) v = binio::read_f32(in);
    e.features.resize(feat_dim);
    for (double& v : e.features) v = binio::read_f32(in);
    e.descriptors = sift::load_cache((dir / e.descriptor_file).string()).descriptors;
  }
  return index;
}

}  // namespace roomsemble::retrieval
