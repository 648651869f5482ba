#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "httplib.h"
#include "json.hpp"

#include "roomsemble/categorize.hpp"
#include "roomsemble/error.hpp"
#include "roomsemble/imagecore.hpp"
#include "roomsemble/retrieval.hpp"
#include "roomsemble/store.hpp"

namespace roomsemble::api {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;
inline constexpr std::size_t kDefaultMaxUploadBytes = 10u * 1024u * 1024u;

struct ApiConfig {
  std::string bind_address = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::string image_store_root;
  std::string index_path;
  std::optional<std::string> tls_cert;
  std::optional<std::string> tls_key;
  std::size_t max_upload_bytes = kDefaultMaxUploadBytes;
  int upload_max_dim = kDefaultUploadMaxDim;
  std::string static_root;    // PWA build output; empty disables static serving
  std::string taxonomy_path;  // empty = built-in ten categories
  std::string labels_path;    // manifest categorizer (image_id or SHA-256 of upload bytes)
  std::string adapter_command;
  int adapter_timeout_ms = 10000;

  void validate() const {
    if (port < 0 || port > 65535) fail(ErrorKind::ConfigError, "port must be in 0..65535");
    if (max_upload_bytes == 0) fail(ErrorKind::ConfigError, "max_upload_bytes must be positive");
    if (upload_max_dim < 1) fail(ErrorKind::ConfigError, "upload_max_dim must be positive");
    if (tls_cert.has_value() != tls_key.has_value()) {
      fail(ErrorKind::ConfigError, "tls_cert and tls_key must be given together");
    }
    auto must_exist = [](const std::string& p, const char* what) {
      if (p.empty()) fail(ErrorKind::ConfigError, std::string(what) + " is required");
      if (!std::filesystem::exists(p)) fail(ErrorKind::ConfigError, std::string(what) + " not found: " + p);
    };
    must_exist(image_store_root, "image_store_root");
    must_exist(index_path, "index_path");
    if (tls_cert) must_exist(*tls_cert, "tls_cert");
    if (tls_key) must_exist(*tls_key, "tls_key");
    if (!taxonomy_path.empty()) must_exist(taxonomy_path, "taxonomy_path");
    if (!labels_path.empty()) must_exist(labels_path, "labels_path");
    if (labels_path.empty() == adapter_command.empty()) {
      fail(ErrorKind::ConfigError, "configure exactly one of labels_path and adapter_command");
    }
  }
};

namespace detail {

inline std::string resolve_against(const std::filesystem::path& base, const std::string& p) {
  if (p.empty() || base.empty() || std::filesystem::path(p).is_absolute()) return p;
  return (base / p).lexically_normal().string();
}

inline long long parse_env_int(const char* name, const char* value) {
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(value, &end, 10);
  if (errno != 0 || end == value || *end != '\0') {
    fail(ErrorKind::ConfigError, std::string(name) + " must be an integer, got '" + value + "'");
  }
  return v;
}

}  // namespace detail

/// Fields absent from the JSON keep their defaults. Relative paths resolve
/// against `base_dir` (the config file's directory).
inline ApiConfig config_from_json(const json& j, const std::filesystem::path& base_dir = {}) {
  ApiConfig c;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& k = it.key();
      const auto& v = it.value();
      if (k == "bind_address") c.bind_address = v.get<std::string>();
      else if (k == "port") c.port = v.get<int>();
      else if (k == "image_store_root") c.image_store_root = v.get<std::string>();
      else if (k == "index_path") c.index_path = v.get<std::string>();
      else if (k == "tls_cert") c.tls_cert = v.is_null() ? std::nullopt : std::optional(v.get<std::string>());
      else if (k == "tls_key") c.tls_key = v.is_null() ? std::nullopt : std::optional(v.get<std::string>());
      else if (k == "max_upload_bytes") c.max_upload_bytes = v.get<std::size_t>();
      else if (k == "upload_max_dim") c.upload_max_dim = v.get<int>();
      else if (k == "static_root") c.static_root = v.get<std::string>();
      else if (k == "taxonomy_path") c.taxonomy_path = v.get<std::string>();
      else if (k == "labels_path") c.labels_path = v.get<std::string>();
      else if (k == "adapter_command") c.adapter_command = v.get<std::string>();
      else if (k == "adapter_timeout_ms") c.adapter_timeout_ms = v.get<int>();
      else fail(ErrorKind::ConfigError, "unknown config key '" + k + "'");
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::ConfigError, std::string("bad config value: ") + e.what());
  }
  c.image_store_root = detail::resolve_against(base_dir, c.image_store_root);
  c.index_path = detail::resolve_against(base_dir, c.index_path);
  c.static_root = detail::resolve_against(base_dir, c.static_root);
  c.taxonomy_path = detail::resolve_against(base_dir, c.taxonomy_path);
  c.labels_path = detail::resolve_against(base_dir, c.labels_path);
  if (c.tls_cert) c.tls_cert = detail::resolve_against(base_dir, *c.tls_cert);
  if (c.tls_key) c.tls_key = detail::resolve_against(base_dir, *c.tls_key);
  return c;
}

/// ROOMSEMBLE_<FIELD> overrides, e.g. ROOMSEMBLE_PORT=9000. An empty
/// ROOMSEMBLE_TLS_CERT / ROOMSEMBLE_TLS_KEY clears TLS.
inline void apply_env_overrides(ApiConfig& c, const std::function<const char*(const char*)>& getenv_fn = std::getenv) {
  auto str = [&](const char* name, std::string& field) {
    if (const char* v = getenv_fn(name)) field = v;
  };
  auto opt = [&](const char* name, std::optional<std::string>& field) {
    if (const char* v = getenv_fn(name)) field = *v ? std::optional<std::string>(v) : std::nullopt;
  };
  auto integer = [&](const char* name, auto& field) {
    if (const char* v = getenv_fn(name)) {
      const long long n = detail::parse_env_int(name, v);
      if (n < 0) fail(ErrorKind::ConfigError, std::string(name) + " must not be negative");
      field = static_cast<std::remove_reference_t<decltype(field)>>(n);
    }
  };
  str("ROOMSEMBLE_BIND_ADDRESS", c.bind_address);
  integer("ROOMSEMBLE_PORT", c.port);
  str("ROOMSEMBLE_IMAGE_STORE_ROOT", c.image_store_root);
  str("ROOMSEMBLE_INDEX_PATH", c.index_path);
  opt("ROOMSEMBLE_TLS_CERT", c.tls_cert);
  opt("ROOMSEMBLE_TLS_KEY", c.tls_key);
  integer("ROOMSEMBLE_MAX_UPLOAD_BYTES", c.max_upload_bytes);
  integer("ROOMSEMBLE_UPLOAD_MAX_DIM", c.upload_max_dim);
  str("ROOMSEMBLE_STATIC_ROOT", c.static_root);
  str("ROOMSEMBLE_TAXONOMY_PATH", c.taxonomy_path);
  str("ROOMSEMBLE_LABELS_PATH", c.labels_path);
  str("ROOMSEMBLE_ADAPTER_COMMAND", c.adapter_command);
  integer("ROOMSEMBLE_ADAPTER_TIMEOUT_MS", c.adapter_timeout_ms);
}

inline ApiConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::ConfigError, "cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::ConfigError, path + ": " + e.what());
  }
  if (!j.is_object()) fail(ErrorKind::ConfigError, path + ": expected a JSON object");
  auto c = config_from_json(j, std::filesystem::absolute(path).parent_path());
  apply_env_overrides(c);
  return c;
}

inline std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    fail(ErrorKind::IoError, "sha256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

/// Whole days between an ISO date (YYYY-MM-DD) and `now`, UTC.
inline std::optional<long long> days_since(const std::string& date, std::chrono::system_clock::time_point now) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  if (std::sscanf(date.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3) return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) return std::nullopt;
  const auto today = std::chrono::floor<std::chrono::days>(now);
  return (today - std::chrono::sys_days{ymd}).count();
}

inline std::string image_url(const std::string& file_name) { return "/images/" + file_name; }

inline std::string content_type_for(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".html") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript; charset=utf-8";
  if (ext == ".css") return "text/css; charset=utf-8";
  if (ext == ".json") return "application/json";
  if (ext == ".webmanifest") return "application/manifest+json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".ico") return "image/x-icon";
  if (ext == ".txt") return "text/plain; charset=utf-8";
  return "application/octet-stream";
}

/// A single path segment safe to join under a served directory.
inline bool is_safe_segment(const std::string& s) {
  if (s.empty() || s == "." || s == "..") return false;
  for (char ch : s) {
    if (ch == '/' || ch == '\\' || ch == '\0') return false;
  }
  return true;
}

/// Each segment must be safe; used for nested asset paths.
inline bool is_safe_relative(const std::string& s) {
  if (s.empty()) return false;
  std::size_t start = 0;
  while (true) {
    const auto slash = s.find('/', start);
    if (!is_safe_segment(s.substr(start, slash == std::string::npos ? std::string::npos : slash - start))) return false;
    if (slash == std::string::npos) return true;
    start = slash + 1;
  }
}

/// The four-step upload pipeline, listing views and static serving over one
/// store and an immutable catalog index. The index can be swapped while the
/// server runs; requests in flight keep the index they started with.
class Service {
 public:
  using Clock = std::function<std::chrono::system_clock::time_point()>;

  Service(ApiConfig cfg, std::shared_ptr<store::Store> store, std::shared_ptr<const retrieval::CatalogIndex> index,
          std::shared_ptr<CategorizerBackend> categorizer, Clock clock = std::chrono::system_clock::now)
      : cfg_(std::move(cfg)),
        store_(std::move(store)),
        categorizer_(std::move(categorizer)),
        clock_(std::move(clock)) {
    set_index(std::move(index));
  }

  void set_index(std::shared_ptr<const retrieval::CatalogIndex> index) { std::atomic_store(&index_, std::move(index)); }
  std::shared_ptr<const retrieval::CatalogIndex> index() const { return std::atomic_load(&index_); }

  const ApiConfig& config() const { return cfg_; }
  store::Store& store() { return *store_; }

  void register_routes(httplib::Server& srv) {
    srv.set_payload_max_length(cfg_.max_upload_bytes);
    srv.Post("/api/photos", [this](const httplib::Request& req, httplib::Response& res) { post_photo(req, res); });
    srv.Get("/api/recommendations/latest",
            [this](const httplib::Request&, httplib::Response& res) { get_latest(res); });
    srv.Get(R"(/api/listings/([^/]+))",
            [this](const httplib::Request& req, httplib::Response& res) { get_listing(req.matches[1], res); });
    srv.Get("/api/categories", [this](const httplib::Request&, httplib::Response& res) { get_categories(res); });
    srv.Get(R"(/images/(photos|catalog)/(.*))", [this](const httplib::Request& req, httplib::Response& res) {
      get_image(req.matches[1], req.matches[2], res);
    });
    srv.Get("/", [this](const httplib::Request&, httplib::Response& res) { serve_static("index.html", res); });
    srv.Get(R"(/assets/(.*))", [this](const httplib::Request& req, httplib::Response& res) {
      serve_static("assets/" + std::string(req.matches[1]), res, true);
    });
    // Top-level shell files: manifest, service worker, icons.
    srv.Get(R"(/([^/]+\.(?:webmanifest|js|json|ico|png|svg|txt|html)))",
            [this](const httplib::Request& req, httplib::Response& res) { serve_static(req.matches[1], res); });
    srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.status == 413 && res.body.empty()) {
        write_error(res, 413, "PayloadTooLarge", "upload exceeds the configured size limit");
      } else if (res.body.empty()) {
        write_error(res, res.status, res.status == 404 ? "NotFound" : "HttpError", httplib::status_message(res.status));
      }
    });
    srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const Error& e) {
        write_error(res, status_for(e.kind()), std::string(to_string(e.kind())), e.what());
      } catch (const std::exception& e) {
        write_error(res, 500, "InternalError", e.what());
      }
    });
  }

  static int status_for(ErrorKind k) {
    switch (k) {
      case ErrorKind::MalformedImage:
      case ErrorKind::ImageTooSmall:
      case ErrorKind::ConfigError:
        return 400;
      case ErrorKind::EmptyCandidatePool:
        return 422;
      case ErrorKind::BackendUnavailable:
      case ErrorKind::UnknownImage:
        return 503;
      case ErrorKind::UnknownListing:
      case ErrorKind::UnknownPhoto:
      case ErrorKind::MissingImage:
        return 404;
      default:
        return 500;
    }
  }

  static void write_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void write_error(httplib::Response& res, int status, const std::string& error, const std::string& message) {
    write_json(res, status, {{"schema_version", kSchemaVersion}, {"error", error}, {"message", message}});
  }

  json recommendation_json(const store::RecommendationRow& row) const {
    const auto& l = row.listing;
    return {{"rank", row.recommendation.rank},
            {"image_id", row.image.image_id},
            {"image_url", image_url(row.image.file_name)},
            {"listing_id", l.listing_id},
            {"category", store_->taxonomy().label(row.image.category_id).name},
            {"ensemble_score", row.recommendation.ensemble_score},
            {"price", l.price},
            {"street_address", l.street_address},
            {"city", l.city},
            {"zip", l.zip}};
  }

  json photo_json(const store::Photo& p) const {
    json j = {{"photo_id", p.photo_id}, {"photo_url", image_url(p.file_name)}, {"uploaded_at", p.uploaded_at}};
    j["category"] = p.category_id ? json(store_->taxonomy().label(*p.category_id).name) : json(nullptr);
    return j;
  }

  /// Recommendations of the latest upload; nullopt when nothing was uploaded.
  std::optional<json> latest_json() const {
    const auto latest = store_->latest_recommendations();
    if (!latest) return std::nullopt;
    json j = photo_json(latest->photo);
    j["schema_version"] = kSchemaVersion;
    j["recommendations"] = json::array();
    for (const auto& row : latest->rows) j["recommendations"].push_back(recommendation_json(row));
    return j;
  }

 private:
  static std::optional<double> parse_price(const httplib::Request& req, const char* key) {
    if (!req.has_param(key)) return std::nullopt;
    const auto text = req.get_param_value(key);
    if (text.empty()) return std::nullopt;
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != text.size() || !std::isfinite(v) || v < 0) {
      fail(ErrorKind::ConfigError, std::string(key) + " must be a non-negative number");
    }
    return v;
  }

  void post_photo(const httplib::Request& req, httplib::Response& res) {
    retrieval::SearchFilters filters;
    filters.min_price = parse_price(req, "min_price");
    filters.max_price = parse_price(req, "max_price");
    if (req.has_param("location") && !req.get_param_value("location").empty()) {
      filters.location = req.get_param_value("location");
    }
    filters.validate();

    const httplib::MultipartFormData* file = nullptr;
    if (req.is_multipart_form_data()) {
      for (const char* key : {"photo", "image", "file"}) {
        auto it = req.files.find(key);
        if (it != req.files.end()) {
          file = &it->second;
          break;
        }
      }
      if (!file && !req.files.empty()) file = &req.files.begin()->second;
    }
    if (!file) fail(ErrorKind::MalformedImage, "expected a multipart upload with a 'photo' file part");
    if (file->content.size() > cfg_.max_upload_bytes) {
      write_error(res, 413, "PayloadTooLarge", "upload exceeds the configured size limit");
      return;
    }
    const std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(file->content.data()),
                                              file->content.size());

    // 1. save
    const auto saved = store_->save_photo(bytes, clock_(), cfg_.upload_max_dim);
    // 2. categorize (manifest backends key uploads by content hash)
    const auto cat = categorizer_->categorize(sha256_hex(bytes), store_->resolve(saved.photo.file_name).string());
    store_->set_photo_category(saved.photo.photo_id, cat.label.id);
    // 3. recommend
    const auto index = this->index();
    const auto query = retrieval::prepare_query(saved.image, cat.label.id, index->model);
    const auto outcome = retrieval::recommend(query, *index, filters, retrieval::EnsembleConfig{});
    // 4. record
    store_->record_recommendations(saved.photo.photo_id, outcome.results);

    auto photo = saved.photo;
    photo.category_id = cat.label.id;
    if (outcome.results.empty()) {
      json body = photo_json(photo);
      body["schema_version"] = kSchemaVersion;
      body["error"] = to_string(outcome.empty_reason.value_or(ErrorKind::EmptyCandidatePool));
      body["message"] = outcome.reason_message;
      write_json(res, 422, body);
      return;
    }
    json body = photo_json(photo);
    body["schema_version"] = kSchemaVersion;
    body["category_confidence"] = cat.confidence;
    body["recommendations"] = json::array();
    for (const auto& r : outcome.results) {
      const auto images = store_->images(r.listing_id);
      const auto img = std::find_if(images.begin(), images.end(), [&](const auto& i) { return i.image_id == r.image_id; });
      const auto listing = store_->listing(r.listing_id);
      if (img == images.end() || !listing) {
        fail(ErrorKind::UnknownImage, "index entry " + r.image_id + " is not in the store; rebuild the index");
      }
      store::RecommendationRow row{{photo.photo_id, r.image_id, static_cast<int>(r.rank), r.ensemble_score}, *img,
                                   *listing};
      auto item = recommendation_json(row);
      item["embedding_distance"] = r.embedding_distance;
      item["sift_score"] = r.sift_score;
      body["recommendations"].push_back(std::move(item));
    }
    write_json(res, 201, body);
  }

  void get_latest(httplib::Response& res) const {
    const auto j = latest_json();
    if (!j) {
      res.status = 204;
      return;
    }
    write_json(res, 200, *j);
  }

  void get_listing(const std::string& listing_id, httplib::Response& res) const {
    const auto listing = store_->listing(listing_id);
    if (!listing) {
      write_error(res, 404, std::string(to_string(ErrorKind::UnknownListing)), "no listing " + listing_id);
      return;
    }
    const auto images = store_->images(listing_id);
    std::vector<embedding::FeatureVector> features;
    const auto index = this->index();
    for (const auto& img : images) {
      const auto* entry = index ? index->find(img.image_id) : nullptr;
      features.push_back(entry ? entry->features
                               : embedding::base_features(load_image(store_->resolve(img.file_name).string())));
    }
    json gallery = json::array();
    if (!images.empty()) {
      for (auto i : retrieval::pca_rank(features).order) {
        gallery.push_back({{"image_id", images[i].image_id},
                           {"image_url", image_url(images[i].file_name)},
                           {"category", store_->taxonomy().label(images[i].category_id).name}});
      }
    }
    const auto age = days_since(listing->listed_date, clock_());
    write_json(res, 200,
               {{"schema_version", kSchemaVersion},
                {"listing_id", listing->listing_id},
                {"street_address", listing->street_address},
                {"city", listing->city},
                {"zip", listing->zip},
                {"price", listing->price},
                {"bedrooms", listing->bedrooms},
                {"bathrooms", listing->bathrooms},
                {"square_feet", listing->square_feet},
                {"lot_size", listing->lot_size},
                {"listed_date", listing->listed_date},
                {"age_days", age ? json(*age) : json(nullptr)},
                {"gallery", gallery}});
  }

  void get_categories(httplib::Response& res) const {
    write_json(res, 200, {{"schema_version", kSchemaVersion}, {"categories", store_->taxonomy().names()}});
  }

  void get_image(const std::string& kind, const std::string& file, httplib::Response& res) const {
    if (!is_safe_segment(file)) {
      write_error(res, 400, "BadPath", "invalid image path");
      return;
    }
    send_file(store_->root() / kind / file, res);
  }

  void serve_static(const std::string& rel, httplib::Response& res, bool nested = false) const {
    if (!(nested ? is_safe_relative(rel) : is_safe_segment(rel))) {
      write_error(res, 400, "BadPath", "invalid asset path");
      return;
    }
    if (cfg_.static_root.empty()) {
      write_error(res, 404, "NotFound", "static files are not configured");
      return;
    }
    send_file(std::filesystem::path(cfg_.static_root) / rel, res);
  }

  static void send_file(const std::filesystem::path& path, httplib::Response& res) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) {
      write_error(res, 404, "NotFound", "no such file");
      return;
    }
    std::ifstream in(path, std::ios::binary);
    std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    res.status = 200;
    res.set_content(std::move(body), content_type_for(path));
  }

  ApiConfig cfg_;
  std::shared_ptr<store::Store> store_;
  std::shared_ptr<const retrieval::CatalogIndex> index_;
  std::shared_ptr<CategorizerBackend> categorizer_;
  Clock clock_;
};

inline std::shared_ptr<CategorizerBackend> make_categorizer(const ApiConfig& cfg, const CategoryTaxonomy& taxonomy) {
  if (!cfg.adapter_command.empty()) {
    return std::make_shared<AdapterCategorizer>(cfg.adapter_command, taxonomy,
                                                std::chrono::milliseconds(cfg.adapter_timeout_ms));
  }
  return std::make_shared<ManifestCategorizer>(cfg.labels_path, taxonomy);
}

inline CategoryTaxonomy taxonomy_for(const ApiConfig& cfg) {
  return cfg.taxonomy_path.empty() ? default_taxonomy() : load_taxonomy(cfg.taxonomy_path);
}

/// Builds the server (TLS when configured), binds, reports the bound port via
/// `on_listen` and blocks until stop().
class Server {
 public:
  explicit Server(ApiConfig cfg) {
    cfg.validate();
    const auto taxonomy = taxonomy_for(cfg);
    auto st = std::make_shared<store::Store>(cfg.image_store_root, taxonomy);
    auto index = std::make_shared<const retrieval::CatalogIndex>(retrieval::load_index(cfg.index_path));
    auto categorizer = make_categorizer(cfg, taxonomy);
    if (cfg.tls_cert) {
      http_ = std::make_unique<httplib::SSLServer>(cfg.tls_cert->c_str(), cfg.tls_key->c_str());
    } else {
      http_ = std::make_unique<httplib::Server>();
    }
    if (!http_->is_valid()) fail(ErrorKind::ConfigError, "cannot initialize server (check TLS certificate and key)");
    service_ = std::make_unique<Service>(std::move(cfg), std::move(st), std::move(index), std::move(categorizer));
    service_->register_routes(*http_);
  }

  Service& service() { return *service_; }

  int bind() {
    const auto& cfg = service_->config();
    port_ = cfg.port == 0 ? http_->bind_to_any_port(cfg.bind_address)
                          : (http_->bind_to_port(cfg.bind_address, cfg.port) ? cfg.port : -1);
    if (port_ < 0) fail(ErrorKind::ConfigError, "cannot bind " + cfg.bind_address + ":" + std::to_string(cfg.port));
    return port_;
  }

  bool run() { return http_->listen_after_bind(); }
  void stop() { http_->stop(); }
  int port() const { return port_; }
  bool tls() const { return service_->config().tls_cert.has_value(); }

 private:
  std::unique_ptr<httplib::Server> http_;
  std::unique_ptr<Service> service_;
  int port_ = -1;
};

}  // namespace roomsemble::api
