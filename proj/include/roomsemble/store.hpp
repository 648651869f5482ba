#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <sqlite3.h>

#include "roomsemble/categorize.hpp"
#include "roomsemble/csv.hpp"
#include "roomsemble/error.hpp"
#include "roomsemble/imagecore.hpp"
#include "roomsemble/retrieval.hpp"

namespace roomsemble::store {

/// Must stay identical to sql/schema.sql (checked by the store tests).
inline constexpr std::string_view kSchemaDdl = R"sql(-- Roomsemble catalog schema (SQLite dialect, portable DDL).
CREATE TABLE IF NOT EXISTS category (
  category_id INTEGER PRIMARY KEY,
  name        TEXT NOT NULL UNIQUE
);

CREATE TABLE IF NOT EXISTS listing (
  listing_id     TEXT PRIMARY KEY,
  street_address TEXT NOT NULL,
  city           TEXT NOT NULL,
  zip            TEXT NOT NULL,
  price          REAL NOT NULL CHECK (price >= 0),
  bedrooms       INTEGER NOT NULL,
  bathrooms      REAL NOT NULL,
  square_feet    REAL NOT NULL,
  lot_size       REAL NOT NULL,
  listed_date    TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS real_estate_image (
  image_id    TEXT PRIMARY KEY,
  listing_id  TEXT NOT NULL REFERENCES listing (listing_id),
  file_name   TEXT NOT NULL,
  source_path TEXT NOT NULL,
  category_id INTEGER NOT NULL REFERENCES category (category_id),
  UNIQUE (listing_id, source_path)
);

CREATE TABLE IF NOT EXISTS photo (
  photo_id    INTEGER PRIMARY KEY AUTOINCREMENT,
  file_name   TEXT NOT NULL,
  uploaded_at TEXT NOT NULL,
  category_id INTEGER REFERENCES category (category_id)
);

CREATE TABLE IF NOT EXISTS recommendation (
  photo_id       INTEGER NOT NULL REFERENCES photo (photo_id),
  image_id       TEXT NOT NULL REFERENCES real_estate_image (image_id),
  rank           INTEGER NOT NULL CHECK (rank >= 1),
  ensemble_score REAL NOT NULL,
  PRIMARY KEY (photo_id, image_id),
  UNIQUE (photo_id, rank)
);

CREATE INDEX IF NOT EXISTS real_estate_image_listing ON real_estate_image (listing_id);
CREATE INDEX IF NOT EXISTS photo_recency ON photo (uploaded_at, photo_id);
)sql";

struct Listing {
  std::string listing_id;
  std::string street_address;
  std::string city;
  std::string zip;
  double price = 0.0;
  int bedrooms = 0;
  double bathrooms = 0.0;
  double square_feet = 0.0;
  double lot_size = 0.0;
  std::string listed_date;  // YYYY-MM-DD
};

struct RealEstateImage {
  std::string image_id;
  std::string listing_id;
  std::string file_name;  // relative to the store root, e.g. catalog/L1-1.png
  int category_id = -1;
};

struct Photo {
  std::int64_t photo_id = 0;
  std::string file_name;    // relative to the store root, e.g. photos/7.png
  std::string uploaded_at;  // ISO-8601 UTC
  std::optional<int> category_id;
};

struct Recommendation {
  std::int64_t photo_id = 0;
  std::string image_id;
  int rank = 0;
  double ensemble_score = 0.0;
};

struct RecommendationRow {
  Recommendation recommendation;
  RealEstateImage image;
  Listing listing;
};

struct LatestRecommendations {
  Photo photo;
  std::vector<RecommendationRow> rows;
};

struct IngestFailure {
  std::size_t row = 0;  // 1-based data row of the manifest
  std::string listing_id;
  std::string photo_path;
  std::string message;
};

struct IngestReport {
  std::size_t listings = 0;  // newly added
  std::size_t images = 0;    // newly added
  std::vector<IngestFailure> failures;
};

struct SavedPhoto {
  Photo photo;
  Image image;  // decoded and resized pixels, as written to disk
};

inline constexpr std::string_view kManifestColumns[] = {
    "listing_id", "street_address", "city",     "zip",         "price",      "bedrooms",
    "bathrooms",  "square_feet",    "lot_size", "listed_date", "photo_paths"};

inline std::string iso8601_utc(std::chrono::system_clock::time_point t) {
  const auto secs = std::chrono::time_point_cast<std::chrono::seconds>(t);
  const auto millis = std::chrono::duration_cast<std::chrono::milliseconds>(t - secs).count();
  const std::time_t tt = std::chrono::system_clock::to_time_t(secs);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[96];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(millis));
  return buf;
}

namespace detail {

class Statement {
 public:
  Statement(sqlite3* db, std::string_view sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql.data(), static_cast<int>(sql.size()), &stmt_, nullptr) != SQLITE_OK) {
      fail(ErrorKind::IoError, std::string("sqlite prepare: ") + sqlite3_errmsg(db));
    }
  }
  ~Statement() { sqlite3_finalize(stmt_); }
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;

  Statement& bind(int i, std::string_view v) {
    check(sqlite3_bind_text(stmt_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT));
    return *this;
  }
  Statement& bind(int i, const std::string& v) { return bind(i, std::string_view(v)); }
  Statement& bind(int i, const char* v) { return bind(i, std::string_view(v)); }
  Statement& bind(int i, double v) {
    check(sqlite3_bind_double(stmt_, i, v));
    return *this;
  }
  Statement& bind(int i, int v) {
    check(sqlite3_bind_int(stmt_, i, v));
    return *this;
  }
  Statement& bind(int i, std::int64_t v) {
    check(sqlite3_bind_int64(stmt_, i, v));
    return *this;
  }
  Statement& bind_null(int i) {
    check(sqlite3_bind_null(stmt_, i));
    return *this;
  }

  /// True while rows remain.
  bool step() {
    const int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    fail(ErrorKind::IoError, std::string("sqlite step: ") + sqlite3_errmsg(db_));
  }

  void reset() {
    sqlite3_reset(stmt_);
    sqlite3_clear_bindings(stmt_);
  }

  std::string text(int col) const {
    const auto* p = sqlite3_column_text(stmt_, col);
    return p ? std::string(reinterpret_cast<const char*>(p), static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col)))
             : std::string();
  }
  double real(int col) const { return sqlite3_column_double(stmt_, col); }
  std::int64_t integer(int col) const { return sqlite3_column_int64(stmt_, col); }
  bool is_null(int col) const { return sqlite3_column_type(stmt_, col) == SQLITE_NULL; }

 private:
  void check(int rc) {
    if (rc != SQLITE_OK) fail(ErrorKind::IoError, std::string("sqlite bind: ") + sqlite3_errmsg(db_));
  }
  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

class Connection {
 public:
  explicit Connection(const std::string& path) {
    if (sqlite3_open_v2(path.c_str(), &db_, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_NOMUTEX,
                        nullptr) != SQLITE_OK) {
      std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
      sqlite3_close(db_);
      fail(ErrorKind::IoError, "cannot open database " + path + ": " + msg);
    }
    sqlite3_busy_timeout(db_, 5000);
    exec("PRAGMA foreign_keys = ON");
  }
  ~Connection() { sqlite3_close(db_); }
  Connection(const Connection&) = delete;
  Connection& operator=(const Connection&) = delete;

  void exec(std::string_view sql) {
    char* err = nullptr;
    if (sqlite3_exec(db_, std::string(sql).c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
      std::string msg = err ? err : "unknown error";
      sqlite3_free(err);
      fail(ErrorKind::IoError, "sqlite: " + msg);
    }
  }

  Statement prepare(std::string_view sql) { return Statement(db_, sql); }
  int changes() const { return sqlite3_changes(db_); }
  std::int64_t last_insert_rowid() const { return sqlite3_last_insert_rowid(db_); }

 private:
  sqlite3* db_ = nullptr;
};

/// Rolls back unless commit() was called.
class Transaction {
 public:
  explicit Transaction(Connection& c, bool immediate = true) : conn_(c) {
    conn_.exec(immediate ? "BEGIN IMMEDIATE" : "BEGIN");
  }
  ~Transaction() {
    if (!done_) {
      try {
        conn_.exec("ROLLBACK");
      } catch (...) {
      }
    }
  }
  void commit() {
    conn_.exec("COMMIT");
    done_ = true;
  }

 private:
  Connection& conn_;
  bool done_ = false;
};

inline Listing read_listing(const Statement& s, int c) {
  Listing l;
  l.listing_id = s.text(c);
  l.street_address = s.text(c + 1);
  l.city = s.text(c + 2);
  l.zip = s.text(c + 3);
  l.price = s.real(c + 4);
  l.bedrooms = static_cast<int>(s.integer(c + 5));
  l.bathrooms = s.real(c + 6);
  l.square_feet = s.real(c + 7);
  l.lot_size = s.real(c + 8);
  l.listed_date = s.text(c + 9);
  return l;
}

inline constexpr std::string_view kListingColumns =
    "l.listing_id, l.street_address, l.city, l.zip, l.price, l.bedrooms, l.bathrooms, l.square_feet, l.lot_size, "
    "l.listed_date";

inline RealEstateImage read_image(const Statement& s, int c) {
  return {s.text(c), s.text(c + 1), s.text(c + 2), static_cast<int>(s.integer(c + 3))};
}

inline Photo read_photo(const Statement& s, int c) {
  Photo p;
  p.photo_id = s.integer(c);
  p.file_name = s.text(c + 1);
  p.uploaded_at = s.text(c + 2);
  if (!s.is_null(c + 3)) p.category_id = static_cast<int>(s.integer(c + 3));
  return p;
}

// Writes through a sibling temp file and rename, so readers never observe a
// partially written image.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::IoError, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::IoError, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline double parse_number(const std::string& s, const char* field) {
  const auto t = csv::trim(s);
  if (t.empty()) return 0.0;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != t.size() || !std::isfinite(v)) fail(ErrorKind::FormatError, std::string("bad ") + field + " '" + s + "'");
  return v;
}

inline std::vector<std::string> split_paths(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto end = s.find(';', start);
    auto piece = csv::trim(s.substr(start, end == std::string::npos ? std::string::npos : end - start));
    if (!piece.empty()) out.push_back(std::move(piece));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return out;
}

}  // namespace detail

/// Relational store for listings, catalog images, user photos and their
/// recommendations, plus the image file tree (catalog/, photos/) under one
/// root directory. Writes go through a single serialized writer connection;
/// each read opens its own connection, so reads proceed while a write is in
/// flight (WAL mode) and always see committed state only.
class Store {
 public:
  Store(std::filesystem::path root, const CategoryTaxonomy& taxonomy) : root_(std::move(root)), taxonomy_(taxonomy) {
    std::filesystem::create_directories(root_ / "catalog");
    std::filesystem::create_directories(root_ / "photos");
    writer_.emplace(db_path().string());
    writer_->exec("PRAGMA journal_mode = WAL");
    writer_->exec(kSchemaDdl);
    sync_categories();
  }

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path db_path() const { return root_ / "roomsemble.db"; }
  const CategoryTaxonomy& taxonomy() const { return taxonomy_; }
  std::filesystem::path resolve(const std::string& file_name) const { return root_ / file_name; }

  // -- ingestion ------------------------------------------------------------

  /// Loads a listing manifest. Listings are keyed by listing_id and images by
  /// (listing_id, source path), so repeating a manifest adds nothing. Image
  /// ids are "<listing_id>-<n>" with n the 1-based position in photo_paths.
  IngestReport ingest(const std::string& manifest_path, const std::filesystem::path& image_root,
                      CategorizerBackend& categorizer, int max_dim = kDefaultUploadMaxDim) {
    std::ifstream in(manifest_path);
    if (!in) fail(ErrorKind::ManifestError, "cannot open manifest " + manifest_path);
    auto header = csv::read_row(in);
    if (!header || header->size() != std::size(kManifestColumns)) {
      fail(ErrorKind::ManifestError, manifest_path + ": header must be listing_id,...,photo_paths (11 columns)");
    }
    for (std::size_t i = 0; i < std::size(kManifestColumns); ++i) {
      if (csv::trim((*header)[i]) != kManifestColumns[i]) {
        fail(ErrorKind::ManifestError, manifest_path + ": unexpected column '" + (*header)[i] + "'");
      }
    }
    std::vector<csv::Row> rows;
    while (auto row = csv::read_row(in)) {
      if (csv::is_blank(*row)) continue;
      if (row->size() != std::size(kManifestColumns)) {
        fail(ErrorKind::ManifestError, manifest_path + ": data row " + std::to_string(rows.size() + 1) + " has " +
                                           std::to_string(row->size()) + " columns");
      }
      rows.push_back(std::move(*row));
    }

    IngestReport report;
    for (std::size_t r = 0; r < rows.size(); ++r) ingest_row(rows[r], r + 1, image_root, categorizer, max_dim, report);
    return report;
  }

  // -- uploads --------------------------------------------------------------

  /// Decodes, resizes and stores an upload. The file is in place before the
  /// row commits; a failure removes both.
  SavedPhoto save_photo(std::span<const std::uint8_t> bytes, std::chrono::system_clock::time_point uploaded_at,
                        int max_dim = kDefaultUploadMaxDim) {
    Image img = resize_max(decode_image(bytes), max_dim);
    const auto png = encode_png(img);
    std::lock_guard lock(write_mutex_);
    detail::Transaction tx(*writer_);
    auto ins = writer_->prepare("INSERT INTO photo (file_name, uploaded_at) VALUES ('', ?)");
    ins.bind(1, iso8601_utc(uploaded_at));
    ins.step();
    Photo p;
    p.photo_id = writer_->last_insert_rowid();
    p.file_name = "photos/" + std::to_string(p.photo_id) + ".png";
    p.uploaded_at = iso8601_utc(uploaded_at);
    const auto path = resolve(p.file_name);
    try {
      detail::write_file_atomic(path, png);
      auto upd = writer_->prepare("UPDATE photo SET file_name = ? WHERE photo_id = ?");
      upd.bind(1, p.file_name).bind(2, p.photo_id);
      upd.step();
      tx.commit();
    } catch (...) {
      std::error_code ec;
      std::filesystem::remove(path, ec);
      throw;
    }
    return {std::move(p), std::move(img)};
  }

  void set_photo_category(std::int64_t photo_id, int category_id) {
    taxonomy_.label(category_id);
    std::lock_guard lock(write_mutex_);
    auto upd = writer_->prepare("UPDATE photo SET category_id = ? WHERE photo_id = ?");
    upd.bind(1, category_id).bind(2, photo_id);
    upd.step();
    if (writer_->changes() == 0) fail(ErrorKind::UnknownPhoto, "no photo " + std::to_string(photo_id));
  }

  /// Replaces the photo's recommendation set in one transaction.
  void record_recommendations(std::int64_t photo_id, const std::vector<retrieval::RankedResult>& results) {
    for (std::size_t i = 0; i < results.size(); ++i) {
      if (results[i].rank != i + 1) fail(ErrorKind::ConfigError, "recommendation ranks must run 1..n in order");
    }
    std::lock_guard lock(write_mutex_);
    detail::Transaction tx(*writer_);
    {
      auto q = writer_->prepare("SELECT 1 FROM photo WHERE photo_id = ?");
      q.bind(1, photo_id);
      if (!q.step()) fail(ErrorKind::UnknownPhoto, "no photo " + std::to_string(photo_id));
    }
    auto del = writer_->prepare("DELETE FROM recommendation WHERE photo_id = ?");
    del.bind(1, photo_id);
    del.step();
    auto ins = writer_->prepare("INSERT INTO recommendation (photo_id, image_id, rank, ensemble_score) VALUES (?, ?, ?, ?)");
    for (const auto& r : results) {
      ins.reset();
      ins.bind(1, photo_id).bind(2, r.image_id).bind(3, static_cast<int>(r.rank)).bind(4, r.ensemble_score);
      ins.step();
    }
    tx.commit();
  }

  // -- reads ----------------------------------------------------------------

  /// Recommendations of the most recently uploaded photo, in rank order.
  std::optional<LatestRecommendations> latest_recommendations() const {
    detail::Connection c(db_path().string());
    detail::Transaction tx(c, false);
    auto q = c.prepare(
        "SELECT photo_id, file_name, uploaded_at, category_id FROM photo ORDER BY uploaded_at DESC, photo_id DESC LIMIT 1");
    if (!q.step()) return std::nullopt;
    LatestRecommendations out;
    out.photo = detail::read_photo(q, 0);
    auto rows = c.prepare(std::string("SELECT r.photo_id, r.image_id, r.rank, r.ensemble_score, i.image_id, i.listing_id, "
                                      "i.file_name, i.category_id, ") +
                          std::string(detail::kListingColumns) +
                          " FROM recommendation r JOIN real_estate_image i ON i.image_id = r.image_id "
                          "JOIN listing l ON l.listing_id = i.listing_id WHERE r.photo_id = ? ORDER BY r.rank");
    rows.bind(1, out.photo.photo_id);
    while (rows.step()) {
      RecommendationRow row;
      row.recommendation = {rows.integer(0), rows.text(1), static_cast<int>(rows.integer(2)), rows.real(3)};
      row.image = detail::read_image(rows, 4);
      row.listing = detail::read_listing(rows, 8);
      out.rows.push_back(std::move(row));
    }
    return out;
  }

  std::optional<Listing> listing(const std::string& listing_id) const {
    detail::Connection c(db_path().string());
    auto q = c.prepare("SELECT " + std::string(detail::kListingColumns) + " FROM listing l WHERE l.listing_id = ?");
    q.bind(1, listing_id);
    if (!q.step()) return std::nullopt;
    return detail::read_listing(q, 0);
  }

  std::vector<Listing> listings() const {
    detail::Connection c(db_path().string());
    auto q = c.prepare("SELECT " + std::string(detail::kListingColumns) + " FROM listing l ORDER BY l.listing_id");
    std::vector<Listing> out;
    while (q.step()) out.push_back(detail::read_listing(q, 0));
    return out;
  }

  std::vector<RealEstateImage> images(const std::optional<std::string>& listing_id = std::nullopt) const {
    detail::Connection c(db_path().string());
    auto q = c.prepare(listing_id ? "SELECT image_id, listing_id, file_name, category_id FROM real_estate_image "
                                    "WHERE listing_id = ? ORDER BY image_id"
                                  : "SELECT image_id, listing_id, file_name, category_id FROM real_estate_image "
                                    "ORDER BY image_id");
    if (listing_id) q.bind(1, *listing_id);
    std::vector<RealEstateImage> out;
    while (q.step()) out.push_back(detail::read_image(q, 0));
    return out;
  }

  std::optional<Photo> photo(std::int64_t photo_id) const {
    detail::Connection c(db_path().string());
    auto q = c.prepare("SELECT photo_id, file_name, uploaded_at, category_id FROM photo WHERE photo_id = ?");
    q.bind(1, photo_id);
    if (!q.step()) return std::nullopt;
    return detail::read_photo(q, 0);
  }

  std::vector<Recommendation> recommendations(std::int64_t photo_id) const {
    detail::Connection c(db_path().string());
    auto q = c.prepare("SELECT photo_id, image_id, rank, ensemble_score FROM recommendation WHERE photo_id = ? ORDER BY rank");
    q.bind(1, photo_id);
    std::vector<Recommendation> out;
    while (q.step()) out.push_back({q.integer(0), q.text(1), static_cast<int>(q.integer(2)), q.real(3)});
    return out;
  }

  std::int64_t count(std::string_view table) const {
    static constexpr std::string_view allowed[] = {"category", "listing", "real_estate_image", "photo", "recommendation"};
    if (std::find(std::begin(allowed), std::end(allowed), table) == std::end(allowed)) {
      fail(ErrorKind::ConfigError, "unknown table " + std::string(table));
    }
    detail::Connection c(db_path().string());
    auto q = c.prepare("SELECT COUNT(*) FROM " + std::string(table));
    q.step();
    return q.integer(0);
  }

  /// Catalog images joined with their listing, as build_index consumes them.
  std::vector<retrieval::CatalogImage> catalog_images() const {
    detail::Connection c(db_path().string());
    auto q = c.prepare(
        "SELECT i.image_id, i.listing_id, i.category_id, l.price, l.city, l.zip, i.file_name "
        "FROM real_estate_image i JOIN listing l ON l.listing_id = i.listing_id ORDER BY i.image_id");
    std::vector<retrieval::CatalogImage> out;
    while (q.step()) {
      out.push_back({q.text(0), q.text(1), static_cast<int>(q.integer(2)), q.real(3), q.text(4), q.text(5),
                     resolve(q.text(6)).string()});
    }
    return out;
  }

 private:
  void sync_categories() {
    std::lock_guard lock(write_mutex_);
    detail::Transaction tx(*writer_);
    auto sel = writer_->prepare("SELECT category_id, name FROM category ORDER BY category_id");
    std::vector<std::pair<int, std::string>> existing;
    while (sel.step()) existing.emplace_back(static_cast<int>(sel.integer(0)), sel.text(1));
    for (const auto& [id, name] : existing) {
      if (static_cast<std::size_t>(id) >= taxonomy_.size() || taxonomy_.names()[id] != name) {
        fail(ErrorKind::ConfigError, "store categories do not match the configured taxonomy (id " +
                                         std::to_string(id) + " is '" + name + "')");
      }
    }
    auto ins = writer_->prepare("INSERT OR IGNORE INTO category (category_id, name) VALUES (?, ?)");
    for (std::size_t i = 0; i < taxonomy_.size(); ++i) {
      ins.reset();
      ins.bind(1, static_cast<int>(i)).bind(2, taxonomy_.names()[i]);
      ins.step();
    }
    tx.commit();
  }

  void ingest_row(const csv::Row& row, std::size_t row_no, const std::filesystem::path& image_root,
                  CategorizerBackend& categorizer, int max_dim, IngestReport& report) {
    Listing l;
    l.listing_id = csv::trim(row[0]);
    try {
      if (l.listing_id.empty()) fail(ErrorKind::FormatError, "empty listing_id");
      l.street_address = csv::trim(row[1]);
      l.city = csv::trim(row[2]);
      l.zip = csv::trim(row[3]);
      l.price = detail::parse_number(row[4], "price");
      if (l.price < 0) fail(ErrorKind::FormatError, "negative price");
      l.bedrooms = static_cast<int>(detail::parse_number(row[5], "bedrooms"));
      l.bathrooms = detail::parse_number(row[6], "bathrooms");
      l.square_feet = detail::parse_number(row[7], "square_feet");
      l.lot_size = detail::parse_number(row[8], "lot_size");
      l.listed_date = csv::trim(row[9]);
    } catch (const Error& e) {
      report.failures.push_back({row_no, l.listing_id, {}, e.what()});
      return;
    }

    {
      std::lock_guard lock(write_mutex_);
      auto ins = writer_->prepare(
          "INSERT OR IGNORE INTO listing (listing_id, street_address, city, zip, price, bedrooms, bathrooms, "
          "square_feet, lot_size, listed_date) VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?)");
      ins.bind(1, l.listing_id).bind(2, l.street_address).bind(3, l.city).bind(4, l.zip).bind(5, l.price);
      ins.bind(6, l.bedrooms).bind(7, l.bathrooms).bind(8, l.square_feet).bind(9, l.lot_size).bind(10, l.listed_date);
      ins.step();
      if (writer_->changes() == 1) ++report.listings;
    }

    const auto paths = detail::split_paths(row[10]);
    for (std::size_t k = 0; k < paths.size(); ++k) {
      const std::string image_id = l.listing_id + "-" + std::to_string(k + 1);
      try {
        ingest_image(l.listing_id, image_id, paths[k], image_root, categorizer, max_dim, report);
      } catch (const std::exception& e) {
        report.failures.push_back({row_no, l.listing_id, paths[k], e.what()});
      }
    }
  }

  void ingest_image(const std::string& listing_id, const std::string& image_id, const std::string& rel_path,
                    const std::filesystem::path& image_root, CategorizerBackend& categorizer, int max_dim,
                    IngestReport& report) {
    {
      detail::Connection c(db_path().string());
      auto q = c.prepare("SELECT image_id FROM real_estate_image WHERE listing_id = ? AND source_path = ?");
      q.bind(1, listing_id).bind(2, rel_path);
      if (q.step()) return;  // already ingested
      auto id_taken = c.prepare("SELECT source_path FROM real_estate_image WHERE image_id = ?");
      id_taken.bind(1, image_id);
      if (id_taken.step()) {
        fail(ErrorKind::ManifestError, "image id " + image_id + " already holds " + id_taken.text(0));
      }
    }
    const auto src = std::filesystem::absolute(image_root / rel_path);
    if (!std::filesystem::exists(src)) fail(ErrorKind::MissingImage, "missing image file " + src.string());
    const Image img = resize_max(load_image(src.string()), max_dim);
    const auto label = categorizer.categorize(image_id, src.string()).label;
    const std::string file_name = "catalog/" + image_id + ".png";
    const auto dest = resolve(file_name);
    std::lock_guard lock(write_mutex_);
    detail::Transaction tx(*writer_);
    detail::write_file_atomic(dest, encode_png(img));
    try {
      auto ins = writer_->prepare(
          "INSERT INTO real_estate_image (image_id, listing_id, file_name, source_path, category_id) "
          "VALUES (?, ?, ?, ?, ?)");
      ins.bind(1, image_id).bind(2, listing_id).bind(3, file_name).bind(4, rel_path).bind(5, label.id);
      ins.step();
      tx.commit();
    } catch (...) {
      std::error_code ec;
      std::filesystem::remove(dest, ec);
      throw;
    }
    ++report.images;
  }

  std::filesystem::path root_;
  CategoryTaxonomy taxonomy_;
  std::mutex write_mutex_;
  std::optional<detail::Connection> writer_;
};

}  // namespace roomsemble::store
