#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>
#include <sqlite3.h>

#include "roomsemble/store.hpp"
#include "support/errors.hpp"
#include "support/paths.hpp"

using namespace roomsemble;
using namespace roomsemble::store;
using testing_support::fixture_dir;
using testing_support::kind_of;
using testing_support::TempDir;

namespace {

std::string catalog_manifest() { return (fixture_dir() / "catalog" / "manifest.csv").string(); }

class StoreTest : public ::testing::Test {
 protected:
  StoreTest()
      : labels_((fixture_dir() / "catalog" / "labels.csv").string(), default_taxonomy()),
        store_(std::make_unique<Store>(dir_.path() / "store", default_taxonomy())) {}

  IngestReport ingest_fixture() { return store_->ingest(catalog_manifest(), fixture_dir() / "catalog", labels_); }

  std::vector<std::uint8_t> photo_bytes(const std::string& name = "kitchen_query.jpg") {
    return read_file_bytes((fixture_dir() / "queries" / name).string());
  }

  std::vector<retrieval::RankedResult> ranked(const std::vector<std::string>& ids, double base = 0.9) {
    std::vector<retrieval::RankedResult> out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      retrieval::RankedResult r;
      r.image_id = ids[i];
      r.ensemble_score = base - 0.01 * i;
      r.rank = i + 1;
      out.push_back(r);
    }
    return out;
  }

  std::vector<std::string> image_ids(std::size_t n) {
    std::vector<std::string> out;
    for (const auto& img : store_->images()) {
      if (out.size() == n) break;
      out.push_back(img.image_id);
    }
    return out;
  }

  TempDir dir_;
  ManifestCategorizer labels_;
  std::unique_ptr<Store> store_;
};

std::int64_t scalar(const std::filesystem::path& db, const std::string& sql) {
  sqlite3* h = nullptr;
  sqlite3_open_v2(db.c_str(), &h, SQLITE_OPEN_READONLY, nullptr);
  sqlite3_stmt* st = nullptr;
  sqlite3_prepare_v2(h, sql.c_str(), -1, &st, nullptr);
  std::int64_t v = -1;
  if (sqlite3_step(st) == SQLITE_ROW) v = sqlite3_column_int64(st, 0);
  sqlite3_finalize(st);
  sqlite3_close(h);
  return v;
}

}  // namespace

TEST(Schema, ShippedDdlMatchesEmbeddedCopy) {
  std::ifstream in(testing_support::source_dir() / "sql" / "schema.sql");
  std::stringstream buf;
  buf << in.rdbuf();
  EXPECT_EQ(buf.str(), std::string(kSchemaDdl));
}

TEST(Schema, TimestampsAreIsoUtc) {
  const auto t = std::chrono::system_clock::time_point(std::chrono::milliseconds(1760000000123));
  EXPECT_EQ(iso8601_utc(t), "2025-10-09T08:53:20.123Z");
}

TEST_F(StoreTest, IngestsFixtureCatalog) {
  const auto r = ingest_fixture();
  EXPECT_EQ(r.listings, 5u);
  EXPECT_EQ(r.images, 20u);
  EXPECT_TRUE(r.failures.empty());
  EXPECT_EQ(store_->count("listing"), 5);
  EXPECT_EQ(store_->count("real_estate_image"), 20);
  const auto l = store_->listing("L1004");
  ASSERT_TRUE(l);
  EXPECT_EQ(l->street_address, "301 Tremont St, Unit 4");
  EXPECT_EQ(l->zip, "02116");
  EXPECT_DOUBLE_EQ(l->price, 380000);
  const auto imgs = store_->images(std::string("L1001"));
  ASSERT_EQ(imgs.size(), 4u);
  EXPECT_EQ(imgs[2].image_id, "L1001-3");
  EXPECT_EQ(imgs[2].category_id, default_taxonomy().find("bathroom")->id);
  for (const auto& img : store_->images()) EXPECT_TRUE(std::filesystem::exists(store_->resolve(img.file_name)));
  EXPECT_EQ(store_->catalog_images().size(), 20u);
}

TEST_F(StoreTest, ReingestAddsNothing) {
  ingest_fixture();
  const auto again = ingest_fixture();
  EXPECT_EQ(again.listings, 0u);
  EXPECT_EQ(again.images, 0u);
  EXPECT_EQ(store_->count("real_estate_image"), 20);
  store_ = std::make_unique<Store>(dir_.path() / "store", default_taxonomy());
  EXPECT_EQ(ingest_fixture().images, 0u);
}

TEST_F(StoreTest, MissingPhotoFileIsReported) {
  std::ofstream(dir_ / "m.csv") << "listing_id,street_address,city,zip,price,bedrooms,bathrooms,square_feet,lot_size,"
                                   "listed_date,photo_paths\n"
                                   "L1001,1 A St,Boston,02118,1,1,1,1,0,2026-01-01,images/L1001_1.jpg;images/gone.jpg\n";
  const auto r = store_->ingest((dir_ / "m.csv").string(), fixture_dir() / "catalog", labels_);
  EXPECT_EQ(r.listings, 1u);
  EXPECT_EQ(r.images, 1u);
  ASSERT_EQ(r.failures.size(), 1u);
  EXPECT_EQ(r.failures[0].row, 1u);
  EXPECT_EQ(r.failures[0].photo_path, "images/gone.jpg");
}

TEST_F(StoreTest, BadManifestRejectedBeforeWriting) {
  std::ofstream(dir_ / "bad.csv") << "listing_id,price\nL1,5\n";
  EXPECT_EQ(kind_of([&] { store_->ingest((dir_ / "bad.csv").string(), dir_.path(), labels_); }),
            ErrorKind::ManifestError);
  std::ofstream(dir_ / "short.csv") << "listing_id,street_address,city,zip,price,bedrooms,bathrooms,square_feet,"
                                       "lot_size,listed_date,photo_paths\nL1,x,y\n";
  EXPECT_EQ(kind_of([&] { store_->ingest((dir_ / "short.csv").string(), dir_.path(), labels_); }),
            ErrorKind::ManifestError);
  EXPECT_EQ(kind_of([&] { store_->ingest((dir_ / "none.csv").string(), dir_.path(), labels_); }),
            ErrorKind::ManifestError);
  EXPECT_EQ(store_->count("listing"), 0);
}

TEST_F(StoreTest, SavesUploadedPhoto) {
  const auto now = std::chrono::system_clock::now();
  const auto saved = store_->save_photo(photo_bytes(), now, 128);
  EXPECT_GT(saved.photo.photo_id, 0);
  EXPECT_EQ(saved.photo.uploaded_at, iso8601_utc(now));
  EXPECT_LE(std::max(saved.image.width, saved.image.height), 128);
  const auto back = store_->photo(saved.photo.photo_id);
  ASSERT_TRUE(back);
  EXPECT_EQ(back->file_name, saved.photo.file_name);
  EXPECT_FALSE(back->category_id);
  const auto on_disk = load_image(store_->resolve(back->file_name).string());
  EXPECT_EQ(on_disk.width, saved.image.width);
  store_->set_photo_category(saved.photo.photo_id, 2);
  EXPECT_EQ(store_->photo(saved.photo.photo_id)->category_id, 2);
  EXPECT_EQ(kind_of([&] { store_->set_photo_category(9999, 2); }), ErrorKind::UnknownPhoto);
}

TEST_F(StoreTest, CorruptUploadLeavesNoTrace) {
  const std::vector<std::uint8_t> junk(300, 0x42);
  EXPECT_EQ(kind_of([&] { store_->save_photo(junk, std::chrono::system_clock::now()); }), ErrorKind::MalformedImage);
  EXPECT_EQ(store_->count("photo"), 0);
  EXPECT_TRUE(std::filesystem::is_empty(dir_.path() / "store" / "photos"));
}

TEST_F(StoreTest, IdenticalUploadsAreDistinctPhotos) {
  const auto a = store_->save_photo(photo_bytes(), std::chrono::system_clock::now());
  const auto b = store_->save_photo(photo_bytes(), std::chrono::system_clock::now());
  EXPECT_NE(a.photo.photo_id, b.photo.photo_id);
  EXPECT_NE(a.photo.file_name, b.photo.file_name);
  EXPECT_EQ(store_->count("photo"), 2);
}

TEST_F(StoreTest, RecordsAndReplacesRecommendations) {
  ingest_fixture();
  const auto p = store_->save_photo(photo_bytes(), std::chrono::system_clock::now());
  const auto ids = image_ids(20);
  store_->record_recommendations(p.photo.photo_id, ranked({ids.begin(), ids.begin() + 12}));
  auto recs = store_->recommendations(p.photo.photo_id);
  ASSERT_EQ(recs.size(), 12u);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(recs[i].rank, static_cast<int>(i + 1));
    EXPECT_EQ(recs[i].image_id, ids[i]);
  }
  store_->record_recommendations(p.photo.photo_id, ranked({ids[15], ids[16]}, 0.5));
  recs = store_->recommendations(p.photo.photo_id);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].image_id, ids[15]);
  EXPECT_DOUBLE_EQ(recs[1].ensemble_score, 0.49);
  store_->record_recommendations(p.photo.photo_id, {});
  EXPECT_TRUE(store_->recommendations(p.photo.photo_id).empty());
  EXPECT_EQ(kind_of([&] { store_->record_recommendations(777, ranked({ids[0]})); }), ErrorKind::UnknownPhoto);
  auto bad = ranked({ids[0], ids[1]});
  bad[1].rank = 5;
  EXPECT_EQ(kind_of([&] { store_->record_recommendations(p.photo.photo_id, bad); }), ErrorKind::ConfigError);
}

TEST_F(StoreTest, LatestFollowsUploadTime) {
  EXPECT_FALSE(store_->latest_recommendations());
  ingest_fixture();
  const auto ids = image_ids(3);
  const auto t0 = std::chrono::system_clock::now();
  const auto older = store_->save_photo(photo_bytes(), t0);
  const auto newer = store_->save_photo(photo_bytes("bathroom_query.jpg"), t0 + std::chrono::seconds(5));
  store_->record_recommendations(newer.photo.photo_id, ranked({ids[2], ids[0]}));
  store_->record_recommendations(older.photo.photo_id, ranked({ids[1]}));
  const auto latest = store_->latest_recommendations();
  ASSERT_TRUE(latest);
  EXPECT_EQ(latest->photo.photo_id, newer.photo.photo_id);
  ASSERT_EQ(latest->rows.size(), 2u);
  EXPECT_EQ(latest->rows[0].image.image_id, ids[2]);
  EXPECT_EQ(latest->rows[0].listing.listing_id, latest->rows[0].image.listing_id);
  EXPECT_EQ(latest->rows[1].recommendation.rank, 2);
}

TEST_F(StoreTest, ForeignKeysHold) {
  ingest_fixture();
  const auto p = store_->save_photo(photo_bytes(), std::chrono::system_clock::now());
  store_->record_recommendations(p.photo.photo_id, ranked(image_ids(5)));
  const auto db = dir_.path() / "store" / "roomsemble.db";
  EXPECT_EQ(scalar(db, "SELECT COUNT(*) FROM pragma_foreign_key_check"), 0);
  EXPECT_THROW(store_->record_recommendations(p.photo.photo_id, ranked({"no-such-image"})), Error);
  EXPECT_EQ(store_->recommendations(p.photo.photo_id).size(), 5u);
}

TEST_F(StoreTest, ReadersNeverSeePartialSets) {
  ingest_fixture();
  const auto p = store_->save_photo(photo_bytes(), std::chrono::system_clock::now());
  const auto ids = image_ids(20);
  const std::vector<std::string> first(ids.begin(), ids.begin() + 12), second(ids.begin() + 8, ids.end());
  store_->record_recommendations(p.photo.photo_id, ranked(first));
  std::atomic<bool> done{false};
  std::atomic<int> torn{0}, reads{0};
  std::thread reader([&] {
    while (!done) {
      const auto latest = store_->latest_recommendations();
      if (!latest || latest->rows.size() != 12) {
        ++torn;
        continue;
      }
      const bool a = latest->rows[0].image.image_id == first[0];
      for (std::size_t i = 0; i < 12; ++i) {
        if (latest->rows[i].image.image_id != (a ? first[i] : second[i])) ++torn;
      }
      ++reads;
    }
  });
  for (int i = 0; i < 200; ++i) store_->record_recommendations(p.photo.photo_id, ranked(i % 2 ? first : second));
  done = true;
  reader.join();
  EXPECT_EQ(torn.load(), 0);
  EXPECT_GT(reads.load(), 0);
}

TEST(StoreConfig, TaxonomyChangeIsRejected) {
  TempDir dir;
  { Store s(dir.path(), default_taxonomy()); }
  EXPECT_EQ(kind_of([&] { Store s(dir.path(), CategoryTaxonomy({"kitchen", "bathroom"})); }), ErrorKind::ConfigError);
  EXPECT_NO_THROW(Store(dir.path(), default_taxonomy()));
}
