#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "roomsemble/api.hpp"
#include "roomsemble/categorize.hpp"
#include "roomsemble/embedding.hpp"
#include "roomsemble/eval.hpp"
#include "roomsemble/retrieval.hpp"
#include "roomsemble/store.hpp"

namespace fs = std::filesystem;
using namespace roomsemble;

namespace {

api::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

CategoryTaxonomy taxonomy_from(const std::string& path) {
  return path.empty() ? default_taxonomy() : load_taxonomy(path);
}

std::unique_ptr<CategorizerBackend> categorizer_from(const std::string& labels, const std::string& adapter,
                                                     const CategoryTaxonomy& taxonomy) {
  if (!adapter.empty()) return std::make_unique<AdapterCategorizer>(adapter, taxonomy);
  return std::make_unique<ManifestCategorizer>(labels, taxonomy);
}

std::map<std::string, embedding::FeatureVector> catalog_features(const store::Store& st) {
  std::map<std::string, embedding::FeatureVector> out;
  for (const auto& img : st.catalog_images()) out[img.image_id] = embedding::base_features(load_image(img.image_path));
  return out;
}

std::vector<embedding::CatalogEntry> store_catalog(const store::Store& st) {
  std::vector<embedding::CatalogEntry> out;
  for (const auto& img : st.images()) out.push_back({img.image_id, img.listing_id, st.taxonomy().label(img.category_id).name});
  return out;
}

void print_training(const embedding::TrainResult& r) {
  if (r.epoch_loss.empty()) return;
  std::fprintf(stderr, "trained %zu epochs, loss %.6f -> %.6f\n", r.epoch_loss.size(), r.epoch_loss.front(),
               r.epoch_loss.back());
}

// Labels CSV: image_id,category_name[,confidence][,listing_id].
std::vector<embedding::CatalogEntry> labels_catalog(const std::string& path, const std::string& store_root,
                                                    const CategoryTaxonomy& taxonomy) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open labels " + path);
  auto header = csv::read_row(in);
  if (!header || header->size() < 2) fail(ErrorKind::FormatError, path + ": expected image_id,category_name,...");
  int listing_col = -1;
  for (std::size_t i = 0; i < header->size(); ++i) {
    if (csv::trim((*header)[i]) == "listing_id") listing_col = static_cast<int>(i);
  }
  std::map<std::string, std::string> listing_of;
  if (listing_col < 0 && !store_root.empty()) {
    store::Store st(store_root, taxonomy);
    for (const auto& img : st.images()) listing_of[img.image_id] = img.listing_id;
  }
  std::vector<embedding::CatalogEntry> out;
  while (auto row = csv::read_row(in)) {
    if (csv::is_blank(*row)) continue;
    const auto id = csv::trim((*row)[0]);
    std::string listing;
    if (listing_col >= 0 && static_cast<std::size_t>(listing_col) < row->size()) {
      listing = csv::trim((*row)[listing_col]);
    } else if (!store_root.empty()) {
      auto it = listing_of.find(id);
      if (it == listing_of.end()) continue;  // labelled but never ingested (e.g. upload hashes)
      listing = it->second;
    } else {
      const auto dash = id.rfind('-');
      if (dash == std::string::npos || dash == 0) continue;
      listing = id.substr(0, dash);
    }
    out.push_back({id, listing, csv::trim((*row)[1])});
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"roomsemble: room photo recommendations over real-estate listings"};
  app.require_subcommand(1);

  std::string taxonomy_path;
  app.add_option("--taxonomy", taxonomy_path, "category list, one name per line")->check(CLI::ExistingFile);

  // serve
  auto* serve = app.add_subcommand("serve", "run the HTTP service");
  std::string config_path;
  serve->add_option("--config", config_path, "service config JSON")->required()->check(CLI::ExistingFile);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "load a listing manifest into the store");
  std::string manifest, store_root, image_root, labels, adapter;
  int max_dim = kDefaultUploadMaxDim;
  ingest->add_option("--manifest", manifest, "listing manifest CSV")->required()->check(CLI::ExistingFile);
  ingest->add_option("--store", store_root, "store root directory")->required();
  ingest->add_option("--image-root", image_root, "base for photo_paths (default: manifest directory)");
  auto* ing_labels = ingest->add_option("--labels", labels, "category labels CSV")->check(CLI::ExistingFile);
  auto* ing_adapter = ingest->add_option("--adapter", adapter, "categorizer command (line protocol)");
  ing_labels->excludes(ing_adapter);
  ingest->add_option("--max-dim", max_dim, "longest side after resize")->check(CLI::PositiveNumber);

  // extract-features
  auto* extract = app.add_subcommand("extract-features", "compute base feature vectors for the catalog");
  std::string features_out;
  extract->add_option("--store", store_root, "store root directory")->required()->check(CLI::ExistingDirectory);
  extract->add_option("--out", features_out, "feature file")->required();

  // sample-triplets
  auto* sample = app.add_subcommand("sample-triplets", "draw training triplets from category labels");
  std::string triplets_out;
  std::uint64_t seed = 7;
  sample->add_option("--labels", labels, "labels CSV (image_id,category_name[,confidence][,listing_id])")
      ->required()
      ->check(CLI::ExistingFile);
  sample->add_option("--out", triplets_out, "triplet TSV")->required();
  sample->add_option("--store", store_root, "resolve listings through this store when labels lack listing_id");
  sample->add_option("--seed", seed, "sampling seed");

  // train
  auto* train = app.add_subcommand("train", "fit the linear embedding with triplet loss");
  std::string triplets_in, features_in, model_out;
  embedding::TrainConfig tcfg;
  train->add_option("--triplets", triplets_in, "triplet TSV")->required()->check(CLI::ExistingFile);
  train->add_option("--features", features_in, "feature file")->required()->check(CLI::ExistingFile);
  train->add_option("--out", model_out, "model file")->required();
  for (auto* sub : {train}) {
    sub->add_option("--epochs", tcfg.epochs);
    sub->add_option("--learning-rate", tcfg.learning_rate);
    sub->add_option("--margin", tcfg.margin);
    sub->add_option("--batch-size", tcfg.batch_size);
    sub->add_option("--dim", tcfg.dim_out, "embedding dimension");
    sub->add_option("--seed", tcfg.seed);
  }

  // build-index
  auto* build = app.add_subcommand("build-index", "build the catalog index (trains a model unless --model is given)");
  std::string model_in, index_out;
  build->add_option("--store", store_root, "store root directory")->required()->check(CLI::ExistingDirectory);
  build->add_option("--out", index_out, "index file; descriptors and model go next to it")->required();
  build->add_option("--model", model_in, "existing model file")->check(CLI::ExistingFile);
  build->add_option("--epochs", tcfg.epochs);
  build->add_option("--seed", tcfg.seed);

  // eval
  auto* evalc = app.add_subcommand("eval", "compare model rankings with survey votes");
  std::string survey, index_in, json_out;
  evalc->add_option("--survey", survey, "survey CSV")->required()->check(CLI::ExistingFile);
  evalc->add_option("--index", index_in, "catalog index (its model is used)")->required()->check(CLI::ExistingFile);
  evalc->add_option("--json", json_out, "also write the JSON report here");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto taxonomy = taxonomy_from(taxonomy_path);

    if (*serve) {
      auto cfg = api::load_config(config_path);
      api::Server server(cfg);
      const int port = server.bind();
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::printf("listening on %s://%s:%d\n", server.tls() ? "https" : "http", cfg.bind_address.c_str(), port);
      std::fflush(stdout);
      server.run();
      g_server = nullptr;
      return 0;
    }

    if (*ingest) {
      if (labels.empty() && adapter.empty()) fail(ErrorKind::ConfigError, "ingest needs --labels or --adapter");
      store::Store st(store_root, taxonomy);
      auto cat = categorizer_from(labels, adapter, taxonomy);
      const fs::path root = image_root.empty() ? fs::absolute(manifest).parent_path() : fs::path(image_root);
      const auto report = st.ingest(manifest, root, *cat, max_dim);
      for (const auto& f : report.failures) {
        std::fprintf(stderr, "row %zu %s %s: %s\n", f.row, f.listing_id.c_str(), f.photo_path.c_str(), f.message.c_str());
      }
      std::printf("listings added: %zu\nimages added: %zu\nfailures: %zu\n", report.listings, report.images,
                  report.failures.size());
      return 0;
    }

    if (*extract) {
      store::Store st(store_root, taxonomy);
      const auto features = catalog_features(st);
      embedding::save_features(features_out, features);
      std::printf("features: %zu\n", features.size());
      return 0;
    }

    if (*sample) {
      const auto catalog = labels_catalog(labels, store_root, taxonomy);
      const auto result = embedding::sample_triplets(catalog, seed);
      for (const auto& s : result.skipped) {
        std::fprintf(stderr, "skipped %s/%s: %s\n", s.listing_id.c_str(), s.category.c_str(),
                     std::string(to_string(s.reason)).c_str());
      }
      embedding::save_triplets(triplets_out, result.triplets);
      std::printf("triplets: %zu\n", result.triplets.size());
      return 0;
    }

    if (*train) {
      const auto result =
          embedding::train_embedding(embedding::load_triplets(triplets_in), embedding::load_features(features_in), tcfg);
      print_training(result);
      embedding::save_model(model_out, result.model);
      return 0;
    }

    if (*build) {
      store::Store st(store_root, taxonomy);
      const fs::path out_dir = fs::absolute(index_out).parent_path();
      fs::create_directories(out_dir);
      const std::string model_name = "model.temb";
      if (!model_in.empty()) {
        if (fs::absolute(model_in) != out_dir / model_name) {
          fs::copy_file(model_in, out_dir / model_name, fs::copy_options::overwrite_existing);
        }
      } else {
        const auto sampled = embedding::sample_triplets(store_catalog(st), tcfg.seed);
        embedding::EmbeddingModel model;
        if (sampled.triplets.empty()) {
          std::fprintf(stderr, "no triplets available; using the untrained projection\n");
          model = embedding::random_orthonormal_model(embedding::kBaseFeatureDim, tcfg.dim_out, tcfg.seed);
        } else {
          const auto result = embedding::train_embedding(sampled.triplets, catalog_features(st), tcfg);
          print_training(result);
          model = result.model;
        }
        embedding::save_model((out_dir / model_name).string(), model);
      }
      // Index from the model as reloaded, so serving sees identical weights.
      const auto model = embedding::load_model((out_dir / model_name).string());
      auto report = retrieval::build_index(st.catalog_images(), model, out_dir.string());
      for (const auto& f : report.failures) std::fprintf(stderr, "%s: %s\n", f.image_id.c_str(), f.message.c_str());
      report.index.model_file = model_name;
      retrieval::save_index(index_out, report.index);
      std::printf("indexed: %zu\nfailures: %zu\n", report.index.entries.size(), report.failures.size());
      return report.index.entries.empty() ? 1 : 0;
    }

    if (*evalc) {
      const auto index = retrieval::load_index(index_in);
      const auto report = eval::run_eval(survey, index);
      std::fputs(eval::format_table(report).c_str(), stdout);
      const auto j = eval::to_json(report);
      if (!json_out.empty()) {
        std::ofstream out(json_out);
        out << j.dump(2) << "\n";
        if (!out) fail(ErrorKind::IoError, "cannot write " + json_out);
      } else {
        std::printf("%s\n", j.dump().c_str());
      }
      return 0;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", std::string(to_string(e.kind())).c_str(), e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
