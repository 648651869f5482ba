#pragma once

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include "roomsemble/csv.hpp"
#include "roomsemble/error.hpp"

namespace roomsemble {

struct CategoryLabel {
  int id = -1;
  std::string name;
  friend bool operator==(const CategoryLabel&, const CategoryLabel&) = default;
};

struct Categorization {
  CategoryLabel label;
  double confidence = 0.0;
};

class CategoryTaxonomy {
 public:
  CategoryTaxonomy() = default;
  explicit CategoryTaxonomy(std::vector<std::string> names) : names_(std::move(names)) {
    if (names_.empty()) fail(ErrorKind::EmptyTaxonomy, "taxonomy has no categories");
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (!index_.emplace(names_[i], static_cast<int>(i)).second) {
        fail(ErrorKind::FormatError, "duplicate category '" + names_[i] + "'");
      }
    }
  }

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

  std::optional<CategoryLabel> find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return CategoryLabel{it->second, it->first};
  }

  CategoryLabel label(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= names_.size()) {
      fail(ErrorKind::FormatError, "category id " + std::to_string(id) + " outside taxonomy");
    }
    return {id, names_[id]};
  }

 private:
  std::vector<std::string> names_;
  std::map<std::string, int> index_;
};

/// Bedroom, bathroom, kitchen, living room and outdoor are the surveyed
/// classes; the other five fill the taxonomy out to ten.
inline CategoryTaxonomy default_taxonomy() {
  return CategoryTaxonomy({"bedroom", "bathroom", "kitchen", "living room", "outdoor", "dining room", "hallway",
                           "basement", "garage", "yard"});
}

/// One category name per line, in file order. Blank lines are ignored.
inline CategoryTaxonomy load_taxonomy(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open taxonomy " + path);
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    auto name = csv::trim(line);
    if (!name.empty()) names.push_back(std::move(name));
  }
  if (names.empty()) fail(ErrorKind::EmptyTaxonomy, path + " lists no categories");
  return CategoryTaxonomy(std::move(names));
}

class CategorizerBackend {
 public:
  virtual ~CategorizerBackend() = default;
  /// `image_path` is where the pixels live on disk; backends that need the
  /// image itself (the external adapter) read it from there.
  virtual Categorization categorize(const std::string& image_id, const std::string& image_path) = 0;
};

/// Precomputed labels: CSV `image_id,category_name,confidence` with header.
class ManifestCategorizer final : public CategorizerBackend {
 public:
  ManifestCategorizer(const std::string& path, const CategoryTaxonomy& taxonomy) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::IoError, "cannot open labels manifest " + path);
    auto header = csv::read_row(in);
    if (!header || header->size() < 3 || csv::trim((*header)[0]) != "image_id") {
      fail(ErrorKind::FormatError, path + ": expected header image_id,category_name,confidence");
    }
    std::size_t line = 1;
    while (auto row = csv::read_row(in)) {
      ++line;
      if (csv::is_blank(*row)) continue;
      if (row->size() < 3) fail(ErrorKind::FormatError, path + ":" + std::to_string(line) + ": expected 3 columns");
      const auto label = taxonomy.find(csv::trim((*row)[1]));
      if (!label) fail(ErrorKind::FormatError, path + ":" + std::to_string(line) + ": unknown category " + (*row)[1]);
      double conf = 0.0;
      try {
        conf = std::stod((*row)[2]);
      } catch (const std::exception&) {
        fail(ErrorKind::FormatError, path + ":" + std::to_string(line) + ": bad confidence");
      }
      if (!(conf >= 0.0 && conf <= 1.0)) fail(ErrorKind::FormatError, path + ":" + std::to_string(line) + ": confidence outside [0,1]");
      entries_[csv::trim((*row)[0])] = Categorization{*label, conf};
    }
  }

  Categorization categorize(const std::string& image_id, const std::string&) override {
    auto it = entries_.find(image_id);
    if (it == entries_.end()) fail(ErrorKind::UnknownImage, "no label for image " + image_id);
    return it->second;
  }

  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, Categorization> entries_;
};

/// Line protocol over a child process: we write an absolute image path and
/// read back `category_name<TAB>confidence`. One request in flight at a time;
/// a dead or silent child surfaces as BackendUnavailable and is respawned on
/// the next call.
class AdapterCategorizer final : public CategorizerBackend {
 public:
  AdapterCategorizer(std::string command, CategoryTaxonomy taxonomy,
                     std::chrono::milliseconds timeout = std::chrono::seconds(10))
      : command_(std::move(command)), taxonomy_(std::move(taxonomy)), timeout_(timeout) {
    std::signal(SIGPIPE, SIG_IGN);
  }

  ~AdapterCategorizer() override { stop(); }

  AdapterCategorizer(const AdapterCategorizer&) = delete;
  AdapterCategorizer& operator=(const AdapterCategorizer&) = delete;

  Categorization categorize(const std::string& image_id, const std::string& image_path) override {
    std::lock_guard lock(mutex_);
    if (pid_ <= 0) start();
    const std::string request = image_path + "\n";
    if (!write_all(request)) {
      stop();
      fail(ErrorKind::BackendUnavailable, "adapter closed its input while categorizing " + image_id);
    }
    auto line = read_line();
    if (!line) {
      stop();
      fail(ErrorKind::BackendUnavailable, "adapter gave no answer for " + image_id);
    }
    const auto tab = line->find('\t');
    if (tab == std::string::npos) fail(ErrorKind::BackendUnavailable, "malformed adapter response: " + *line);
    const auto label = taxonomy_.find(csv::trim(line->substr(0, tab)));
    if (!label) fail(ErrorKind::BackendUnavailable, "adapter returned unknown category: " + line->substr(0, tab));
    double conf = 0.0;
    try {
      conf = std::stod(line->substr(tab + 1));
    } catch (const std::exception&) {
      fail(ErrorKind::BackendUnavailable, "malformed adapter confidence: " + *line);
    }
    return {*label, std::clamp(conf, 0.0, 1.0)};
  }

 private:
  void start() {
    int to_child[2], from_child[2];
    if (pipe(to_child) != 0) fail(ErrorKind::BackendUnavailable, std::strerror(errno));
    if (pipe(from_child) != 0) {
      close(to_child[0]);
      close(to_child[1]);
      fail(ErrorKind::BackendUnavailable, std::strerror(errno));
    }
    const pid_t pid = fork();
    if (pid < 0) fail(ErrorKind::BackendUnavailable, std::strerror(errno));
    if (pid == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    fcntl(to_child[1], F_SETFD, FD_CLOEXEC);
    fcntl(from_child[0], F_SETFD, FD_CLOEXEC);
    pid_ = pid;
    in_fd_ = to_child[1];
    out_fd_ = from_child[0];
    pending_.clear();
  }

  void stop() {
    if (in_fd_ >= 0) close(in_fd_);
    if (out_fd_ >= 0) close(out_fd_);
    in_fd_ = out_fd_ = -1;
    if (pid_ > 0) {
      kill(pid_, SIGTERM);
      waitpid(pid_, nullptr, 0);
    }
    pid_ = -1;
  }

  bool write_all(const std::string& s) {
    std::size_t done = 0;
    while (done < s.size()) {
      const ssize_t n = write(in_fd_, s.data() + done, s.size() - done);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return false;
      done += static_cast<std::size_t>(n);
    }
    return true;
  }

  std::optional<std::string> read_line() {
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    while (true) {
      const auto nl = pending_.find('\n');
      if (nl != std::string::npos) {
        std::string line = pending_.substr(0, nl);
        pending_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) return std::nullopt;
      pollfd pfd{out_fd_, POLLIN, 0};
      const int rc = poll(&pfd, 1, static_cast<int>(left.count()));
      if (rc < 0 && errno == EINTR) continue;
      if (rc <= 0) return std::nullopt;
      char buf[512];
      const ssize_t n = read(out_fd_, buf, sizeof buf);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return std::nullopt;
      pending_.append(buf, static_cast<std::size_t>(n));
    }
  }

  std::string command_;
  CategoryTaxonomy taxonomy_;
  std::chrono::milliseconds timeout_;
  std::mutex mutex_;
  pid_t pid_ = -1;
  int in_fd_ = -1;
  int out_fd_ = -1;
  std::string pending_;
};

inline Categorization categorize(const std::string& image_id, const std::string& image_path,
                                 CategorizerBackend& backend) {
  return backend.categorize(image_id, image_path);
}

}  // namespace roomsemble
