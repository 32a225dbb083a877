#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "statpupil/core.hpp"

namespace spup {

struct Sample {
  GrayImage image;
  Ellipse truth;

  friend bool operator==(const Sample&, const Sample&) = default;
};

/// Random-access view of a training corpus. read() must be safe to call
/// concurrently; each call counts as one read of the sample.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual Sample read(std::size_t index) const = 0;
};

class MemorySource : public SampleSource {
 public:
  MemorySource() = default;
  explicit MemorySource(std::vector<Sample> samples) : samples_(std::move(samples)) {}

  std::size_t size() const override { return samples_.size(); }
  Sample read(std::size_t index) const override { return samples_.at(index); }
  const std::vector<Sample>& samples() const { return samples_; }

 private:
  std::vector<Sample> samples_;
};

/// Wraps another source and counts reads.
class CountingSource : public SampleSource {
 public:
  explicit CountingSource(const SampleSource& inner) : inner_(inner) {}

  std::size_t size() const override { return inner_.size(); }
  Sample read(std::size_t index) const override {
    reads_.fetch_add(1, std::memory_order_relaxed);
    return inner_.read(index);
  }
  std::size_t reads() const { return reads_.load(); }

 private:
  const SampleSource& inner_;
  mutable std::atomic<std::size_t> reads_{0};
};

// Dataset directory layout: image files plus `annotations.txt`, one line per
// image: `filename cx cy a b theta`.
inline constexpr const char* kAnnotationFile = "annotations.txt";

struct Annotation {
  std::string filename;
  Ellipse ellipse;
};

std::vector<Annotation> read_annotations(const std::filesystem::path& path);
void write_annotations(const std::filesystem::path& path, const std::vector<Annotation>& rows);

/// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double v);
/// Strict full-token parse; throws DataError on garbage.
double parse_double(const std::string& token);

GrayImage read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const GrayImage& img);

/// Dataset directory read lazily from disk.
class DirectorySource : public SampleSource {
 public:
  explicit DirectorySource(std::filesystem::path dir);

  std::size_t size() const override { return rows_.size(); }
  Sample read(std::size_t index) const override;
  const std::vector<Annotation>& annotations() const { return rows_; }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::vector<Annotation> rows_;
};

}  // namespace spup
