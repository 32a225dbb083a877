#include "statpupil/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <opencv2/imgcodecs.hpp>

#include "statpupil/error.hpp"

namespace spup {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& token) {
  double v = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) throw DataError("not a number: '" + token + "'");
  return v;
}

std::vector<Annotation> read_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotation file " + path.string());
  std::vector<Annotation> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    Annotation row;
    std::string f[5];
    if (!(ss >> row.filename >> f[0] >> f[1] >> f[2] >> f[3] >> f[4])) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected `filename cx cy a b theta`");
    }
    std::string extra;
    if (ss >> extra) throw DataError(path.string() + ":" + std::to_string(lineno) + ": trailing field '" + extra + "'");
    try {
      row.ellipse = {parse_double(f[0]), parse_double(f[1]), parse_double(f[2]), parse_double(f[3]),
                     parse_double(f[4])};
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_annotations(const std::filesystem::path& path, const std::vector<Annotation>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write annotation file " + path.string());
  for (const Annotation& r : rows) {
    const Ellipse& e = r.ellipse;
    out << r.filename << ' ' << format_double(e.cx) << ' ' << format_double(e.cy) << ' ' << format_double(e.a)
        << ' ' << format_double(e.b) << ' ' << format_double(e.theta) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

GrayImage read_image(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw IoError("cannot read image " + path.string());
  if (!m.isContinuous()) m = m.clone();
  std::vector<std::uint8_t> px(m.data, m.data + m.total());
  return GrayImage(m.cols, m.rows, std::move(px));
}

void write_image(const std::filesystem::path& path, const GrayImage& img) {
  cv::Mat m(img.height(), img.width(), CV_8UC1, const_cast<std::uint8_t*>(img.pixels().data()));
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), m);
  } catch (const cv::Exception& e) {
    throw IoError("cannot write image " + path.string() + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write image " + path.string());
}

DirectorySource::DirectorySource(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (!std::filesystem::is_directory(dir_)) throw IoError("dataset directory not found: " + dir_.string());
  rows_ = read_annotations(dir_ / kAnnotationFile);
}

Sample DirectorySource::read(std::size_t index) const {
  const Annotation& row = rows_.at(index);
  return {read_image(dir_ / row.filename), row.ellipse};
}

}  // namespace spup
