#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gaiforge/bench.hpp"
#include "gaiforge/config.hpp"
#include "gaiforge/contracts.hpp"
#include "gaiforge/metrics.hpp"
#include "gaiforge/tensor.hpp"
#include "gaiforge/train.hpp"

namespace gaiforge {

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, "cannot create directory " + dir + ": " + ec.message());
}

/// All outputs go through temp-file-plus-rename so readers never observe a
/// partial file.
inline void atomic_write_text(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    require(os.good(), "cannot open " + tmp + " for writing");
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    require(os.good(), "write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  require(!ec, "cannot move " + tmp + " into place: " + ec.message());
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "cannot open " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

// ---------------------------------------------------------------------------
// Stacked sample files: one [count,H,W,D] tensor per dataset split.
// ---------------------------------------------------------------------------

/// Streams images into a stacked tensor file without holding them all.
/// Appends must happen in index order; finish() moves the file into place.
class StackedTensorWriter {
 public:
  StackedTensorWriter(std::string path, std::size_t count, std::size_t h, std::size_t w,
                      std::size_t d)
      : path_(std::move(path)), tmp_(path_ + ".tmp"), expected_(count), pixels_(h * w * d) {
    os_.open(tmp_, std::ios::binary);
    require(os_.good(), "cannot open " + tmp_ + " for writing");
    os_.write(kTensorMagic, 4);
    detail::put_u32(os_, 4);
    detail::put_u64(os_, count);
    detail::put_u64(os_, h);
    detail::put_u64(os_, w);
    detail::put_u64(os_, d);
  }

  void append(const Tensor& img) {
    require(img.size() == pixels_, "StackedTensorWriter: image pixel count mismatch");
    require(written_ < expected_, "StackedTensorWriter: too many images");
    std::vector<unsigned char> buf(pixels_ * 8);
    for (std::size_t i = 0; i < pixels_; ++i) {
      std::uint64_t bits = detail::f64_bits(img[i]);
      for (int k = 0; k < 8; ++k)
        buf[i * 8 + k] = static_cast<unsigned char>(bits >> (8 * k));
    }
    os_.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size()));
    ++written_;
  }

  void finish() {
    require(written_ == expected_, "StackedTensorWriter: expected " +
                                       std::to_string(expected_) + " images, got " +
                                       std::to_string(written_));
    require(os_.good(), "write failed for " + tmp_);
    os_.close();
    std::error_code ec;
    std::filesystem::rename(tmp_, path_, ec);
    require(!ec, "cannot move " + tmp_ + " into place: " + ec.message());
  }

 private:
  std::string path_, tmp_;
  std::size_t expected_, pixels_;
  std::size_t written_ = 0;
  std::ofstream os_;
};

/// Reads the first `count` images of a stacked tensor file.
inline std::vector<Tensor> load_stacked_prefix(const std::string& path, std::size_t count) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  require(is.good() && std::memcmp(magic, kTensorMagic, 4) == 0,
          path + ": not a tensor file");
  std::uint32_t rank = detail::get_u32(is);
  require(rank == 4, path + ": expected a stacked [count,H,W,D] tensor");
  std::uint64_t n = detail::get_u64(is);
  std::uint64_t h = detail::get_u64(is);
  std::uint64_t w = detail::get_u64(is);
  std::uint64_t d = detail::get_u64(is);
  require(count <= n, path + ": has " + std::to_string(n) + " images, need " +
                          std::to_string(count));
  std::size_t pixels = static_cast<std::size_t>(h * w * d);
  std::vector<Tensor> out;
  out.reserve(count);
  std::vector<unsigned char> buf(pixels * 8);
  for (std::size_t i = 0; i < count; ++i) {
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    require(is.good(), path + ": truncated payload");
    Tensor img({static_cast<std::size_t>(h), static_cast<std::size_t>(w),
                static_cast<std::size_t>(d)});
    for (std::size_t p = 0; p < pixels; ++p) {
      std::uint64_t bits = 0;
      for (int k = 0; k < 8; ++k)
        bits |= static_cast<std::uint64_t>(buf[p * 8 + k]) << (8 * k);
      img[p] = detail::bits_f64(bits);
    }
    out.push_back(std::move(img));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report emission. Every file carries the resolved config hash.
// ---------------------------------------------------------------------------

inline nlohmann::json metric_stat_json(const MetricStat& s, double scale = 1.0) {
  nlohmann::json raw = nlohmann::json::array();
  for (double v : s.raw) raw.push_back(v * scale);
  return nlohmann::json{
      {"mean", s.mean * scale}, {"std", s.stddev * scale}, {"raw", raw}};
}

inline nlohmann::json report_json(const MetricsReport& rep, const std::string& method,
                                  const std::vector<std::uint64_t>& seeds,
                                  const std::string& config_hash) {
  nlohmann::json j;
  j["config_hash"] = config_hash;
  j["method"] = method;
  j["seeds"] = seeds;
  j["fpr_point"] = rep.fpr_point;
  j["tpr_reliable"] = rep.tpr_reliable;
  j["counts"] = {{"real", rep.n_real}, {"fake", rep.n_fake}, {"minor", rep.n_minor}};
  j["metrics"] = {{"acc_minor", metric_stat_json(rep.acc_minor)},
                  {"tpr_at_fpr", metric_stat_json(rep.tpr_at_fpr)},
                  {"acc_all", metric_stat_json(rep.acc_all)},
                  {"auc", metric_stat_json(rep.auc, 100.0)}};
  return j;
}

inline void write_report_file(const std::string& path, const MetricsReport& rep,
                              const std::string& method,
                              const std::vector<std::uint64_t>& seeds,
                              const std::string& config_hash) {
  atomic_write_text(path, report_json(rep, method, seeds, config_hash).dump(2) + "\n");
}

inline std::string metrics_csv_header() {
  return "method,acc_minor_mean,acc_minor_std,tpr_at_fpr_mean,tpr_at_fpr_std,"
         "acc_all_mean,acc_all_std,auc_mean,auc_std,fpr_point,tpr_reliable,seeds";
}

inline std::string metrics_csv_row(const std::string& method, const MetricsReport& r) {
  std::string row = method;
  auto push = [&row](double v) { row += "," + format_double(v); };
  push(r.acc_minor.mean);
  push(r.acc_minor.stddev);
  push(r.tpr_at_fpr.mean);
  push(r.tpr_at_fpr.stddev);
  push(r.acc_all.mean);
  push(r.acc_all.stddev);
  push(r.auc.mean * 100.0);
  push(r.auc.stddev * 100.0);
  push(r.fpr_point);
  row += std::string(",") + (r.tpr_reliable ? "1" : "0");
  row += "," + std::to_string(r.seeds);
  return row;
}

inline std::string coverage_csv(const CoverageMatrix& m, const std::string& config_hash) {
  std::string out = "# config_hash=" + config_hash + "\n";
  out += "detector\\target";
  for (std::size_t j = 0; j < m.size(); ++j) out += "," + std::to_string(j);
  out += "\n";
  for (std::size_t i = 0; i < m.size(); ++i) {
    out += std::to_string(i);
    for (std::size_t j = 0; j < m.size(); ++j) out += "," + format_double(m.accuracy[i][j]);
    out += "\n";
  }
  return out;
}

inline CoverageMatrix parse_coverage_csv(const std::string& text) {
  CoverageMatrix m;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("detector", 0) == 0) continue;
    std::vector<double> row;
    std::istringstream cells(line);
    std::string cell;
    bool first = true;
    while (std::getline(cells, cell, ',')) {
      if (first) {
        first = false;
        continue;
      }
      row.push_back(std::stod(cell));
    }
    m.accuracy.push_back(std::move(row));
  }
  for (const auto& row : m.accuracy)
    require(row.size() == m.accuracy.size(), "coverage csv: matrix is not square");
  return m;
}

inline std::string taxonomy_text(const Taxonomy& t, const std::string& config_hash) {
  std::string out = "# config_hash=" + config_hash + "\n";
  out += "# threshold=" + format_double(t.threshold) + "\n";
  for (const auto& [a, b] : t.edges)
    out += std::to_string(a) + " -> " + std::to_string(b) + "\n";
  out += "# components=" + std::to_string(t.num_components) + "\n";
  for (std::size_t i = 0; i < t.component_of.size(); ++i)
    out += "# family " + std::to_string(i) + " component " +
           std::to_string(t.component_of[i]) + "\n";
  return out;
}

inline std::string taxonomy_dot(const Taxonomy& t, const std::string& config_hash) {
  static const char* palette[] = {"lightblue", "lightsalmon", "palegreen",
                                  "khaki",     "plum",        "lightgray"};
  std::string out = "// config_hash=" + config_hash + "\n";
  out += "digraph taxonomy {\n";
  for (std::size_t i = 0; i < t.component_of.size(); ++i) {
    const char* color = palette[t.component_of[i] % 6];
    out += "  f" + std::to_string(i) + " [style=filled, fillcolor=" + color + "];\n";
  }
  for (const auto& [a, b] : t.edges)
    out += "  f" + std::to_string(a) + " -> f" + std::to_string(b) + ";\n";
  out += "}\n";
  return out;
}

inline std::string history_csv(const std::vector<HistoryRow>& rows,
                               const std::string& config_hash) {
  std::string out = "# config_hash=" + config_hash + "\n";
  out += "iteration,lr,loss,train_minority_acc\n";
  for (const auto& r : rows) {
    out += std::to_string(r.iteration) + "," + format_double(r.lr) + "," +
           format_double(r.loss) + ",";
    if (r.minority_acc >= 0.0) out += format_double(r.minority_acc);
    out += "\n";
  }
  return out;
}

}  // namespace gaiforge
