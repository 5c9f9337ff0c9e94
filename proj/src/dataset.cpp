#include "ckd/dataset.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "ckd/errors.hpp"
#include "ckd/rng.hpp"

namespace ckd {

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

namespace {

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  throw InvalidInput("unknown split '" + std::string(text) + "'");
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view text, std::size_t line_no) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw InvalidInput("csv line " + std::to_string(line_no) + ": bad number '" +
                       std::string(text) + "'");
  return value;
}

// Orthonormal class directions by modified Gram-Schmidt on Gaussian draws.
Eigen::MatrixXd simplex_means(const MixtureParams& p, RngStream& rng) {
  Eigen::MatrixXd q(p.dim, p.classes);
  for (int c = 0; c < p.classes; ++c) {
    Eigen::VectorXd v(p.dim);
    for (;;) {
      for (int i = 0; i < p.dim; ++i) v[i] = rng.normal();
      for (int prev = 0; prev < c; ++prev) v -= q.col(prev).dot(v) * q.col(prev);
      const double norm = v.norm();
      if (norm > 1e-6) {
        q.col(c) = v / norm;
        break;
      }
    }
  }
  return q * p.separation;
}

Eigen::MatrixXd circle_means(const MixtureParams& p, RngStream& rng) {
  Eigen::MatrixXd means = Eigen::MatrixXd::Zero(p.dim, p.classes);
  const double offset = 2.0 * std::numbers::pi * rng.uniform();
  for (int c = 0; c < p.classes; ++c) {
    const double theta = offset + 2.0 * std::numbers::pi * c / p.classes;
    means(0, c) = p.separation * std::cos(theta);
    if (p.dim > 1) means(1, c) = p.separation * std::sin(theta);
  }
  return means;
}

}  // namespace

std::vector<std::size_t> Dataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i)
    if (splits[i] == split) out.push_back(i);
  return out;
}

Eigen::MatrixXd Dataset::gather(std::span<const std::size_t> ids) const {
  Eigen::MatrixXd out(features.rows(), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (ids[j] >= size()) throw InvalidInput("Dataset::gather: index out of range");
    out.col(static_cast<Eigen::Index>(j)) = features.col(static_cast<Eigen::Index>(ids[j]));
  }
  return out;
}

std::vector<int> Dataset::gather_labels(std::span<const std::size_t> ids) const {
  std::vector<int> out;
  out.reserve(ids.size());
  for (const std::size_t i : ids) out.push_back(labels.at(i));
  return out;
}

Dataset generate_gaussian_mixture(const MixtureParams& p) {
  if (p.classes < 2) throw InvalidInput("gen-data: classes must be at least 2");
  if (p.dim < 1) throw InvalidInput("gen-data: dim must be positive");
  if (p.per_class < 2) throw InvalidInput("gen-data: per_class must be at least 2 for an 80/20 split");
  if (p.test_per_class < 0) throw InvalidInput("gen-data: test_per_class must be non-negative");
  if (!(p.noise >= 0.0) || !(p.separation > 0.0)) throw InvalidInput("gen-data: bad noise/separation");

  RngStream mean_rng = RngStream(p.seed).split(0);
  RngStream sample_rng = RngStream(p.seed).split(1);
  const Eigen::MatrixXd means = p.dim >= p.classes ? simplex_means(p, mean_rng)
                                                   : circle_means(p, mean_rng);
  const int n_val = std::max(1, p.per_class / 5);
  const int per_class_total = p.per_class + p.test_per_class;

  Dataset data;
  data.num_classes = p.classes;
  data.features.resize(p.dim, static_cast<Eigen::Index>(per_class_total) * p.classes);
  Eigen::Index col = 0;
  for (int c = 0; c < p.classes; ++c) {
    for (int s = 0; s < per_class_total; ++s, ++col) {
      for (int i = 0; i < p.dim; ++i) data.features(i, col) = means(i, c) + p.noise * sample_rng.normal();
      data.labels.push_back(c);
      data.splits.push_back(s < p.test_per_class                 ? Split::test
                            : s < p.test_per_class + n_val ? Split::val
                                                           : Split::train);
    }
  }
  return data;
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "label,split";
  for (int i = 0; i < data.dim(); ++i) out << ",f" << i;
  out << '\n';
  char buf[40];
  for (std::size_t s = 0; s < data.size(); ++s) {
    out << data.labels[s] << ',' << to_string(data.splits[s]);
    for (int i = 0; i < data.dim(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", data.features(i, static_cast<Eigen::Index>(s)));
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("short write to " + path.string());
}

Dataset read_csv(const std::filesystem::path& path, std::uint64_t split_seed) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput(path.string() + ": empty file");
  const auto header = split_fields(line);
  if (header.empty() || header[0] != "label") throw InvalidInput(path.string() + ": first column must be 'label'");
  const bool has_split = header.size() > 1 && header[1] == "split";
  const std::size_t first_feature = has_split ? 2 : 1;
  if (header.size() <= first_feature) throw InvalidInput(path.string() + ": no feature columns");
  const std::size_t dim = header.size() - first_feature;

  std::vector<double> values;
  Dataset data;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size())
      throw InvalidInput(path.string() + ": line " + std::to_string(line_no) + " has wrong field count");
    const int label = parse_number<int>(fields[0], line_no);
    if (label < 0) throw InvalidInput(path.string() + ": negative label");
    data.labels.push_back(label);
    data.num_classes = std::max(data.num_classes, label + 1);
    if (has_split) data.splits.push_back(parse_split(fields[1]));
    for (std::size_t i = first_feature; i < fields.size(); ++i)
      values.push_back(parse_number<double>(fields[i], line_no));
  }
  const auto n = static_cast<Eigen::Index>(data.labels.size());
  data.features = Eigen::Map<Eigen::MatrixXd>(values.data(), static_cast<Eigen::Index>(dim), n);
  if (!has_split) {
    RngStream rng(split_seed);
    data.splits.resize(data.labels.size());
    for (auto& s : data.splits) {
      const double u = rng.uniform();
      s = u < 0.2 ? Split::test : u < 0.36 ? Split::val : Split::train;
    }
  }
  if (data.num_classes < 2) throw InvalidInput(path.string() + ": need at least 2 classes");
  return data;
}

}  // namespace ckd
