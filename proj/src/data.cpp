#include "ocnopt/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "ocnopt/errors.hpp"

namespace ocnopt {

namespace {

constexpr double kPi = 3.14159265358979323846;

// 8x8 pixel-font glyphs, row-major, '#' = ink.
const std::array<std::array<const char*, 8>, 10> kGlyphs = {{
    {"..####..", ".#....#.", ".#....#.", ".#....#.", ".#....#.", ".#....#.",
     ".#....#.", "..####.."},
    {"...##...", "..###...", "...##...", "...##...", "...##...", "...##...",
     "...##...", "..####.."},
    {"..####..", ".#....#.", "......#.", ".....#..", "....#...", "...#....",
     "..#.....", ".######."},
    {"..####..", ".#....#.", "......#.", "...###..", "......#.", "......#.",
     ".#....#.", "..####.."},
    {"....##..", "...#.#..", "..#..#..", ".#...#..", ".######.", ".....#..",
     ".....#..", ".....#.."},
    {".######.", ".#......", ".#......", ".#####..", "......#.", "......#.",
     ".#....#.", "..####.."},
    {"..####..", ".#......", ".#......", ".#####..", ".#....#.", ".#....#.",
     ".#....#.", "..####.."},
    {".######.", "......#.", ".....#..", "....#...", "...#....", "...#....",
     "...#....", "...#...."},
    {"..####..", ".#....#.", ".#....#.", "..####..", ".#....#.", ".#....#.",
     ".#....#.", "..####.."},
    {"..####..", ".#....#.", ".#....#.", "..#####.", "......#.", "......#.",
     "......#.", "..####.."},
}};

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Index Dataset::n_classes() const {
  if (labels.empty()) return 0;
  return 1 + *std::max_element(labels.begin(), labels.end());
}

void split_and_normalize(Dataset& ds, std::uint64_t seed, double train_frac,
                         double val_frac) {
  const Index n = ds.size();
  if (n < 1) throw dim_error("dataset: empty");
  if (train_frac <= 0.0 || val_frac < 0.0 || train_frac + val_frac > 1.0)
    throw dim_error("dataset: invalid split fractions");

  if (n > (Index(1) << 31))
    throw dim_error("dataset: too many samples");
  Rng rng(seed);
  const std::vector<int> perm_i = rng.permutation(static_cast<int>(n));
  const std::vector<Index> perm(perm_i.begin(), perm_i.end());
  const auto n_train =
      std::max<Index>(1, static_cast<Index>(std::llround(train_frac * n)));
  const auto n_val = static_cast<Index>(std::llround(val_frac * n));
  ds.train_idx.assign(perm.begin(), perm.begin() + std::min(n_train, n));
  ds.val_idx.assign(perm.begin() + std::min(n_train, n),
                    perm.begin() + std::min(n_train + n_val, n));
  ds.test_idx.assign(perm.begin() + std::min(n_train + n_val, n), perm.end());

  const Index d = ds.dim();
  ds.feat_mean = Vec::Zero(d);
  for (Index i : ds.train_idx) ds.feat_mean += ds.features.col(i);
  ds.feat_mean /= double(ds.train_idx.size());
  Vec var = Vec::Zero(d);
  for (Index i : ds.train_idx) {
    const Vec c = ds.features.col(i) - ds.feat_mean;
    var += c.cwiseProduct(c);
  }
  var /= double(ds.train_idx.size());
  ds.feat_scale = var.cwiseSqrt();
  for (Index j = 0; j < d; ++j)
    if (ds.feat_scale[j] < 1e-12) ds.feat_scale[j] = 1.0;
  ds.features = (ds.features.colwise() - ds.feat_mean).array().colwise() /
                ds.feat_scale.array();
}

Dataset load_csv(const std::string& path, const std::string& label_column,
                 std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw parse_error("load_csv: cannot open '" + path + "'");

  auto tokenize = [](const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
  };

  std::string line;
  if (!std::getline(in, line))
    throw parse_error("load_csv: " + path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = tokenize(line);
  Index label_col = -1;
  for (size_t j = 0; j < header.size(); ++j)
    if (header[j] == label_column) label_col = static_cast<Index>(j);
  if (label_col < 0)
    throw parse_error("load_csv: " + path + ": label column '" +
                      label_column + "' not found in header");

  const size_t width = header.size();
  std::vector<Vec> rows;
  std::vector<double> raw_labels;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = tokenize(line);
    if (cells.size() != width)
      throw parse_error("load_csv: " + path + ":" + std::to_string(line_no) +
                        ": expected " + std::to_string(width) +
                        " fields, got " + std::to_string(cells.size()));
    Vec row(static_cast<Index>(width) - 1);
    Index at = 0;
    for (size_t j = 0; j < width; ++j) {
      const char* s = cells[j].c_str();
      char* end = nullptr;
      const double v = std::strtod(s, &end);
      if (end == s || *end != '\0')
        throw parse_error("load_csv: " + path + ":" +
                          std::to_string(line_no) + ": column '" + header[j] +
                          "': not numeric: '" + cells[j] + "'");
      if (!std::isfinite(v))
        throw parse_error("load_csv: " + path + ":" +
                          std::to_string(line_no) + ": column '" + header[j] +
                          "': non-finite value");
      if (static_cast<Index>(j) == label_col)
        raw_labels.push_back(v);
      else
        row[at++] = v;
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty())
    throw parse_error("load_csv: " + path + ": no data rows");
  if (width < 2)
    throw parse_error("load_csv: " + path + ": need at least one feature");

  Dataset ds;
  ds.features.resize(static_cast<Index>(width) - 1,
                     static_cast<Index>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i)
    ds.features.col(static_cast<Index>(i)) = rows[i];

  // integral label values with at least two levels -> classification
  bool integral = true;
  for (double v : raw_labels)
    integral = integral && std::abs(v - std::round(v)) < 1e-9;
  std::map<long long, int> levels;
  if (integral)
    for (double v : raw_labels) levels.emplace(std::llround(v), 0);
  if (integral && levels.size() >= 2 && levels.size() <= 64) {
    int next = 0;
    for (auto& kv : levels) kv.second = next++;
    ds.labels.reserve(raw_labels.size());
    for (double v : raw_labels)
      ds.labels.push_back(levels.at(std::llround(v)));
  } else {
    ds.values.resize(static_cast<Index>(raw_labels.size()));
    for (size_t i = 0; i < raw_labels.size(); ++i)
      ds.values[static_cast<Index>(i)] = raw_labels[i];
  }
  split_and_normalize(ds, seed);
  return ds;
}

Dataset make_synthetic(const std::string& kind, Index n, double noise,
                       std::uint64_t seed) {
  if (n < 10) throw dim_error("make_synthetic: need n >= 10");
  if (noise < 0.0) throw dim_error("make_synthetic: noise must be >= 0");
  if (kind == "digits") return make_digits((n + 9) / 10, noise, seed);

  Rng rng(seed);
  Dataset ds;
  if (kind == "two-moons") {
    ds.features.resize(2, n);
    ds.labels.resize(static_cast<size_t>(n));
    for (Index i = 0; i < n; ++i) {
      const int cls = static_cast<int>(i % 2);
      const double t = kPi * rng.uniform();
      double x = cls == 0 ? std::cos(t) : 1.0 - std::cos(t);
      double y = cls == 0 ? std::sin(t) : 0.5 - std::sin(t);
      ds.features(0, i) = x + noise * rng.normal();
      ds.features(1, i) = y + noise * rng.normal();
      ds.labels[static_cast<size_t>(i)] = cls;
    }
  } else if (kind == "circles") {
    ds.features.resize(2, n);
    ds.labels.resize(static_cast<size_t>(n));
    for (Index i = 0; i < n; ++i) {
      const int cls = static_cast<int>(i % 2);
      const double r = cls == 0 ? 1.0 : 0.5;
      const double phi = 2.0 * kPi * rng.uniform();
      ds.features(0, i) = r * std::cos(phi) + noise * rng.normal();
      ds.features(1, i) = r * std::sin(phi) + noise * rng.normal();
      ds.labels[static_cast<size_t>(i)] = cls;
    }
  } else if (kind == "spirals") {
    ds.features.resize(2, n);
    ds.labels.resize(static_cast<size_t>(n));
    for (Index i = 0; i < n; ++i) {
      const int cls = static_cast<int>(i % 2);
      const double t = 0.25 + 0.75 * rng.uniform();
      const double phi = 3.5 * kPi * t + kPi * cls;
      ds.features(0, i) = t * std::cos(phi) + noise * rng.normal();
      ds.features(1, i) = t * std::sin(phi) + noise * rng.normal();
      ds.labels[static_cast<size_t>(i)] = cls;
    }
  } else if (kind == "linear-regression") {
    const Vec w = (Vec(3) << 1.5, -2.0, 0.5).finished();
    const double b = 0.3;
    ds.features.resize(3, n);
    ds.values.resize(n);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < 3; ++j)
        ds.features(j, i) = 2.0 * rng.uniform() - 1.0;
      ds.values[i] = w.dot(ds.features.col(i)) + b + noise * rng.normal();
    }
  } else {
    throw parse_error("make_synthetic: unknown kind '" + kind + "'");
  }
  split_and_normalize(ds, seed);
  return ds;
}

Dataset make_digits(Index per_class, double noise, std::uint64_t seed) {
  if (per_class < 1) throw dim_error("make_digits: need per_class >= 1");
  if (noise < 0.0) throw dim_error("make_digits: noise must be >= 0");

  Rng rng(seed);
  const Index n = 10 * per_class;
  Dataset ds;
  ds.features.resize(64, n);
  ds.labels.resize(static_cast<size_t>(n));

  Index at = 0;
  for (int cls = 0; cls < 10; ++cls) {
    for (Index s = 0; s < per_class; ++s, ++at) {
      const double intensity = 0.7 + 0.6 * rng.uniform();
      const int dx = static_cast<int>(rng.uniform_int(3)) - 1;
      const int dy = static_cast<int>(rng.uniform_int(3)) - 1;
      for (int r = 0; r < 8; ++r) {
        for (int c = 0; c < 8; ++c) {
          const int sr = r - dy, sc = c - dx;
          double v = 0.0;
          if (sr >= 0 && sr < 8 && sc >= 0 && sc < 8 &&
              kGlyphs[static_cast<size_t>(cls)][static_cast<size_t>(sr)]
                     [sc] == '#')
            v = intensity;
          if (v > 0.0 && rng.uniform() < 0.05) v = 0.0;  // pixel dropout
          v += noise * rng.normal();
          ds.features(8 * r + c, at) = v;
        }
      }
      ds.labels[static_cast<size_t>(at)] = cls;
    }
  }
  split_and_normalize(ds, seed);
  return ds;
}

Mat gather_features(const Dataset& ds, const std::vector<Index>& idx,
                    size_t begin, size_t count) {
  if (begin + count > idx.size())
    throw dim_error("gather_features: window out of range");
  Mat out(ds.dim(), static_cast<Index>(count));
  for (size_t i = 0; i < count; ++i)
    out.col(static_cast<Index>(i)) = ds.features.col(idx[begin + i]);
  return out;
}

Targets gather_targets(const Dataset& ds, const std::vector<Index>& idx,
                       size_t begin, size_t count) {
  if (begin + count > idx.size())
    throw dim_error("gather_targets: window out of range");
  if (ds.regression()) {
    Mat v(1, static_cast<Index>(count));
    for (size_t i = 0; i < count; ++i)
      v(0, static_cast<Index>(i)) = ds.values[idx[begin + i]];
    return targets_from_values(std::move(v));
  }
  Eigen::VectorXi labels(static_cast<Index>(count));
  for (size_t i = 0; i < count; ++i)
    labels[static_cast<Index>(i)] =
        ds.labels[static_cast<size_t>(idx[begin + i])];
  return targets_from_labels(std::move(labels));
}

void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw parse_error("write_csv: cannot open '" + path + "'");
  for (Index j = 0; j < ds.dim(); ++j) out << 'f' << j << ',';
  out << (ds.regression() ? "target" : "label") << '\n';
  for (Index i = 0; i < ds.size(); ++i) {
    for (Index j = 0; j < ds.dim(); ++j)
      out << fmt_double(ds.features(j, i)) << ',';
    if (ds.regression())
      out << fmt_double(ds.values[i]);
    else
      out << ds.labels[static_cast<size_t>(i)];
    out << '\n';
  }
  if (!out) throw parse_error("write_csv: write failed for '" + path + "'");
}

}  // namespace ocnopt
