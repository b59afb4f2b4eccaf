//
// Copyright 2026 The CWRF Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef CWRF_DATASET_HPP_
#define CWRF_DATASET_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cwrf/error.hpp"
#include "cwrf/model.hpp"
#include "cwrf/rng.hpp"

namespace cwrf::data {

using nn::Matrix;

struct Dataset {
  Matrix features;  // n x C_in
  std::vector<int> labels;
  std::size_t classes = 0;
  std::string provenance;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }

  void validate() const {
    require(features.rows() == labels.size(), "Dataset: feature/label count mismatch");
    require(classes >= 2, "Dataset: need at least two classes");
    for (double v : features.data()) require(!std::isnan(v), "Dataset: NaN feature");
    for (int y : labels) {
      require(y >= 0 && static_cast<std::size_t>(y) < classes, "Dataset: label out of range");
    }
  }
};

struct Batch {
  Matrix x;
  std::vector<int> y;
  std::vector<std::size_t> indices;

  std::size_t size() const { return y.size(); }
};

inline Batch gather(const Dataset& ds, std::span<const std::size_t> indices) {
  Batch b{Matrix(indices.size(), ds.dim()), std::vector<int>(indices.size()),
          std::vector<std::size_t>(indices.begin(), indices.end())};
  for (std::size_t i = 0; i < indices.size(); ++i) {
    require(indices[i] < ds.size(), "gather: index out of range");
    const auto src = ds.features.row(indices[i]);
    std::copy(src.begin(), src.end(), b.x.row(i).begin());
    b.y[i] = ds.labels[indices[i]];
  }
  return b;
}

struct SyntheticSpec {
  std::size_t classes = 4;
  std::size_t dim = 16;
  std::size_t per_class = 150;
  double cluster_std = 1.0;
  // Class k is centered at separation * e_k.
  double separation = 2.0;
  std::uint64_t seed = 0;
};

// Isotropic Gaussian blobs around the scaled simplex vertices, class-interleaved.
inline Dataset gen_synthetic(const SyntheticSpec& s) {
  require(s.classes >= 2, "gen_synthetic: need at least two classes");
  require(s.dim >= s.classes, "gen_synthetic: dim must be >= classes for simplex means");
  require(s.cluster_std >= 0.0, "gen_synthetic: cluster_std must be nonnegative");
  Rng rng(s.seed);
  Dataset ds;
  ds.classes = s.classes;
  ds.features = Matrix(s.classes * s.per_class, s.dim);
  ds.labels.resize(s.classes * s.per_class);
  for (std::size_t i = 0; i < s.per_class; ++i) {
    for (std::size_t k = 0; k < s.classes; ++k) {
      const std::size_t row = i * s.classes + k;
      ds.labels[row] = static_cast<int>(k);
      for (std::size_t d = 0; d < s.dim; ++d) {
        const double mean = d == k ? s.separation : 0.0;
        ds.features(row, d) = mean + s.cluster_std * rng.normal();
      }
    }
  }
  std::ostringstream prov;
  prov << "synthetic(classes=" << s.classes << ",dim=" << s.dim << ",per_class=" << s.per_class
       << ",cluster_std=" << s.cluster_std << ",separation=" << s.separation
       << ",seed=" << s.seed << ")";
  ds.provenance = prov.str();
  return ds;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace detail

// Header row required; the column named "label" holds integer classes and every
// other column is a numeric feature.
inline Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("load_csv: empty file");
  const auto header = detail::split_csv_line(line);
  const auto label_it = std::find(header.begin(), header.end(), "label");
  if (label_it == header.end()) throw FormatError("load_csv: no 'label' column");
  const auto label_col = static_cast<std::size_t>(label_it - header.begin());
  const std::size_t dim = header.size() - 1;

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw FormatError("load_csv: wrong column count on line " + std::to_string(line_no));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cells[c], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != cells[c].size() || cells[c].empty()) {
        throw FormatError("load_csv: non-numeric cell on line " + std::to_string(line_no));
      }
      if (c == label_col) {
        if (v < 0 || v != std::floor(v)) {
          throw FormatError("load_csv: label must be a nonnegative integer");
        }
        labels.push_back(static_cast<int>(v));
      } else {
        values.push_back(v);
      }
    }
  }
  Dataset ds;
  ds.features = Matrix(labels.size(), dim);
  std::copy(values.begin(), values.end(), ds.features.data().begin());
  ds.labels = std::move(labels);
  ds.classes = ds.labels.empty()
                   ? 0
                   : static_cast<std::size_t>(*std::max_element(ds.labels.begin(), ds.labels.end())) + 1;
  ds.provenance = "csv(" + path.string() + ")";
  ds.validate();
  return ds;
}

}  // namespace cwrf::data

#endif  // CWRF_DATASET_HPP_
