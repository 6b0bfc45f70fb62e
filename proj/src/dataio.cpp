#include "pqlab/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "pqlab/io_util.hpp"

namespace pqlab {

namespace {

// Random orthonormal frame of `count` vectors in `dim` dimensions
// (Gram-Schmidt on Gaussian draws).
std::vector<Vec> random_orthonormal_frame(int dim, int count, Rng& rng) {
  std::vector<Vec> frame;
  frame.reserve(count);
  while (static_cast<int>(frame.size()) < count) {
    Vec v(dim);
    for (double& x : v) x = rng.normal();
    for (const Vec& u : frame) {
      const double proj = inner_product(v, u);
      for (int d = 0; d < dim; ++d) v[d] -= proj * u[d];
    }
    const double norm = l2_norm(v);
    if (norm < 1e-8) continue;  // degenerate draw, retry
    for (double& x : v) x /= norm;
    frame.push_back(std::move(v));
  }
  return frame;
}

std::string labels_sidecar(const std::string& path) { return path + ".labels"; }
std::string multilabels_sidecar(const std::string& path) {
  return path + ".mlabels";
}

LabeledDataset subset(const LabeledDataset& dataset,
                      const std::vector<std::size_t>& indices) {
  LabeledDataset out;
  out.dim = dataset.dim;
  out.vectors.reserve(indices.size());
  out.labels.reserve(indices.size());
  out.ids.reserve(indices.size());
  for (std::size_t i : indices) {
    out.vectors.push_back(dataset.vectors[i]);
    out.labels.push_back(dataset.labels[i]);
    out.ids.push_back(dataset.ids[i]);
  }
  return out;
}

}  // namespace

LabeledDataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.classes < 2 || spec.per_class < 1 || spec.dim < 1) {
    throw std::invalid_argument("generate_synthetic: invalid spec sizes");
  }
  if (!(spec.separation > 0.0) || !(spec.sigma > 0.0)) {
    throw std::invalid_argument(
        "generate_synthetic: separation and sigma must be positive");
  }
  if (spec.dim < spec.classes) {
    throw std::invalid_argument(
        "generate_synthetic: dim (" + std::to_string(spec.dim) +
        ") must be >= classes (" + std::to_string(spec.classes) +
        ") for the orthogonal frame");
  }

  Rng rng(spec.seed);
  Rng frame_rng = rng.child(0);
  Rng noise_rng = rng.child(1);

  std::vector<Vec> frame =
      random_orthonormal_frame(spec.dim, spec.classes, frame_rng);
  // ||s*u_i - s*u_j|| = s*sqrt(2) for orthonormal u, so this scale makes each
  // pair of means exactly separation*sigma apart.
  const double scale = spec.separation * spec.sigma / std::sqrt(2.0);

  LabeledDataset out;
  out.dim = spec.dim;
  const std::size_t n =
      static_cast<std::size_t>(spec.classes) * spec.per_class;
  out.vectors.reserve(n);
  out.labels.reserve(n);
  out.ids.reserve(n);

  std::uint32_t next_id = 0;
  for (int c = 0; c < spec.classes; ++c) {
    for (int i = 0; i < spec.per_class; ++i) {
      Vec v(spec.dim);
      for (int d = 0; d < spec.dim; ++d) {
        v[d] = scale * frame[c][d] + noise_rng.normal(0.0, spec.sigma);
      }
      out.vectors.push_back(std::move(v));
      out.labels.push_back({static_cast<std::uint32_t>(c)});
      out.ids.push_back(next_id++);
    }
  }
  return out;
}

SplitResult split(const LabeledDataset& dataset, std::size_t n_queries,
                  std::uint64_t seed, bool stratified) {
  const std::size_t n = dataset.size();
  if (n_queries >= n) {
    throw std::invalid_argument("split: n_queries must be < dataset size");
  }

  Rng rng(seed);
  std::vector<std::size_t> query_idx;

  if (!stratified) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const std::size_t j = i + rng.uniform_index(n - i);
      std::swap(perm[i], perm[j]);
    }
    query_idx.assign(perm.begin(), perm.begin() + n_queries);
  } else {
    // Largest-remainder quotas per primary label.
    std::map<std::uint32_t, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t key =
          dataset.labels[i].empty() ? 0xFFFFFFFFu : dataset.labels[i][0];
      groups[key].push_back(i);
    }
    const double frac = static_cast<double>(n_queries) / n;
    std::vector<std::pair<double, std::uint32_t>> remainders;
    std::map<std::uint32_t, std::size_t> quota;
    std::size_t assigned = 0;
    for (const auto& [key, members] : groups) {
      const double exact = frac * members.size();
      quota[key] = static_cast<std::size_t>(exact);
      assigned += quota[key];
      remainders.push_back({exact - std::floor(exact), key});
    }
    std::sort(remainders.begin(), remainders.end(), [](auto& a, auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (std::size_t r = 0; assigned < n_queries && r < remainders.size();
         ++r, ++assigned) {
      quota[remainders[r].second] += 1;
    }
    for (auto& [key, members] : groups) {
      for (std::size_t i = 0; i + 1 < members.size(); ++i) {
        const std::size_t j = i + rng.uniform_index(members.size() - i);
        std::swap(members[i], members[j]);
      }
      const std::size_t take = std::min(quota[key], members.size());
      query_idx.insert(query_idx.end(), members.begin(),
                       members.begin() + take);
    }
  }

  std::vector<bool> is_query(n, false);
  for (std::size_t i : query_idx) is_query[i] = true;
  std::vector<std::size_t> db_idx;
  db_idx.reserve(n - query_idx.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_query[i]) db_idx.push_back(i);
  }
  std::sort(query_idx.begin(), query_idx.end());

  SplitResult result;
  result.database = subset(dataset, db_idx);
  result.queries = subset(dataset, query_idx);

  std::set<std::uint32_t> all_labels;
  std::set<std::uint32_t> db_labels;
  for (const auto& ls : dataset.labels) all_labels.insert(ls.begin(), ls.end());
  for (const auto& ls : result.database.labels) {
    db_labels.insert(ls.begin(), ls.end());
  }
  result.class_missing_warning = db_labels != all_labels;
  return result;
}

void save_fvecs(const std::vector<Vec>& vectors, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_fvecs: cannot open " + path);
  for (const Vec& v : vectors) {
    io::write_i32(os, static_cast<std::int32_t>(v.size()));
    for (double x : v) io::write_f32(os, static_cast<float>(x));
  }
  if (!os) throw std::runtime_error("save_fvecs: write failed for " + path);
}

std::vector<Vec> load_fvecs(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_fvecs: cannot open " + path);
  const std::string what = "load_fvecs(" + path + ")";
  std::vector<Vec> vectors;
  int dim = -1;
  while (true) {
    is.peek();
    if (is.eof()) break;
    const std::int32_t d =
        io::read_i32(is, what + " record " + std::to_string(vectors.size()));
    if (d < 1 || d > (1 << 24)) {
      throw std::runtime_error(what + ": bad dimension header " +
                               std::to_string(d) + " at record " +
                               std::to_string(vectors.size()));
    }
    if (dim == -1) {
      dim = d;
    } else if (d != dim) {
      throw std::runtime_error(what + ": record " +
                               std::to_string(vectors.size()) +
                               " has dimension " + std::to_string(d) +
                               ", expected " + std::to_string(dim));
    }
    Vec v(d);
    for (double& x : v) {
      x = io::read_f32(is, what + " record " + std::to_string(vectors.size()));
    }
    vectors.push_back(std::move(v));
  }
  return vectors;
}

void save_labels_single(const std::vector<std::vector<std::uint32_t>>& labels,
                        const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_labels_single: cannot open " + path);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].size() != 1) {
      throw std::invalid_argument(
          "save_labels_single: record " + std::to_string(i) + " has " +
          std::to_string(labels[i].size()) + " labels, expected exactly 1");
    }
    io::write_u32(os, labels[i][0]);
  }
}

std::vector<std::vector<std::uint32_t>> load_labels_single(
    const std::string& path, std::size_t n) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_labels_single: cannot open " + path);
  const std::string what = "load_labels_single(" + path + ")";
  std::vector<std::vector<std::uint32_t>> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = {io::read_u32(is, what + " record " + std::to_string(i))};
  }
  is.peek();
  if (!is.eof()) {
    throw std::runtime_error(what + ": trailing bytes after " +
                             std::to_string(n) + " records");
  }
  return labels;
}

void save_labels_multi(const std::vector<std::vector<std::uint32_t>>& labels,
                       const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_labels_multi: cannot open " + path);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].size() > 255) {
      throw std::invalid_argument("save_labels_multi: record " +
                                  std::to_string(i) + " exceeds 255 labels");
    }
    io::write_u8(os, static_cast<std::uint8_t>(labels[i].size()));
    for (std::uint32_t label : labels[i]) io::write_u32(os, label);
  }
}

std::vector<std::vector<std::uint32_t>> load_labels_multi(
    const std::string& path, std::size_t n) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_labels_multi: cannot open " + path);
  const std::string what = "load_labels_multi(" + path + ")";
  std::vector<std::vector<std::uint32_t>> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t count =
        io::read_u8(is, what + " record " + std::to_string(i));
    labels[i].resize(count);
    for (std::uint32_t& label : labels[i]) {
      label = io::read_u32(is, what + " record " + std::to_string(i));
    }
  }
  is.peek();
  if (!is.eof()) {
    throw std::runtime_error(what + ": trailing bytes after " +
                             std::to_string(n) + " records");
  }
  return labels;
}

namespace {

void save_csv(const LabeledDataset& dataset, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_vectors: cannot open " + path);
  os << "id,label";
  for (int d = 0; d < dataset.dim; ++d) os << ",v" << d;
  os << "\n";
  char buf[48];
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset.labels[i].size() != 1) {
      throw std::invalid_argument(
          "save_vectors: CSV carries exactly one label per record, record " +
          std::to_string(i) + " has " + std::to_string(dataset.labels[i].size()));
    }
    os << dataset.ids[i] << ',' << dataset.labels[i][0];
    for (double v : dataset.vectors[i]) {
      // %.9g round-trips a 32-bit float exactly.
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(
                        static_cast<float>(v)));
      os << ',' << buf;
    }
    os << "\n";
  }
}

LabeledDataset load_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_vectors: cannot open " + path);
  const std::string what = "load_vectors(" + path + ")";

  std::string line;
  if (!std::getline(is, line)) {
    throw std::runtime_error(what + ": empty file, header expected");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 3 || header[0] != "id" || header[1] != "label") {
    throw std::runtime_error(what + ": header must start with id,label");
  }
  const int dim = static_cast<int>(header.size()) - 2;
  for (int d = 0; d < dim; ++d) {
    if (header[d + 2] != "v" + std::to_string(d)) {
      throw std::runtime_error(what + ": header column " +
                               std::to_string(d + 2) + " is '" +
                               header[d + 2] + "', expected 'v" +
                               std::to_string(d) + "'");
    }
  }

  LabeledDataset out;
  out.dim = dim;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != header.size()) {
      throw std::runtime_error(what + ": line " + std::to_string(line_no) +
                               " has " + std::to_string(cells.size()) +
                               " cells, expected " +
                               std::to_string(header.size()));
    }
    try {
      std::size_t pos = 0;
      out.ids.push_back(static_cast<std::uint32_t>(std::stoul(cells[0], &pos)));
      if (pos != cells[0].size()) throw std::invalid_argument(cells[0]);
      out.labels.push_back(
          {static_cast<std::uint32_t>(std::stoul(cells[1], &pos))});
      if (pos != cells[1].size()) throw std::invalid_argument(cells[1]);
      Vec v(dim);
      for (int d = 0; d < dim; ++d) {
        v[d] = std::stod(cells[d + 2], &pos);
        if (pos != cells[d + 2].size()) throw std::invalid_argument(cells[d + 2]);
      }
      out.vectors.push_back(std::move(v));
    } catch (const std::exception&) {
      throw std::runtime_error(what + ": non-numeric cell on line " +
                               std::to_string(line_no));
    }
  }
  return out;
}

}  // namespace

void save_vectors(const LabeledDataset& dataset, const std::string& path,
                  VectorFormat format) {
  if (dataset.vectors.size() != dataset.labels.size() ||
      dataset.vectors.size() != dataset.ids.size()) {
    throw std::invalid_argument("save_vectors: ragged dataset arrays");
  }
  if (format == VectorFormat::kCsv) {
    save_csv(dataset, path);
    return;
  }
  save_fvecs(dataset.vectors, path);
  const bool single = std::all_of(
      dataset.labels.begin(), dataset.labels.end(),
      [](const std::vector<std::uint32_t>& ls) { return ls.size() == 1; });
  if (single) {
    save_labels_single(dataset.labels, labels_sidecar(path));
  } else {
    save_labels_multi(dataset.labels, multilabels_sidecar(path));
  }
}

LabeledDataset load_vectors(const std::string& path, VectorFormat format) {
  if (format == VectorFormat::kCsv) return load_csv(path);

  LabeledDataset out;
  out.vectors = load_fvecs(path);
  out.dim = out.vectors.empty() ? 0 : static_cast<int>(out.vectors[0].size());
  out.ids.resize(out.vectors.size());
  for (std::size_t i = 0; i < out.ids.size(); ++i) {
    out.ids[i] = static_cast<std::uint32_t>(i);
  }
  namespace fs = std::filesystem;
  if (fs::exists(labels_sidecar(path))) {
    out.labels = load_labels_single(labels_sidecar(path), out.vectors.size());
  } else if (fs::exists(multilabels_sidecar(path))) {
    out.labels = load_labels_multi(multilabels_sidecar(path),
                                   out.vectors.size());
  } else {
    out.labels.assign(out.vectors.size(), {});
  }
  return out;
}

}  // namespace pqlab
