#include "pqlab/pq.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "pqlab/io_util.hpp"
#include "pqlab/parallel.hpp"

namespace pqlab {

namespace {

constexpr std::uint16_t kCodebookVersion = 1;
constexpr std::uint16_t kIndexVersion = 1;

void check_codebook_valid(const Codebook& cb, const char* op) {
  if (cb.m < 1 || cb.k < 1 || cb.sub_dim < 1) {
    throw std::invalid_argument(std::string(op) + ": empty codebook");
  }
  if (cb.k > 65536) {
    throw std::invalid_argument(std::string(op) + ": K exceeds 65536");
  }
  if (cb.centroids.size() != static_cast<std::size_t>(cb.m) * cb.k) {
    throw std::invalid_argument(std::string(op) + ": centroid count mismatch");
  }
}

void check_code_valid(const PqCode& code, const Codebook& cb, const char* op) {
  if (code.size() != static_cast<std::size_t>(cb.m)) {
    throw std::invalid_argument(std::string(op) + ": code length " +
                                std::to_string(code.size()) +
                                " does not match M=" + std::to_string(cb.m));
  }
  for (std::uint16_t idx : code) {
    if (idx >= cb.k) {
      throw std::invalid_argument(std::string(op) + ": sub-index " +
                                  std::to_string(idx) + " out of range K=" +
                                  std::to_string(cb.k));
    }
  }
}

void check_query_dim(const Vec& v, const Codebook& cb, const char* op) {
  if (static_cast<int>(v.size()) != cb.dim()) {
    throw std::invalid_argument(std::string(op) + ": vector dim " +
                                std::to_string(v.size()) +
                                " does not match codebook dim " +
                                std::to_string(cb.dim()));
  }
}

double sub_squared_distance(const Vec& v, std::size_t offset, const Vec& c) {
  double acc = 0.0;
  for (std::size_t d = 0; d < c.size(); ++d) {
    const double diff = v[offset + d] - c[d];
    acc += diff * diff;
  }
  return acc;
}

// Reconstruction-based distance used when the index carries a coarse
// quantizer (codes are residuals, so plain lookup tables do not apply).
Vec reconstruct_record(const PqIndex& index, std::size_t i) {
  Vec rec = decode(index.codes[i], index.codebook);
  if (index.coarse) {
    const Vec& cc = index.coarse->centroids[index.coarse_ids[i]];
    for (std::size_t d = 0; d < rec.size(); ++d) rec[d] += cc[d];
  }
  return rec;
}

}  // namespace

std::uint64_t subspace_seed(std::uint64_t seed, int subspace) {
  return mix64(seed ^ mix64(static_cast<std::uint64_t>(subspace) + 1));
}

CodebookTraining train_codebooks(const std::vector<Vec>& vectors, int m, int k,
                                 const KMeansConfig& config) {
  if (vectors.empty()) {
    throw std::invalid_argument("train_codebooks: no vectors");
  }
  const int dim = static_cast<int>(vectors[0].size());
  if (m < 1 || dim % m != 0) {
    throw std::invalid_argument("train_codebooks: dim " + std::to_string(dim) +
                                " not divisible by m=" + std::to_string(m));
  }
  const int sub_dim = dim / m;

  CodebookTraining out;
  out.codebook.m = m;
  out.codebook.k = k;
  out.codebook.sub_dim = sub_dim;
  out.codebook.centroids.resize(static_cast<std::size_t>(m) * k);
  out.subspace_inertia.resize(m);

  for (int mi = 0; mi < m; ++mi) {
    std::vector<Vec> slice(vectors.size(), Vec(sub_dim));
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      if (static_cast<int>(vectors[i].size()) != dim) {
        throw std::invalid_argument("train_codebooks: inconsistent dims");
      }
      for (int d = 0; d < sub_dim; ++d) {
        slice[i][d] = vectors[i][static_cast<std::size_t>(mi) * sub_dim + d];
      }
    }
    KMeansConfig sub_cfg = config;
    sub_cfg.k = k;
    sub_cfg.seed = subspace_seed(config.seed, mi);
    KMeansResult res = train_kmeans(slice, sub_cfg);
    out.subspace_inertia[mi] = res.inertia;
    for (int ki = 0; ki < k; ++ki) {
      out.codebook.centroid(mi, ki) = l2_normalize(res.centroids[ki]);
    }
  }
  return out;
}

PqCode encode(const Vec& vector, const Codebook& codebook) {
  check_codebook_valid(codebook, "encode");
  check_query_dim(vector, codebook, "encode");
  PqCode code(codebook.m);
  for (int mi = 0; mi < codebook.m; ++mi) {
    const std::size_t off = static_cast<std::size_t>(mi) * codebook.sub_dim;
    int best = 0;
    double best_d2 = sub_squared_distance(vector, off, codebook.centroid(mi, 0));
    for (int ki = 1; ki < codebook.k; ++ki) {
      const double d2 =
          sub_squared_distance(vector, off, codebook.centroid(mi, ki));
      if (d2 < best_d2) {
        best_d2 = d2;
        best = ki;
      }
    }
    code[mi] = static_cast<std::uint16_t>(best);
  }
  return code;
}

Vec decode(const PqCode& code, const Codebook& codebook) {
  check_codebook_valid(codebook, "decode");
  check_code_valid(code, codebook, "decode");
  Vec out(codebook.dim());
  for (int mi = 0; mi < codebook.m; ++mi) {
    const Vec& c = codebook.centroid(mi, code[mi]);
    std::copy(c.begin(), c.end(),
              out.begin() + static_cast<std::size_t>(mi) * codebook.sub_dim);
  }
  return out;
}

AdcTable build_adc_table(const Vec& query, const Codebook& codebook) {
  check_codebook_valid(codebook, "build_adc_table");
  check_query_dim(query, codebook, "build_adc_table");
  AdcTable table;
  table.m = codebook.m;
  table.k = codebook.k;
  table.entries.resize(static_cast<std::size_t>(codebook.m) * codebook.k);
  for (int mi = 0; mi < codebook.m; ++mi) {
    const std::size_t off = static_cast<std::size_t>(mi) * codebook.sub_dim;
    for (int ki = 0; ki < codebook.k; ++ki) {
      table.entries[static_cast<std::size_t>(mi) * codebook.k + ki] =
          sub_squared_distance(query, off, codebook.centroid(mi, ki));
    }
  }
  return table;
}

double adc_distance(const PqCode& code, const AdcTable& table) {
  if (code.size() != static_cast<std::size_t>(table.m)) {
    throw std::invalid_argument("adc_distance: code length mismatch");
  }
  double acc = 0.0;
  for (int mi = 0; mi < table.m; ++mi) {
    acc += table.at(mi, code[mi]);
  }
  return std::sqrt(acc);
}

SdcTable build_sdc_table(const Codebook& codebook) {
  check_codebook_valid(codebook, "build_sdc_table");
  SdcTable table;
  table.m = codebook.m;
  table.k = codebook.k;
  table.entries.resize(static_cast<std::size_t>(codebook.m) * codebook.k *
                       codebook.k);
  for (int mi = 0; mi < codebook.m; ++mi) {
    for (int i = 0; i < codebook.k; ++i) {
      for (int j = 0; j < codebook.k; ++j) {
        table.entries[(static_cast<std::size_t>(mi) * codebook.k + i) *
                          codebook.k +
                      j] =
            squared_euclidean(codebook.centroid(mi, i),
                              codebook.centroid(mi, j));
      }
    }
  }
  return table;
}

double sdc_distance(const PqCode& a, const PqCode& b, const SdcTable& table) {
  if (a.size() != static_cast<std::size_t>(table.m) || a.size() != b.size()) {
    throw std::invalid_argument("sdc_distance: code length mismatch");
  }
  double acc = 0.0;
  for (int mi = 0; mi < table.m; ++mi) {
    acc += table.at(mi, a[mi], b[mi]);
  }
  return std::sqrt(acc);
}

std::vector<SearchHit> search(const Vec& query, const PqIndex& index,
                              std::size_t top_n, DistanceMode mode,
                              int threads) {
  if (top_n < 1) {
    throw std::invalid_argument("search: top_n must be >= 1");
  }
  const std::size_t n = index.size();
  if (n == 0) return {};
  check_query_dim(query, index.codebook, "search");

  // Squared distances for ranking; true distances reported.
  std::vector<double> d2(n);
  if (!index.coarse) {
    if (mode == DistanceMode::kAdc) {
      const AdcTable table = build_adc_table(query, index.codebook);
      parallel_for(n, threads, [&](std::size_t i) {
        double acc = 0.0;
        const PqCode& code = index.codes[i];
        for (int mi = 0; mi < table.m; ++mi) acc += table.at(mi, code[mi]);
        d2[i] = acc;
      });
    } else {
      const SdcTable table = build_sdc_table(index.codebook);
      const PqCode qcode = encode(query, index.codebook);
      parallel_for(n, threads, [&](std::size_t i) {
        double acc = 0.0;
        const PqCode& code = index.codes[i];
        for (int mi = 0; mi < table.m; ++mi)
          acc += table.at(mi, qcode[mi], code[mi]);
        d2[i] = acc;
      });
    }
  } else {
    // Residual codes: distances against explicit reconstructions.
    Vec query_side = query;
    if (mode == DistanceMode::kSdc) {
      const auto [ci, code] = encode_residual(query, *index.coarse,
                                              index.codebook);
      query_side = decode(code, index.codebook);
      const Vec& cc = index.coarse->centroids[ci];
      for (std::size_t d = 0; d < query_side.size(); ++d)
        query_side[d] += cc[d];
    }
    parallel_for(n, threads, [&](std::size_t i) {
      d2[i] = squared_euclidean(query_side, reconstruct_record(index, i));
    });
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (d2[a] != d2[b]) return d2[a] < d2[b];
    return index.ids[a] < index.ids[b];
  });

  const std::size_t count = std::min(top_n, n);
  std::vector<SearchHit> hits(count);
  for (std::size_t r = 0; r < count; ++r) {
    hits[r] = {index.ids[order[r]], std::sqrt(d2[order[r]])};
  }
  return hits;
}

std::pair<int, PqCode> encode_residual(const Vec& vector,
                                       const CoarseQuantizer& coarse,
                                       const Codebook& codebook) {
  if (coarse.centroids.empty()) {
    throw std::invalid_argument("encode_residual: empty coarse quantizer");
  }
  check_query_dim(vector, codebook, "encode_residual");
  if (coarse.centroids[0].size() != vector.size()) {
    throw std::invalid_argument("encode_residual: coarse dim mismatch");
  }
  const int ci = nearest_centroid(vector, coarse.centroids);
  Vec residual(vector.size());
  const Vec& cc = coarse.centroids[ci];
  for (std::size_t d = 0; d < vector.size(); ++d) {
    residual[d] = vector[d] - cc[d];
  }
  return {ci, encode(residual, codebook)};
}

StorageStats storage_stats(const Codebook& codebook) {
  StorageStats stats;
  const std::size_t floats = static_cast<std::size_t>(codebook.m) *
                             codebook.k * codebook.sub_dim;
  stats.memory_floats = floats;
  stats.assign_ops = floats;
  return stats;
}

PqIndex build_index(const std::vector<Vec>& vectors,
                    const std::vector<std::uint32_t>& ids,
                    const Codebook& codebook,
                    const std::optional<std::vector<std::uint32_t>>& labels,
                    int threads) {
  if (vectors.size() != ids.size()) {
    throw std::invalid_argument("build_index: vectors/ids length mismatch");
  }
  if (labels && labels->size() != vectors.size()) {
    throw std::invalid_argument("build_index: labels length mismatch");
  }
  PqIndex index;
  index.codebook = codebook;
  index.ids = ids;
  index.labels = labels;
  index.codes.resize(vectors.size());
  parallel_for(vectors.size(), threads, [&](std::size_t i) {
    index.codes[i] = encode(vectors[i], codebook);
  });
  return index;
}

void save_codebook(const Codebook& codebook, const std::string& path) {
  check_codebook_valid(codebook, "save_codebook");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_codebook: cannot open " + path);
  io::write_magic(os, "PQCB");
  io::write_u16(os, kCodebookVersion);
  io::write_u32(os, static_cast<std::uint32_t>(codebook.dim()));
  io::write_u32(os, static_cast<std::uint32_t>(codebook.m));
  io::write_u32(os, static_cast<std::uint32_t>(codebook.k));
  for (const Vec& c : codebook.centroids) {
    for (double v : c) io::write_f32(os, static_cast<float>(v));
  }
  if (!os) throw std::runtime_error("save_codebook: write failed for " + path);
}

namespace {

Codebook read_codebook_body(std::istream& is, const std::string& what) {
  io::expect_magic(is, "PQCB", what);
  const std::uint16_t version = io::read_u16(is, what);
  if (version != kCodebookVersion) {
    throw std::runtime_error(what + ": unsupported version " +
                             std::to_string(version));
  }
  const std::uint32_t dim = io::read_u32(is, what);
  const std::uint32_t m = io::read_u32(is, what);
  const std::uint32_t k = io::read_u32(is, what);
  if (m == 0 || k == 0 || dim == 0 || dim % m != 0) {
    throw std::runtime_error(what + ": inconsistent dims (D=" +
                             std::to_string(dim) + ", M=" + std::to_string(m) +
                             ", K=" + std::to_string(k) + ")");
  }
  if (k > 65536) {
    throw std::runtime_error(what + ": K exceeds 65536");
  }
  Codebook cb;
  cb.m = static_cast<int>(m);
  cb.k = static_cast<int>(k);
  cb.sub_dim = static_cast<int>(dim / m);
  cb.centroids.assign(static_cast<std::size_t>(m) * k, Vec(cb.sub_dim));
  for (Vec& c : cb.centroids) {
    for (double& v : c) v = io::read_f32(is, what);
  }
  return cb;
}

}  // namespace

Codebook load_codebook(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_codebook: cannot open " + path);
  return read_codebook_body(is, "load_codebook(" + path + ")");
}

void save_index(const PqIndex& index, const std::string& path) {
  check_codebook_valid(index.codebook, "save_index");
  if (index.coarse) {
    throw std::runtime_error(
        "save_index: index file format carries no coarse quantizer block");
  }
  if (index.ids.size() != index.codes.size()) {
    throw std::runtime_error("save_index: ids/codes length mismatch");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_index: cannot open " + path);
  io::write_magic(os, "PQIX");
  io::write_u16(os, kIndexVersion);
  io::write_u32(os, static_cast<std::uint32_t>(index.codes.size()));
  const std::uint8_t code_width = index.codebook.k <= 256 ? 1 : 2;
  io::write_u8(os, code_width);

  io::write_magic(os, "PQCB");
  io::write_u16(os, kCodebookVersion);
  io::write_u32(os, static_cast<std::uint32_t>(index.codebook.dim()));
  io::write_u32(os, static_cast<std::uint32_t>(index.codebook.m));
  io::write_u32(os, static_cast<std::uint32_t>(index.codebook.k));
  for (const Vec& c : index.codebook.centroids) {
    for (double v : c) io::write_f32(os, static_cast<float>(v));
  }

  for (const PqCode& code : index.codes) {
    check_code_valid(code, index.codebook, "save_index");
    for (std::uint16_t idx : code) {
      if (code_width == 1) {
        io::write_u8(os, static_cast<std::uint8_t>(idx));
      } else {
        io::write_u16(os, idx);
      }
    }
  }
  for (std::uint32_t id : index.ids) io::write_u32(os, id);
  io::write_u8(os, index.labels ? 1 : 0);
  if (index.labels) {
    if (index.labels->size() != index.codes.size()) {
      throw std::runtime_error("save_index: labels length mismatch");
    }
    for (std::uint32_t label : *index.labels) io::write_u32(os, label);
  }
  if (!os) throw std::runtime_error("save_index: write failed for " + path);
}

PqIndex load_index(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_index: cannot open " + path);
  const std::string what = "load_index(" + path + ")";
  io::expect_magic(is, "PQIX", what);
  const std::uint16_t version = io::read_u16(is, what);
  if (version != kIndexVersion) {
    throw std::runtime_error(what + ": unsupported version " +
                             std::to_string(version));
  }
  const std::uint32_t n = io::read_u32(is, what);
  const std::uint8_t code_width = io::read_u8(is, what);
  if (code_width != 1 && code_width != 2) {
    throw std::runtime_error(what + ": invalid code width " +
                             std::to_string(code_width));
  }

  PqIndex index;
  index.codebook = read_codebook_body(is, what);
  if (code_width == 1 && index.codebook.k > 256) {
    throw std::runtime_error(what + ": code width 1 cannot address K=" +
                             std::to_string(index.codebook.k));
  }
  index.codes.assign(n, PqCode(index.codebook.m));
  for (PqCode& code : index.codes) {
    for (std::uint16_t& idx : code) {
      idx = code_width == 1 ? io::read_u8(is, what) : io::read_u16(is, what);
      if (idx >= index.codebook.k) {
        throw std::runtime_error(what + ": code index out of range");
      }
    }
  }
  index.ids.resize(n);
  for (std::uint32_t& id : index.ids) id = io::read_u32(is, what);
  const std::uint8_t label_flag = io::read_u8(is, what);
  if (label_flag == 1) {
    std::vector<std::uint32_t> labels(n);
    for (std::uint32_t& label : labels) label = io::read_u32(is, what);
    index.labels = std::move(labels);
  } else if (label_flag != 0) {
    throw std::runtime_error(what + ": invalid label flag " +
                             std::to_string(label_flag));
  }
  return index;
}

}  // namespace pqlab
