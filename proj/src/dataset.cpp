#include "emasketch/dataset.hpp"

#include "emasketch/idx.hpp"
#include "emasketch/random.hpp"

#include <cmath>
#include <string>

namespace emasketch {

namespace {

std::filesystem::path find_idx(const std::filesystem::path& dir, const std::string& stem) {
  for (const std::string& candidate : {stem, stem + ".gz"}) {
    const auto p = dir / candidate;
    if (std::filesystem::exists(p)) return p;
  }
  throw DataError("MNIST file '" + stem + "' not found in " + dir.string() +
                  ". Place the four IDX files (optionally .gz) there, e.g. by running "
                  "tools/make_mnist_subset.py or copying the original MNIST distribution.");
}

Dataset load_pair(const std::filesystem::path& dir, const std::string& images,
                  const std::string& labels, Index limit) {
  const IdxTensor img = load_idx_file(find_idx(dir, images));
  const IdxTensor lab = load_idx_file(find_idx(dir, labels));
  if (img.dims.size() != 3) throw DataError(images + ": expected a rank-3 image tensor");
  if (lab.dims.size() != 1) throw DataError(labels + ": expected a rank-1 label tensor");
  if (img.dims[0] != lab.dims[0]) throw DataError("MNIST image/label counts differ");

  Index n = static_cast<Index>(img.dims[0]);
  if (limit > 0 && limit < n) n = limit;
  const Index features = static_cast<Index>(img.dims[1]) * static_cast<Index>(img.dims[2]);

  Dataset ds;
  ds.classes = 10;
  ds.X.resize(n, features);
  ds.labels.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const std::uint8_t y = lab.values[static_cast<std::size_t>(i)];
    if (y > 9) throw DataError(labels + ": label " + std::to_string(y) + " outside 0..9");
    ds.labels[static_cast<std::size_t>(i)] = y;
    const std::size_t base = static_cast<std::size_t>(i * features);
    for (Index j = 0; j < features; ++j)
      ds.X(i, j) = img.values[base + static_cast<std::size_t>(j)] / 255.0;
  }
  return ds;
}

Matrix lowrank_inputs(GaussianStream& rng, Index n, Index d0, Index latent_rank) {
  if (latent_rank < 1 || latent_rank > d0)
    throw ConfigError("synthetic: latent_rank must lie in [1, d0]");
  const Matrix latent = rng.normal_matrix(n, latent_rank);
  const Matrix mixing =
      rng.normal_matrix(latent_rank, d0) / std::sqrt(static_cast<double>(latent_rank));
  return latent * mixing;
}

}  // namespace

DataSplit load_mnist(const std::filesystem::path& dir, Index train_limit, Index test_limit) {
  if (!std::filesystem::is_directory(dir))
    throw DataError("MNIST directory " + dir.string() +
                    " does not exist. No download is attempted; supply the IDX files "
                    "(see README, 'Data').");
  DataSplit split;
  split.train = load_pair(dir, "train-images-idx3-ubyte", "train-labels-idx1-ubyte", train_limit);
  split.test = load_pair(dir, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", test_limit);
  return split;
}

Dataset make_synthetic_lowrank(Index n, Index d0, Index classes, Index latent_rank,
                               std::uint64_t seed) {
  if (n < 1 || classes < 2) throw ConfigError("synthetic: need n >= 1 and classes >= 2");
  GaussianStream rng(seed);
  Dataset ds;
  ds.X = lowrank_inputs(rng, n, d0, latent_rank);
  const Matrix teacher = rng.normal_matrix(d0, classes);
  const Matrix scores = ds.X * teacher;
  ds.classes = classes;
  ds.labels.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    Index best = 0;
    scores.row(i).maxCoeff(&best);
    ds.labels[static_cast<std::size_t>(i)] = best;
  }
  return ds;
}

Dataset make_synthetic_regression(Index n, Index d0, Index out_dim, Index latent_rank,
                                  std::uint64_t seed) {
  if (n < 1 || out_dim < 1) throw ConfigError("synthetic: need n >= 1 and out_dim >= 1");
  GaussianStream rng(seed);
  Dataset ds;
  ds.X = lowrank_inputs(rng, n, d0, latent_rank);
  const Matrix teacher = rng.normal_matrix(d0, out_dim) / std::sqrt(static_cast<double>(d0));
  ds.targets = (ds.X * teacher).array().tanh().matrix();
  return ds;
}

Dataset slice_rows(const Dataset& ds, Index begin, Index end) {
  Dataset out;
  out.classes = ds.classes;
  out.X = ds.X.middleRows(begin, end - begin);
  if (!ds.labels.empty())
    out.labels.assign(ds.labels.begin() + begin, ds.labels.begin() + end);
  if (ds.targets.size() > 0) out.targets = ds.targets.middleRows(begin, end - begin);
  return out;
}

}  // namespace emasketch
