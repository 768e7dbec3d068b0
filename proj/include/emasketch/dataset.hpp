#pragma once

#include "emasketch/common.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace emasketch {

struct Dataset {
  Matrix X;                   // n x d_0
  std::vector<Index> labels;  // classification targets (empty for regression)
  Matrix targets;             // regression targets (empty for classification)
  Index classes = 0;          // 0 for regression

  Index size() const { return X.rows(); }
  bool is_classification() const { return classes > 0; }
};

struct DataSplit {
  Dataset train;
  Dataset test;
};

/// Reads {train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz] from `dir`.
/// Pixels are scaled to [0, 1]. A limit of 0 keeps every sample.
DataSplit load_mnist(const std::filesystem::path& dir, Index train_limit = 0,
                     Index test_limit = 0);

/// Inputs = latent (n x latent_rank, standard normal) times a fixed Gaussian
/// mixing matrix scaled by 1/sqrt(latent_rank); labels = argmax of a random
/// linear teacher applied to the inputs.
Dataset make_synthetic_lowrank(Index n, Index d0, Index classes, Index latent_rank,
                               std::uint64_t seed);

/// Same inputs as make_synthetic_lowrank; targets = tanh(X T) for a Gaussian
/// teacher T (d0 x out_dim) scaled by 1/sqrt(d0).
Dataset make_synthetic_regression(Index n, Index d0, Index out_dim, Index latent_rank,
                                  std::uint64_t seed);

/// Rows [begin, end) of a dataset.
Dataset slice_rows(const Dataset& ds, Index begin, Index end);

}  // namespace emasketch
