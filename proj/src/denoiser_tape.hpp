#pragma once

#include "ptedit/denoiser.hpp"

namespace ptedit {

template <typename S>
struct LnCache {
  Matrix<S> xhat;
  Eigen::Matrix<S, Eigen::Dynamic, 1> inv_std;
};

// Activations kept by forward() for backward().
template <typename S>
struct DenoiserT<S>::Tape {
  struct Block {
    LnCache<S> ln1;
    Matrix<S> a; // LN1([h; ctx]), N x E
    Matrix<S> q, k, v;
    std::vector<Matrix<S>> p; // attention weights per head, K x N
    Matrix<S> o;              // concatenated head outputs, K x E
    LnCache<S> ln2;
    Matrix<S> u;   // LN2(h1)
    Matrix<S> pre; // first FFN layer before GELU
    Matrix<S> f;   // GELU output
  };

  Matrix<S> x_t;
  Matrix<S> c6; // condition coords and flags, K x 6
  TokenIds prompt{};
  Matrix<S> time_feat;
  std::vector<Block> blocks;
  LnCache<S> lnf;
  Matrix<S> hf;
};

} // namespace ptedit
