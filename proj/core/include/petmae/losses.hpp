#ifndef PETMAE_LOSSES_HPP
#define PETMAE_LOSSES_HPP

#include <cstdint>
#include <vector>

#include "petmae/tensor.hpp"

namespace petmae {

/// Weighted global reconstruction loss: the masked mean squared error plus
/// lambda times the visible mean squared error, each normalized by its own
/// voxel count (plus epsilon).
struct LossBreakdown {
  double masked_term = 0.0;
  double visible_term = 0.0;
  double total = 0.0;
  double lambda = 0.2;
  double epsilon = 1e-8;
  TensorPtr node; // scalar graph node carrying the total
};

/// x_rec is a graph node; x and voxel_mask are constants of the same size.
/// A term whose denominator sum is exactly zero is defined as zero
/// (its numerator vanishes with it), which lets epsilon = 0 reproduce
/// exact hand-computed values.
LossBreakdown recon_loss(const TensorPtr& x_rec, const std::vector<double>& x,
                         const std::vector<std::uint8_t>& voxel_mask,
                         double lambda = 0.2, double epsilon = 1e-8);

/// Soft Dice (foreground channel, per-sample, smoothing 1e-5) plus
/// voxel-mean cross-entropy over two-class logits [B, 2, Z, Y, X].
/// labels hold one value in {0,1} per voxel, length B*Z*Y*X.
TensorPtr dice_ce_loss(const TensorPtr& logits,
                       const std::vector<std::uint8_t>& labels);

} // namespace petmae

#endif
