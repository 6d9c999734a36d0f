#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hgdc/model.hpp"

namespace hgdc {

/// Checkpoint container, format 1. Little-endian throughout:
///   magic "HGDCFUSE", u32 format_version, u64 config_hash,
///   i32 embed_dim/heads/encoder_hidden/gcn_hidden/n_labels/ehr_features/
///       cxr_features, u8 variant, f64 delta/tau/window_hours,
///   u32 array count, then per array: u32 name length, name bytes,
///   u32 ndim, i32 dims[], f64 payload.
/// The frozen correlation adjacency ships as the array "corr/adjacency" so
/// evaluation never recomputes statistics from non-training data.
struct CheckpointMeta {
  std::uint32_t format_version = 1;
  std::uint64_t config_hash = 0;
  ModelDims dims;
  Variant variant = Variant::full;
  double delta = 0.6;
  double tau = 0.4;
  double window_hours = 48.0;
};

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const std::vector<double>& adjacency,
                     const CheckpointMeta& meta);

struct LoadedCheckpoint {
  ModelParams params;
  std::vector<double> adjacency;  // N x N
  CheckpointMeta meta;

  Tensor adjacency_tensor() const {
    const int n = params.dims.n_labels;
    return Tensor::from({n, n}, adjacency);
  }
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace hgdc
