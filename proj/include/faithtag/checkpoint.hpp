#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "faithtag/joint_model.hpp"
#include "faithtag/proxy_tagger.hpp"

namespace faithtag {

/// Layout: 8-byte magic "FTAGCKPT", u32 version, u64 header length, a JSON
/// header (kind, dims, vocabulary, tensor table, free-form config) and the
/// tensors as little-endian float64 in table order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename Scalar>
void save_joint_checkpoint(const std::filesystem::path& path, joint::JointModel<Scalar>& model,
                           const std::string& config_json = "{}");
template <typename Scalar>
joint::JointModel<Scalar> load_joint_checkpoint(const std::filesystem::path& path);

template <typename Scalar>
void save_proxy_checkpoint(const std::filesystem::path& path, proxy::ProxyModel<Scalar>& model,
                           const std::string& config_json = "{}");
template <typename Scalar>
proxy::ProxyModel<Scalar> load_proxy_checkpoint(const std::filesystem::path& path);

/// "joint" or "proxy"; throws CheckpointError for anything else.
std::string checkpoint_kind(const std::filesystem::path& path);

/// CSV with header `step,token_loss,tag_loss,joint_loss`.
void write_loss_curve(const std::filesystem::path& path, const std::vector<joint::LossRecord>& steps);

}  // namespace faithtag
