// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "resnext/data.hpp"
#include "resnext/network.hpp"

namespace resnext {

struct Milestone {
  std::size_t epoch = 0;
  double divisor = 10.0;
};

struct DatasetConfig {
  std::string kind = "synthetic";  // "cifar10" | "synthetic"
  /// cifar10: directory holding data_batch_{1..5}.bin and test_batch.bin.
  std::string path;
  std::size_t train_limit = 0;  // 0 = everything
  std::size_t test_limit = 0;
  SyntheticSpec synthetic;
};

struct ArchConfig {
  /// cifar29 | resnet50 | resnext50 | resnet101 | resnext101
  std::string family = "cifar29";
  std::size_t cardinality = 8;
  std::size_t width = 64;
  std::size_t width_divisor = 1;  // cifar29 only
  std::size_t classes = 10;
  BlockForm form = BlockForm::GroupedConv;
};

/// Training recipe. Defaults are the full CIFAR schedule (300 epochs,
/// lr 0.1 divided by 10 at epochs 150 and 225, batch 128, weight decay
/// 5e-4, momentum 0.9).
struct TrainConfig {
  double base_lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<Milestone> schedule{{150, 10.0}, {225, 10.0}};
  std::size_t batch_size = 128;
  std::size_t epochs = 300;
  std::uint64_t seed = 0;
  bool augmentation = true;
  DatasetConfig dataset;
  ArchConfig arch;
  bool shortcuts = true;
  DType dtype = DType::F32;
  std::string output_dir = "run";
  /// When false the seconds column is written as 0 so runs compare byte-for-byte.
  bool timing = true;

  void validate() const;
};

/// Parses the JSON config; unknown keys and bad values raise InvalidSpecError.
/// ImageNet families have no default schedule and must list their milestones.
TrainConfig parse_train_config(std::string_view json_text);
TrainConfig load_train_config(const std::filesystem::path& path);
std::string train_config_json(const TrainConfig& config);

/// base_lr divided by every milestone divisor whose epoch has been reached.
double lr_at(std::size_t epoch, const TrainConfig& config);

ArchSpec make_arch(const ArchConfig& config);

struct MetricsRow {
  std::size_t epoch = 0;
  double train_loss = 0;
  double train_top1 = 0;  // percent
  double test_top1 = 0;   // percent
  double lr = 0;
  double seconds = 0;
};

inline constexpr std::string_view kMetricsHeader = "epoch,train_loss,train_top1,test_top1,lr,seconds";
std::string format_metrics_row(const MetricsRow& row);

template <typename T>
struct Splits {
  Dataset<T> train;
  Dataset<T> test;
};

/// Loads the configured dataset; CIFAR standardization constants come from
/// the loaded training split.
template <typename T>
Splits<T> load_splits(const DatasetConfig& config);

struct TrainOutcome {
  std::vector<MetricsRow> rows;
  double initial_loss = 0;  // loss of the first mini-batch, before any update
  bool aborted = false;
  std::string abort_reason;
  std::filesystem::path metrics_path;
  std::filesystem::path final_checkpoint;
  std::optional<std::filesystem::path> best_checkpoint;
};

/// Runs the whole recipe, writing metrics.csv and final/best checkpoints
/// (named-tensor file plus JSON sidecar) into config.output_dir.
TrainOutcome train_loop(const TrainConfig& config);

template <typename T>
TrainOutcome train_on(const TrainConfig& config, const Splits<T>& data);

struct EvalResult {
  double loss = 0;
  double top1_error = 0;  // percent
};

template <typename T>
EvalResult evaluate(Network<T>& net, const Dataset<T>& data, std::size_t batch_size = 256);

/// Loads "<stem>.ntc" with its "<stem>.json" sidecar and evaluates it on the
/// test split of `dataset` (or of the dataset recorded in the sidecar), in
/// `dtype` (or the recorded one).
EvalResult evaluate_checkpoint(const std::filesystem::path& checkpoint, const std::optional<DatasetConfig>& dataset,
                               std::optional<DType> dtype = std::nullopt);

/// Sidecar path for a checkpoint file.
std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint);

}  // namespace resnext
