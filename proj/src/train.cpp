// SPDX-License-Identifier: Apache-2.0
#include "resnext/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "resnext/layers.hpp"
#include "resnext/ntf.hpp"
#include "resnext/sgd.hpp"

namespace resnext {

using json = nlohmann::json;

namespace {

[[noreturn]] void bad_config(const std::string& what) { throw InvalidSpecError("train config: " + what); }

template <typename V>
V get_as(const json& j, const std::string& key) {
  try {
    return j.get<V>();
  } catch (const json::exception&) {
    bad_config("key '" + key + "' has the wrong type");
  }
}

std::size_t get_count(const json& j, const std::string& key) {
  if (!j.is_number_integer() || j.get<long long>() < 0) bad_config("key '" + key + "' must be a non-negative integer");
  return j.get<std::size_t>();
}

std::vector<Milestone> parse_schedule(const json& j) {
  if (!j.is_array()) bad_config("schedule must be an array");
  std::vector<Milestone> out;
  for (const auto& m : j) {
    Milestone ms;
    if (m.is_number_integer()) {
      ms.epoch = get_count(m, "schedule");
    } else if (m.is_array() && m.size() == 2) {
      ms.epoch = get_count(m[0], "schedule");
      ms.divisor = get_as<double>(m[1], "schedule");
    } else if (m.is_object()) {
      for (const auto& [k, v] : m.items()) {
        if (k == "epoch")
          ms.epoch = get_count(v, "schedule.epoch");
        else if (k == "divisor")
          ms.divisor = get_as<double>(v, "schedule.divisor");
        else
          bad_config("unknown key 'schedule." + k + "'");
      }
    } else {
      bad_config("schedule entries must be an epoch, [epoch, divisor] or {epoch, divisor}");
    }
    out.push_back(ms);
  }
  return out;
}

SyntheticSpec parse_synthetic(const json& j, SyntheticSpec s) {
  for (const auto& [k, v] : j.items()) {
    if (k == "classes") s.classes = get_count(v, k);
    else if (k == "train_size") s.train_size = get_count(v, k);
    else if (k == "test_size") s.test_size = get_count(v, k);
    else if (k == "channels") s.channels = get_count(v, k);
    else if (k == "image_size") s.image_size = get_count(v, k);
    else if (k == "noise") s.noise = get_as<double>(v, k);
    else if (k == "seed") s.seed = get_as<std::uint64_t>(v, k);
    else bad_config("unknown key 'dataset.synthetic." + k + "'");
  }
  return s;
}

DatasetConfig parse_dataset(const json& j) {
  if (!j.is_object()) bad_config("dataset must be an object");
  DatasetConfig d;
  for (const auto& [k, v] : j.items()) {
    if (k == "kind") d.kind = get_as<std::string>(v, k);
    else if (k == "path") d.path = get_as<std::string>(v, k);
    else if (k == "train_limit") d.train_limit = get_count(v, k);
    else if (k == "test_limit") d.test_limit = get_count(v, k);
    else if (k == "synthetic") d.synthetic = parse_synthetic(v, d.synthetic);
    else bad_config("unknown key 'dataset." + k + "'");
  }
  return d;
}

ArchConfig parse_arch(const json& j) {
  if (!j.is_object()) bad_config("arch must be an object");
  ArchConfig a;
  for (const auto& [k, v] : j.items()) {
    if (k == "family") a.family = get_as<std::string>(v, k);
    else if (k == "cardinality") a.cardinality = get_count(v, k);
    else if (k == "width") a.width = get_count(v, k);
    else if (k == "width_divisor") a.width_divisor = get_count(v, k);
    else if (k == "classes") a.classes = get_count(v, k);
    else if (k == "form") a.form = parse_form(get_as<std::string>(v, k));
    else bad_config("unknown key 'arch." + k + "'");
  }
  return a;
}

json to_json(const TrainConfig& c) {
  json sched = json::array();
  for (const auto& m : c.schedule) sched.push_back({m.epoch, m.divisor});
  const auto& s = c.dataset.synthetic;
  return json{
      {"base_lr", c.base_lr},
      {"momentum", c.momentum},
      {"weight_decay", c.weight_decay},
      {"schedule", sched},
      {"batch_size", c.batch_size},
      {"epochs", c.epochs},
      {"seed", c.seed},
      {"augmentation", c.augmentation},
      {"dataset",
       {{"kind", c.dataset.kind},
        {"path", c.dataset.path},
        {"train_limit", c.dataset.train_limit},
        {"test_limit", c.dataset.test_limit},
        {"synthetic",
         {{"classes", s.classes},
          {"train_size", s.train_size},
          {"test_size", s.test_size},
          {"channels", s.channels},
          {"image_size", s.image_size},
          {"noise", s.noise},
          {"seed", s.seed}}}}},
      {"arch",
       {{"family", c.arch.family},
        {"cardinality", c.arch.cardinality},
        {"width", c.arch.width},
        {"width_divisor", c.arch.width_divisor},
        {"classes", c.arch.classes},
        {"form", std::string(form_name(c.arch.form))}}},
      {"shortcuts", c.shortcuts},
      {"dtype", c.dtype == DType::F32 ? "f32" : "f64"},
      {"output_dir", c.output_dir},
      {"timing", c.timing},
  };
}

}  // namespace

void TrainConfig::validate() const {
  if (!(base_lr > 0)) bad_config("base_lr must be > 0");
  if (momentum < 0 || momentum > 1) bad_config("momentum must be in [0, 1]");
  if (weight_decay < 0) bad_config("weight_decay must be >= 0");
  if (batch_size == 0) bad_config("batch_size must be >= 1");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (!(schedule[i].divisor > 0)) bad_config("schedule divisors must be > 0");
    if (i > 0 && schedule[i].epoch <= schedule[i - 1].epoch) bad_config("schedule milestones must strictly increase");
  }
  if (dataset.kind != "cifar10" && dataset.kind != "synthetic")
    bad_config("dataset.kind must be 'cifar10' or 'synthetic'");
  if (dataset.kind == "cifar10" && dataset.path.empty()) bad_config("dataset.path is required for cifar10");
  if (dataset.kind == "synthetic" && dataset.synthetic.classes != arch.classes)
    bad_config("arch.classes must equal dataset.synthetic.classes");
  if (dataset.kind == "synthetic" && dataset.synthetic.channels != 3) bad_config("synthetic images need 3 channels");
  if (dataset.kind == "cifar10" && arch.classes != 10) bad_config("cifar10 needs arch.classes = 10");
  if (output_dir.empty()) bad_config("output_dir must not be empty");
  make_arch(arch);
}

TrainConfig parse_train_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    bad_config(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) bad_config("top level must be an object");
  TrainConfig c;
  bool has_schedule = false;
  for (const auto& [k, v] : j.items()) {
    if (k == "base_lr") c.base_lr = get_as<double>(v, k);
    else if (k == "momentum") c.momentum = get_as<double>(v, k);
    else if (k == "weight_decay") c.weight_decay = get_as<double>(v, k);
    else if (k == "schedule") c.schedule = parse_schedule(v), has_schedule = true;
    else if (k == "batch_size") c.batch_size = get_count(v, k);
    else if (k == "epochs") c.epochs = get_count(v, k);
    else if (k == "seed") c.seed = get_as<std::uint64_t>(v, k);
    else if (k == "augmentation") c.augmentation = get_as<bool>(v, k);
    else if (k == "dataset") c.dataset = parse_dataset(v);
    else if (k == "arch") c.arch = parse_arch(v);
    else if (k == "shortcuts") c.shortcuts = get_as<bool>(v, k);
    else if (k == "dtype") {
      const auto s = get_as<std::string>(v, k);
      if (s == "f32") c.dtype = DType::F32;
      else if (s == "f64") c.dtype = DType::F64;
      else bad_config("dtype must be f32 or f64");
    } else if (k == "output_dir") c.output_dir = get_as<std::string>(v, k);
    else if (k == "timing") c.timing = get_as<bool>(v, k);
    else bad_config("unknown key '" + k + "'");
  }
  if (c.arch.family != "cifar29" && !has_schedule) bad_config("ImageNet families need an explicit schedule");
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InvalidSpecError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_train_config(ss.str());
}

std::string train_config_json(const TrainConfig& config) { return to_json(config).dump(2); }

double lr_at(std::size_t epoch, const TrainConfig& config) {
  double lr = config.base_lr;
  for (const auto& m : config.schedule)
    if (epoch >= m.epoch) lr /= m.divisor;
  return lr;
}

ArchSpec make_arch(const ArchConfig& c) {
  const auto& f = c.family;
  if (f == "cifar29") return build_cifar_arch(c.cardinality, c.width, c.classes, c.width_divisor);
  if (c.width_divisor != 1) bad_config("width_divisor applies to cifar29 only");
  if (f == "resnet50" || f == "resnext50") return build_imagenet_arch(50, c.cardinality, c.width, c.classes);
  if (f == "resnet101" || f == "resnext101") return build_imagenet_arch(101, c.cardinality, c.width, c.classes);
  throw InvalidSpecError("unknown arch family '" + f + "'");
}

std::string format_metrics_row(const MetricsRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.6g,%.6g,%.6g,%.6g,%.6g", r.epoch, r.train_loss, r.train_top1, r.test_top1, r.lr,
                r.seconds);
  return buf;
}

template <typename T>
Splits<T> load_splits(const DatasetConfig& config) {
  if (config.kind == "synthetic") {
    auto [train, test] = make_synthetic<T>(config.synthetic);
    return {std::move(train), std::move(test)};
  }
  if (config.kind != "cifar10") throw InvalidSpecError("unknown dataset kind '" + config.kind + "'");
  const std::filesystem::path dir(config.path);
  CifarRecords train;
  for (int i = 1; i <= 5; ++i) {
    const auto file = dir / ("data_batch_" + std::to_string(i) + ".bin");
    if (!std::filesystem::exists(file)) {
      if (i == 1) throw RejectedInputError("missing CIFAR-10 training file " + file.string());
      break;
    }
    const std::size_t want = config.train_limit ? config.train_limit - train.size() : 0;
    train.append(read_cifar10(file, want));
    if (config.train_limit && train.size() >= config.train_limit) break;
  }
  const auto test_file = dir / "test_batch.bin";
  if (!std::filesystem::exists(test_file)) throw RejectedInputError("missing CIFAR-10 test file " + test_file.string());
  const auto test = read_cifar10(test_file, config.test_limit);
  const auto stats = channel_stats(train);
  return {to_dataset<T>(train, stats), to_dataset<T>(test, stats)};
}

template <typename T>
EvalResult evaluate(Network<T>& net, const Dataset<T>& data, std::size_t batch_size) {
  EvalResult r;
  std::size_t correct = 0;
  double loss_sum = 0;
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, data.size());
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    const auto logits = net.forward(gather_images(data, idx), Mode::Infer);
    const auto loss = softmax_cross_entropy<T>(
        logits, std::span<const std::int32_t>(data.labels.data() + begin, end - begin));
    loss_sum += loss.loss * static_cast<double>(end - begin);
    correct += loss.correct;
  }
  r.loss = loss_sum / static_cast<double>(data.size());
  r.top1_error = 100.0 * static_cast<double>(data.size() - correct) / static_cast<double>(data.size());
  return r;
}

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint) {
  auto p = checkpoint;
  p.replace_extension(".json");
  return p;
}

namespace {

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Network<T>& net, const TrainConfig& config,
                     std::size_t epoch, std::optional<double> test_top1) {
  save_named(path, net.to_named());
  json side{{"notation", net.arch().notation()},
            {"layers", net.arch().weighted_layers()},
            {"epoch", epoch},
            {"config", to_json(config)}};
  if (test_top1) side["test_top1"] = *test_top1;
  std::ofstream os(sidecar_path(path));
  if (!os) throw RejectedInputError("cannot write " + sidecar_path(path).string());
  os << side.dump(2) << '\n';
}

}  // namespace

template <typename T>
TrainOutcome train_on(const TrainConfig& config, const Splits<T>& data) {
  config.validate();
  if (dtype_of<T>() != config.dtype) throw InvalidSpecError("train_on: dtype does not match config");
  const auto arch = make_arch(config.arch);
  if (data.train.classes != arch.classes) throw InvalidSpecError("dataset classes do not match arch.classes");

  TrainOutcome out;
  const std::filesystem::path dir(config.output_dir);
  std::filesystem::create_directories(dir);
  out.metrics_path = dir / "metrics.csv";
  out.final_checkpoint = dir / "final.ntc";
  std::ofstream metrics(out.metrics_path);
  if (!metrics) throw RejectedInputError("cannot write " + out.metrics_path.string());
  metrics << kMetricsHeader << '\n' << std::flush;

  auto net = Network<T>::build(arch, config.arch.form, config.shortcuts, config.seed);
  std::mt19937_64 shuffle_rng(config.seed ^ 0x5eed5eed5eed5eedULL);
  std::mt19937_64 augment_rng(config.seed ^ 0xa06a06a06a06a06aULL);
  SgdState<T> sgd;

  const std::size_t n = data.train.size();
  const std::size_t C = data.train.channels(), H = data.train.height(), W = data.train.width();
  std::vector<std::size_t> order(n);
  std::optional<double> best;
  bool first_batch = true;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at(epoch, config);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
      const std::size_t end = std::min(begin + config.batch_size, n);
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      auto batch = gather_images(data.train, idx);
      if (config.augmentation) {
        const std::size_t per = C * H * W;
        for (std::size_t i = 0; i < idx.size(); ++i)
          augment(std::span<T>(batch.ptr() + i * per, per), C, H, W, augment_rng);
      }
      std::vector<std::int32_t> labels(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = data.train.labels[idx[i]];

      NetworkCache<T> cache;
      const auto logits = net.forward(batch, Mode::Train, &cache);
      const auto loss = softmax_cross_entropy<T>(logits, labels);
      if (!std::isfinite(loss.loss)) {
        out.aborted = true;
        out.abort_reason = "non-finite loss at epoch " + std::to_string(epoch) + ", sample offset " +
                           std::to_string(begin);
        return out;
      }
      if (first_batch) {
        out.initial_loss = loss.loss;
        first_batch = false;
      }
      auto grads = net.backward(cache, loss.grad);
      auto slots = param_slots(net.params(), grads);
      try {
        sgd_step<T>(slots, sgd, lr, config.momentum, config.weight_decay);
      } catch (const NonFiniteError& e) {
        out.aborted = true;
        out.abort_reason = std::string(e.what()) + " (epoch " + std::to_string(epoch) + ")";
        return out;
      }
      loss_sum += loss.loss * static_cast<double>(idx.size());
      correct += loss.correct;
    }

    const auto test = evaluate(net, data.test);
    MetricsRow row;
    row.epoch = epoch + 1;
    row.train_loss = loss_sum / static_cast<double>(n);
    row.train_top1 = 100.0 * static_cast<double>(n - correct) / static_cast<double>(n);
    row.test_top1 = test.top1_error;
    row.lr = lr;
    row.seconds = config.timing
                      ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
                      : 0.0;
    out.rows.push_back(row);
    metrics << format_metrics_row(row) << '\n' << std::flush;

    if (!best || row.test_top1 < *best) {
      best = row.test_top1;
      out.best_checkpoint = dir / "best.ntc";
      save_checkpoint(*out.best_checkpoint, net, config, row.epoch, row.test_top1);
    }
  }
  save_checkpoint(out.final_checkpoint, net, config, config.epochs,
                  out.rows.empty() ? std::nullopt : std::optional<double>(out.rows.back().test_top1));
  return out;
}

TrainOutcome train_loop(const TrainConfig& config) {
  config.validate();
  if (config.dtype == DType::F64) return train_on<double>(config, load_splits<double>(config.dataset));
  return train_on<float>(config, load_splits<float>(config.dataset));
}

namespace {

template <typename T>
EvalResult eval_with(const TrainConfig& config, const NamedTensors& tensors, const DatasetConfig& dataset) {
  auto net = Network<T>::build(make_arch(config.arch), config.arch.form, config.shortcuts, 0);
  NamedTensors cast;
  for (const auto& [name, any] : tensors)
    cast.emplace_back(name, std::visit([](const auto& t) { return AnyTensor(tensor_cast<T>(t)); }, any));
  net.load_named(cast);
  const auto splits = load_splits<T>(dataset);
  if (splits.test.classes != net.arch().classes) throw InvalidSpecError("dataset classes do not match the checkpoint");
  return evaluate(net, splits.test);
}

}  // namespace

EvalResult evaluate_checkpoint(const std::filesystem::path& checkpoint, const std::optional<DatasetConfig>& dataset,
                               std::optional<DType> dtype) {
  std::ifstream is(sidecar_path(checkpoint));
  if (!is) throw RejectedInputError("missing checkpoint sidecar " + sidecar_path(checkpoint).string());
  json side;
  try {
    side = json::parse(is);
  } catch (const json::parse_error& e) {
    throw FormatError("bad checkpoint sidecar: " + std::string(e.what()));
  }
  if (!side.contains("config")) throw FormatError("checkpoint sidecar lacks 'config'");
  const auto config = parse_train_config(side["config"].dump());
  const auto tensors = load_named(checkpoint);
  const auto& data = dataset ? *dataset : config.dataset;
  if (dtype.value_or(config.dtype) == DType::F64) return eval_with<double>(config, tensors, data);
  return eval_with<float>(config, tensors, data);
}

template Splits<float> load_splits<float>(const DatasetConfig&);
template Splits<double> load_splits<double>(const DatasetConfig&);
template EvalResult evaluate<float>(Network<float>&, const Dataset<float>&, std::size_t);
template EvalResult evaluate<double>(Network<double>&, const Dataset<double>&, std::size_t);
template TrainOutcome train_on<float>(const TrainConfig&, const Splits<float>&);
template TrainOutcome train_on<double>(const TrainConfig&, const Splits<double>&);

}  // namespace resnext
