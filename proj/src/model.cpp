#include "agcd/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>

#include <json.hpp>

namespace agcd {

namespace {

constexpr char kMagic[8] = {'A', 'G', 'C', 'D', 'C', 'K', 'P', 'T'};

double gelu(double a) { return 0.5 * a * (1.0 + std::erf(a / std::numbers::sqrt2)); }

double gelu_derivative(double a) {
  const double cdf = 0.5 * (1.0 + std::erf(a / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * a * a) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + a * pdf;
}

// Row-wise L2 normalization; returns the norms.
Vector normalize_rows(const Matrix& in, Matrix& out) {
  Vector norms = in.rowwise().norm();
  out.resize(in.rows(), in.cols());
  for (Eigen::Index r = 0; r < in.rows(); ++r) {
    const double n = norms(r) > 0.0 ? norms(r) : 1.0;
    out.row(r) = in.row(r) / n;
  }
  return norms;
}

// Gradient of y = v / |v| w.r.t. v, given dL/dy.
Matrix normalize_rows_backward(const Matrix& normalized, const Vector& norms, const Matrix& grad) {
  Matrix out(grad.rows(), grad.cols());
  for (Eigen::Index r = 0; r < grad.rows(); ++r) {
    const double n = norms(r) > 0.0 ? norms(r) : 1.0;
    const double proj = normalized.row(r).dot(grad.row(r));
    out.row(r) = (grad.row(r) - proj * normalized.row(r)) / n;
  }
  return out;
}

template <typename T>
void write_le(std::ostream& out, T value) {
  auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T read_le(std::istream& in) {
  std::array<char, sizeof(T)> bytes{};
  in.read(bytes.data(), bytes.size());
  if (!in) throw DataError("truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

void write_checkpoint_file(const Parameters& params, const Temperatures& temps,
                           const std::filesystem::path& path, std::size_t schedule_epoch) {
  nlohmann::json header = {
      {"format", 1},
      {"dim", params.adapter_weight.cols()},
      {"proj_dim", params.head_weight.rows()},
      {"num_classes", params.prototypes.rows()},
      {"tau_c", temps.contrastive},
      {"tau_p", temps.classifier},
      {"teacher_start", temps.teacher_start},
      {"teacher_end", temps.teacher_end},
      {"teacher_warmup_epochs", temps.teacher_warmup_epochs},
      {"schedule_epoch", schedule_epoch},
      {"tensors", Parameters::kTensorNames},
  };
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (auto tensor : params.tensors())
    for (double v : tensor) write_le(out, v);
  if (!out) throw Error("short write to checkpoint " + path.string());
}

Parameters read_checkpoint_file(const std::filesystem::path& path, Temperatures& temps,
                                std::size_t* schedule_epoch) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a checkpoint: " + path.string());
  }
  const auto header_size = read_le<std::uint64_t>(in);
  if (header_size > (1u << 20)) throw DataError("checkpoint header too large");
  std::string text(header_size, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_size));
  if (!in) throw DataError("truncated checkpoint");
  Parameters p;
  try {
    const auto header = nlohmann::json::parse(text);
    const auto d = header.at("dim").get<Eigen::Index>();
    const auto dp = header.at("proj_dim").get<Eigen::Index>();
    const auto k = header.at("num_classes").get<Eigen::Index>();
    temps.contrastive = header.at("tau_c").get<double>();
    temps.classifier = header.at("tau_p").get<double>();
    temps.teacher_start = header.at("teacher_start").get<double>();
    temps.teacher_end = header.at("teacher_end").get<double>();
    temps.teacher_warmup_epochs = header.at("teacher_warmup_epochs").get<std::size_t>();
    if (schedule_epoch) *schedule_epoch = header.at("schedule_epoch").get<std::size_t>();
    p.adapter_weight.resize(d, d);
    p.adapter_bias.resize(d);
    p.head_weight.resize(dp, d);
    p.prototypes.resize(k, d);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad checkpoint header: ") + e.what());
  }
  for (auto tensor : p.tensors())
    for (double& v : tensor) v = read_le<double>(in);
  if (in.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes in checkpoint");
  return p;
}

}  // namespace

double Temperatures::teacher(std::size_t epoch) const {
  if (teacher_warmup_epochs == 0 || epoch >= teacher_warmup_epochs) return teacher_end;
  const double t = static_cast<double>(epoch) / static_cast<double>(teacher_warmup_epochs);
  return teacher_start + t * (teacher_end - teacher_start);
}

Parameters Parameters::zeros_like() const {
  Parameters out;
  out.adapter_weight = Matrix::Zero(adapter_weight.rows(), adapter_weight.cols());
  out.adapter_bias = Vector::Zero(adapter_bias.size());
  out.head_weight = Matrix::Zero(head_weight.rows(), head_weight.cols());
  out.prototypes = Matrix::Zero(prototypes.rows(), prototypes.cols());
  return out;
}

std::array<std::span<double>, 4> Parameters::tensors() {
  auto span_of = [](auto& t) { return std::span<double>(t.data(), static_cast<std::size_t>(t.size())); };
  return {span_of(adapter_weight), span_of(adapter_bias), span_of(head_weight), span_of(prototypes)};
}

std::array<std::span<const double>, 4> Parameters::tensors() const {
  auto span_of = [](const auto& t) {
    return std::span<const double>(t.data(), static_cast<std::size_t>(t.size()));
  };
  return {span_of(adapter_weight), span_of(adapter_bias), span_of(head_weight), span_of(prototypes)};
}

std::size_t Parameters::count() const {
  std::size_t n = 0;
  for (auto t : tensors()) n += t.size();
  return n;
}

bool Parameters::same_shape(const Parameters& other) const {
  return adapter_weight.rows() == other.adapter_weight.rows() &&
         adapter_weight.cols() == other.adapter_weight.cols() &&
         adapter_bias.size() == other.adapter_bias.size() &&
         head_weight.rows() == other.head_weight.rows() &&
         head_weight.cols() == other.head_weight.cols() &&
         prototypes.rows() == other.prototypes.rows() && prototypes.cols() == other.prototypes.cols();
}

Model::Model(std::size_t dim, std::size_t proj_dim, std::size_t num_classes, std::uint64_t seed,
             Temperatures temperatures)
    : temperatures_(temperatures) {
  if (dim == 0 || proj_dim == 0 || num_classes < 2) throw ConfigError("invalid model shape");
  const auto d = static_cast<Eigen::Index>(dim);
  const auto dp = static_cast<Eigen::Index>(proj_dim);
  const auto k = static_cast<Eigen::Index>(num_classes);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));

  // The adapter starts near the identity so h initially follows the frozen features.
  params_.adapter_weight = Matrix::Identity(d, d);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c) params_.adapter_weight(r, c) += 0.01 * scale * normal(rng);
  params_.adapter_bias = Vector::Zero(d);
  params_.head_weight.resize(dp, d);
  for (Eigen::Index r = 0; r < dp; ++r)
    for (Eigen::Index c = 0; c < d; ++c) params_.head_weight(r, c) = scale * normal(rng);
  params_.prototypes.resize(k, d);
  for (Eigen::Index r = 0; r < k; ++r)
    for (Eigen::Index c = 0; c < d; ++c) params_.prototypes(r, c) = normal(rng);
  normalize_prototypes();
}

Model::Model(Parameters params, Temperatures temperatures)
    : params_(std::move(params)), temperatures_(temperatures) {
  if (params_.adapter_weight.rows() != params_.adapter_weight.cols() ||
      params_.adapter_bias.size() != params_.adapter_weight.rows() ||
      params_.head_weight.cols() != params_.adapter_weight.cols() ||
      params_.prototypes.cols() != params_.adapter_weight.cols()) {
    throw DataError("inconsistent model parameter shapes");
  }
}

ForwardCache Model::forward(const Matrix& input) const {
  if (static_cast<std::size_t>(input.cols()) != dim()) throw DataError("input dimension mismatch");
  ForwardCache c;
  c.input = input;
  c.pre_activation = input * params_.adapter_weight.transpose();
  c.pre_activation.rowwise() += params_.adapter_bias.transpose();
  c.activation = c.pre_activation.unaryExpr(&gelu);
  c.activation_norm = normalize_rows(c.activation, c.features);
  c.head_output = c.features * params_.head_weight.transpose();
  c.head_norm = normalize_rows(c.head_output, c.embeddings);
  c.cosines = c.features * params_.prototypes.transpose();
  return c;
}

void Model::backward(const ForwardCache& c, const Matrix& d_embeddings, const Matrix& d_cosines,
                     Parameters& grad) const {
  Matrix d_features = Matrix::Zero(c.features.rows(), c.features.cols());
  if (d_cosines.size() > 0) {
    grad.prototypes.noalias() += d_cosines.transpose() * c.features;
    d_features.noalias() += d_cosines * params_.prototypes;
  }
  if (d_embeddings.size() > 0) {
    const Matrix d_head = normalize_rows_backward(c.embeddings, c.head_norm, d_embeddings);
    grad.head_weight.noalias() += d_head.transpose() * c.features;
    d_features.noalias() += d_head * params_.head_weight;
  }
  const Matrix d_activation = normalize_rows_backward(c.features, c.activation_norm, d_features);
  const Matrix d_pre =
      d_activation.cwiseProduct(c.pre_activation.unaryExpr(&gelu_derivative));
  grad.adapter_weight.noalias() += d_pre.transpose() * c.input;
  grad.adapter_bias += d_pre.colwise().sum().transpose();
}

Matrix Model::adapt(const Matrix& input) const {
  Matrix pre = input * params_.adapter_weight.transpose();
  pre.rowwise() += params_.adapter_bias.transpose();
  Matrix h;
  normalize_rows(pre.unaryExpr(&gelu), h);
  return h;
}

Matrix Model::posteriors(const Matrix& input) const {
  return softmax_rows(adapt(input) * params_.prototypes.transpose(), temperatures_.classifier);
}

LabelList Model::predict(const Matrix& input) const {
  const Matrix p = posteriors(input);
  LabelList out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < p.cols(); ++k)
      if (p(r, k) > p(r, best)) best = k;
    out[static_cast<std::size_t>(r)] = static_cast<Label>(best);
  }
  return out;
}

void Model::normalize_prototypes() {
  for (Eigen::Index r = 0; r < params_.prototypes.rows(); ++r) {
    const double n = params_.prototypes.row(r).norm();
    if (n > 0.0) params_.prototypes.row(r) /= n;
  }
}

Vector posterior(const Model& model, const Vector& feature) {
  const Matrix logits = feature.transpose() * model.params().prototypes.transpose();
  return softmax_rows(logits, model.temperatures().classifier).row(0).transpose();
}

Matrix softmax_rows(const Matrix& logits, double temperature) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double peak = logits.row(r).maxCoeff();
    double total = 0.0;
    for (Eigen::Index k = 0; k < logits.cols(); ++k) {
      out(r, k) = std::exp((logits(r, k) - peak) / temperature);
      total += out(r, k);
    }
    out.row(r) /= total;
  }
  return out;
}

EmaModel::EmaModel(const Model& model, double decay)
    : shadow_(model.params()), temperatures_(model.temperatures()), decay_(decay) {
  if (!(decay >= 0.0 && decay <= 1.0)) throw ConfigError("EMA decay must be in [0, 1]");
}

Model EmaModel::snapshot() const {
  Model m(shadow_, temperatures_);
  m.normalize_prototypes();
  return m;
}

void ema_update(EmaModel& ema, const Model& model, double beta) {
  if (!ema.shadow().same_shape(model.params())) throw Error("EMA shape mismatch");
  auto shadow = ema.shadow().tensors();
  const auto live = model.params().tensors();
  for (std::size_t t = 0; t < shadow.size(); ++t) {
    for (std::size_t i = 0; i < shadow[t].size(); ++i) {
      shadow[t][i] = beta * shadow[t][i] + (1.0 - beta) * live[t][i];
    }
  }
}

void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     std::size_t schedule_epoch) {
  write_checkpoint_file(model.params(), model.temperatures(), path, schedule_epoch);
}

void save_checkpoint(const Model& model, const EmaModel& ema, const std::filesystem::path& path,
                     std::size_t schedule_epoch) {
  save_checkpoint(model, path, schedule_epoch);
  std::filesystem::path ema_path = path;
  ema_path += ".ema";
  write_checkpoint_file(ema.shadow(), model.temperatures(), ema_path, schedule_epoch);
}

Model load_checkpoint(const std::filesystem::path& path, std::size_t* schedule_epoch) {
  Temperatures temps;
  Parameters p = read_checkpoint_file(path, temps, schedule_epoch);
  return Model(std::move(p), temps);
}

EmaModel load_ema_checkpoint(const std::filesystem::path& path, double decay) {
  std::filesystem::path ema_path = path;
  ema_path += ".ema";
  Temperatures temps;
  Parameters shadow = read_checkpoint_file(ema_path, temps, nullptr);
  EmaModel ema(Model(shadow, temps), decay);
  ema.shadow() = std::move(shadow);
  return ema;
}

}  // namespace agcd
