#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace fairdtmc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Activation { relu, sigmoid, tanh, identity };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a);

/// Element-wise activation, in place.
void apply_activation(Activation a, Vector& v);

/// Affine map followed by an activation: sigma(W x + b).
struct Layer {
  Matrix weights;  // d_out x d_in
  Vector bias;     // d_out
  Activation activation = Activation::identity;

  std::size_t in_width() const { return static_cast<std::size_t>(weights.cols()); }
  std::size_t out_width() const { return static_cast<std::size_t>(weights.rows()); }

  Vector apply(const Vector& x) const;
};

/// Elman recurrence h_{t+1} = sigma(W x_t + U h_t + b), starting from h_0 = 0.
struct RecurrentCell {
  Matrix input_weights;   // hidden x step_width
  Matrix hidden_weights;  // hidden x hidden
  Vector bias;            // hidden
  Activation activation = Activation::tanh;

  std::size_t step_width() const { return static_cast<std::size_t>(input_weights.cols()); }
  std::size_t hidden_width() const { return static_cast<std::size_t>(hidden_weights.rows()); }

  Vector step(const Vector& x, const Vector& h) const;
};

struct Categorical {
  int cardinality = 2;
  std::vector<std::string> value_names;  // optional, one per value
};

struct Continuous {
  double lo = 0.0;
  double hi = 1.0;
};

/// One input coordinate and its domain.
struct FeatureSpec {
  std::string name;
  std::size_t index = 0;
  std::variant<Categorical, Continuous> domain;
  bool is_protected = false;

  bool categorical() const { return std::holds_alternative<Categorical>(domain); }
  int cardinality() const;  // throws for continuous features
  /// Display name of a categorical value: its declared name or "<name>=<v>".
  std::string value_name(int v) const;
};

enum class NetworkKind { feedforward, recurrent };

/// Observed activations for one input. For feed-forward networks `steps` holds
/// one entry per hidden layer (the output layer is excluded); for recurrent
/// networks one hidden-state entry per timestep.
struct ActivationTrace {
  Vector input;
  std::vector<Vector> steps;
  Vector output;
  std::size_t label = 0;
};

/// Identifies one trainable scalar of a network.
struct WeightAddress {
  enum class Block { weight, bias, cell_input, cell_hidden, cell_bias };

  Block block = Block::weight;
  std::size_t layer = 0;  // ignored for cell blocks
  std::size_t row = 0;
  std::size_t col = 0;    // ignored for bias blocks

  friend bool operator==(const WeightAddress&, const WeightAddress&) = default;
  friend auto operator<=>(const WeightAddress&, const WeightAddress&) = default;
};

std::string to_string(const WeightAddress& a);

/// The system under verification. Immutable apart from explicit parameter
/// writes, so concurrent forward passes on a shared instance are safe.
class Network {
 public:
  Network(NetworkKind kind, std::vector<Layer> layers, std::optional<RecurrentCell> cell,
          std::vector<FeatureSpec> features, std::vector<std::string> labels);

  NetworkKind kind() const { return kind_; }
  const std::vector<Layer>& layers() const { return layers_; }
  const std::optional<RecurrentCell>& cell() const { return cell_; }
  const std::vector<FeatureSpec>& features() const { return features_; }
  const std::vector<std::string>& labels() const { return labels_; }

  std::size_t input_width() const { return features_.size(); }
  std::size_t output_width() const { return layers_.back().out_width(); }

  /// Timesteps of a recurrent input (input width / step width); 1 otherwise.
  std::size_t sequence_length() const;

  const FeatureSpec& feature(std::string_view name) const;
  const FeatureSpec& protected_feature() const;  // first protected feature
  std::size_t label_index(std::string_view label) const;

  Vector forward(const Vector& x) const;
  ActivationTrace trace(const Vector& x) const;

  /// Argmax with ties to the lowest index, or the 0.5 threshold for a single output.
  std::size_t predict_label(const Vector& output) const;

  double parameter(const WeightAddress& a) const;
  void set_parameter(const WeightAddress& a, double value);

 private:
  void check_input(const Vector& x) const;
  double& slot(const WeightAddress& a);

  NetworkKind kind_;
  std::vector<Layer> layers_;
  std::optional<RecurrentCell> cell_;
  std::vector<FeatureSpec> features_;
  std::vector<std::string> labels_;
};

struct LabeledRow {
  Vector input;
  std::size_t label = 0;
};

using Dataset = std::vector<LabeledRow>;

Network load_network(const std::filesystem::path& path);
Network parse_network(std::string_view json_text);
std::string serialize_network(const Network& net);
void save_network(const Network& net, const std::filesystem::path& path);

/// CSV, one row per instance, last column the label (index or label name).
Dataset load_dataset(const std::filesystem::path& path, const Network& net);

double eval_accuracy(const Network& net, const Dataset& data);

}  // namespace fairdtmc
