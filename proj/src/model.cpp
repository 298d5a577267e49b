#include "fairdtmc/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fairdtmc/error.hpp"
#include "json.hpp"

namespace fairdtmc {

using nlohmann::json;

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "tanh") return Activation::tanh;
  if (name == "identity" || name == "linear") return Activation::identity;
  throw ModelError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "identity";
}

void apply_activation(Activation a, Vector& v) {
  switch (a) {
    case Activation::relu:
      v = v.cwiseMax(0.0);
      break;
    case Activation::sigmoid:
      v = v.unaryExpr([](double z) { return 1.0 / (1.0 + std::exp(-z)); });
      break;
    case Activation::tanh:
      v = v.array().tanh().matrix();
      break;
    case Activation::identity:
      break;
  }
}

Vector Layer::apply(const Vector& x) const {
  Vector z = weights * x + bias;
  apply_activation(activation, z);
  return z;
}

Vector RecurrentCell::step(const Vector& x, const Vector& h) const {
  Vector z = input_weights * x + hidden_weights * h + bias;
  apply_activation(activation, z);
  return z;
}

int FeatureSpec::cardinality() const {
  if (const auto* c = std::get_if<Categorical>(&domain)) return c->cardinality;
  throw ArgumentError("feature '" + name + "' is continuous");
}

std::string FeatureSpec::value_name(int v) const {
  if (const auto* c = std::get_if<Categorical>(&domain);
      c && v >= 0 && static_cast<std::size_t>(v) < c->value_names.size())
    return c->value_names[static_cast<std::size_t>(v)];
  return name + "=" + std::to_string(v);
}

std::string to_string(const WeightAddress& a) {
  using B = WeightAddress::Block;
  std::ostringstream out;
  switch (a.block) {
    case B::weight: out << "W" << a.layer << "[" << a.row << "," << a.col << "]"; break;
    case B::bias: out << "b" << a.layer << "[" << a.row << "]"; break;
    case B::cell_input: out << "cell.W[" << a.row << "," << a.col << "]"; break;
    case B::cell_hidden: out << "cell.U[" << a.row << "," << a.col << "]"; break;
    case B::cell_bias: out << "cell.b[" << a.row << "]"; break;
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Network

Network::Network(NetworkKind kind, std::vector<Layer> layers, std::optional<RecurrentCell> cell,
                 std::vector<FeatureSpec> features, std::vector<std::string> labels)
    : kind_(kind),
      layers_(std::move(layers)),
      cell_(std::move(cell)),
      features_(std::move(features)),
      labels_(std::move(labels)) {
  if (layers_.empty()) throw ModelError("network needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    if (l.weights.rows() == 0 || l.weights.cols() == 0) throw ModelError("empty weight matrix", i);
    if (static_cast<std::size_t>(l.bias.size()) != l.out_width())
      throw ModelError("bias length " + std::to_string(l.bias.size()) + " != output width " +
                           std::to_string(l.out_width()),
                       i);
    if (i > 0 && layers_[i - 1].out_width() != l.in_width())
      throw ModelError("dimension mismatch: previous layer outputs " +
                           std::to_string(layers_[i - 1].out_width()) + " but layer expects " +
                           std::to_string(l.in_width()),
                       i);
  }

  std::sort(features_.begin(), features_.end(),
            [](const FeatureSpec& a, const FeatureSpec& b) { return a.index < b.index; });
  for (std::size_t i = 0; i < features_.size(); ++i) {
    const FeatureSpec& f = features_[i];
    if (f.index != i)
      throw ModelError("feature indices must cover 0.." + std::to_string(features_.size() - 1) +
                       " exactly (feature '" + f.name + "')");
    if (const auto* c = std::get_if<Categorical>(&f.domain)) {
      if (c->cardinality < 2)
        throw ModelError("categorical feature '" + f.name + "' needs cardinality >= 2");
      if (!c->value_names.empty() &&
          c->value_names.size() != static_cast<std::size_t>(c->cardinality))
        throw ModelError("categorical feature '" + f.name + "' has " +
                         std::to_string(c->value_names.size()) + " value names for cardinality " +
                         std::to_string(c->cardinality));
    }
    if (const auto* c = std::get_if<Continuous>(&f.domain); c && !(c->lo < c->hi))
      throw ModelError("continuous feature '" + f.name + "' needs lo < hi");
    if (f.is_protected && !f.categorical())
      throw ModelError("protected feature '" + f.name + "' must be categorical");
  }
  if (features_.empty()) throw ModelError("network has no input features");

  if (kind_ == NetworkKind::feedforward) {
    if (cell_) throw ModelError("feed-forward network cannot carry a recurrent cell");
    if (layers_.front().in_width() != features_.size())
      throw ModelError("input width " + std::to_string(layers_.front().in_width()) +
                           " != number of features " + std::to_string(features_.size()),
                       0);
  } else {
    if (!cell_) throw ModelError("recurrent network needs a cell");
    const RecurrentCell& c = *cell_;
    if (c.hidden_weights.rows() != c.hidden_weights.cols())
      throw ModelError("cell hidden weights must be square");
    if (c.input_weights.rows() != c.hidden_weights.rows() || c.bias.size() != c.hidden_weights.rows())
      throw ModelError("cell input weights / bias disagree with hidden width");
    if (c.step_width() == 0 || features_.size() % c.step_width() != 0)
      throw ModelError("number of features must be a multiple of the cell step width");
    if (c.activation != Activation::tanh && c.activation != Activation::sigmoid)
      throw ModelError("cell activation must be tanh or sigmoid");
    if (layers_.front().in_width() != c.hidden_width())
      throw ModelError("readout input width != cell hidden width", 0);
  }

  if (labels_.size() < 2) throw ModelError("need at least two output labels");
  const std::size_t out = layers_.back().out_width();
  if (out != labels_.size() && !(out == 1 && labels_.size() == 2))
    throw ModelError("output width " + std::to_string(out) + " does not match " +
                         std::to_string(labels_.size()) + " labels",
                     layers_.size() - 1);
}

std::size_t Network::sequence_length() const {
  return kind_ == NetworkKind::recurrent ? features_.size() / cell_->step_width() : 1;
}

const FeatureSpec& Network::feature(std::string_view name) const {
  for (const auto& f : features_)
    if (f.name == name) return f;
  throw ArgumentError("unknown feature '" + std::string(name) + "'");
}

const FeatureSpec& Network::protected_feature() const {
  for (const auto& f : features_)
    if (f.is_protected) return f;
  throw ArgumentError("network declares no protected feature");
}

std::size_t Network::label_index(std::string_view label) const {
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] == label) return i;
  throw ArgumentError("unknown label '" + std::string(label) + "'");
}

void Network::check_input(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != input_width())
    throw ArgumentError("input length " + std::to_string(x.size()) + " != expected " +
                        std::to_string(input_width()));
}

Vector Network::forward(const Vector& x) const {
  check_input(x);
  Vector a;
  if (kind_ == NetworkKind::feedforward) {
    a = x;
  } else {
    const std::size_t w = cell_->step_width();
    a = Vector::Zero(static_cast<Eigen::Index>(cell_->hidden_width()));
    for (std::size_t t = 0; t < sequence_length(); ++t)
      a = cell_->step(x.segment(static_cast<Eigen::Index>(t * w), static_cast<Eigen::Index>(w)), a);
  }
  for (const Layer& l : layers_) a = l.apply(a);
  return a;
}

ActivationTrace Network::trace(const Vector& x) const {
  check_input(x);
  ActivationTrace tr;
  tr.input = x;
  Vector a;
  std::size_t first_readout = 0;
  if (kind_ == NetworkKind::feedforward) {
    a = x;
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
      a = layers_[i].apply(a);
      tr.steps.push_back(a);
    }
    first_readout = layers_.size() - 1;
  } else {
    const std::size_t w = cell_->step_width();
    a = Vector::Zero(static_cast<Eigen::Index>(cell_->hidden_width()));
    for (std::size_t t = 0; t < sequence_length(); ++t) {
      a = cell_->step(x.segment(static_cast<Eigen::Index>(t * w), static_cast<Eigen::Index>(w)), a);
      tr.steps.push_back(a);
    }
  }
  for (std::size_t i = first_readout; i < layers_.size(); ++i) a = layers_[i].apply(a);
  tr.output = std::move(a);
  tr.label = predict_label(tr.output);
  return tr;
}

std::size_t Network::predict_label(const Vector& output) const {
  if (output.size() == 1 && labels_.size() == 2) return output[0] >= 0.5 ? 1 : 0;
  if (static_cast<std::size_t>(output.size()) != labels_.size())
    throw ArgumentError("output width " + std::to_string(output.size()) + " != label count " +
                        std::to_string(labels_.size()));
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < output.size(); ++i)
    if (output[i] > output[best]) best = i;
  return static_cast<std::size_t>(best);
}

double& Network::slot(const WeightAddress& a) {
  using B = WeightAddress::Block;
  auto check = [&](bool ok) {
    if (!ok) throw ArgumentError("weight address out of range: " + to_string(a));
  };
  const auto r = static_cast<Eigen::Index>(a.row);
  const auto c = static_cast<Eigen::Index>(a.col);
  switch (a.block) {
    case B::weight: {
      check(a.layer < layers_.size());
      Matrix& w = layers_[a.layer].weights;
      check(r < w.rows() && c < w.cols());
      return w(r, c);
    }
    case B::bias: {
      check(a.layer < layers_.size());
      Vector& b = layers_[a.layer].bias;
      check(r < b.size());
      return b[r];
    }
    case B::cell_input:
      check(cell_ && r < cell_->input_weights.rows() && c < cell_->input_weights.cols());
      return cell_->input_weights(r, c);
    case B::cell_hidden:
      check(cell_ && r < cell_->hidden_weights.rows() && c < cell_->hidden_weights.cols());
      return cell_->hidden_weights(r, c);
    case B::cell_bias:
      check(cell_ && r < cell_->bias.size());
      return cell_->bias[r];
  }
  throw ArgumentError("bad weight block");
}

double Network::parameter(const WeightAddress& a) const {
  return const_cast<Network*>(this)->slot(a);
}

void Network::set_parameter(const WeightAddress& a, double value) { slot(a) = value; }

// ---------------------------------------------------------------------------
// Serialization

namespace {

Matrix matrix_from_json(const json& j, const std::string& what, std::optional<std::size_t> layer) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw ModelError(what + " must be a non-empty list of rows", layer);
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw ModelError(what + " is ragged", layer);
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

Vector vector_from_json(const json& j, const std::string& what, std::optional<std::size_t> layer) {
  if (!j.is_array()) throw ModelError(what + " must be a list", layer);
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

Activation activation_from_json(const json& j, std::optional<std::size_t> layer) {
  const std::string name = j.get<std::string>();
  try {
    return parse_activation(name);
  } catch (const ModelError& e) {
    throw ModelError(e.what(), layer);
  }
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

Network parse_network(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ModelError(std::string("parse error: ") + e.what());
  }
  try {
    const std::string kind_name = doc.value("kind", std::string("feedforward"));
    NetworkKind kind;
    if (kind_name == "feedforward") kind = NetworkKind::feedforward;
    else if (kind_name == "recurrent") kind = NetworkKind::recurrent;
    else throw ModelError("unknown network kind '" + kind_name + "'");

    std::vector<Layer> layers;
    const json& jl = doc.at("layers");
    for (std::size_t i = 0; i < jl.size(); ++i) {
      Layer l;
      l.weights = matrix_from_json(jl[i].at("weights"), "weights", i);
      l.bias = vector_from_json(jl[i].at("bias"), "bias", i);
      l.activation = activation_from_json(jl[i].at("activation"), i);
      layers.push_back(std::move(l));
    }

    std::optional<RecurrentCell> cell;
    if (doc.contains("cell")) {
      const json& jc = doc["cell"];
      RecurrentCell c;
      c.input_weights = matrix_from_json(jc.at("input_weights"), "cell input_weights", std::nullopt);
      c.hidden_weights = matrix_from_json(jc.at("hidden_weights"), "cell hidden_weights", std::nullopt);
      c.bias = vector_from_json(jc.at("bias"), "cell bias", std::nullopt);
      c.activation = activation_from_json(jc.value("activation", json("tanh")), std::nullopt);
      cell = std::move(c);
    }

    std::vector<FeatureSpec> features;
    for (const json& jf : doc.at("features")) {
      FeatureSpec f;
      f.name = jf.at("name").get<std::string>();
      f.index = jf.at("index").get<std::size_t>();
      const std::string fk = jf.at("kind").get<std::string>();
      if (fk == "categorical")
        f.domain = Categorical{jf.at("cardinality").get<int>(),
                               jf.value("values", std::vector<std::string>{})};
      else if (fk == "continuous")
        f.domain = Continuous{jf.at("lo").get<double>(), jf.at("hi").get<double>()};
      else
        throw ModelError("feature '" + f.name + "': unknown kind '" + fk + "'");
      f.is_protected = jf.value("protected", false);
      features.push_back(std::move(f));
    }

    std::vector<std::string> labels;
    for (const json& lab : doc.at("labels"))
      labels.push_back(lab.is_string() ? lab.get<std::string>() : lab.dump());

    return Network(kind, std::move(layers), std::move(cell), std::move(features), std::move(labels));
  } catch (const json::exception& e) {
    throw ModelError(std::string("schema error: ") + e.what());
  }
}

Network load_network(const std::filesystem::path& path) { return parse_network(read_file(path)); }

std::string serialize_network(const Network& net) {
  json doc;
  doc["kind"] = net.kind() == NetworkKind::feedforward ? "feedforward" : "recurrent";
  json layers = json::array();
  for (const Layer& l : net.layers())
    layers.push_back({{"weights", matrix_to_json(l.weights)},
                      {"bias", vector_to_json(l.bias)},
                      {"activation", std::string(to_string(l.activation))}});
  doc["layers"] = std::move(layers);
  if (net.cell()) {
    const RecurrentCell& c = *net.cell();
    doc["cell"] = {{"input_weights", matrix_to_json(c.input_weights)},
                   {"hidden_weights", matrix_to_json(c.hidden_weights)},
                   {"bias", vector_to_json(c.bias)},
                   {"activation", std::string(to_string(c.activation))}};
  }
  json features = json::array();
  for (const FeatureSpec& f : net.features()) {
    json jf = {{"name", f.name}, {"index", f.index}, {"protected", f.is_protected}};
    if (const auto* c = std::get_if<Categorical>(&f.domain)) {
      jf["kind"] = "categorical";
      jf["cardinality"] = c->cardinality;
      if (!c->value_names.empty()) jf["values"] = c->value_names;
    } else {
      const auto& r = std::get<Continuous>(f.domain);
      jf["kind"] = "continuous";
      jf["lo"] = r.lo;
      jf["hi"] = r.hi;
    }
    features.push_back(std::move(jf));
  }
  doc["features"] = std::move(features);
  doc["labels"] = net.labels();
  return doc.dump(2) + "\n";
}

void save_network(const Network& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ModelError("cannot write '" + path.string() + "'");
  out << serialize_network(net);
}

Dataset load_dataset(const std::filesystem::path& path, const Network& net) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open dataset '" + path.string() + "'");
  Dataset rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != net.input_width() + 1) {
      // Tolerate one header row.
      if (rows.empty() && lineno == 1) continue;
      throw ModelError("dataset line " + std::to_string(lineno) + ": expected " +
                       std::to_string(net.input_width() + 1) + " columns, got " +
                       std::to_string(cells.size()));
    }
    LabeledRow row;
    row.input.resize(static_cast<Eigen::Index>(net.input_width()));
    try {
      for (std::size_t i = 0; i < net.input_width(); ++i)
        row.input[static_cast<Eigen::Index>(i)] = std::stod(cells[i]);
    } catch (const std::exception&) {
      if (rows.empty() && lineno == 1) continue;
      throw ModelError("dataset line " + std::to_string(lineno) + ": non-numeric feature value");
    }
    const std::string& lab = cells.back();
    char* end = nullptr;
    const long idx = std::strtol(lab.c_str(), &end, 10);
    if (end != lab.c_str() && *end == '\0') {
      if (idx < 0 || static_cast<std::size_t>(idx) >= net.labels().size())
        throw ModelError("dataset line " + std::to_string(lineno) + ": label index out of range");
      row.label = static_cast<std::size_t>(idx);
    } else {
      row.label = net.label_index(lab);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

double eval_accuracy(const Network& net, const Dataset& data) {
  if (data.empty()) throw ArgumentError("accuracy of an empty dataset is undefined");
  std::size_t correct = 0;
  for (const LabeledRow& row : data)
    if (net.predict_label(net.forward(row.input)) == row.label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace fairdtmc
