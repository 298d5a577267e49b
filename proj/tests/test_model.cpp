#include <cmath>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "fairdtmc/error.hpp"
#include "fairdtmc/model.hpp"
#include "fairdtmc/rng.hpp"
#include "support.hpp"

using namespace fairdtmc;
using fairdtmc::testing::data_path;

namespace {

// Two continuous inputs, one protected binary input, layers given verbatim.
std::string ff_json(const std::string& layers, const std::string& labels = R"(["no","yes"])") {
  return R"({"kind":"feedforward","layers":)" + layers + R"(,
    "features":[{"name":"a","index":0,"kind":"continuous","lo":-5,"hi":5},
                {"name":"b","index":1,"kind":"continuous","lo":-5,"hi":5}],
    "labels":)" + labels + "}";
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Network random_ff(SplitMix64& rng, Activation hidden) {
  std::vector<Layer> layers;
  std::size_t width = 3;
  for (std::size_t w : {4, 5, 2}) {
    Layer l;
    l.weights = Matrix(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(width));
    l.bias = Vector(static_cast<Eigen::Index>(w));
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = 4.0 * rng.uniform() - 2.0;
      l.bias[r] = rng.uniform() - 0.5;
    }
    l.activation = w == 2 ? Activation::identity : hidden;
    layers.push_back(std::move(l));
    width = w;
  }
  std::vector<FeatureSpec> features;
  for (std::size_t i = 0; i < 3; ++i) features.push_back({"x" + std::to_string(i), i, Continuous{-3, 3}, false});
  return Network(NetworkKind::feedforward, std::move(layers), std::nullopt, std::move(features), {"n", "p"});
}

}  // namespace

TEST_CASE("load_network reads the test models") {
  const Network echo = load_network(data_path("echo_model.json"));
  CHECK(echo.kind() == NetworkKind::feedforward);
  CHECK(echo.layers().size() == 1);
  CHECK(echo.protected_feature().name == "gender");
  CHECK(echo.protected_feature().value_name(1) == "M");
  CHECK(echo.label_index(">50K") == 1);

  const Network biased = load_network(data_path("biased_model.json"));
  CHECK(biased.layers().size() == 3);
  CHECK(biased.layers()[1].weights(0, 0) == doctest::Approx(0.4));

  const Network rnn = load_network(data_path("recurrent_model.json"));
  CHECK(rnn.kind() == NetworkKind::recurrent);
  CHECK(rnn.sequence_length() == 3);
}

TEST_CASE("two-layer file round-trips through serialize_network") {
  const std::string text = ff_json(R"([{"weights":[[1,2],[3,4],[5,6]],"bias":[0,0,1],"activation":"relu"},
                                       {"weights":[[1,0,-1],[0,1,0]],"bias":[0.5,0],"activation":"linear"}])");
  const Network net = parse_network(text);
  CHECK(net.layers().size() == 2);
  CHECK(net.layers()[1].activation == Activation::identity);
  const Network again = parse_network(serialize_network(net));
  CHECK(again.layers()[0].weights == net.layers()[0].weights);
  CHECK(again.layers()[1].bias == net.layers()[1].bias);
  CHECK(again.labels() == net.labels());
  CHECK(again.features().size() == 2);
}

TEST_CASE("load_network reports malformed layers with their index") {
  SUBCASE("dimension mismatch") {
    const std::string text = ff_json(R"([{"weights":[[1,2],[3,4],[5,6]],"bias":[0,0,0],"activation":"relu"},
                                         {"weights":[[1,0,0,0],[0,1,0,0]],"bias":[0,0],"activation":"relu"}])");
    try {
      parse_network(text);
      FAIL("expected a ModelError");
    } catch (const ModelError& e) {
      CHECK(e.layer() == 1);
      CHECK(std::string(e.what()).find("dimension mismatch") != std::string::npos);
    }
  }
  SUBCASE("unknown activation") {
    const std::string text = ff_json(R"([{"weights":[[1,2],[3,4]],"bias":[0,0],"activation":"swish"}])");
    try {
      parse_network(text);
      FAIL("expected a ModelError");
    } catch (const ModelError& e) {
      CHECK(e.layer() == 0);
      CHECK(std::string(e.what()).find("swish") != std::string::npos);
    }
  }
  SUBCASE("bias length") {
    CHECK_THROWS_AS(parse_network(ff_json(R"([{"weights":[[1,2],[3,4]],"bias":[0],"activation":"relu"}])")),
                    ModelError);
  }
  SUBCASE("output width disagrees with labels") {
    CHECK_THROWS_AS(
        parse_network(ff_json(R"([{"weights":[[1,2],[3,4],[1,1]],"bias":[0,0,0],"activation":"relu"}])")),
        ModelError);
  }
  SUBCASE("not JSON") { CHECK_THROWS_AS(parse_network("{layers: oops"), ModelError); }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_network(data_path("no_such_model.json")), ModelError); }
}

TEST_CASE("forward evaluates affine layers and activations") {
  SUBCASE("relu of 3 - 1") {
    const Network net = parse_network(ff_json(R"([{"weights":[[1,-1]],"bias":[0],"activation":"relu"}])"));
    CHECK(net.forward(vec({3, 1}))[0] == 2.0);
    CHECK(net.forward(vec({1, 3}))[0] == 0.0);
  }
  SUBCASE("sigmoid at zero") {
    const Network net = parse_network(ff_json(R"([{"weights":[[1,1]],"bias":[0],"activation":"sigmoid"}])"));
    CHECK(net.forward(vec({0.7, -0.7}))[0] == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("identity layer is the identity map") {
    const Network net = parse_network(ff_json(R"([{"weights":[[1,0],[0,1]],"bias":[0,0],"activation":"identity"}])"));
    const Vector x = vec({-1.25, 4.5});
    CHECK(net.forward(x) == x);
  }
  SUBCASE("wrong input length") {
    const Network net = parse_network(ff_json(R"([{"weights":[[1,-1]],"bias":[0],"activation":"relu"}])"));
    CHECK_THROWS_AS(net.forward(vec({1, 2, 3})), ArgumentError);
  }
}

TEST_CASE("trace records one entry per hidden layer or per timestep") {
  SplitMix64 rng(3);
  std::vector<Layer> layers;
  for (int i = 0; i < 6; ++i) layers.push_back({Matrix::Identity(2, 2), Vector::Zero(2), Activation::relu});
  const Network deep(NetworkKind::feedforward, layers, std::nullopt,
                     {{"a", 0, Continuous{}, false}, {"b", 1, Continuous{}, false}}, {"n", "p"});
  CHECK(deep.trace(vec({0.2, 0.3})).steps.size() == 5);

  RecurrentCell cell{Matrix::Constant(3, 1, 0.5), Matrix::Identity(3, 3) * 0.3, Vector::Zero(3), Activation::tanh};
  std::vector<FeatureSpec> seq;
  for (std::size_t t = 0; t < 7; ++t) seq.push_back({"t" + std::to_string(t), t, Continuous{-1, 1}, false});
  const Network rnn(NetworkKind::recurrent, {{Matrix::Ones(2, 3), Vector::Zero(2), Activation::identity}}, cell,
                    seq, {"n", "p"});
  Vector x(7);
  for (Eigen::Index i = 0; i < 7; ++i) x[i] = rng.uniform() * 2 - 1;
  const ActivationTrace tr = rnn.trace(x);
  CHECK(tr.steps.size() == 7);
  CHECK(tr.output == rnn.forward(x));

  // Hand-unrolled recurrence from a zero hidden state.
  Vector h = Vector::Zero(3);
  for (Eigen::Index t = 0; t < 7; ++t) {
    Vector pre = cell.input_weights * x.segment(t, 1) + cell.hidden_weights * h + cell.bias;
    h = pre.array().tanh().matrix();
    CHECK((tr.steps[static_cast<std::size_t>(t)] - h).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("predict_label") {
  const Network two = parse_network(ff_json(R"([{"weights":[[1,0],[0,1]],"bias":[0,0],"activation":"identity"}])"));
  CHECK(two.predict_label(vec({0.2, 0.8})) == 1);
  CHECK(two.predict_label(vec({0.5, 0.5})) == 0);
  const Network one = parse_network(ff_json(R"([{"weights":[[1,0]],"bias":[0],"activation":"identity"}])"));
  CHECK(one.predict_label(vec({0.49})) == 0);
  CHECK(one.predict_label(vec({0.5})) == 1);
  CHECK_THROWS_AS(two.predict_label(vec({0.1, 0.2, 0.3})), ArgumentError);
}

TEST_CASE("eval_accuracy") {
  const Network echo = load_network(data_path("echo_model.json"));
  Dataset all_right{{vec({0, 0.3}), 0}, {vec({1, 0.9}), 1}};
  CHECK(eval_accuracy(echo, all_right) == 1.0);
  Dataset half{{vec({0, 0.3}), 0}, {vec({1, 0.9}), 1}, {vec({0, 0.1}), 1}, {vec({1, 0.2}), 0}};
  CHECK(eval_accuracy(echo, half) == 0.5);
  CHECK_THROWS_AS(eval_accuracy(echo, Dataset{}), ArgumentError);
}

TEST_CASE("load_dataset parses the training CSV") {
  const Network biased = load_network(data_path("biased_model.json"));
  const Dataset data = load_dataset(data_path("biased_train.csv"), biased);
  CHECK(data.size() == 1000);
  for (const auto& row : data) {
    CHECK(row.input.size() == 3);
    CHECK(row.label == (row.input[1] >= 0.5 ? 1u : 0u));
  }
}

TEST_CASE("parameters can be read and written by address") {
  Network net = load_network(data_path("biased_model.json"));
  const WeightAddress w{WeightAddress::Block::weight, 1, 0, 0};
  const WeightAddress b{WeightAddress::Block::bias, 2, 0, 0};
  CHECK(net.parameter(w) == doctest::Approx(0.4));
  CHECK(net.parameter(b) == -5.0);
  net.set_parameter(w, 0.0);
  CHECK(net.layers()[1].weights(0, 0) == 0.0);
  CHECK_THROWS_AS(net.parameter({WeightAddress::Block::weight, 5, 0, 0}), ArgumentError);
  CHECK_THROWS_AS(net.parameter({WeightAddress::Block::cell_bias, 0, 0, 0}), ArgumentError);
}

// Properties over random networks and inputs.

TEST_CASE("forward is deterministic and trace agrees with it exactly") {
  SplitMix64 rng(11);
  const Network net = random_ff(rng, Activation::tanh);
  for (int i = 0; i < 1000; ++i) {
    const Vector x = Vector::NullaryExpr(3, [&] { return 6.0 * rng.uniform() - 3.0; });
    const Vector a = net.forward(x);
    CHECK(a == net.forward(x));
    const ActivationTrace tr = net.trace(x);
    REQUIRE(tr.output == a);
    CHECK(tr.label == net.predict_label(a));
    CHECK(net.layers().back().apply(tr.steps.back()) == a);
  }
}

TEST_CASE("activation ranges hold on random inputs") {
  SplitMix64 rng(5);
  for (Activation act : {Activation::relu, Activation::sigmoid, Activation::tanh}) {
    for (int i = 0; i < 200; ++i) {
      Vector v = Vector::NullaryExpr(16, [&] { return 40.0 * rng.uniform() - 20.0; });
      apply_activation(act, v);
      for (Eigen::Index j = 0; j < v.size(); ++j) {
        if (act == Activation::relu) CHECK(v[j] >= 0.0);
        if (act == Activation::sigmoid) CHECK((v[j] > 0.0 && v[j] <= 1.0));
        if (act == Activation::tanh) CHECK((v[j] >= -1.0 && v[j] <= 1.0));
      }
    }
  }
  // Moderate arguments stay strictly inside the open ranges.
  Vector v = Vector::LinSpaced(21, -10, 10);
  Vector s = v;
  apply_activation(Activation::sigmoid, s);
  CHECK(s.minCoeff() > 0.0);
  CHECK(s.maxCoeff() < 1.0);
  apply_activation(Activation::tanh, v);
  CHECK(v.cwiseAbs().maxCoeff() < 1.0);
}

TEST_CASE("predict_label is invariant under positive rescaling") {
  const Network net = parse_network(ff_json(R"([{"weights":[[1,0],[0,1],[1,1]],"bias":[0,0,0],"activation":"identity"}])",
                                            R"(["a","b","c"])"));
  SplitMix64 rng(17);
  for (int i = 0; i < 500; ++i) {
    const Vector out = Vector::NullaryExpr(3, [&] { return rng.uniform(); });
    const double scale = 1e-3 + 100.0 * rng.uniform();
    CHECK(net.predict_label(out) == net.predict_label(out * scale));
  }
}
