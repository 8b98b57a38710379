#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "v2s/gradcheck.hpp"
#include "v2s/losses.hpp"
#include "v2s/models.hpp"
#include "v2s/nncore.hpp"
#include "v2s/rng.hpp"

using namespace v2s;

namespace {

Matrix random_matrix(Rng& rng, int rows, int cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  return m;
}

Network make_net(Rng& rng, const std::vector<int>& dims, const std::vector<Activation>& acts) {
  std::vector<DenseLayer> layers;
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    DenseLayer l;
    l.weight = random_matrix(rng, dims[k + 1], dims[k], 0.5);
    l.bias = random_matrix(rng, dims[k + 1], 1, 0.1).col(0);
    l.activation = acts[k];
    layers.push_back(std::move(l));
  }
  return Network(std::move(layers), true);
}

double min_abs_preact(const Network& net, const Matrix& input) {
  ForwardCache cache;
  network_forward(net, input, &cache);
  double worst = 1e300;
  for (std::size_t k = 0; k < net.depth(); ++k)
    if (net.layer(k).activation == Activation::relu)
      worst = std::min(worst, cache.pre_acts[k].array().abs().minCoeff());
  return worst;
}

}  // namespace

TEST_CASE("identity layer forwards its input unchanged") {
  DenseLayer l{Matrix::Identity(4, 4), Vector::Zero(4), Activation::identity};
  Network net({l}, true);
  Rng rng(11);
  const Matrix x = random_matrix(rng, 5, 4);
  const Matrix y = network_forward(net, x);
  CHECK((y - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("softmax output rows sum to one") {
  Rng rng(12);
  const Network net = make_net(rng, {6, 5, 4}, {Activation::sigmoid, Activation::softmax});
  const Matrix out = network_forward(net, random_matrix(rng, 9, 6, 3.0));
  for (Eigen::Index t = 0; t < out.rows(); ++t) {
    CHECK(std::abs(out.row(t).sum() - 1.0) <= 1e-9);
    CHECK(out.row(t).minCoeff() > 0.0);
    CHECK(out.row(t).maxCoeff() < 1.0);
  }
}

TEST_CASE("two-layer forward matches a straight-line hand evaluation") {
  // 4 -> 3 sigmoid -> 2 identity with fixed parameters.
  DenseLayer l1{Matrix(3, 4), Vector(3), Activation::sigmoid};
  l1.weight << 0.2, -0.1, 0.4, 0.0,
               -0.3, 0.5, 0.1, 0.2,
               0.0, 0.3, -0.2, 0.6;
  l1.bias << 0.1, -0.2, 0.05;
  DenseLayer l2{Matrix(2, 3), Vector(2), Activation::identity};
  l2.weight << 1.0, -0.5, 0.25,
               0.75, 0.5, -1.0;
  l2.bias << -0.1, 0.2;
  Network net({l1, l2}, true);

  Matrix x(3, 4);
  x << 0.5, -1.0, 0.25, 2.0,
       1.5, 0.0, -0.75, 1.0,
       -0.5, 0.5, 1.0, -1.5;

  // Independent evaluation with scalar loops.
  Matrix expected(3, 2);
  for (int t = 0; t < 3; ++t) {
    double h[3];
    for (int i = 0; i < 3; ++i) {
      double z = l1.bias(i);
      for (int j = 0; j < 4; ++j) z += l1.weight(i, j) * x(t, j);
      h[i] = 1.0 / (1.0 + std::exp(-z));
    }
    for (int i = 0; i < 2; ++i) {
      double z = l2.bias(i);
      for (int j = 0; j < 3; ++j) z += l2.weight(i, j) * h[j];
      expected(t, i) = z;
    }
  }

  const Matrix out = network_forward(net, x);
  CHECK((out - expected).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("log_output agrees with the log of the softmax output") {
  Rng rng(27);
  const Network net = make_net(rng, {6, 5, 4}, {Activation::sigmoid, Activation::softmax});
  const Matrix x = random_matrix(rng, 5, 6, 2.0);
  ForwardCache cache;
  const Matrix posterior = network_forward(net, x, &cache);
  const Matrix lp = log_output(net, cache);
  CHECK((lp.array().exp().matrix() - posterior).cwiseAbs().maxCoeff() <= 1e-12);

  const Network plain = make_net(rng, {6, 4}, {Activation::identity});
  ForwardCache plain_cache;
  network_forward(plain, x, &plain_cache);
  CHECK_THROWS_AS(log_output(plain, plain_cache), ContractError);
}

TEST_CASE("forward pass is deterministic") {
  Rng rng(13);
  const Network net = make_net(rng, {8, 6, 3}, {Activation::relu, Activation::identity});
  const Matrix x = random_matrix(rng, 7, 8);
  const Matrix a = network_forward(net, x);
  const Matrix b = network_forward(net, x);
  CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);
}

TEST_CASE("forward validates input") {
  Rng rng(14);
  const Network net = make_net(rng, {4, 3}, {Activation::identity});
  CHECK_THROWS_AS(network_forward(net, Matrix::Zero(2, 5)), ShapeError);
  Matrix bad = Matrix::Zero(2, 4);
  bad(1, 2) = std::nan("");
  CHECK_THROWS_AS(network_forward(net, bad), ValidationError);
}

TEST_CASE("network construction rejects invalid layer chains") {
  Rng rng(15);
  DenseLayer a{Matrix::Zero(3, 4), Vector::Zero(3), Activation::identity};
  DenseLayer b{Matrix::Zero(2, 5), Vector::Zero(2), Activation::identity};
  CHECK_THROWS_AS(Network({a, b}, true), ShapeError);

  DenseLayer soft{Matrix::Zero(3, 4), Vector::Zero(3), Activation::softmax};
  DenseLayer tail{Matrix::Zero(2, 3), Vector::Zero(2), Activation::identity};
  CHECK_THROWS_AS(Network({soft, tail}, true), ValidationError);
}

TEST_CASE("zero output gradient backpropagates to zero gradients") {
  Rng rng(16);
  const Network net = make_net(rng, {5, 4, 3}, {Activation::sigmoid, Activation::identity});
  ForwardCache cache;
  network_forward(net, random_matrix(rng, 6, 5), &cache);
  const GradientBundle g = network_backward(net, cache, Matrix::Zero(6, 3));
  for (const auto& w : g.weight_grads) CHECK(w.cwiseAbs().maxCoeff() == 0.0);
  for (const auto& b : g.bias_grads) CHECK(b.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.input_gradient.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("identity layer passes the upstream gradient through") {
  DenseLayer l{Matrix::Identity(3, 3), Vector::Zero(3), Activation::identity};
  Network net({l}, true);
  Rng rng(17);
  const Matrix x = random_matrix(rng, 4, 3);
  ForwardCache cache;
  network_forward(net, x, &cache);
  const Matrix upstream = random_matrix(rng, 4, 3);
  const GradientBundle g = network_backward(net, cache, upstream);
  CHECK((g.input_gradient - upstream).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward rejects a mismatched cache") {
  Rng rng(18);
  const Network net = make_net(rng, {5, 4}, {Activation::identity});
  const Network other = make_net(rng, {5, 3, 4}, {Activation::sigmoid, Activation::identity});
  ForwardCache cache;
  network_forward(other, random_matrix(rng, 2, 5), &cache);
  CHECK_THROWS_AS(network_backward(net, cache, Matrix::Zero(2, 4)), ContractError);
}

TEST_CASE("frozen networks still yield an input gradient") {
  Rng rng(19);
  Network net = make_net(rng, {5, 4, 3}, {Activation::sigmoid, Activation::softmax});
  net.set_trainable(false);
  ForwardCache cache;
  network_forward(net, random_matrix(rng, 6, 5), &cache);
  const GradientBundle g = network_backward(net, cache, Matrix::Constant(6, 3, 0.5));
  CHECK_FALSE(g.has_param_grads());
  CHECK(g.input_gradient.rows() == 6);
  CHECK(g.input_gradient.cols() == 5);
  CHECK(g.input_gradient.allFinite());
}

TEST_CASE("parameter gradients match finite differences on random small nets") {
  const std::vector<std::vector<Activation>> stacks = {
      {Activation::identity, Activation::identity},
      {Activation::sigmoid, Activation::identity},
      {Activation::relu, Activation::identity},
      {Activation::sigmoid, Activation::softmax},
  };
  int seed = 100;
  for (const auto& acts : stacks) {
    Rng rng(static_cast<std::uint64_t>(seed++));
    const Network net = make_net(rng, {6, 8, 5}, acts);
    Matrix x = random_matrix(rng, 4, 6);
    while (min_abs_preact(net, x) < 1e-2) x = random_matrix(rng, 4, 6);

    const Matrix target = random_matrix(rng, 4, 5, 0.5);
    const auto loss = [&](const Matrix& out) { return mse_loss(out, target); };
    CHECK(gradient_check(net, loss, x, 1e-4) <= 1e-4);
  }
}

TEST_CASE("adagrad leaves parameters untouched for a zero gradient") {
  Rng rng(20);
  Network net = make_net(rng, {4, 3}, {Activation::identity});
  const Matrix before = net.layer(0).weight;
  AdaGradState state = AdaGradState::zeros_like(net);

  GradientBundle g;
  g.weight_grads.push_back(Matrix::Zero(3, 4));
  g.bias_grads.push_back(Vector::Zero(3));
  adagrad_step(net, g, state, 0.1);

  CHECK((net.layer(0).weight - before).cwiseAbs().maxCoeff() == 0.0);
  CHECK(state.weight_accum[0].cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adagrad first step matches the closed form") {
  DenseLayer l{Matrix::Constant(1, 1, 1.0), Vector::Zero(1), Activation::identity};
  Network net({l}, true);
  AdaGradState state = AdaGradState::zeros_like(net);
  state.epsilon = 1e-8;

  GradientBundle g;
  g.weight_grads.push_back(Matrix::Constant(1, 1, 2.0));
  g.bias_grads.push_back(Vector::Zero(1));
  adagrad_step(net, g, state, 0.1);

  CHECK(state.weight_accum[0](0, 0) == doctest::Approx(4.0).epsilon(1e-15));
  const double expected = 1.0 - 0.1 * 2.0 / (2.0 + 1e-8);
  CHECK(net.layer(0).weight(0, 0) == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("adagrad damps repeated identical gradients") {
  DenseLayer l{Matrix::Constant(1, 1, 5.0), Vector::Zero(1), Activation::identity};
  Network net({l}, true);
  AdaGradState state = AdaGradState::zeros_like(net);

  GradientBundle g;
  g.weight_grads.push_back(Matrix::Constant(1, 1, 1.5));
  g.bias_grads.push_back(Vector::Zero(1));

  const double p0 = net.layer(0).weight(0, 0);
  adagrad_step(net, g, state, 0.1);
  const double p1 = net.layer(0).weight(0, 0);
  adagrad_step(net, g, state, 0.1);
  const double p2 = net.layer(0).weight(0, 0);
  CHECK(std::abs(p2 - p1) < std::abs(p1 - p0));
}

TEST_CASE("adagrad accumulators never decrease") {
  Rng rng(21);
  Network net = make_net(rng, {3, 4, 2}, {Activation::sigmoid, Activation::identity});
  AdaGradState state = AdaGradState::zeros_like(net);

  std::vector<Matrix> prev_accum = state.weight_accum;
  for (int step = 0; step < 20; ++step) {
    ForwardCache cache;
    const Matrix x = random_matrix(rng, 3, 3);
    const Matrix out = network_forward(net, x, &cache);
    const GradientBundle g = network_backward(net, cache, random_matrix(rng, 3, 2));
    adagrad_step(net, g, state, 0.05);
    for (std::size_t k = 0; k < state.weight_accum.size(); ++k) {
      CHECK((state.weight_accum[k] - prev_accum[k]).minCoeff() >= 0.0);
      prev_accum[k] = state.weight_accum[k];
    }
  }
}

TEST_CASE("adagrad refuses frozen networks") {
  Rng rng(22);
  Network net = make_net(rng, {4, 3}, {Activation::identity});
  net.set_trainable(false);
  AdaGradState state = AdaGradState::zeros_like(net);
  GradientBundle g;
  g.weight_grads.push_back(Matrix::Zero(3, 4));
  g.bias_grads.push_back(Vector::Zero(3));
  CHECK_THROWS_AS(adagrad_step(net, g, state, 0.1), ContractError);
}

TEST_CASE("gradient check is tight for a linear net under a quadratic loss") {
  Rng rng(23);
  const Network net = make_net(rng, {5, 3}, {Activation::identity});
  const Matrix x = random_matrix(rng, 4, 5);
  const Matrix target = random_matrix(rng, 4, 3);
  const auto loss = [&](const Matrix& out) { return mse_loss(out, target); };
  CHECK(gradient_check(net, loss, x, 1e-4) <= 1e-6);
}

TEST_CASE("gradient check passes a deep sigmoid classifier under SCE") {
  // Same input width as the full-scale feature layout.
  ArchSpec arch;
  arch.role = ModelRole::asv;
  arch.input_dim = 78;
  arch.hidden = {{16, Activation::sigmoid}};
  arch.output_dim = 8;
  arch.output_activation = Activation::softmax;
  const Network net = build_model(arch, 2024);

  Rng rng(24);
  Matrix x(3, 78);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = rng.normal();

  const SpeakerCode code = one_hot(2, 8);
  const auto loss = [&](const Matrix& posterior) {
    LossValue lv = sce_loss(code, posterior);
    // Gradient with respect to the posterior (the generic output route);
    // sce_loss itself reports the fused logits gradient.
    lv.gradient = Matrix::Zero(posterior.rows(), posterior.cols());
    const double t = static_cast<double>(posterior.rows());
    for (Eigen::Index r = 0; r < posterior.rows(); ++r)
      lv.gradient(r, code.index()) =
          -1.0 / (t * std::max(posterior(r, code.index()), kLogFloor));
    return lv;
  };
  CHECK(gradient_check(net, loss, x, 1e-4) <= 1e-4);
}

TEST_CASE("gradient check flags a corrupted gradient") {
  Rng rng(25);
  const Network net = make_net(rng, {5, 4}, {Activation::identity});
  const Matrix x = random_matrix(rng, 3, 5);
  const Matrix target = random_matrix(rng, 3, 4);
  const auto corrupted = [&](const Matrix& out) {
    LossValue lv = mse_loss(out, target);
    lv.gradient(0, 0) *= 2.0;  // injected fault
    return lv;
  };
  CHECK(gradient_check(net, corrupted, x, 1e-4) > 0.1);
}

TEST_CASE("gradient check validates its step size") {
  Rng rng(26);
  const Network net = make_net(rng, {3, 2}, {Activation::identity});
  const Matrix x = random_matrix(rng, 2, 3);
  const auto loss = [&](const Matrix& out) { return mse_loss(out, Matrix::Zero(2, 2)); };
  CHECK_THROWS_AS(gradient_check(net, loss, x, 0.0), ValidationError);
}
