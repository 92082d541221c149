#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "test_util.hpp"
#include "vecrank/nn.hpp"
#include "vecrank/rng.hpp"

using namespace vecrank;

TEST_CASE("elu is identity above zero and exp(z)-1 below") {
  REQUIRE(elu(1.5) == 1.5);
  REQUIRE(elu(0.0) == 0.0);
  REQUIRE_THAT(elu(-1.0), Catch::Matchers::WithinAbs(std::exp(-1.0) - 1.0, 1e-15));
}

TEST_CASE("mlp layout: weights then bias per layer") {
  Rng rng(1);
  Mlp net = Mlp::create({3, 4, 2}, rng);
  REQUIRE(net.param_count() == 3 * 4 + 4 + 4 * 2 + 2);
  REQUIRE(net.input_size() == 3);
  REQUIRE(net.output_size() == 2);
}

TEST_CASE("initial weights are glorot-bounded with zero biases") {
  Rng rng(2);
  Mlp net = Mlp::create({10, 6}, rng);
  const double bound = std::sqrt(6.0 / (10 + 6));
  const auto& p = net.params();
  for (int i = 0; i < 60; ++i) {
    REQUIRE(std::abs(p[i]) <= bound);
  }
  for (int i = 60; i < 66; ++i) {
    REQUIRE(p[i] == 0.0);
  }
}

TEST_CASE("single layer forward is an affine map") {
  Rng rng(3);
  Mlp net = Mlp::create({2, 2}, rng);
  net.params() = {1.0, 2.0, 3.0, 4.0, 0.5, -0.5};
  const auto out = net.forward(std::vector<double>{1.0, 1.0});
  REQUIRE_THAT(out[0], Catch::Matchers::WithinAbs(3.5, 1e-15));
  REQUIRE_THAT(out[1], Catch::Matchers::WithinAbs(6.5, 1e-15));
}

TEST_CASE("hidden layers apply elu, output layer does not") {
  Rng rng(4);
  Mlp net = Mlp::create({1, 1, 1}, rng);
  net.params() = {1.0, 0.0, 1.0, 0.0};  // both layers: weight 1, bias 0
  const auto out = net.forward(std::vector<double>{-2.0});
  REQUIRE_THAT(out[0],
               Catch::Matchers::WithinAbs(std::exp(-2.0) - 1.0, 1e-15));
}

namespace {

double weighted_output(const Mlp& net, const std::vector<double>& x,
                       const std::vector<double>& w) {
  const auto out = net.forward(x);
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += w[i] * out[i];
  return s;
}

}  // namespace

TEST_CASE("backward matches central differences on every parameter") {
  Rng rng(5);
  Mlp net = Mlp::create({3, 5, 2}, rng);
  const std::vector<double> x = {0.3, -1.1, 0.7};
  const std::vector<double> w = {0.4, -1.3};

  Mlp::Trace trace;
  net.forward(x, &trace);
  std::vector<double> grad(net.param_count(), 0.0);
  net.backward(trace, w, grad);

  const double worst = grad_check(
      net.params(), [&] { return weighted_output(net, x, w); }, grad);
  REQUIRE(worst < 1e-6);
}

TEST_CASE("backward returns the gradient with respect to the input") {
  Rng rng(6);
  Mlp net = Mlp::create({4, 3, 2}, rng);
  std::vector<double> x = {0.2, -0.4, 1.2, -0.9};
  const std::vector<double> w = {1.0, 0.5};

  Mlp::Trace trace;
  net.forward(x, &trace);
  std::vector<double> grad(net.param_count(), 0.0);
  const auto dx = net.backward(trace, w, grad);

  const double h = 1e-6;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = weighted_output(net, x, w);
    x[i] = saved - h;
    const double down = weighted_output(net, x, w);
    x[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    REQUIRE_THAT(dx[i], Catch::Matchers::WithinAbs(numeric, 1e-6));
  }
}

TEST_CASE("grad accumulates across calls") {
  Rng rng(7);
  Mlp net = Mlp::create({2, 2}, rng);
  const std::vector<double> x = {1.0, 2.0};
  const std::vector<double> w = {1.0, 1.0};
  Mlp::Trace trace;
  net.forward(x, &trace);
  std::vector<double> once(net.param_count(), 0.0);
  net.backward(trace, w, once);
  std::vector<double> twice(net.param_count(), 0.0);
  net.backward(trace, w, twice);
  net.backward(trace, w, twice);
  for (std::size_t i = 0; i < once.size(); ++i) {
    REQUIRE_THAT(twice[i], Catch::Matchers::WithinAbs(2.0 * once[i], 1e-12));
  }
}

TEST_CASE("adagrad scales steps by accumulated squared gradients") {
  std::vector<double> params = {1.0};
  AdaGrad opt(1, 0.1);
  opt.step(params, std::vector<double>{2.0});
  REQUIRE_THAT(params[0],
               Catch::Matchers::WithinAbs(1.0 - 0.1 * 2.0 / std::sqrt(4.0 + 1e-8),
                                          1e-12));
  const double after_first = params[0];
  opt.step(params, std::vector<double>{2.0});
  REQUIRE_THAT(params[0],
               Catch::Matchers::WithinAbs(
                   after_first - 0.1 * 2.0 / std::sqrt(8.0 + 1e-8), 1e-12));
}

TEST_CASE("grad_check flags corrupted gradients") {
  Rng rng(8);
  Mlp net = Mlp::create({2, 3, 1}, rng);
  const std::vector<double> x = {0.5, -0.5};
  const std::vector<double> w = {1.0};
  Mlp::Trace trace;
  net.forward(x, &trace);
  std::vector<double> grad(net.param_count(), 0.0);
  net.backward(trace, w, grad);

  const auto loss = [&] { return weighted_output(net, x, w); };
  REQUIRE(grad_check(net.params(), loss, grad) < 1e-6);
  grad[0] += 0.5;
  REQUIRE(grad_check(net.params(), loss, grad) > 1e-2);
}

TEST_CASE("mlp checkpoints round-trip bit-exactly") {
  const std::string dir = test_util::scratch_dir("ckpt");
  Rng rng(9);
  Mlp net = Mlp::create({4, 6, 3}, rng);
  save_mlp(dir + "/net.ckpt", net);
  const Mlp back = load_mlp(dir + "/net.ckpt");
  REQUIRE(back.sizes() == net.sizes());
  REQUIRE(back.params() == net.params());
}

TEST_CASE("table checkpoints round-trip and reject kind confusion") {
  const std::string dir = test_util::scratch_dir("table");
  std::vector<double> values = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
  save_table(dir + "/t.ckpt", 2, 3, values);
  int rows = 0, cols = 0;
  REQUIRE(load_table(dir + "/t.ckpt", rows, cols) == values);
  REQUIRE(rows == 2);
  REQUIRE(cols == 3);
  REQUIRE_THROWS(load_mlp(dir + "/t.ckpt"));
  std::ofstream(dir + "/junk.ckpt") << "not a checkpoint";
  REQUIRE_THROWS(load_mlp(dir + "/junk.ckpt"));
}
