#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "aural/rng.hpp"
#include "aural/tape.hpp"
#include "test_util.hpp"

using namespace aural;
using testutil::random_array;

namespace {

Tensor named_leaf(Tape& t, Array a, const std::string& name) {
  a.requires_grad = true;
  a.name = name;
  return t.leaf(std::move(a));
}

}  // namespace

TEST_CASE("matmul identity") {
  Tape t(Dtype::f64);
  Array id = Array::zeros({3, 3});
  for (int i = 0; i < 3; ++i) id.data[i * 3 + i] = 1.0;
  Array v({3, 1}, {2.0, -1.0, 0.5});
  Tensor out = t.matmul(t.constant(id), t.constant(v));
  CHECK(out.value().shape == std::vector<int64_t>{3, 1});
  for (int i = 0; i < 3; ++i) CHECK(out.value().data[i] == doctest::Approx(v.data[i]));
}

TEST_CASE("softmax symmetry") {
  Tape t(Dtype::f64);
  Tensor out = t.softmax(t.constant(Array({2}, {0.0, 0.0})));
  CHECK(out.value().data[0] == doctest::Approx(0.5));
  CHECK(out.value().data[1] == doctest::Approx(0.5));
}

TEST_CASE("rms-normalize zero input stays zero") {
  Tape t(Dtype::f64);
  Tensor out = t.rms_normalize(t.constant(Array::zeros({4})), 1e-6);
  for (double v : out.value().data) CHECK(v == 0.0);
}

TEST_CASE("shape mismatch errors name both shapes") {
  Tape t;
  Tensor a = t.constant(Array::zeros({2, 3}));
  Tensor b = t.constant(Array::zeros({4, 5}));
  CHECK_THROWS_WITH_AS(t.matmul(a, b), doctest::Contains("[2, 3]"), std::invalid_argument);
  CHECK_THROWS_AS(t.add(t.constant(Array::zeros({2, 3})), t.constant(Array::zeros({2, 4}))),
                  std::invalid_argument);
}

TEST_CASE("unknown op kind rejected") {
  Tape t;
  Tensor a = t.constant(Array::zeros({2}));
  CHECK_THROWS_AS(t.forward_op("transpose", {a}), std::invalid_argument);
}

TEST_CASE("backward requires scalar root") {
  Tape t;
  Tensor a = named_leaf(t, Array::zeros({2, 2}), "a");
  CHECK_THROWS_AS(t.backward(a), std::invalid_argument);
}

TEST_CASE("sum-of-squares gradient is 2x") {
  Tape t(Dtype::f64);
  Tensor x = named_leaf(t, Array({2}, {1.0, 2.0}), "x");
  GradMap g = t.backward(t.sum_of_squares(x));
  CHECK(g.at("x").data[0] == doctest::Approx(2.0));
  CHECK(g.at("x").data[1] == doctest::Approx(4.0));
}

TEST_CASE("softmax cross-entropy gradient at uniform logits") {
  // vocab 2, target 0: d/dlogits of -log_softmax(logits)[0] = p - onehot.
  Tape t(Dtype::f64);
  Tensor logits = named_leaf(t, Array({1, 2}, {0.0, 0.0}), "logits");
  Tensor lp = t.log_softmax(logits);
  Tensor onehot = t.constant(Array({1, 2}, {-1.0, 0.0}));  // -1 at target
  Tensor loss = t.mul_scalar(t.mean(t.mul(lp, onehot)), 2.0);  // = -lp[0]
  GradMap g = t.backward(loss);
  CHECK(g.at("logits").data[0] == doctest::Approx(-0.5));
  CHECK(g.at("logits").data[1] == doctest::Approx(0.5));
}

TEST_CASE("per-op gradients match central finite differences") {
  // 20 random small configurations per op kind, 64-bit mode.
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    std::map<std::string, Array> params;
    params["x"] = random_array({3, 4}, rng);
    params["y"] = random_array({3, 4}, rng);
    params["w"] = random_array({4, 5}, rng);
    params["m"] = random_array({3, 1}, rng, 0.0);
    for (auto& v : params["m"].data) v = rng.uniform() < 0.5 ? 0.0 : 1.0;

    struct Case {
      const char* tag;
      std::function<Tensor(Tape&, Tensor, Tensor, Tensor, Tensor)> build;
    };
    std::vector<Case> cases = {
        {"matmul", [](Tape& t, Tensor x, Tensor, Tensor w, Tensor) { return t.matmul(x, w); }},
        {"matmul_tb",
         [](Tape& t, Tensor x, Tensor y, Tensor, Tensor) { return t.matmul(x, y, false, true); }},
        {"add", [](Tape& t, Tensor x, Tensor y, Tensor, Tensor) { return t.add(x, y); }},
        {"mul", [](Tape& t, Tensor x, Tensor y, Tensor, Tensor) { return t.mul(x, y); }},
        {"softmax", [](Tape& t, Tensor x, Tensor, Tensor, Tensor) { return t.softmax(x); }},
        {"log_softmax",
         [](Tape& t, Tensor x, Tensor, Tensor, Tensor) { return t.log_softmax(x); }},
        {"rms", [](Tape& t, Tensor x, Tensor, Tensor, Tensor) { return t.rms_normalize(x); }},
        {"gelu", [](Tape& t, Tensor x, Tensor, Tensor, Tensor) { return t.gelu(x); }},
        {"msa",
         [](Tape& t, Tensor x, Tensor y, Tensor, Tensor m) {
           return t.masked_select_add(x, y, m);
         }},
        {"slice", [](Tape& t, Tensor x, Tensor, Tensor, Tensor) { return t.slice(x, 1, 1, 3); }},
        {"concat",
         [](Tape& t, Tensor x, Tensor y, Tensor, Tensor) {
           return t.concat({x, y}, 0);
         }},
        {"mean", [](Tape& t, Tensor x, Tensor, Tensor, Tensor) { return t.mean(x); }},
        {"sos", [](Tape& t, Tensor x, Tensor, Tensor, Tensor) { return t.sum_of_squares(x); }},
        {"embedding",
         [](Tape& t, Tensor, Tensor, Tensor w, Tensor) {
           return t.embedding(w, {0, 2, 2, 1});
         }},
    };

    for (auto& c : cases) {
      // Build once for gradients.
      Tape t(Dtype::f64);
      Array xa = params["x"];
      xa.requires_grad = true;
      xa.name = "x";
      Array ya = params["y"];
      ya.requires_grad = true;
      ya.name = "y";
      Array wa = params["w"];
      wa.requires_grad = true;
      wa.name = "w";
      Tensor x = t.leaf(xa), y = t.leaf(ya), w = t.leaf(wa);
      Tensor m = t.constant(params["m"]);
      Tensor out = c.build(t, x, y, w, m);
      Tensor loss = t.sum_of_squares(t.add_scalar(out, 0.3));
      GradMap grads = t.backward(loss);

      auto value_of = [&](const std::map<std::string, Array>& p) {
        Tape tt(Dtype::f64);
        Tensor px = tt.leaf(p.at("x"));
        Tensor py = tt.leaf(p.at("y"));
        Tensor pw = tt.leaf(p.at("w"));
        Tensor pm = tt.constant(p.at("m"));
        Tensor o = c.build(tt, px, py, pw, pm);
        return tt.value(tt.sum_of_squares(tt.add_scalar(o, 0.3))).data[0];
      };

      Rng coord_rng(seed * 977);
      auto coords = testutil::sample_coords(params, coord_rng, 2);
      // Drop coords for params without gradients in this case.
      std::vector<std::pair<std::string, int64_t>> use;
      for (auto& cpair : coords) {
        if (grads.count(cpair.first) && cpair.first != "m") use.push_back(cpair);
      }
      auto rep = testutil::fd_check(value_of, params, grads, use);
      INFO(c.tag << " seed " << seed << " worst " << rep.worst);
      CHECK(rep.max_rel_err < 1e-4);
    }
  }
}

TEST_CASE("backward linearity: grad of sum equals sum of grads") {
  Rng rng(7);
  Array base = random_array({4, 4}, rng);

  auto build = [&](int which) {
    // which: 0 -> L1, 1 -> L2, 2 -> L1 + L2 (disjoint subtrees over one leaf)
    Tape t(Dtype::f64);
    Array a = base;
    a.requires_grad = true;
    a.name = "p";
    Tensor p = t.leaf(a);
    Tensor l1 = t.sum_of_squares(t.gelu(p));
    Tensor l2 = t.mean(t.mul(p, p));
    Tensor root = which == 0 ? l1 : which == 1 ? l2 : t.add(l1, l2);
    return t.backward(root).at("p");
  };

  Array g1 = build(0), g2 = build(1), gsum = build(2);
  for (int64_t i = 0; i < base.numel(); ++i) {
    CHECK(gsum.data[i] == g1.data[i] + g2.data[i]);  // exact in 64-bit
  }
}

TEST_CASE("deterministic: same seed gives bit-identical forward and backward") {
  auto run = [&]() {
    Rng rng(123);
    Tape t(Dtype::f32);
    Array a = random_array({6, 6}, rng);
    a.requires_grad = true;
    a.name = "a";
    Tensor x = t.leaf(a);
    Tensor h = t.gelu(t.matmul(x, x, false, true));
    Tensor loss = t.mean(h);
    GradMap g = t.backward(loss);
    return std::make_pair(t.value(loss).data[0], g.at("a").data);
  };
  auto [l1, g1] = run();
  auto [l2, g2] = run();
  CHECK(l1 == l2);
  CHECK(g1 == g2);
}

TEST_CASE("f32 mode rounds values through float") {
  Tape t(Dtype::f32);
  Tensor a = t.constant(Array({1}, {1.0000000001}));
  Tensor out = t.add_scalar(a, 1e-12);
  float f = static_cast<float>(out.value().data[0]);
  CHECK(static_cast<double>(f) == out.value().data[0]);
}

TEST_CASE("unreachable leaves get zero gradients") {
  Tape t(Dtype::f64);
  Tensor used = named_leaf(t, Array({2}, {1.0, 2.0}), "used");
  Tensor unused = named_leaf(t, Array({3}, {1.0, 2.0, 3.0}), "unused");
  (void)unused;
  GradMap g = t.backward(t.sum_of_squares(used));
  REQUIRE(g.count("unused") == 1);
  for (double v : g.at("unused").data) CHECK(v == 0.0);
}

TEST_CASE("masked-select-add selects by mask") {
  Tape t(Dtype::f64);
  Tensor a = t.constant(Array({2, 2}, {1, 2, 3, 4}));
  Tensor b = t.constant(Array({2, 2}, {10, 20, 30, 40}));
  Tensor m = t.constant(Array({2, 1}, {0, 1}));
  Tensor out = t.masked_select_add(a, b, m);
  CHECK(out.value().data == std::vector<double>{1, 2, 30, 40});
}

TEST_CASE("embedding lookup rejects out-of-range ids") {
  Tape t;
  Tensor table = t.constant(Array::zeros({4, 2}));
  CHECK_THROWS_AS(t.embedding(table, {5}), std::out_of_range);
}

TEST_CASE("forward_op string dispatch covers the full vocabulary") {
  Tape t(Dtype::f64);
  Tensor x = t.constant(Array({2, 2}, {1, 2, 3, 4}));
  Tensor m = t.constant(Array({2, 1}, {1, 0}));
  CHECK(t.forward_op("add", {x, x}).value().data[0] == 2.0);
  CHECK(t.forward_op("mul", {x, x}).value().data[3] == 16.0);
  CHECK(t.forward_op("matmul", {x, x}).value().shape == std::vector<int64_t>{2, 2});
  CHECK(t.forward_op("softmax", {x}).value().shape == std::vector<int64_t>{2, 2});
  CHECK(t.forward_op("log-softmax", {x}).value().data[0] < 0.0);
  CHECK(t.forward_op("rms-normalize", {x}).value().shape == std::vector<int64_t>{2, 2});
  CHECK(t.forward_op("gelu", {x}).value().data[0] > 0.0);
  CHECK(t.forward_op("masked-select-add", {x, x, m}).value().data[0] == 1.0);
  Attrs sl;
  sl.axis = 0;
  sl.start = 0;
  sl.end = 1;
  CHECK(t.forward_op("slice", {x}, sl).value().shape == std::vector<int64_t>{1, 2});
  Attrs cc;
  cc.axis = 0;
  CHECK(t.forward_op("concat", {x, x}, cc).value().shape == std::vector<int64_t>{4, 2});
  CHECK(t.forward_op("mean", {x}).value().data[0] == 2.5);
  CHECK(t.forward_op("sum-of-squares", {x}).value().data[0] == 30.0);
  Attrs em;
  em.ids = {1};
  em.ids_shape = {1};
  CHECK(t.forward_op("embedding-lookup", {x}, em).value().data[0] == 3.0);
}
