#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>

#include "colafier/core.hpp"
#include "colafier/nn.hpp"
#include "support/fd_check.hpp"

using namespace colafier;

namespace {

Vec one_hot(std::size_t n, std::size_t c) {
    Vec v(n, 0.0);
    v[c] = 1.0;
    return v;
}

void zero_params(SubnetParams& p) {
    for (Vec* t : parameter_tensors(p)) std::fill(t->begin(), t->end(), 0.0);
}

}  // namespace

TEST_CASE("gen_forward: zero net gives uniform probabilities") {
    Rng rng(61);
    SubnetParams p = make_gen_subnet(3, {5, 4}, 6, rng);
    zero_params(p);
    ForwardTrace tr;
    Vec probs = gen_forward(p, {0.3, -1.2, 2.0}, tr);
    for (double v : probs) REQUIRE(v == Catch::Approx(1.0 / 6.0).margin(1e-12));
}

TEST_CASE("gen_forward: forced logits saturate the softmax") {
    Rng rng(62);
    SubnetParams p = make_gen_subnet(2, {3}, 2, rng);
    zero_params(p);
    p.head.b = {10.0, -10.0};
    ForwardTrace tr;
    Vec probs = gen_forward(p, {1.0, 1.0}, tr);
    REQUIRE(probs[0] == Catch::Approx(1.0).margin(1e-4));
    REQUIRE(probs[1] == Catch::Approx(0.0).margin(1e-4));
}

TEST_CASE("gen_forward: probabilities sum to one, mismatched input rejected") {
    Rng rng(63);
    SubnetParams p = make_gen_subnet(4, {8, 8}, 3, rng);
    ForwardTrace tr;
    for (int trial = 0; trial < 20; ++trial) {
        Vec x(4);
        for (double& v : x) v = rng.normal(0, 3);
        Vec probs = gen_forward(p, x, tr);
        double s = 0.0;
        for (double v : probs) {
            REQUIRE(v >= 0.0);
            s += v;
        }
        REQUIRE(s == Catch::Approx(1.0).margin(1e-9));
    }
    REQUIRE_THROWS_AS(gen_forward(p, {1.0, 2.0}, tr), std::invalid_argument);
}

TEST_CASE("dis_forward: one-hot label selects its embedding row") {
    Rng rng(64);
    SubnetParams p = make_dis_subnet(3, {4}, 5, rng);
    for (Linear& l : p.backbone) {
        std::fill(l.w.data.begin(), l.w.data.end(), 0.0);
        std::fill(l.b.begin(), l.b.end(), 0.0);
    }
    ForwardTrace tr;
    dis_forward(p, {1.0, 2.0, 3.0}, one_hot(5, 2), tr);
    // zero backbone output, so merged == the selected embedding row
    REQUIRE(tr.merged == p.label_embedding.row(2));

    // soft label: mean of rows 1 and 3
    dis_forward(p, {1.0, 2.0, 3.0}, {0.0, 0.5, 0.0, 0.5, 0.0}, tr);
    for (std::size_t c = 0; c < 4; ++c) {
        REQUIRE(tr.merged[c] ==
                Catch::Approx(0.5 * p.label_embedding(1, c) + 0.5 * p.label_embedding(3, c))
                    .margin(1e-15));
    }
}

TEST_CASE("dis_forward: zero backbone and zero embedding give z = ln_shift") {
    Rng rng(65);
    SubnetParams p = make_dis_subnet(2, {4}, 3, rng);
    zero_params(p);
    for (std::size_t c = 0; c < 4; ++c) p.ln_shift[c] = 0.25 * (c + 1);
    ForwardTrace tr;
    dis_forward(p, {5.0, -5.0}, one_hot(3, 1), tr);
    REQUIRE(tr.z == p.ln_shift);
}

TEST_CASE("dis_forward: rejects labels that are not distributions") {
    Rng rng(66);
    SubnetParams p = make_dis_subnet(2, {4}, 3, rng);
    ForwardTrace tr;
    REQUIRE_THROWS_AS(dis_forward(p, {1.0, 1.0}, {0.6, 0.6, 0.0}, tr), std::invalid_argument);
    REQUIRE_THROWS_AS(dis_forward(p, {1.0, 1.0}, {1.2, -0.2, 0.0}, tr), std::invalid_argument);
    SubnetParams gen = make_gen_subnet(2, {4}, 3, rng);
    REQUIRE_THROWS_AS(dis_forward(gen, {1.0, 1.0}, one_hot(3, 0), tr), std::invalid_argument);
}

TEST_CASE("dis_forward: label information reaches the representation") {
    Rng rng(67);
    SubnetParams p = make_dis_subnet(3, {6, 6}, 4, rng);
    ForwardTrace t1, t2;
    Vec x{0.5, -0.2, 1.0};
    dis_forward(p, x, one_hot(4, 0), t1);
    dis_forward(p, x, one_hot(4, 3), t2);
    REQUIRE(t1.z != t2.z);
}

TEST_CASE("backward: zero upstream gradient gives exactly zero parameter gradients") {
    Rng rng(68);
    SubnetParams p = make_dis_subnet(3, {5}, 4, rng);
    ForwardTrace tr;
    dis_forward(p, {0.1, 0.2, 0.3}, one_hot(4, 1), tr);
    SubnetGrads g = backward(p, tr, Vec(4, 0.0));
    for (Vec* t : gradient_tensors(g, true))
        for (double v : *t) REQUIRE(v == 0.0);
}

TEST_CASE("backward: analytic gradients match central finite differences") {
    Rng rng(69);
    // gen net under CE
    {
        SubnetParams p = make_gen_subnet(4, {6, 5}, 3, rng);
        Vec x(4);
        for (double& v : x) v = rng.normal();
        Vec y = one_hot(3, 2);
        ForwardTrace tr;
        gen_forward(p, x, tr);
        SubnetGrads g = backward(p, tr, ce_loss(y, tr.probs).grad);
        auto ptensors = parameter_tensors(p);
        auto gtensors = gradient_tensors(g, false);
        for (std::size_t t = 0; t < ptensors.size(); ++t) {
            for (std::size_t j = 0; j < ptensors[t]->size(); ++j) {
                const double saved = (*ptensors[t])[j];
                auto eval = [&](double v) {
                    (*ptensors[t])[j] = v;
                    ForwardTrace tt;
                    gen_forward(p, x, tt);
                    (*ptensors[t])[j] = saved;
                    return ce_loss(y, tt.probs).value;
                };
                const double h = 1e-5;
                const double fd = (eval(saved + h) - eval(saved - h)) / (2.0 * h);
                REQUIRE(fd_check::rel_err((*gtensors[t])[j], fd) < 1e-4);
            }
        }
    }
    // dis net under CE with a soft label input
    {
        SubnetParams p = make_dis_subnet(3, {5, 4}, 3, rng);
        Vec x(3);
        for (double& v : x) v = rng.normal();
        Vec y_in{0.2, 0.5, 0.3};
        Vec y = one_hot(3, 0);
        ForwardTrace tr;
        dis_forward(p, x, y_in, tr);
        SubnetGrads g = backward(p, tr, ce_loss(y, tr.probs).grad);
        auto ptensors = parameter_tensors(p);
        auto gtensors = gradient_tensors(g, true);
        for (std::size_t t = 0; t < ptensors.size(); ++t) {
            for (std::size_t j = 0; j < ptensors[t]->size(); ++j) {
                const double saved = (*ptensors[t])[j];
                auto eval = [&](double v) {
                    (*ptensors[t])[j] = v;
                    ForwardTrace tt;
                    dis_forward(p, x, y_in, tt);
                    (*ptensors[t])[j] = saved;
                    return ce_loss(y, tt.probs).value;
                };
                const double h = 1e-5;
                const double fd = (eval(saved + h) - eval(saved - h)) / (2.0 * h);
                REQUIRE(fd_check::rel_err((*gtensors[t])[j], fd) < 1e-4);
            }
        }
    }
}

TEST_CASE("backward: one-hot label touches only its embedding row") {
    Rng rng(70);
    SubnetParams p = make_dis_subnet(3, {5}, 4, rng);
    ForwardTrace tr;
    dis_forward(p, {0.4, -0.1, 0.9}, one_hot(4, 2), tr);
    Vec gp(4);
    for (double& v : gp) v = rng.normal();
    SubnetGrads g = backward(p, tr, gp);
    for (std::size_t r = 0; r < 4; ++r) {
        double mag = 0.0;
        for (std::size_t c = 0; c < 5; ++c) mag += std::abs(g.label_embedding(r, c));
        if (r == 2) {
            REQUIRE(mag > 0.0);
        } else {
            REQUIRE(mag == 0.0);
        }
    }
}

TEST_CASE("backward: stale trace is rejected") {
    Rng rng(71);
    SubnetParams a = make_gen_subnet(3, {5}, 4, rng);
    SubnetParams b = make_gen_subnet(3, {6}, 4, rng);
    ForwardTrace tr;
    gen_forward(a, {1.0, 2.0, 3.0}, tr);
    REQUIRE_THROWS_AS(backward(b, tr, Vec(4, 0.1)), std::invalid_argument);
}

TEST_CASE("adamw_step: zero gradient leaves parameters unchanged at zero decay") {
    Rng rng(72);
    SubnetParams p = make_gen_subnet(3, {4}, 2, rng);
    SubnetParams before = p;
    adamw_step(p, make_zero_grads(p), 0.001, 0.0);
    auto pa = parameter_tensors(p);
    auto pb = parameter_tensors(before);
    for (std::size_t t = 0; t < pa.size(); ++t) REQUIRE(*pa[t] == *pb[t]);
    REQUIRE(p.opt.step == 1);
}

TEST_CASE("adamw_step: bias-corrected first step moves by about lr") {
    Rng rng(73);
    SubnetParams p = make_gen_subnet(2, {2}, 2, rng);
    p.head.b = {1.0, 0.0};
    SubnetGrads g = make_zero_grads(p);
    g.head.b[0] = 1.0;
    adamw_step(p, g, 0.001, 0.0);
    REQUIRE(p.head.b[0] == Catch::Approx(0.999).margin(1e-6));
    REQUIRE(p.head.b[1] == 0.0);
}

TEST_CASE("adamw_step: decoupled decay multiplies weights by (1 - lr*wd)") {
    Rng rng(74);
    SubnetParams p = make_gen_subnet(3, {4}, 2, rng);
    SubnetParams before = p;
    adamw_step(p, make_zero_grads(p), 0.001, 0.001);
    auto pa = parameter_tensors(p);
    auto pb = parameter_tensors(before);
    for (std::size_t t = 0; t < pa.size(); ++t)
        for (std::size_t j = 0; j < pa[t]->size(); ++j)
            REQUIRE((*pa[t])[j] ==
                    Catch::Approx((*pb[t])[j] * (1.0 - 0.001 * 0.001)).margin(1e-15));
}

TEST_CASE("adamw_step: non-finite gradient raises gradient explosion") {
    Rng rng(75);
    SubnetParams p = make_gen_subnet(2, {3}, 2, rng);
    SubnetGrads g = make_zero_grads(p);
    g.head.b[0] = std::numeric_limits<double>::infinity();
    REQUIRE_THROWS_WITH(adamw_step(p, g, 0.001, 0.0),
                        Catch::Matchers::ContainsSubstring("gradient explosion"));
}

TEST_CASE("checkpoint: save/load round trip reproduces forward outputs") {
    Rng rng(76);
    SubnetParams ge = make_gen_subnet(4, {6, 5}, 3, rng);
    SubnetParams ld = make_dis_subnet(4, {6, 5}, 3, rng);
    const std::string path = "test_ckpt.bin";
    save_checkpoint(path, ge, ld);

    Rng rng2(999);
    SubnetParams ge2 = make_gen_subnet(4, {6, 5}, 3, rng2);
    SubnetParams ld2 = make_dis_subnet(4, {6, 5}, 3, rng2);
    load_checkpoint(path, ge2, ld2);

    Vec x{0.1, -0.4, 0.9, 2.0};
    ForwardTrace t1, t2;
    gen_forward(ge, x, t1);
    gen_forward(ge2, x, t2);
    REQUIRE(t1.probs == t2.probs);
    dis_forward(ld, x, {0.2, 0.3, 0.5}, t1);
    dis_forward(ld2, x, {0.2, 0.3, 0.5}, t2);
    REQUIRE(t1.probs == t2.probs);
    REQUIRE(t1.z == t2.z);

    // shape mismatch is rejected
    Rng rng3(5);
    SubnetParams small_ge = make_gen_subnet(4, {3}, 3, rng3);
    SubnetParams small_ld = make_dis_subnet(4, {3}, 3, rng3);
    REQUIRE_THROWS_AS(load_checkpoint(path, small_ge, small_ld), std::runtime_error);
    std::remove(path.c_str());
}
