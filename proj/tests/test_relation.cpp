#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "painnet/gradcheck.hpp"
#include "painnet/loss.hpp"
#include "painnet/relation.hpp"

using namespace painnet;

TEST_CASE("euccos on identical and antipodal vectors", "[relation]") {
    Eigen::VectorXd a(3);
    a << 1.0, -2.0, 0.5;
    CompareTranscript t;

    SECTION("a == b gives [0, 1]") {
        const Eigen::VectorXd out = compare(a, a, Comparison::kEucCos, nullptr, t);
        CHECK(out(0) == 0.0);
        CHECK(out(1) == Catch::Approx(1.0));
    }
    SECTION("a == -b gives [2|a|, -1]") {
        const Eigen::VectorXd out = compare(a, (-a).eval(), Comparison::kEucCos, nullptr, t);
        CHECK(out(0) == Catch::Approx(2.0 * a.norm()));
        CHECK(out(1) == Catch::Approx(-1.0));
    }
    SECTION("zero-norm convention: cos = 0") {
        const Eigen::VectorXd zero = Eigen::VectorXd::Zero(3);
        const Eigen::VectorXd out = compare(zero, a, Comparison::kEucCos, nullptr, t);
        CHECK(out(0) == Catch::Approx(a.norm()));
        CHECK(out(1) == 0.0);
    }
    SECTION("dimension mismatch") {
        Eigen::VectorXd b(2);
        b << 1.0, 2.0;
        CHECK_THROWS_AS(compare(a, b, Comparison::kEucCos, nullptr, t), Error);
    }
}

TEST_CASE("elementwise-symmetric variants commute", "[relation]") {
    Rng rng(61);
    Eigen::VectorXd a(5), b(5);
    for (int i = 0; i < 5; ++i) {
        a(i) = rng.uniform(-1.0, 1.0);
        b(i) = rng.uniform(-1.0, 1.0);
    }
    for (Comparison variant : {Comparison::kEucCos, Comparison::kSubt, Comparison::kMult}) {
        CompareTranscript t1, t2;
        const Eigen::VectorXd ab = compare(a, b, variant, nullptr, t1);
        const Eigen::VectorXd ba = compare(b, a, variant, nullptr, t2);
        CHECK((ab - ba).cwiseAbs().maxCoeff() < 1e-15);
    }

    SECTION("subt of identical vectors is the zero vector") {
        CompareTranscript t;
        CHECK(compare(a, a, Comparison::kSubt, nullptr, t).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("relation score follows the two-layer formula", "[relation]") {
    SECTION("zero parameters give zero") {
        RelationMlp mlp(4);
        MlpTranscript t;
        Eigen::VectorXd c(4);
        c << 1.0, -1.0, 2.0, 0.5;
        CHECK(relation_score(mlp, c, t) == 0.0);
    }
    SECTION("hand-set identity case") {
        RelationMlp mlp(2);
        mlp.w1.value << 1.0, 0.0, 0.0, 1.0; // identity
        mlp.w2.value << 1.0, 1.0;
        Eigen::VectorXd c(2);
        c << 3.0, -2.0;
        MlpTranscript t;
        CHECK(relation_score(mlp, c, t) == Catch::Approx(3.0)); // ReLU -> [3, 0] -> 3
    }
    SECTION("gradients pass finite differences") {
        Rng rng(71);
        auto problem = gradcheck::make_mlp_problem(rng, 6);
        const CheckReport r = fd_check(problem, 1e-5, 1e-4, rng);
        CHECK(r.pass);
    }
}

TEST_CASE("softmax over relation scores", "[relation]") {
    SECTION("equal scores give the uniform distribution") {
        const EpisodeProbs probs = softmax_probs(Eigen::VectorXd::Constant(11, 3.7));
        for (int c = 0; c < 11; ++c) CHECK(probs.p(c) == Catch::Approx(1.0 / 11.0));
    }
    SECTION("a 10-vs-0 gap concentrates the mass") {
        Eigen::VectorXd scores = Eigen::VectorXd::Zero(11);
        scores(0) = 10.0;
        const EpisodeProbs probs = softmax_probs(scores);
        const double expected = std::exp(10.0) / (std::exp(10.0) + 10.0);
        CHECK(probs.p(0) == Catch::Approx(expected).epsilon(1e-9));
        CHECK(probs.p(0) > 0.9995);
    }
    SECTION("probabilities sum to one") {
        Rng rng(81);
        Eigen::VectorXd scores(11);
        for (int c = 0; c < 11; ++c) scores(c) = rng.uniform(-5.0, 5.0);
        const EpisodeProbs probs = softmax_probs(scores);
        CHECK(std::abs(probs.p.sum() - 1.0) < 1e-9);
        for (int c = 0; c < 11; ++c) {
            CHECK(probs.p(c) > 0.0);
            CHECK(probs.p(c) < 1.0);
        }
    }
    SECTION("shift invariance") {
        Rng rng(82);
        Eigen::VectorXd scores(11);
        for (int c = 0; c < 11; ++c) scores(c) = rng.uniform(-3.0, 3.0);
        const EpisodeProbs base = softmax_probs(scores);
        const EpisodeProbs shifted = softmax_probs((scores.array() + 123.456).matrix());
        CHECK((base.p - shifted.p).cwiseAbs().maxCoeff() < 1e-12);
    }
    SECTION("positive scaling preserves the argmax") {
        Rng rng(83);
        Eigen::VectorXd scores(11);
        for (int c = 0; c < 11; ++c) scores(c) = rng.uniform(-3.0, 3.0);
        auto argmax = [](const Eigen::VectorXd& p) {
            int best = 0;
            for (int c = 1; c < 11; ++c) {
                if (p(c) > p(best)) best = c;
            }
            return best;
        };
        CHECK(argmax(softmax_probs(scores).p) == argmax(softmax_probs((7.0 * scores).eval()).p));
    }
    SECTION("wrong count is rejected") {
        CHECK_THROWS_AS(softmax_probs(Eigen::VectorXd::Zero(10)), Error);
    }
}

TEST_CASE("every comparison variant passes finite differences", "[relation]") {
    Rng rng(91);
    for (Comparison variant : {Comparison::kEucCos, Comparison::kSubt, Comparison::kMult,
                               Comparison::kNn, Comparison::kSubMultNn}) {
        auto problem = gradcheck::make_compare_problem(rng, variant, 6);
        const CheckReport r = fd_check(problem, 1e-5, 1e-4, rng);
        INFO(comparison_name(variant) << " " << r.max_rel_err());
        CHECK(r.pass);
    }
}

TEST_CASE("composite relation path is end-to-end differentiable", "[relation]") {
    Rng rng(93);
    for (Comparison variant : {Comparison::kEucCos, Comparison::kSubt, Comparison::kMult,
                               Comparison::kNn, Comparison::kSubMultNn}) {
        auto problem = gradcheck::make_relation_composite_problem(rng, variant, 5);
        const CheckReport r = fd_check(problem, 1e-5, 1e-4, rng);
        INFO(comparison_name(variant) << " " << r.max_rel_err());
        CHECK(r.pass);
    }
}
