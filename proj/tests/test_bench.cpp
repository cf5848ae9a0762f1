#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mala/bench.hpp"

using mala::BenchRecord;
using mala::Form;
using mala::Mechanism;

namespace {

std::vector<BenchRecord> synthetic(double exponent) {
    std::vector<BenchRecord> recs;
    for (std::size_t n : {1024u, 2048u, 4096u, 8192u, 16384u}) {
        BenchRecord r;
        r.mechanism = Mechanism::Mala;
        r.form = Form::Streamed;
        r.n = n;
        r.d = 64;
        r.wall_time = 1e-7 * std::pow(static_cast<double>(n), exponent);
        r.repeats = 3;
        recs.push_back(r);
    }
    return recs;
}

}  // namespace

TEST_CASE("slope_fit recovers exact power laws") {
    CHECK(mala::slope_fit(synthetic(1.0)) == Catch::Approx(1.0).margin(1e-9));
    CHECK(mala::slope_fit(synthetic(2.0)) == Catch::Approx(2.0).margin(1e-9));
}

TEST_CASE("slope_fit input validation") {
    auto recs = synthetic(1.0);
    recs.resize(3);
    CHECK_THROWS(mala::slope_fit(recs));

    // 4 records but only a 4x span in n.
    std::vector<BenchRecord> narrow;
    for (std::size_t n : {1024u, 2048u, 3072u, 4096u}) {
        BenchRecord r;
        r.n = n;
        r.wall_time = 1e-3;
        narrow.push_back(r);
    }
    CHECK_THROWS(mala::slope_fit(narrow));
}

TEST_CASE("time_forward preconditions") {
    CHECK_THROWS(mala::time_forward(Mechanism::Mala, Form::Streamed, 16, 4, 4,
                                    /*repeats=*/2, 0));
    CHECK_THROWS(mala::time_forward(Mechanism::Softmax, Form::Streamed, 16, 4, 4, 3, 0));
}

TEST_CASE("memory cap rejects quadratic form, admits streamed") {
    const std::size_t cap = 64ull << 20;  // 64 MB; 4096^2 doubles = 128 MB
    CHECK_THROWS_AS(mala::time_forward(Mechanism::Softmax, Form::Quadratic, 4096, 8, 8,
                                       3, 0, cap),
                    mala::MemoryCapError);
    const auto rec =
        mala::time_forward(Mechanism::Mala, Form::Streamed, 4096, 8, 8, 3, 0, cap);
    CHECK(rec.wall_time > 0.0);
    CHECK(rec.repeats == 3);
}

TEST_CASE("small measured records are well formed") {
    const auto rec =
        mala::time_forward(Mechanism::Linear, Form::Quadratic, 64, 8, 8, 3, 1);
    CHECK(rec.n == 64);
    CHECK(rec.wall_time > 0.0);
    CHECK(mala::form_name(rec.form) == std::string("quadratic"));
}
