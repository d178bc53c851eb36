#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "trustlora/hashing.hpp"
#include "trustlora/rng.hpp"

using namespace trustlora;

TEST_CASE("rng streams are reproducible from the seed") {
    Rng a(42);
    Rng b(42);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
    Rng c(43);
    CHECK(Rng(42).next_u64() != c.next_u64());
}

TEST_CASE("unit draws stay inside the half-open interval") {
    Rng rng(1);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.next_unit();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("gaussian draws have roughly standard moments") {
    Rng rng(2);
    const int n = 100000;
    double sum = 0.0;
    double sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.next_gaussian();
        REQUIRE(std::isfinite(z));
        sum += z;
        sq += z * z;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("next_below is bounded and covers small ranges") {
    Rng rng(3);
    std::vector<int> seen(5, 0);
    for (int i = 0; i < 5000; ++i) {
        const auto v = rng.next_below(5);
        REQUIRE(v < 5);
        ++seen[static_cast<std::size_t>(v)];
    }
    for (const int count : seen) {
        CHECK(count > 800);
    }
}

TEST_CASE("derived seeds differ per tag but are stable") {
    const auto a = derive_seed(7, "data");
    const auto b = derive_seed(7, "train");
    CHECK(a != b);
    CHECK(a == derive_seed(7, "data"));
    CHECK(a != derive_seed(8, "data"));
}

TEST_CASE("sha256 matches known answers") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
