#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>

#include "retgen/mips.hpp"

using namespace retgen;
using namespace retgen::index;

namespace {

// independent oracle: full scan with the same (score desc, id asc) order
std::vector<SearchHit> naive_top_k(const std::vector<float>& embs, int64_t dim,
                                   const std::vector<int64_t>& ids, std::span<const float> q,
                                   int64_t k) {
    std::vector<SearchHit> hits;
    for (size_t r = 0; r < ids.size(); ++r) {
        float s = 0.0f;
        for (int64_t j = 0; j < dim; ++j) s += embs[r * size_t(dim) + size_t(j)] * q[size_t(j)];
        hits.push_back({ids[r], s});
    }
    std::sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });
    hits.resize(std::min(size_t(k), hits.size()));
    return hits;
}

std::vector<float> random_embeddings(int64_t n, int64_t dim, Rng& rng) {
    std::vector<float> out(size_t(n * dim));
    for (auto& v : out) v = float(rng.normal());
    return out;
}

std::vector<int64_t> iota_ids(int64_t n) {
    std::vector<int64_t> ids(size_t(n), 0);
    for (int64_t i = 0; i < n; ++i) ids[size_t(i)] = i;
    return ids;
}

bool same_hits(const std::vector<SearchHit>& a, const std::vector<SearchHit>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i)
        if (a[i].id != b[i].id || a[i].score != b[i].score) return false;
    return true;
}

} // namespace

TEST_CASE("hand-built bank: scores, ties, degenerate queries") {
    // e0=(1,0), e1=(0,1), e2=(1,1)
    std::vector<float> embs{1, 0, 0, 1, 1, 1};
    auto ix = MipsIndex::build_exact(embs, 2, {0, 1, 2});
    CHECK(ix.size() == 3);

    std::vector<float> q{1, 0};
    auto hits = ix.top_k(q, 2);
    REQUIRE(hits.size() == 2);
    CHECK(hits[0].id == 0); // ties at score 1.0 break to the lower id
    CHECK(hits[0].score == 1.0f);
    CHECK(hits[1].id == 2);
    CHECK(hits[1].score == 1.0f);

    std::vector<float> zero{0, 0};
    auto zhits = ix.top_k(zero, 2);
    CHECK(zhits[0].id == 0);
    CHECK(zhits[1].id == 1);

    CHECK(ix.top_k(q, 10).size() == 3); // k beyond the bank returns everything

    std::vector<float> bad{1, 0, 0};
    CHECK_THROWS_AS(ix.top_k(bad, 1), ContractError);
    CHECK_THROWS_AS(MipsIndex::build_exact(embs, 2, {0, 1, 1}), ContractError);
}

TEST_CASE("exclusions") {
    std::vector<float> embs{1, 0, 0, 1, 1, 1};
    auto ix = MipsIndex::build_exact(embs, 2, {0, 1, 2});
    std::vector<float> q{2, 1}; // unique argmax is id 2 (score 3)

    auto top = ix.top_k(q, 1);
    CHECK(top[0].id == 2);
    auto excl = ix.exclude_then_top_k(q, 1, {2});
    CHECK(excl[0].id == 0); // second best promotes to rank 1

    CHECK(same_hits(ix.exclude_then_top_k(q, 3, {}), ix.top_k(q, 3)));

    auto none = ix.exclude_then_top_k(q, 3, {0, 1, 2});
    CHECK(none.empty()); // retrievable set exhausted
}

TEST_CASE("exact mode equals the naive oracle on random banks") {
    Rng rng(2024);
    for (int64_t n : {10, 1000}) {
        for (int64_t dim : {8, 64}) {
            auto embs = random_embeddings(n, dim, rng);
            auto ids = iota_ids(n);
            auto ix = MipsIndex::build_exact(embs, dim, ids);
            for (int qi = 0; qi < 25; ++qi) {
                std::vector<float> q(size_t(dim), 0.0f);
                for (auto& v : q) v = float(rng.normal());
                int64_t k = 1 + int64_t(rng.bounded(10));
                CHECK(same_hits(ix.top_k(q, k), naive_top_k(embs, dim, ids, q, k)));
            }
        }
    }
}

TEST_CASE("clustered mode") {
    Rng rng(7);
    const int64_t n = 100, dim = 16;
    auto embs = random_embeddings(n, dim, rng);
    auto ids = iota_ids(n);
    auto exact = MipsIndex::build_exact(embs, dim, ids);

    SUBCASE("one cluster per entry equals exact mode") {
        ClusterOptions opts{int(n), int(n), 10, 3};
        auto ix = MipsIndex::build_clustered(embs, dim, ids, opts);
        for (int qi = 0; qi < 10; ++qi) {
            std::vector<float> q(size_t(dim), 0.0f);
            for (auto& v : q) v = float(rng.normal());
            CHECK(same_hits(ix.top_k(q, 5), exact.top_k(q, 5)));
        }
    }

    SUBCASE("probing all clusters recovers recall 1.0") {
        ClusterOptions opts{4, 4, 10, 3};
        auto ix = MipsIndex::build_clustered(embs, dim, ids, opts);
        for (int qi = 0; qi < 20; ++qi) {
            std::vector<float> q(size_t(dim), 0.0f);
            for (auto& v : q) v = float(rng.normal());
            CHECK(same_hits(ix.top_k(q, 5), exact.top_k(q, 5)));
        }
    }

    SUBCASE("recall@5 is non-decreasing in probes") {
        ClusterOptions opts{8, 1, 10, 3};
        auto ix = MipsIndex::build_clustered(embs, dim, ids, opts);
        std::vector<std::vector<float>> queries;
        for (int qi = 0; qi < 40; ++qi) {
            std::vector<float> q(size_t(dim), 0.0f);
            for (auto& v : q) v = float(rng.normal());
            queries.push_back(std::move(q));
        }
        double prev = -1.0;
        for (int probes = 1; probes <= 8; ++probes) {
            ix.set_probes(probes);
            int found = 0, total = 0;
            for (const auto& q : queries) {
                auto truth = exact.top_k(q, 5);
                auto got = ix.top_k(q, 5);
                for (const auto& t : truth) {
                    ++total;
                    for (const auto& g : got)
                        if (g.id == t.id) {
                            ++found;
                            break;
                        }
                }
            }
            double recall = double(found) / double(total);
            CHECK(recall >= prev);
            prev = recall;
        }
        CHECK(prev == 1.0); // probes == clusters
    }

    SUBCASE("degenerate cluster configs are refused") {
        CHECK_THROWS_AS(
            MipsIndex::build_clustered(embs, dim, ids, ClusterOptions{int(n) + 1, 1, 10, 0}),
            ContractError);
        CHECK_THROWS_AS(MipsIndex::build_clustered(embs, dim, ids, ClusterOptions{0, 1, 10, 0}),
                        ContractError);
    }
}

TEST_CASE("positive scaling keeps the top-k set and order") {
    Rng rng(99);
    const int64_t n = 50, dim = 8;
    auto embs = random_embeddings(n, dim, rng);
    auto ix = MipsIndex::build_exact(embs, dim, iota_ids(n));
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<float> q(size_t(dim), 0.0f);
        for (auto& v : q) v = float(rng.normal());
        auto base = ix.top_k(q, 7);
        float c = float(rng.uniform() * 9.9 + 0.1);
        std::vector<float> scaled = q;
        for (auto& v : scaled) v *= c;
        auto again = ix.top_k(scaled, 7);
        REQUIRE(base.size() == again.size());
        for (size_t i = 0; i < base.size(); ++i) CHECK(base[i].id == again[i].id);
    }
}

TEST_CASE("save/load round trip") {
    Rng rng(5);
    const int64_t n = 100, dim = 12;
    auto embs = random_embeddings(n, dim, rng);
    auto ids = iota_ids(n);

    SUBCASE("query results survive the round trip") {
        auto ix = MipsIndex::build_clustered(embs, dim, ids, ClusterOptions{5, 2, 10, 1});
        std::string path = "index_roundtrip.bin";
        ix.save(path);
        auto back = MipsIndex::load(path);
        CHECK(back.mode() == IndexMode::clustered);
        CHECK(back.probes() == 2);
        for (int qi = 0; qi < 20; ++qi) {
            std::vector<float> q(size_t(dim), 0.0f);
            for (auto& v : q) v = float(rng.normal());
            CHECK(same_hits(ix.top_k(q, 5), back.top_k(q, 5)));
        }
        std::remove(path.c_str());
    }

    SUBCASE("empty index round trips") {
        auto ix = MipsIndex::build_exact({}, 4, {});
        std::string path = "index_empty.bin";
        ix.save(path);
        auto back = MipsIndex::load(path);
        CHECK(back.size() == 0);
        CHECK(back.dim() == 4);
        std::remove(path.c_str());
    }

    SUBCASE("corrupted magic refuses to load") {
        auto ix = MipsIndex::build_exact(embs, dim, ids);
        std::string path = "index_corrupt.bin";
        ix.save(path);
        auto data = read_text_file(path);
        data[1] = 'Z';
        write_text_file(path, data);
        CHECK_THROWS_AS(MipsIndex::load(path), FormatError);
        // truncation is also a format error, not a partial load
        ix.save(path);
        write_text_file(path, read_text_file(path).substr(0, 40));
        CHECK_THROWS_AS(MipsIndex::load(path), FormatError);
        std::remove(path.c_str());
    }
}
