#include "retgen/mips.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace retgen::index {

namespace {

constexpr char kMagic[4] = {'R', 'G', 'I', 'X'};
constexpr uint32_t kVersion = 1;

float inner_product(const float* a, const float* b, int64_t d) {
    float s = 0.0f;
    for (int64_t i = 0; i < d; ++i) s += a[i] * b[i];
    return s;
}

bool hit_before(const SearchHit& a, const SearchHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
}

} // namespace

void MipsIndex::check_build(const std::vector<float>& embeddings, int64_t dim,
                            const std::vector<int64_t>& ids) const {
    if (dim < 1) throw ContractError("index dimension must be at least 1");
    if (embeddings.size() != ids.size() * size_t(dim))
        throw DimensionError("embedding row count does not match id count");
    std::unordered_set<int64_t> seen;
    for (int64_t id : ids)
        if (!seen.insert(id).second)
            throw ContractError("duplicate entry id: " + std::to_string(id));
}

MipsIndex MipsIndex::build_exact(std::vector<float> embeddings, int64_t dim,
                                 std::vector<int64_t> ids) {
    MipsIndex ix;
    ix.check_build(embeddings, dim, ids);
    ix.dim_ = dim;
    ix.mode_ = IndexMode::exact;
    ix.embeddings_ = std::move(embeddings);
    ix.ids_ = std::move(ids);
    return ix;
}

MipsIndex MipsIndex::build_clustered(std::vector<float> embeddings, int64_t dim,
                                     std::vector<int64_t> ids, const ClusterOptions& opts) {
    MipsIndex ix;
    ix.check_build(embeddings, dim, ids);
    const int64_t n = int64_t(ids.size());
    if (opts.clusters < 1) throw ContractError("cluster count must be at least 1");
    if (int64_t(opts.clusters) > n)
        throw ContractError("cluster count exceeds entry count");
    if (opts.probes < 1) throw ContractError("probe count must be at least 1");
    ix.dim_ = dim;
    ix.mode_ = IndexMode::clustered;
    ix.embeddings_ = std::move(embeddings);
    ix.ids_ = std::move(ids);
    ix.probes_ = opts.probes;

    const int c = opts.clusters;
    // seed centroids from distinct rows
    Rng rng(opts.seed);
    std::vector<int64_t> perm(size_t(n), 0);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    ix.centroids_.assign(size_t(c) * size_t(dim), 0.0f);
    for (int j = 0; j < c; ++j)
        std::copy_n(ix.embeddings_.data() + perm[size_t(j)] * dim, dim,
                    ix.centroids_.data() + int64_t(j) * dim);

    std::vector<int> assign(size_t(n), 0);
    std::vector<float> best_score(size_t(n), 0.0f);
    for (int iter = 0; iter < std::max(1, opts.iterations); ++iter) {
        // assignment by max inner product, ties to the lower centroid index
        for (int64_t i = 0; i < n; ++i) {
            const float* row = ix.embeddings_.data() + i * dim;
            int best = 0;
            float bs = inner_product(row, ix.centroids_.data(), dim);
            for (int j = 1; j < c; ++j) {
                float s = inner_product(row, ix.centroids_.data() + int64_t(j) * dim, dim);
                if (s > bs) {
                    bs = s;
                    best = j;
                }
            }
            assign[size_t(i)] = best;
            best_score[size_t(i)] = bs;
        }
        // recompute centroids as member means
        std::vector<double> sums(size_t(c) * size_t(dim), 0.0);
        std::vector<int64_t> counts(size_t(c), 0);
        for (int64_t i = 0; i < n; ++i) {
            const float* row = ix.embeddings_.data() + i * dim;
            double* dst = sums.data() + int64_t(assign[size_t(i)]) * dim;
            for (int64_t j = 0; j < dim; ++j) dst[j] += row[j];
            ++counts[size_t(assign[size_t(i)])];
        }
        for (int j = 0; j < c; ++j) {
            if (counts[size_t(j)] == 0) {
                // re-seed an empty cluster with the worst-fitting row
                int64_t worst = 0;
                for (int64_t i = 1; i < n; ++i)
                    if (best_score[size_t(i)] < best_score[size_t(worst)]) worst = i;
                std::copy_n(ix.embeddings_.data() + worst * dim, dim,
                            ix.centroids_.data() + int64_t(j) * dim);
                assign[size_t(worst)] = j;
                best_score[size_t(worst)] = std::numeric_limits<float>::max();
                continue;
            }
            for (int64_t k = 0; k < dim; ++k)
                ix.centroids_[size_t(int64_t(j) * dim + k)] =
                    float(sums[size_t(int64_t(j) * dim + k)] / double(counts[size_t(j)]));
        }
    }
    // final assignment defines the inverted lists
    ix.members_.assign(size_t(c), {});
    for (int64_t i = 0; i < n; ++i) {
        const float* row = ix.embeddings_.data() + i * dim;
        int best = 0;
        float bs = inner_product(row, ix.centroids_.data(), dim);
        for (int j = 1; j < c; ++j) {
            float s = inner_product(row, ix.centroids_.data() + int64_t(j) * dim, dim);
            if (s > bs) {
                bs = s;
                best = j;
            }
        }
        ix.members_[size_t(best)].push_back(i);
    }
    return ix;
}

std::span<const float> MipsIndex::embedding_of(int64_t id) const {
    if (id_to_row_.size() != ids_.size()) {
        id_to_row_.clear();
        for (size_t i = 0; i < ids_.size(); ++i) id_to_row_[ids_[i]] = int64_t(i);
    }
    auto it = id_to_row_.find(id);
    if (it == id_to_row_.end()) throw IndexError("unknown entry id: " + std::to_string(id));
    return std::span<const float>(embeddings_.data() + it->second * dim_, size_t(dim_));
}

void MipsIndex::set_probes(int probes) {
    if (probes < 1) throw ContractError("probe count must be at least 1");
    probes_ = probes;
}

template <typename Keep>
std::vector<SearchHit> MipsIndex::search(std::span<const float> query, int64_t k, Keep&& keep) const {
    if (int64_t(query.size()) != dim_)
        throw ContractError("query dimension " + std::to_string(query.size()) +
                            " does not match index dimension " + std::to_string(dim_));
    if (k < 1) throw ContractError("k must be at least 1");
    std::vector<SearchHit> hits;
    auto scan_row = [&](int64_t row) {
        int64_t id = ids_[size_t(row)];
        if (!keep(id)) return;
        hits.push_back({id, inner_product(embeddings_.data() + row * dim_, query.data(), dim_)});
    };
    if (mode_ == IndexMode::exact) {
        hits.reserve(ids_.size());
        for (int64_t i = 0; i < size(); ++i) scan_row(i);
    } else {
        const int c = clusters();
        std::vector<std::pair<float, int>> ranked(size_t(c), {0.0f, 0});
        for (int j = 0; j < c; ++j)
            ranked[size_t(j)] = {inner_product(centroids_.data() + int64_t(j) * dim_, query.data(), dim_), j};
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        const int np = std::min(probes_, c);
        for (int p = 0; p < np; ++p)
            for (int64_t row : members_[size_t(ranked[size_t(p)].second)]) scan_row(row);
    }
    const size_t take = std::min(size_t(k), hits.size());
    std::partial_sort(hits.begin(), hits.begin() + long(take), hits.end(), hit_before);
    hits.resize(take);
    return hits;
}

std::vector<SearchHit> MipsIndex::top_k(std::span<const float> query, int64_t k) const {
    return search(query, k, [](int64_t) { return true; });
}

std::vector<SearchHit> MipsIndex::exclude_then_top_k(std::span<const float> query, int64_t k,
                                                     const std::unordered_set<int64_t>& excluded) const {
    if (excluded.empty()) return top_k(query, k);
    return search(query, k, [&excluded](int64_t id) { return excluded.count(id) == 0; });
}

void MipsIndex::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write index: " + path);
    os.write(kMagic, 4);
    io::write_u32(os, kVersion);
    io::write_u32(os, uint32_t(dim_));
    io::write_u64(os, uint64_t(ids_.size()));
    io::write_u8(os, uint8_t(mode_));
    for (float v : embeddings_) io::write_f32(os, v);
    for (int64_t id : ids_) io::write_i64(os, id);
    if (mode_ == IndexMode::clustered) {
        io::write_u32(os, uint32_t(clusters()));
        io::write_u32(os, uint32_t(probes_));
        for (float v : centroids_) io::write_f32(os, v);
        for (const auto& m : members_) {
            io::write_u64(os, uint64_t(m.size()));
            for (int64_t row : m) io::write_i64(os, row);
        }
    }
    if (!os) throw IoError("short write: " + path);
}

MipsIndex MipsIndex::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open index: " + path);
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::string_view(magic, 4) != std::string_view(kMagic, 4))
        throw FormatError("not an index file: " + path);
    if (io::read_u32(is) != kVersion) throw FormatError("unsupported index version");
    MipsIndex ix;
    ix.dim_ = io::read_u32(is);
    uint64_t n = io::read_u64(is);
    uint8_t mode = io::read_u8(is);
    if (mode > 1) throw FormatError("unknown index mode");
    ix.mode_ = IndexMode(mode);
    ix.embeddings_.resize(size_t(n) * size_t(ix.dim_));
    for (auto& v : ix.embeddings_) v = io::read_f32(is);
    ix.ids_.resize(size_t(n));
    for (auto& id : ix.ids_) id = io::read_i64(is);
    if (ix.mode_ == IndexMode::clustered) {
        uint32_t c = io::read_u32(is);
        ix.probes_ = int(io::read_u32(is));
        ix.centroids_.resize(size_t(c) * size_t(ix.dim_));
        for (auto& v : ix.centroids_) v = io::read_f32(is);
        ix.members_.resize(c);
        for (auto& m : ix.members_) {
            uint64_t sz = io::read_u64(is);
            if (sz > n) throw FormatError("corrupt cluster member list");
            m.resize(size_t(sz));
            for (auto& row : m) row = io::read_i64(is);
        }
    }
    return ix;
}

} // namespace retgen::index
