#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "retgen/common.hpp"

namespace retgen::index {

struct SearchHit {
    int64_t id = -1;
    float score = 0.0f; // raw inner product
};

enum class IndexMode : uint8_t { exact = 0, clustered = 1 };

struct ClusterOptions {
    int clusters = 0;
    int probes = 1;
    int iterations = 10;
    uint64_t seed = 0;
};

// Maximum-inner-product index over demonstration embeddings. Exact mode is a
// flat scan; clustered mode is an inverted-list index whose coarse centroids
// come from a seeded k-means-style refinement. Results are totally ordered
// by (score desc, id asc) so queries are identical across runs and
// platforms. Immutable after build; concurrent queries are safe.
class MipsIndex {
  public:
    static MipsIndex build_exact(std::vector<float> embeddings, int64_t dim,
                                 std::vector<int64_t> ids);
    static MipsIndex build_clustered(std::vector<float> embeddings, int64_t dim,
                                     std::vector<int64_t> ids, const ClusterOptions& opts);

    std::vector<SearchHit> top_k(std::span<const float> query, int64_t k) const;
    std::vector<SearchHit> exclude_then_top_k(std::span<const float> query, int64_t k,
                                              const std::unordered_set<int64_t>& excluded) const;

    void save(const std::string& path) const;
    static MipsIndex load(const std::string& path);

    // row view for an entry id; the trainer reuses stored demo embeddings
    std::span<const float> embedding_of(int64_t id) const;

    int64_t dim() const { return dim_; }
    int64_t size() const { return int64_t(ids_.size()); }
    IndexMode mode() const { return mode_; }
    int probes() const { return probes_; }
    void set_probes(int probes);
    int clusters() const { return int(centroids_.size() ? centroids_.size() / size_t(dim_) : 0); }

  private:
    MipsIndex() = default;
    void check_build(const std::vector<float>& embeddings, int64_t dim,
                     const std::vector<int64_t>& ids) const;
    template <typename Keep>
    std::vector<SearchHit> search(std::span<const float> query, int64_t k, Keep&& keep) const;

    int64_t dim_ = 0;
    IndexMode mode_ = IndexMode::exact;
    std::vector<float> embeddings_; // row-major [n x dim]
    std::vector<int64_t> ids_;
    mutable std::unordered_map<int64_t, int64_t> id_to_row_;
    // clustered mode
    int probes_ = 1;
    std::vector<float> centroids_;             // [clusters x dim]
    std::vector<std::vector<int64_t>> members_; // row indices per cluster
};

} // namespace retgen::index
