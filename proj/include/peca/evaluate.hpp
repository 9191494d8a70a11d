#pragma once

#include <cstddef>
#include <span>

#include "peca/checkpoint.hpp"
#include "peca/config.hpp"
#include "peca/synthdata.hpp"

namespace peca {

struct RetrievalScore {
    double map = 0.0;
    double rank1 = 0.0;
    std::size_t valid_queries = 0;
};

// Ranks each query's gallery by ascending distance (ties by gallery index),
// drops gallery items sharing both identity and view with the query, and
// skips queries left without a positive. Averages AP and top-1 hits over the
// remaining queries; zero valid queries yields an all-zero score.
RetrievalScore cmc_map(const Tensor& dist, std::span<const std::size_t> query_labels,
                       std::span<const std::size_t> query_views, std::span<const std::size_t> gallery_labels,
                       std::span<const std::size_t> gallery_views);

// Clean (eval-mode) holistic vectors, [n, d].
Tensor embed(const BackboneConfig& config, const BackboneParams& params, const Tensor& images);

// [Q, G] distances: 1 - cosine similarity, or Euclidean distance.
Tensor distance_matrix(const Tensor& query, const Tensor& gallery, Metric metric);

struct QueryGallery {
    DomainData query;
    DomainData gallery;
};

// One view per identity (the lowest view id) becomes the query; the rest
// form the gallery.
QueryGallery split_query_gallery(const DomainData& data);

// ContractError when no query has a positive in the gallery.
RetrievalScore evaluate(const Checkpoint& checkpoint, const DomainData& query, const DomainData& gallery,
                        Metric metric);
RetrievalScore evaluate_domain(const Checkpoint& checkpoint, const DomainData& data, Metric metric);

}  // namespace peca
