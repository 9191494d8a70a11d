#include "peca/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "peca/error.hpp"
#include "peca/ops.hpp"

namespace peca {

RetrievalScore cmc_map(const Tensor& dist, std::span<const std::size_t> query_labels,
                       std::span<const std::size_t> query_views, std::span<const std::size_t> gallery_labels,
                       std::span<const std::size_t> gallery_views) {
    if (dist.rank() != 2) throw ShapeError("cmc_map needs a [Q, G] distance matrix");
    const std::size_t Q = dist.shape()[0], G = dist.shape()[1];
    if (query_labels.size() != Q || query_views.size() != Q || gallery_labels.size() != G ||
        gallery_views.size() != G)
        throw ShapeError("cmc_map: label/view lengths do not match the distance matrix");

    RetrievalScore score;
    std::vector<std::size_t> order(G);
    for (std::size_t q = 0; q < Q; ++q) {
        std::iota(order.begin(), order.end(), 0);
        const double* row = dist.data().data() + q * G;
        std::stable_sort(order.begin(), order.end(), [row](std::size_t a, std::size_t b) { return row[a] < row[b]; });
        std::size_t rank = 0, hits = 0;
        double precision_sum = 0.0;
        bool first_is_match = false;
        for (std::size_t g : order) {
            const bool same_id = gallery_labels[g] == query_labels[q];
            if (same_id && gallery_views[g] == query_views[q]) continue;
            ++rank;
            if (same_id) {
                ++hits;
                precision_sum += static_cast<double>(hits) / static_cast<double>(rank);
                if (rank == 1) first_is_match = true;
            }
        }
        if (hits == 0) continue;
        ++score.valid_queries;
        score.map += precision_sum / static_cast<double>(hits);
        score.rank1 += first_is_match ? 1.0 : 0.0;
    }
    if (score.valid_queries > 0) {
        score.map /= static_cast<double>(score.valid_queries);
        score.rank1 /= static_cast<double>(score.valid_queries);
    }
    return score;
}

Tensor embed(const BackboneConfig& config, const BackboneParams& params, const Tensor& images) {
    Graph g;
    const BackboneVars vars = bind_params(g, params, false);
    const std::vector<std::size_t> domains(images.shape().at(0), 0);
    const auto out = backbone_forward(g.constant(images), vars, config, Mode::eval, false, domains, LpmContext{});
    return out.v.value();
}

Tensor distance_matrix(const Tensor& query, const Tensor& gallery, Metric metric) {
    if (query.rank() != 2 || gallery.rank() != 2 || query.shape()[1] != gallery.shape()[1])
        throw ShapeError("distance_matrix of " + shape_str(query.shape()) + " and " + shape_str(gallery.shape()));
    const std::size_t Q = query.shape()[0], G = gallery.shape()[0], d = query.shape()[1];
    auto norms = [d](const Tensor& x) {
        std::vector<double> n(x.shape()[0]);
        for (std::size_t i = 0; i < n.size(); ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += x.at(i, j) * x.at(i, j);
            n[i] = std::sqrt(s);
        }
        return n;
    };
    const auto qn = norms(query), gn = norms(gallery);
    std::vector<double> out(Q * G);
    for (std::size_t q = 0; q < Q; ++q)
        for (std::size_t g = 0; g < G; ++g) {
            double dot = 0.0, sq = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                dot += query.at(q, j) * gallery.at(g, j);
                const double diff = query.at(q, j) - gallery.at(g, j);
                sq += diff * diff;
            }
            if (metric == Metric::cosine) {
                if (!(qn[q] > 0.0) || !(gn[g] > 0.0)) throw NumericsError("cosine distance with a zero-norm embedding");
                out[q * G + g] = 1.0 - dot / (qn[q] * gn[g]);
            } else {
                out[q * G + g] = std::sqrt(sq);
            }
        }
    return Tensor({Q, G}, std::move(out));
}

QueryGallery split_query_gallery(const DomainData& data) {
    std::vector<std::size_t> q_idx, g_idx;
    for (std::size_t n = 0; n < data.spec.n_identities; ++n) {
        auto inst = data.instances_of(n);
        if (inst.empty()) continue;
        const auto first = std::min_element(inst.begin(), inst.end(), [&](std::size_t a, std::size_t b) {
            return data.views[a] < data.views[b];
        });
        q_idx.push_back(*first);
        for (auto i : inst)
            if (i != *first) g_idx.push_back(i);
    }
    std::sort(g_idx.begin(), g_idx.end());
    return {select_instances(data, q_idx), select_instances(data, g_idx)};
}

RetrievalScore evaluate(const Checkpoint& checkpoint, const DomainData& query, const DomainData& gallery,
                        Metric metric) {
    if (gallery.size() == 0) throw ContractError("evaluate: empty gallery");
    const Tensor qv = embed(checkpoint.backbone, checkpoint.params, query.images);
    const Tensor gv = embed(checkpoint.backbone, checkpoint.params, gallery.images);
    const auto score = cmc_map(distance_matrix(qv, gv, metric), query.labels, query.views, gallery.labels, gallery.views);
    if (score.valid_queries == 0) throw ContractError("evaluate: no query has a positive match in the gallery");
    return score;
}

RetrievalScore evaluate_domain(const Checkpoint& checkpoint, const DomainData& data, Metric metric) {
    const auto split = split_query_gallery(data);
    return evaluate(checkpoint, split.query, split.gallery, metric);
}

}  // namespace peca
