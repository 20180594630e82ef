#pragma once

#include <Eigen/Core>

#include <optional>
#include <vector>

#include "care/types.hpp"

namespace care {

struct RetrievalReport {
  Scalar rank1 = 0.0;
  Scalar rank5 = 0.0;
  Scalar rank10 = 0.0;
  Scalar map = 0.0;
  std::vector<Scalar> per_query_ap;
};

// CMC Rank-1/5/10 and mAP from a precomputed distance matrix (one query
// per row). Ranking only depends on distance order. Every query identity
// must appear in the gallery; there is no camera exclusion.
RetrievalReport cmc_map_from_distances(
    const Eigen::Ref<const MatX>& distances, const std::vector<int>& query_ids,
    const std::vector<int>& gallery_ids);

// Same, ranking gallery embeddings by cosine distance to each query.
RetrievalReport cmc_map(const Eigen::Ref<const MatX>& query_embeddings,
                        const std::vector<int>& query_ids,
                        const Eigen::Ref<const MatX>& gallery_embeddings,
                        const std::vector<int>& gallery_ids);

// Cluster diagnostics on train embeddings (one sample per column):
//   v_c: mean over identities of the mean squared distance of correctly
//        labeled samples to their identity centroid (lower is better)
//   v_a: mean squared distance of mislabeled samples to their
//        true-identity centroid (higher is better); absent when no sample
//        is mislabeled
// Centroids are computed from correctly labeled samples.
std::pair<Scalar, std::optional<Scalar>> vc_va(
    const Eigen::Ref<const MatX>& embeddings,
    const std::vector<int>& true_labels, const std::vector<int>& noisy_labels);

// Rank-based (Mann-Whitney) AUC of certainty scores against the clean
// flag, ties counted half. Throws when only one class is present.
Scalar detection_auc(const std::vector<Scalar>& certainties,
                     const std::vector<bool>& is_clean);

}  // namespace care
