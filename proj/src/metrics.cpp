#include "care/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace care {

RetrievalReport cmc_map_from_distances(
    const Eigen::Ref<const MatX>& distances, const std::vector<int>& query_ids,
    const std::vector<int>& gallery_ids) {
  const Eigen::Index nq = distances.rows();
  const Eigen::Index ng = distances.cols();
  if (nq == 0 || ng == 0 ||
      static_cast<std::size_t>(nq) != query_ids.size() ||
      static_cast<std::size_t>(ng) != gallery_ids.size()) {
    throw std::invalid_argument("cmc_map: bad inputs");
  }
  RetrievalReport report;
  report.per_query_ap.reserve(static_cast<std::size_t>(nq));
  int hit1 = 0, hit5 = 0, hit10 = 0;
  Scalar ap_sum = 0.0;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(ng));
  for (Eigen::Index q = 0; q < nq; ++q) {
    const int qid = query_ids[static_cast<std::size_t>(q)];
    int matches = 0;
    for (Eigen::Index j = 0; j < ng; ++j) {
      order[static_cast<std::size_t>(j)] = j;
      if (gallery_ids[static_cast<std::size_t>(j)] == qid) ++matches;
    }
    if (matches == 0) {
      throw std::invalid_argument("cmc_map: query identity not in gallery");
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) {
                       return distances(q, a) < distances(q, b);
                     });
    int first_hit = -1;
    int seen = 0;
    Scalar ap = 0.0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
      if (gallery_ids[static_cast<std::size_t>(order[rank])] == qid) {
        ++seen;
        ap += static_cast<Scalar>(seen) / static_cast<Scalar>(rank + 1);
        if (first_hit < 0) first_hit = static_cast<int>(rank);
      }
    }
    ap /= static_cast<Scalar>(matches);
    if (first_hit == 0) ++hit1;
    if (first_hit < 5) ++hit5;
    if (first_hit < 10) ++hit10;
    report.per_query_ap.push_back(ap);
    ap_sum += ap;
  }
  const Scalar inv_q = 1.0 / static_cast<Scalar>(nq);
  report.rank1 = inv_q * hit1;
  report.rank5 = inv_q * hit5;
  report.rank10 = inv_q * hit10;
  report.map = inv_q * ap_sum;
  return report;
}

RetrievalReport cmc_map(const Eigen::Ref<const MatX>& query_embeddings,
                        const std::vector<int>& query_ids,
                        const Eigen::Ref<const MatX>& gallery_embeddings,
                        const std::vector<int>& gallery_ids) {
  const Eigen::Index nq = query_embeddings.cols();
  const Eigen::Index ng = gallery_embeddings.cols();
  MatX distances(nq, ng);
  VecX g_norms(ng);
  for (Eigen::Index j = 0; j < ng; ++j) {
    g_norms[j] = gallery_embeddings.col(j).norm();
  }
  for (Eigen::Index q = 0; q < nq; ++q) {
    const Scalar qn = query_embeddings.col(q).norm();
    for (Eigen::Index j = 0; j < ng; ++j) {
      Scalar cosine = 0.0;
      if (qn > 0.0 && g_norms[j] > 0.0) {
        cosine = query_embeddings.col(q).dot(gallery_embeddings.col(j)) /
                 (qn * g_norms[j]);
      }
      distances(q, j) = 1.0 - cosine;
    }
  }
  return cmc_map_from_distances(distances, query_ids, gallery_ids);
}

std::pair<Scalar, std::optional<Scalar>> vc_va(
    const Eigen::Ref<const MatX>& embeddings,
    const std::vector<int>& true_labels,
    const std::vector<int>& noisy_labels) {
  const Eigen::Index n = embeddings.cols();
  if (n == 0 || true_labels.size() != static_cast<std::size_t>(n) ||
      noisy_labels.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("vc_va: bad inputs");
  }
  std::map<int, std::vector<Eigen::Index>> clean_by_class;
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t si = static_cast<std::size_t>(i);
    if (true_labels[si] == noisy_labels[si]) {
      clean_by_class[true_labels[si]].push_back(i);
    }
  }
  if (clean_by_class.empty()) {
    throw std::invalid_argument("vc_va: no correctly labeled samples");
  }
  std::map<int, VecX> centroids;
  Scalar vc_sum = 0.0;
  for (const auto& [label, members] : clean_by_class) {
    VecX centroid = VecX::Zero(embeddings.rows());
    for (Eigen::Index i : members) centroid += embeddings.col(i);
    centroid /= static_cast<Scalar>(members.size());
    Scalar msd = 0.0;
    for (Eigen::Index i : members) {
      msd += (embeddings.col(i) - centroid).squaredNorm();
    }
    vc_sum += msd / static_cast<Scalar>(members.size());
    centroids.emplace(label, std::move(centroid));
  }
  const Scalar v_c = vc_sum / static_cast<Scalar>(clean_by_class.size());

  Scalar va_sum = 0.0;
  int va_count = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t si = static_cast<std::size_t>(i);
    if (true_labels[si] == noisy_labels[si]) continue;
    const auto it = centroids.find(true_labels[si]);
    if (it == centroids.end()) continue;  // no clean anchor for this class
    va_sum += (embeddings.col(i) - it->second).squaredNorm();
    ++va_count;
  }
  std::optional<Scalar> v_a;
  if (va_count > 0) v_a = va_sum / static_cast<Scalar>(va_count);
  return {v_c, v_a};
}

Scalar detection_auc(const std::vector<Scalar>& certainties,
                     const std::vector<bool>& is_clean) {
  const std::size_t n = certainties.size();
  if (n == 0 || is_clean.size() != n) {
    throw std::invalid_argument("detection_auc: bad inputs");
  }
  std::size_t n_clean = 0;
  for (bool f : is_clean) n_clean += f ? 1 : 0;
  const std::size_t n_noisy = n - n_clean;
  if (n_clean == 0 || n_noisy == 0) {
    throw std::invalid_argument("detection_auc: single-class input");
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return certainties[a] < certainties[b];
  });
  // Average ranks over tie groups, then the Mann-Whitney statistic.
  Scalar clean_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && certainties[order[j]] == certainties[order[i]]) ++j;
    const Scalar avg_rank = 0.5 * static_cast<Scalar>(i + 1 + j);  // 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (is_clean[order[k]]) clean_rank_sum += avg_rank;
    }
    i = j;
  }
  const Scalar u = clean_rank_sum -
                   0.5 * static_cast<Scalar>(n_clean) *
                       static_cast<Scalar>(n_clean + 1);
  return u / (static_cast<Scalar>(n_clean) * static_cast<Scalar>(n_noisy));
}

}  // namespace care
