#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "vcf/cohort.hpp"

namespace vcf::cohort {

Metrics compute_metrics(const std::vector<double>& predictions, const std::vector<bool>& labels, double threshold) {
  if (predictions.size() != labels.size()) throw std::invalid_argument("predictions and labels differ in length");
  if (predictions.empty()) throw std::invalid_argument("no predictions to score");
  Metrics m;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool predicted = predictions[i] >= threshold;
    if (labels[i]) (predicted ? m.tp : m.fn) += 1;
    else (predicted ? m.fp : m.tn) += 1;
  }
  m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(m.total());
  m.sensitivity = m.tp + m.fn ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
  m.specificity = m.tn + m.fp ? static_cast<double>(m.tn) / static_cast<double>(m.tn + m.fp) : 0.0;
  return m;
}

double roc_auc(const std::vector<double>& scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("scores and labels differ in length");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + j - 1) / 2.0) + 1.0;
    for (std::size_t k = i; k < j; ++k)
      if (labels[idx[k]]) {
        pos_rank_sum += avg_rank;
        ++pos;
      }
    i = j;
  }
  const std::size_t neg = scores.size() - pos;
  if (pos == 0 || neg == 0) throw std::invalid_argument("AUC needs both classes");
  const double u = pos_rank_sum - static_cast<double>(pos) * static_cast<double>(pos + 1) / 2.0;
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

}  // namespace vcf::cohort
