#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "gbn/corpus.hpp"
#include "gbn/errors.hpp"
#include "gbn/inference.hpp"
#include "gbn/model.hpp"

namespace gbn {

struct PerplexityReport {
  double perplexity = 0.0;         // from sample-summed rates (the headline value)
  std::vector<double> per_sample;  // perplexity of each collected sample alone
  int samples = 0;
  int burnin = 0;
  int thin = 1;
};

// Per-heldout-word perplexity of accumulated rate sums F (V x J) against
// held-out counts: exp(-(1/y..) sum_vj y_vj ln(F_vj / F_.j)).
inline double perplexity_from_rates(const Matrix& rate_sum, const SparseCountMatrix& heldout) {
  const std::int64_t y_total = heldout.total();
  if (y_total == 0) throw DataError("perplexity: held-out set is empty");
  Vector column_sums = rate_sum.colwise().sum();
  double log_sum = 0.0;
  for (int j = 0; j < heldout.cols(); ++j) {
    for (const auto& e : heldout.column(j)) {
      const double f = rate_sum(e.term, j);
      if (!(f > 0.0)) {
        throw Error("perplexity: zero predictive mass at a held-out token");
      }
      log_sum += static_cast<double>(e.count) * std::log(f / column_sums[j]);
    }
  }
  return std::exp(-log_sum / static_cast<double>(y_total));
}

// Held-out-word perplexity: condition a Gibbs chain on the training tokens
// with the network's structure fixed (all parameters resampled), collect one
// (phi^(1), theta^(1)) sample every `thin` sweeps after `burnin`, and
// evaluate the held-out counts against the normalized sample-summed rates.
inline PerplexityReport heldout_perplexity(const GbnNetwork& net, const HeldoutSplit& split,
                                           int burnin, int collect, int thin,
                                           SweepOptions options, RngStream rng) {
  if (net.link != LinkType::kCount) {
    throw ConfigError("held-out perplexity is defined for count-link models");
  }
  if (burnin < 0 || collect < 1 || thin < 1) {
    throw ConfigError("perplexity: need burnin >= 0, collect >= 1, thin >= 1");
  }
  if (split.heldout.total() == 0) throw DataError("perplexity: held-out set is empty");

  GibbsState state(net, split.train, options, std::move(rng));
  for (int i = 0; i < burnin; ++i) state.sweep();

  PerplexityReport report;
  report.burnin = burnin;
  report.thin = thin;
  Matrix rate_sum = Matrix::Zero(net.data_dim(), split.train.cols());
  for (int i = 1; i <= collect; ++i) {
    state.sweep();
    if (i % thin != 0) continue;
    const Matrix rates = state.network().phi_at(1) * state.doc_state().theta_at(1);
    rate_sum += rates;
    report.per_sample.push_back(perplexity_from_rates(rates, split.heldout));
    ++report.samples;
  }
  if (report.samples == 0) {
    throw ConfigError("perplexity: collect/thin yielded no samples");
  }
  report.perplexity = perplexity_from_rates(rate_sum, split.heldout);
  return report;
}

struct FeatureMatrix {
  Matrix proportions;           // J x K_1, rows sum to one
  std::vector<int> empty_docs;  // documents with no observed tokens (flagged)
};

// Posterior-mean feature usage proportions theta^(1)_j / theta^(1)_{.j},
// averaged over `collect` sweeps after `burnin`.
template <typename DataT>
FeatureMatrix extract_features(const GbnNetwork& net, const DataT& data, int burnin,
                               int collect, SweepOptions options, RngStream rng) {
  if (burnin < 0 || collect < 1) {
    throw ConfigError("features: need burnin >= 0 and collect >= 1");
  }
  GibbsState state(net, data, options, std::move(rng));
  for (int i = 0; i < burnin; ++i) state.sweep();
  const int docs = state.docs();
  const int k1 = state.network().width(1);
  Matrix sum = Matrix::Zero(docs, k1);
  for (int i = 0; i < collect; ++i) {
    state.sweep();
    const Matrix& theta = state.doc_state().theta_at(1);
    for (int j = 0; j < docs; ++j) {
      sum.row(j) += (theta.col(j) / theta.col(j).sum()).transpose();
    }
  }
  FeatureMatrix out;
  out.proportions = sum / static_cast<double>(collect);
  for (int j = 0; j < docs; ++j) {
    std::int64_t tokens = 0;
    for (const auto& e : state.x1()[j]) tokens += e.count;
    if (tokens == 0) out.empty_docs.push_back(j);
  }
  return out;
}

}  // namespace gbn
