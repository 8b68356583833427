// Copyright 2026 The LPF Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <algorithm>
#include <cmath>

#include "lpf/pipeline.hpp"

namespace lpf {

namespace {

Eigen::Index check_predictions(std::span<const Prediction> preds) {
  if (preds.empty()) throw DomainError("metrics: empty prediction list");
  const Eigen::Index k = preds.front().distribution.size();
  if (k == 0) throw DomainError("metrics: empty distribution");
  for (const auto& p : preds) {
    if (p.distribution.size() != k) throw DomainError("metrics: distributions differ in length");
    if (p.label < 0 || p.label >= k) throw DomainError("metrics: label outside domain");
  }
  return k;
}

}  // namespace

double expected_calibration_error(std::span<const Prediction> preds, int bins) {
  check_predictions(preds);
  if (bins < 1) throw DomainError("ece: need at least one bin");
  std::vector<double> conf_sum(static_cast<std::size_t>(bins), 0.0), hits(static_cast<std::size_t>(bins), 0.0);
  std::vector<std::size_t> count(static_cast<std::size_t>(bins), 0);
  for (const auto& p : preds) {
    const Eigen::Index top = argmax(p.distribution);
    const double c = p.distribution(top);
    const auto b = static_cast<std::size_t>(std::clamp(static_cast<int>(std::floor(c * bins)), 0, bins - 1));
    conf_sum[b] += c;
    hits[b] += top == p.label ? 1.0 : 0.0;
    ++count[b];
  }
  double ece = 0.0;
  const double n = static_cast<double>(preds.size());
  for (std::size_t b = 0; b < count.size(); ++b)
    if (count[b])
      ece += static_cast<double>(count[b]) / n *
             std::abs(hits[b] / static_cast<double>(count[b]) - conf_sum[b] / static_cast<double>(count[b]));
  return ece;
}

MetricsReport compute_metrics(std::span<const Prediction> preds, std::span<const double> runtimes_ms, int ece_bins) {
  const Eigen::Index k = check_predictions(preds);
  MetricsReport m;
  m.n = preds.size();
  m.ece_bins = ece_bins;
  m.confusion = Eigen::MatrixXi::Zero(k, k);
  const double n = static_cast<double>(m.n);
  std::vector<double> confs;
  for (const auto& p : preds) {
    const Eigen::Index top = argmax(p.distribution);
    ++m.confusion(p.label, top);
    confs.push_back(p.distribution(top));
    m.nll -= std::log(std::max(p.distribution(p.label), kNllClamp));
    Vector onehot = Vector::Zero(k);
    onehot(p.label) = 1.0;
    m.brier += (p.distribution - onehot).squaredNorm();
  }
  m.nll /= n;
  m.brier /= n;
  m.accuracy = static_cast<double>(m.confusion.trace()) / n;

  for (Eigen::Index c = 0; c < k; ++c) {
    const double tp = m.confusion(c, c);
    const double support = m.confusion.row(c).sum();
    const double predicted = m.confusion.col(c).sum();
    const double precision = predicted > 0 ? tp / predicted : 0.0;
    const double recall = support > 0 ? tp / support : 0.0;
    const double f1 = precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    m.macro_f1 += f1 / static_cast<double>(k);
    m.weighted_f1 += f1 * support / n;
  }
  m.ece = expected_calibration_error(preds, ece_bins);

  for (double c : confs) m.confidence_mean += c / n;
  for (double c : confs) m.confidence_std += (c - m.confidence_mean) * (c - m.confidence_mean) / n;
  m.confidence_std = std::sqrt(m.confidence_std);

  for (const double t : {0.5, 0.6, 0.7, 0.8, 0.9}) {
    SelectiveRow row;
    row.threshold = t;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
      if (confs[i] > t) {
        ++row.accepted;
        if (argmax(preds[i].distribution) == preds[i].label) ++correct;
      }
    row.coverage = static_cast<double>(row.accepted) / n;
    row.accuracy = row.accepted ? static_cast<double>(correct) / static_cast<double>(row.accepted) : 0.0;
    m.selective.push_back(row);
  }

  if (!runtimes_ms.empty()) {
    for (double r : runtimes_ms) m.runtime_mean_ms += r;
    m.runtime_mean_ms /= static_cast<double>(runtimes_ms.size());
    m.runtime_max_ms = *std::max_element(runtimes_ms.begin(), runtimes_ms.end());
  }
  return m;
}

std::vector<CredibilityStratum> stratify_by_credibility(std::span<const Prediction> preds,
                                                        std::span<const double> mean_credibility) {
  if (preds.size() != mean_credibility.size()) throw DomainError("stratify: length mismatch");
  std::vector<CredibilityStratum> s{{">0.9", 0, 0.0}, {"0.7-0.9", 0, 0.0}, {"<0.7", 0, 0.0}};
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double c = mean_credibility[i];
    CredibilityStratum& st = c > 0.9 ? s[0] : c >= 0.7 ? s[1] : s[2];
    ++st.count;
    if (argmax(preds[i].distribution) == preds[i].label) st.accuracy += 1.0;
  }
  for (auto& st : s)
    if (st.count) st.accuracy /= static_cast<double>(st.count);
  return s;
}

nlohmann::json to_json(const MetricsReport& m) {
  nlohmann::json confusion = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.confusion.rows(); ++r) {
    std::vector<int> row(static_cast<std::size_t>(m.confusion.cols()));
    for (Eigen::Index c = 0; c < m.confusion.cols(); ++c) row[static_cast<std::size_t>(c)] = m.confusion(r, c);
    confusion.push_back(row);
  }
  nlohmann::json selective = nlohmann::json::array();
  for (const auto& s : m.selective)
    selective.push_back(
        {{"threshold", s.threshold}, {"accepted", s.accepted}, {"coverage", s.coverage}, {"accuracy", s.accuracy}});
  return {{"n", m.n},
          {"accuracy", m.accuracy},
          {"macro_f1", m.macro_f1},
          {"weighted_f1", m.weighted_f1},
          {"nll", m.nll},
          {"brier", m.brier},
          {"ece", m.ece},
          {"ece_bins", m.ece_bins},
          {"confusion", confusion},
          {"confidence_mean", m.confidence_mean},
          {"confidence_std", m.confidence_std},
          {"selective", selective},
          {"runtime_mean_ms", m.runtime_mean_ms},
          {"runtime_max_ms", m.runtime_max_ms}};
}

}  // namespace lpf
