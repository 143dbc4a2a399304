#include "memeguard/metrics/text_metrics.h"

#include <algorithm>
#include <cmath>
#include <map>

#include "memeguard/common/text.h"

namespace memeguard::metrics {
namespace {

using NgramCounts = std::map<std::vector<std::string>, int>;

NgramCounts Ngrams(const std::vector<std::string>& tokens, size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
  }
  return counts;
}

bool IsSpaceCp(char32_t cp) {
  return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\v' || cp == '\f' ||
         cp == 0xA0 || cp == 0x2028 || cp == 0x2029 || cp == 0x3000 ||
         (cp >= 0x2000 && cp <= 0x200A);
}

std::map<std::u32string, int> CharNgrams(const std::u32string& s, size_t n) {
  std::map<std::u32string, int> counts;
  if (s.size() < n) return counts;
  for (size_t i = 0; i + n <= s.size(); ++i) ++counts[s.substr(i, n)];
  return counts;
}

std::u32string NoSpaceCodePoints(std::string_view text) {
  std::u32string out;
  for (char32_t cp : text::DecodeUtf8(text)) {
    if (!IsSpaceCp(cp)) out.push_back(cp);
  }
  return out;
}

size_t Lcs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

std::vector<std::string> MetricTokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    unsigned char u = static_cast<unsigned char>(c);
    if (u < 0x80 && std::isalnum(u)) {
      cur.push_back(static_cast<char>(std::tolower(u)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

double Bleu(std::string_view candidate, std::string_view reference, int max_order, double eps) {
  auto cand = MetricTokens(candidate);
  auto ref = MetricTokens(reference);
  if (cand.empty()) return 0.0;

  std::vector<double> precisions;
  bool any_match = false;
  for (int n = 1; n <= max_order; ++n) {
    NgramCounts c = Ngrams(cand, static_cast<size_t>(n));
    if (c.empty()) break;
    NgramCounts r = Ngrams(ref, static_cast<size_t>(n));
    long total = 0, correct = 0;
    for (const auto& [gram, count] : c) {
      total += count;
      auto it = r.find(gram);
      if (it != r.end()) correct += std::min(count, it->second);
    }
    any_match = any_match || correct > 0;
    precisions.push_back(correct > 0 ? static_cast<double>(correct) / total : eps / total);
  }
  if (!any_match) return 0.0;

  double log_sum = 0.0;
  for (double p : precisions) log_sum += std::log(p);
  double bp = 1.0;
  if (cand.size() < ref.size()) {
    bp = std::exp(1.0 - static_cast<double>(ref.size()) / static_cast<double>(cand.size()));
  }
  return bp * std::exp(log_sum / static_cast<double>(precisions.size()));
}

double ChrF(std::string_view candidate, std::string_view reference, int max_order, double beta) {
  std::u32string hyp = NoSpaceCodePoints(candidate);
  std::u32string ref = NoSpaceCodePoints(reference);
  double sum_prec = 0.0, sum_rec = 0.0;
  int effective = 0;
  for (int n = 1; n <= max_order; ++n) {
    auto h = CharNgrams(hyp, static_cast<size_t>(n));
    auto r = CharNgrams(ref, static_cast<size_t>(n));
    long n_hyp = 0, n_ref = 0, n_match = 0;
    for (const auto& [gram, count] : h) {
      n_hyp += count;
      auto it = r.find(gram);
      if (it != r.end()) n_match += std::min(count, it->second);
    }
    for (const auto& [gram, count] : r) n_ref += count;
    if (n_hyp > 0 && n_ref > 0) {
      sum_prec += static_cast<double>(n_match) / n_hyp;
      sum_rec += static_cast<double>(n_match) / n_ref;
      ++effective;
    }
  }
  if (effective == 0) return 0.0;
  double p = sum_prec / effective, r = sum_rec / effective;
  if (p + r == 0.0) return 0.0;
  double b2 = beta * beta;
  return 100.0 * (1.0 + b2) * p * r / (b2 * p + r);
}

double RougeL(std::string_view candidate, std::string_view reference) {
  auto cand = MetricTokens(candidate);
  auto ref = MetricTokens(reference);
  if (cand.empty() || ref.empty()) return 0.0;
  double lcs = static_cast<double>(Lcs(cand, ref));
  double p = lcs / cand.size(), r = lcs / ref.size();
  return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

double MeteorLite(std::string_view candidate, std::string_view reference) {
  auto cand = MetricTokens(candidate);
  auto ref = MetricTokens(reference);
  if (cand.empty() || ref.empty()) return 0.0;

  // ref index aligned to each candidate token, or -1.
  std::vector<long> align(cand.size(), -1);
  std::vector<bool> ref_used(ref.size(), false);
  auto match_stage = [&](auto key) {
    std::vector<std::string> ck(cand.size()), rk(ref.size());
    for (size_t i = 0; i < cand.size(); ++i) ck[i] = key(cand[i]);
    for (size_t j = 0; j < ref.size(); ++j) rk[j] = key(ref[j]);
    for (size_t i = 0; i < cand.size(); ++i) {
      if (align[i] >= 0) continue;
      for (size_t j = 0; j < ref.size(); ++j) {
        if (!ref_used[j] && ck[i] == rk[j]) {
          align[i] = static_cast<long>(j);
          ref_used[j] = true;
          break;
        }
      }
    }
  };
  match_stage([](const std::string& w) { return w; });
  match_stage([](const std::string& w) { return PorterStem(w); });

  size_t matches = 0, chunks = 0;
  long prev = -2;
  for (size_t i = 0; i < cand.size(); ++i) {
    if (align[i] < 0) {
      prev = -2;
      continue;
    }
    ++matches;
    if (prev < 0 || align[i] != prev + 1) ++chunks;
    prev = align[i];
  }
  if (matches == 0) return 0.0;
  double p = static_cast<double>(matches) / cand.size();
  double r = static_cast<double>(matches) / ref.size();
  double fmean = 10.0 * p * r / (r + 9.0 * p);
  double frag = static_cast<double>(chunks) / matches;
  return fmean * (1.0 - 0.5 * frag * frag * frag);
}

}  // namespace memeguard::metrics
