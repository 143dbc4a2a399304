#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace memeguard::metrics {

// Tokens for the word-level metrics: lowercase ASCII letter/digit runs;
// every other byte separates.
std::vector<std::string> MetricTokens(std::string_view text);

// Sentence BLEU in [0, 1]: modified n-gram precisions up to 4-grams,
// geometric mean, brevity penalty. An order with zero matches gets
// precision eps/total (eps = 1e-9). Orders for which the candidate has no
// n-grams at all are left out of the mean (effective order). No match at
// any order gives 0.
double Bleu(std::string_view candidate, std::string_view reference, int max_order = 4,
            double eps = 1e-9);

// chrF in [0, 100]: character n-grams of orders 1..6 over the text with
// whitespace removed, precision and recall averaged over the orders both
// sides have, then F-beta with beta = 2.
double ChrF(std::string_view candidate, std::string_view reference, int max_order = 6,
            double beta = 2.0);

// ROUGE-L F-measure in [0, 1] from the longest common token subsequence.
double RougeL(std::string_view candidate, std::string_view reference);

// METEOR without synonyms, in [0, 1]: unigrams aligned by exact match then
// by Porter stem; Fmean = 10PR / (R + 9P); penalty 0.5 * (chunks / m)^3.
double MeteorLite(std::string_view candidate, std::string_view reference);

// Porter stemmer, original 1980 rules. Input expected lowercase.
std::string PorterStem(std::string_view word);

}  // namespace memeguard::metrics
