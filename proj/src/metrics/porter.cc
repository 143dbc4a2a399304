// Porter (1980) suffix-stripping stemmer, original rule set.

#include "memeguard/metrics/text_metrics.h"

#include <array>
#include <utility>

namespace memeguard::metrics {
namespace {

class Stemmer {
 public:
  explicit Stemmer(std::string w) : w_(std::move(w)) {}

  std::string Run() {
    if (w_.size() <= 2) return w_;
    Step1a();
    Step1b();
    Step1c();
    Step2();
    Step3();
    Step4();
    Step5();
    return w_;
  }

 private:
  bool Cons(size_t i) const {
    switch (w_[i]) {
      case 'a':
      case 'e':
      case 'i':
      case 'o':
      case 'u':
        return false;
      case 'y':
        return i == 0 ? true : !Cons(i - 1);
      default:
        return true;
    }
  }

  // Measure m of w_[0, len): number of VC sequences.
  int Measure(size_t len) const {
    int m = 0;
    size_t i = 0;
    while (i < len && Cons(i)) ++i;
    while (i < len) {
      while (i < len && !Cons(i)) ++i;
      if (i >= len) break;
      while (i < len && Cons(i)) ++i;
      ++m;
    }
    return m;
  }

  bool HasVowel(size_t len) const {
    for (size_t i = 0; i < len; ++i) {
      if (!Cons(i)) return true;
    }
    return false;
  }

  bool DoubleCons(size_t len) const {
    return len >= 2 && w_[len - 1] == w_[len - 2] && Cons(len - 1);
  }

  // cvc where the final c is not w, x or y.
  bool Cvc(size_t len) const {
    if (len < 3) return false;
    if (!Cons(len - 1) || Cons(len - 2) || !Cons(len - 3)) return false;
    char c = w_[len - 1];
    return c != 'w' && c != 'x' && c != 'y';
  }

  bool Ends(std::string_view s) const {
    return w_.size() >= s.size() && w_.compare(w_.size() - s.size(), s.size(), s) == 0;
  }

  size_t StemLen(std::string_view suffix) const { return w_.size() - suffix.size(); }

  void Replace(std::string_view suffix, std::string_view repl) {
    w_.resize(w_.size() - suffix.size());
    w_ += repl;
  }

  void Step1a() {
    if (Ends("sses")) {
      Replace("sses", "ss");
    } else if (Ends("ies")) {
      Replace("ies", "i");
    } else if (Ends("ss")) {
      // unchanged
    } else if (Ends("s")) {
      Replace("s", "");
    }
  }

  void Step1b() {
    bool extra = false;
    if (Ends("eed")) {
      if (Measure(StemLen("eed")) > 0) Replace("eed", "ee");
      return;
    }
    if (Ends("ed") && HasVowel(StemLen("ed"))) {
      Replace("ed", "");
      extra = true;
    } else if (Ends("ing") && HasVowel(StemLen("ing"))) {
      Replace("ing", "");
      extra = true;
    }
    if (!extra) return;
    if (Ends("at")) {
      Replace("at", "ate");
    } else if (Ends("bl")) {
      Replace("bl", "ble");
    } else if (Ends("iz")) {
      Replace("iz", "ize");
    } else if (DoubleCons(w_.size())) {
      char c = w_.back();
      if (c != 'l' && c != 's' && c != 'z') w_.pop_back();
    } else if (Measure(w_.size()) == 1 && Cvc(w_.size())) {
      w_ += 'e';
    }
  }

  void Step1c() {
    if (Ends("y") && HasVowel(StemLen("y"))) w_.back() = 'i';
  }

  // Applies the longest matching suffix rule; if its condition fails, no
  // shorter rule is tried.
  template <size_t N>
  void Table(const std::array<std::pair<std::string_view, std::string_view>, N>& rules,
             int min_measure) {
    const std::pair<std::string_view, std::string_view>* best = nullptr;
    for (const auto& r : rules) {
      if (Ends(r.first) && (best == nullptr || r.first.size() > best->first.size())) best = &r;
    }
    if (best != nullptr && Measure(StemLen(best->first)) > min_measure) {
      Replace(best->first, best->second);
    }
  }

  void Step2() {
    static constexpr std::array<std::pair<std::string_view, std::string_view>, 20> kRules = {{
        {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"},   {"anci", "ance"},
        {"izer", "ize"},    {"abli", "able"},   {"alli", "al"},     {"entli", "ent"},
        {"eli", "e"},       {"ousli", "ous"},   {"ization", "ize"}, {"ation", "ate"},
        {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"}, {"fulness", "ful"},
        {"ousness", "ous"}, {"aliti", "al"},    {"iviti", "ive"},   {"biliti", "ble"},
    }};
    Table(kRules, 0);
  }

  void Step3() {
    static constexpr std::array<std::pair<std::string_view, std::string_view>, 7> kRules = {{
        {"icate", "ic"},
        {"ative", ""},
        {"alize", "al"},
        {"iciti", "ic"},
        {"ical", "ic"},
        {"ful", ""},
        {"ness", ""},
    }};
    Table(kRules, 0);
  }

  void Step4() {
    static constexpr std::array<std::string_view, 19> kSuffixes = {
        "al",  "ance", "ence", "er",  "ic",  "able", "ible", "ant", "ement", "ment",
        "ent", "ion",  "ou",   "ism", "ate", "iti",  "ous",  "ive", "ize"};
    std::string_view best;
    for (auto s : kSuffixes) {
      if (Ends(s) && s.size() > best.size()) best = s;
    }
    if (best.empty()) return;
    size_t stem = StemLen(best);
    if (Measure(stem) <= 1) return;
    if (best == "ion" && !(stem > 0 && (w_[stem - 1] == 's' || w_[stem - 1] == 't'))) return;
    Replace(best, "");
  }

  void Step5() {
    if (Ends("e")) {
      size_t stem = StemLen("e");
      int m = Measure(stem);
      if (m > 1 || (m == 1 && !Cvc(stem))) w_.pop_back();
    }
    if (Measure(w_.size()) > 1 && DoubleCons(w_.size()) && w_.back() == 'l') w_.pop_back();
  }

  std::string w_;
};

}  // namespace

std::string PorterStem(std::string_view word) { return Stemmer(std::string(word)).Run(); }

}  // namespace memeguard::metrics
