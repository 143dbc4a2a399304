#!/usr/bin/env python3
"""Freezes reference scores for the text-metric tests.

BLEU and chrF come from sacrebleu, ROUGE-L from rouge-score and Porter stems
from NLTK (original 1980 rules). Run once; the output is committed and the
C++ tests compare against it.

    pip install sacrebleu==2.6.0 rouge-score nltk
    python3 tests/oracle/generate_text_metric_oracle.py > tests/data/text_metric_oracle.json
"""
import json
import re
import sys
from pathlib import Path

import sacrebleu
from nltk.stem.porter import PorterStemmer
from rouge_score import rouge_scorer

HERE = Path(__file__).resolve().parent


def tokens(text):
    # Same tokenization as the word-level metrics under test.
    return re.findall(r"[a-z0-9]+", text.lower())


def main():
    pairs = json.loads((HERE.parent / "data" / "text_metric_pairs.json").read_text())
    bleu = sacrebleu.metrics.BLEU(tokenize="none", smooth_method="floor",
                                  smooth_value=1e-9, effective_order=True)
    chrf = sacrebleu.metrics.CHRF()
    rouge = rouge_scorer.RougeScorer(["rougeL"])
    rows = []
    for p in pairs:
        cand, ref = p["candidate"], p["reference"]
        rows.append({
            "candidate": cand,
            "reference": ref,
            "bleu": bleu.sentence_score(" ".join(tokens(cand)), [" ".join(tokens(ref))]).score / 100,
            "chrf": chrf.sentence_score(cand, [ref]).score,
            "rouge_l": rouge.score(ref, cand)["rougeL"].fmeasure,
        })
    stemmer = PorterStemmer(mode=PorterStemmer.ORIGINAL_ALGORITHM)
    words = (HERE.parent / "data" / "porter_words.txt").read_text().split()
    stems = {w: stemmer.stem(w) for w in words}
    out = {
        "generator": "sacrebleu %s, rouge-score, nltk PorterStemmer(ORIGINAL_ALGORITHM)"
                     % sacrebleu.__version__,
        "pairs": rows,
        "porter": stems,
    }
    json.dump(out, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()
