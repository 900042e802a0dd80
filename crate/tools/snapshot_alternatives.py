"""Regenerate the alternative-set data snapshots under crates/core/data/alternatives.

Inputs (all obtainable from PyPI):
  * WordNet 3.0 index files, as bundled in the `wn==0.0.23` sdist (wn/data/wordnet-3.0)
  * Brill tagger lexicon `en-lexicon.txt` and reference word list `en-frequency.txt`,
    as bundled in the `pattern3==3.0.0` sdist (pattern3/text/en)
  * the `wordfreq` package (English 'large' list)

Usage:
  python tools/snapshot_alternatives.py WORDNET_DIR PATTERN_EN_DIR OUT_DIR
"""
import os
import re
import sys

import wordfreq

TOP_N = 50000
SCALE = 1e9
FINE_TAGS = {"adj": {"JJ"}, "adv": {"RB"}, "verb": {"VB", "VBP"}}
OUT_TAG = {"adj": "JJ", "adv": "RB", "verb": "VB"}


def wordnet_lemmas(wn_dir, pos):
    out = set()
    with open(os.path.join(wn_dir, "index." + pos)) as fh:
        for line in fh:
            if line.startswith(" "):
                continue
            word = line.split()[0]
            if re.fullmatch(r"[a-z]+", word):
                out.add(word)
    return out


def brill_lexicon(pattern_dir):
    tags = {}
    with open(os.path.join(pattern_dir, "en-lexicon.txt")) as fh:
        for line in fh:
            if line.startswith(";;;"):
                continue
            parts = line.split()
            if len(parts) >= 2 and parts[0] not in tags:
                tags[parts[0]] = parts[1]
    return tags


def reference_words(pattern_dir):
    words = set()
    with open(os.path.join(pattern_dir, "en-frequency.txt")) as fh:
        for line in fh:
            parts = line.split()
            if len(parts) == 2:
                words.add(parts[0])
    return words


def main(wn_dir, pattern_dir, out_dir):
    tags = brill_lexicon(pattern_dir)
    reference = reference_words(pattern_dir)
    rows = set()
    for pos in ("adj", "adv", "verb"):
        for word in wordnet_lemmas(wn_dir, pos):
            tag = tags.get(word)
            if tag not in FINE_TAGS[pos]:
                continue
            # Isolated verbs only receive a verb tag when the tagger has seen them often.
            if pos == "verb" and word not in reference:
                continue
            rows.add((word, OUT_TAG[pos]))
    with open(os.path.join(out_dir, "lexicon.tsv"), "w") as fh:
        fh.write("word\ttag\n")
        for word, tag in sorted(rows):
            fh.write(f"{word}\t{tag}\n")

    with open(os.path.join(out_dir, "frequency.tsv"), "w") as fh:
        fh.write("word\tcount\n")
        for word in wordfreq.top_n_list("en", TOP_N):
            if not re.fullmatch(r"[a-z]+", word):
                continue
            count = round(wordfreq.word_frequency(word, "en") * SCALE)
            if count > 0:
                fh.write(f"{word}\t{count}\n")


if __name__ == "__main__":
    main(*sys.argv[1:4])
