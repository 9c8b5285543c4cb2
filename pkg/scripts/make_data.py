#!/usr/bin/env python3
"""Regenerate the bundled data files under src/tsmh/data/.

Everything is produced deterministically from a fixed seed: a synthetic
5k-sentence corpus mixing declarative, interrogative and imperative forms, a
vocabulary covering it, a POS lexicon for the imperative task, a sentiment
lexicon, and 50 keyword inputs for the stock experiment.
"""

import random
from pathlib import Path

DATA = Path(__file__).resolve().parent.parent / "src" / "tsmh" / "data"

QWH = ["what", "when", "where", "which", "who", "whom", "whose", "why", "how"]
AUX = [
    "do", "does", "did", "be", "am", "are", "is", "was", "were",
    "shall", "will", "should", "would", "can", "could", "may", "might", "must",
]

NOUNS = [
    "country", "city", "river", "capital", "museum", "language", "teacher",
    "student", "machine", "system", "model", "engine", "book", "paper",
    "idea", "science", "history", "music", "market", "company", "train",
    "station", "airport", "bridge", "castle", "garden", "mountain", "valley",
    "ocean", "island", "forest", "desert", "library", "painting", "festival",
    "kingdom", "empire", "village", "harbor", "temple",
]
VERBS = [
    "run", "walk", "open", "close", "read", "write", "build", "learn",
    "teach", "visit", "explore", "start", "stop", "find", "make", "take",
    "give", "watch", "study", "describe", "explain", "compare", "measure",
    "count", "remember",
]
ADVERBS = [
    "quickly", "slowly", "carefully", "quietly", "always", "never", "often",
    "sometimes", "really", "gently", "bravely", "calmly",
]
ADJ_POS = ["good", "great", "wonderful", "famous", "beautiful", "popular", "pleasant", "excellent"]
ADJ_NEG = ["bad", "terrible", "awful", "boring", "ugly", "unpleasant", "poor", "dull"]
ADJ_NEUTRAL = ["big", "small", "old", "new", "long", "short", "ancient", "modern"]
FUNCTION = ["the", "a", "an", "in", "on", "of", "to", "from", "at", "by", "for", "with", "there", "it", "they", "near"]
PUNCT = [".", "?"]


def questions(rng):
    n = lambda: rng.choice(NOUNS)
    v = lambda: rng.choice(VERBS)
    adj = lambda: rng.choice(ADJ_POS + ADJ_NEG + ADJ_NEUTRAL)
    forms = [
        lambda: f"what is the {n()} of the {n()} ?",
        lambda: f"where is the {adj()} {n()} ?",
        lambda: f"which {n()} is {adj()} ?",
        lambda: f"who can {v()} the {n()} ?",
        lambda: f"when will the {n()} {v()} ?",
        lambda: f"what does the {n()} {v()} ?",
        lambda: f"how do they {v()} the {n()} ?",
        lambda: f"why is the {n()} {adj()} ?",
        lambda: f"who is in the {n()} ?",
        lambda: f"which {n()} can they {v()} ?",
        lambda: f"where was the {n()} of the {n()} ?",
        lambda: f"what was the {adj()} {n()} ?",
    ]
    return rng.choice(forms)()


def declaratives(rng):
    n = lambda: rng.choice(NOUNS)
    v = lambda: rng.choice(VERBS)
    adj = lambda: rng.choice(ADJ_POS + ADJ_NEG + ADJ_NEUTRAL)
    forms = [
        lambda: f"the {n()} is {adj()} .",
        lambda: f"the {n()} of the {n()} is {adj()} .",
        lambda: f"they {v()} the {n()} .",
        lambda: f"the {adj()} {n()} is in the {n()} .",
        lambda: f"the {n()} is near the {n()} .",
        lambda: f"it is a {adj()} {n()} .",
        lambda: f"the {n()} was {adj()} .",
        lambda: f"there is a {n()} in the {n()} .",
    ]
    return rng.choice(forms)()


def imperatives(rng):
    n = lambda: rng.choice(NOUNS)
    v = lambda: rng.choice(VERBS)
    adv = lambda: rng.choice(ADVERBS)
    adj = lambda: rng.choice(ADJ_POS + ADJ_NEG + ADJ_NEUTRAL)
    forms = [
        lambda: f"{v()} the {n()} .",
        lambda: f"{adv()} {v()} the {n()} .",
        lambda: f"{v()} the {adj()} {n()} .",
        lambda: f"{v()} the {n()} of the {n()} .",
    ]
    return rng.choice(forms)()


def main():
    rng = random.Random(20240817)
    DATA.mkdir(parents=True, exist_ok=True)

    (DATA / "qwh.txt").write_text("".join(w + "\n" for w in QWH), encoding="utf-8")
    (DATA / "aux.txt").write_text("".join(w + "\n" for w in AUX), encoding="utf-8")

    lines = []
    for _ in range(5000):
        r = rng.random()
        if r < 0.45:
            lines.append(questions(rng))
        elif r < 0.80:
            lines.append(declaratives(rng))
        else:
            lines.append(imperatives(rng))
    (DATA / "corpus_5k.txt").write_text("".join(s + "\n" for s in lines), encoding="utf-8")

    words = (
        QWH + AUX + NOUNS + VERBS + ADVERBS + ADJ_POS + ADJ_NEG + ADJ_NEUTRAL
        + FUNCTION + PUNCT
    )
    seen = set()
    ordered = [w for w in words if not (w in seen or seen.add(w))]
    (DATA / "vocab_5k.txt").write_text("".join(w + "\n" for w in ordered), encoding="utf-8")

    pos_lines = [f"{w}\tVERB" for w in VERBS] + [f"{w}\tADV" for w in ADVERBS]
    (DATA / "pos_lexicon.tsv").write_text(
        "".join(line + "\n" for line in pos_lines), encoding="utf-8"
    )

    polarity = {w: "1.5" for w in ADJ_POS}
    polarity.update({w: "-1.5" for w in ADJ_NEG})
    (DATA / "sentiment_lexicon.tsv").write_text(
        "".join(f"{w}\t{v}\n" for w, v in sorted(polarity.items())), encoding="utf-8"
    )

    content = NOUNS + VERBS
    keyword_lines = []
    for _ in range(50):
        n_kw = rng.choice([2, 2, 3])
        kws = rng.sample(content, n_kw)
        keyword_lines.append("\t".join(kws))
    (DATA / "keywords_50.tsv").write_text(
        "".join(line + "\n" for line in keyword_lines), encoding="utf-8"
    )

    print(f"wrote data files to {DATA}")
    print(f"vocabulary size: {len(ordered)} (+ mask)")


if __name__ == "__main__":
    main()
