"""Seeded synthetic corpora for the signal-to-noise experiments.

A noise source is either supplied (any text file) or generated as
pseudo-prose. Noise chunks are shuffled word n-grams sampled from it. Gold
chunks each carry one fact ``The <attribute> of <entity> is <answer>.``
embedded among filler n-grams; the matching question names the attribute
and the rare entity term.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass
from pathlib import Path

from ..memory_store import DocumentMeta

FUNCTION_WORDS = (
    "the of and to a in is was that he she it with as his her for on at by had not but from "
    "they this were be which have one all there been their what when who will more no if out "
    "so said up into them some could time these two may then do first any my now such like"
).split()

ATTRIBUTES = tuple(
    """anchor badge beacon cipher compass crest dagger emblem ensign ferry furnace garnet harbor helm
    idol ingot jetty kiln lantern locket mantle marker needle oracle orchard pennant quarry quiver rampart
    relic saddle satchel scroll sextant sigil spire tablet tallow thimble tiller torch trellis turret
    valve vessel wagon warden yoke bellows cistern""".split()
)

_NOISE_SYLLABLES = "ba ce di fo gu ka le mi no pu ra se ti vo wu ya zo ash el in or um".split()
_RARE_SYLLABLES = "qua xe zor vyn thal krix omb prae sull dwe jha".split()
_ANSWER_SYLLABLES = "quil mar ves tor ny bel ith ox ruun cael fen drav".split()


class CorpusError(RuntimeError):
    pass


@dataclass(frozen=True)
class NoiseSpec:
    gold_chunks: int
    ratio: int
    seed: int
    chunk_chars: int = 200
    max_retries: int = 50


@dataclass(frozen=True)
class QAItem:
    round: int
    question: str
    gold_chunk_id: str
    gold_answer: str


@dataclass
class Corpus:
    documents: list[tuple[str, str]]  # (doc_id, text)
    questions: list[QAItem]

    def metas(self) -> list[tuple[str, DocumentMeta]]:
        return [(text, DocumentMeta(doc_id=doc_id, source_label=doc_id)) for doc_id, text in self.documents]

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "documents.jsonl", "w", encoding="utf-8", newline="\n") as fh:
            for doc_id, text in self.documents:
                fh.write(json.dumps({"doc_id": doc_id, "text": text}, ensure_ascii=False) + "\n")
        write_script(self.questions, out / "questions.json")

    @classmethod
    def read(cls, in_dir: str | Path) -> Corpus:
        d = Path(in_dir)
        docs = []
        with open(d / "documents.jsonl", encoding="utf-8") as fh:
            for line in fh:
                obj = json.loads(line)
                docs.append((obj["doc_id"], obj["text"]))
        return cls(docs, read_script(d / "questions.json"))


def write_script(items: list[QAItem], path: str | Path) -> None:
    Path(path).write_text(json.dumps([asdict(q) for q in items], ensure_ascii=False, indent=1) + "\n", encoding="utf-8")


def read_script(path: str | Path) -> list[QAItem]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        return [QAItem(int(d["round"]), d["question"], d["gold_chunk_id"], d["gold_answer"]) for d in data]
    except (KeyError, TypeError, ValueError) as exc:
        raise CorpusError(f"bad question script {path}: {exc}") from exc


def _word(rng: random.Random, syllables: list[str], lo: int, hi: int) -> str:
    return "".join(rng.choice(syllables) for _ in range(rng.randint(lo, hi)))


def generate_noise_source(seed: int, n_words: int = 60000, vocab_size: int = 4000) -> str:
    """Pseudo-prose with a Zipf-like word distribution."""
    rng = random.Random(seed)
    vocab = list(dict.fromkeys(_word(rng, _NOISE_SYLLABLES, 2, 4) for _ in range(vocab_size * 2)))[:vocab_size]
    weights = [1.0 / (i + 1) for i in range(len(vocab))]
    words: list[str] = []
    while len(words) < n_words:
        n = rng.randint(8, 20)
        for _ in range(n):
            words.append(rng.choice(FUNCTION_WORDS) if rng.random() < 0.45 else rng.choices(vocab, weights)[0])
        words[-1] += "."
    return " ".join(words)


def _ngram_text(rng: random.Random, words: list[str], max_chars: int) -> str:
    parts: list[str] = []
    length = 0
    while True:
        n = rng.randint(3, 8)
        start = rng.randrange(0, max(1, len(words) - n))
        gram = " ".join(words[start : start + n])
        if length + len(gram) + 1 > max_chars:
            break
        parts.append(gram)
        length += len(gram) + 1
    rng.shuffle(parts)
    return " ".join(parts)


def _contains_any(text: str, needles: list[str]) -> bool:
    low = text.lower()
    return any(n.lower() in low for n in needles)


def synthesize_corpus(spec: NoiseSpec, noise_source: str | None = None) -> Corpus:
    """Deterministic corpus of ``gold_chunks`` facts plus ``ratio`` noise chunks per fact."""
    if spec.gold_chunks < 1 or spec.ratio < 0:
        raise CorpusError("need gold_chunks >= 1 and ratio >= 0")
    rng = random.Random(spec.seed)
    source = noise_source if noise_source is not None else generate_noise_source(spec.seed)
    words = source.split()
    if len(words) < 10:
        raise CorpusError("noise source is empty or too short")

    entities: list[str] = []
    answers: list[str] = []
    while len(entities) < spec.gold_chunks:
        e = f"{_word(rng, _RARE_SYLLABLES, 2, 3).capitalize()}-{rng.randint(100, 9999)}"
        if e not in entities:
            entities.append(e)
    while len(answers) < spec.gold_chunks:
        a = _word(rng, _ANSWER_SYLLABLES, 3, 4).capitalize()
        if a not in answers and not _contains_any(source, [a]):
            answers.append(a)

    documents: list[tuple[str, str]] = []
    questions: list[QAItem] = []
    for i in range(spec.gold_chunks):
        attr = ATTRIBUTES[i % len(ATTRIBUTES)]
        fact = f"The {attr} of {entities[i]} is {answers[i]}."
        room = spec.chunk_chars - len(fact) - 2
        if room < 0:
            raise CorpusError("chunk_chars too small for a fact sentence")
        before = _ngram_text(rng, words, rng.randint(0, room))
        after = _ngram_text(rng, words, room - len(before))
        text = " ".join(p for p in (before, fact, after) if p)
        doc_id = f"gold-{i + 1:04d}"
        documents.append((doc_id, text))
        questions.append(QAItem(i + 1, f"What is the {attr} of {entities[i]}?", f"kb:{doc_id}:p0000", answers[i]))

    guards = answers + entities
    for j in range(spec.gold_chunks * spec.ratio):
        for _ in range(spec.max_retries):
            text = _ngram_text(rng, words, spec.chunk_chars)
            if text and not _contains_any(text, guards):
                break
        else:
            raise CorpusError(f"noise chunk {j} kept colliding with gold strings")
        documents.append((f"noise-{j + 1:06d}", text))

    # interleave deterministically so gold docs are not all first
    order = list(range(len(documents)))
    rng.shuffle(order)
    documents = [documents[k] for k in order]
    return Corpus(documents, questions)

