"""Word-level tokenizer dictionary, meta/concept tokens and prompt templates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PAD, START, END = "<pad>", "<start>", "<end>"
RESERVED = (PAD, START, END)

# the prompt-ensemble template set; "{}" marks the category slot
TEMPLATES = (
    "a photo of a {}",
    "a rendering of a {}",
    "the photo of a {}",
    "a photo of my {}",
    "a photo of the {}",
    "a photo of one {}",
    "a rendition of a {}",
)
DEFAULT_TEMPLATE = TEMPLATES[0]


class UnknownTokenError(KeyError):
    pass


def select_meta_token(category: str) -> str:
    """Last word of the first comma-separated name, lowercased.

    >>> select_meta_token("electric ray, crampfish, numbfish, torpedo")
    'ray'
    """
    if not category or not category.strip():
        raise ValueError("category string is empty")
    first = category.split(",")[0].split()
    if not first:
        raise ValueError(f"no words in the first name of {category!r}")
    return first[-1].lower()


def category_names(category: str) -> list[str]:
    """All comma-separated synonyms, stripped and lowercased."""
    return [s.strip().lower() for s in category.split(",") if s.strip()]


def concept_token(category: str) -> str:
    return "<" + "_".join(category_names(category)[0].split()) + ">"


def fill_template(template: str, word: str) -> str:
    if template.count("{}") != 1:
        raise ValueError(f"template must contain exactly one slot: {template!r}")
    return template.format(word)


@dataclass
class Vocab:
    """Token <-> id mapping plus the token embedding table.

    ``trainable`` flags the rows that prompt learning may update; only
    concept tokens ever set it.
    """

    tokens: list
    embeddings: np.ndarray
    context_length: int = 16
    trainable: np.ndarray = None
    concepts: dict = field(default_factory=dict)  # category string -> concept token

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")
        if self.trainable is None:
            self.trainable = np.zeros(len(self.tokens), dtype=bool)
        if self.embeddings.shape[0] != len(self.tokens):
            raise ValueError("embedding table does not match the token list")

    @classmethod
    def build(cls, words, dim=64, context_length=16, seed=0):
        words = sorted(set(w.lower() for w in words) - set(RESERVED))
        tokens = list(RESERVED) + words
        rng = np.random.default_rng(seed)
        table = (rng.normal(size=(len(tokens), dim)) * 0.5).astype(np.float32)
        return cls(tokens=tokens, embeddings=table, context_length=context_length)

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    @property
    def pad_id(self):
        return self.index[PAD]

    @property
    def start_id(self):
        return self.index[START]

    @property
    def end_id(self):
        return self.index[END]

    def id(self, token):
        try:
            return self.index[token]
        except KeyError:
            raise UnknownTokenError(f"word {token!r} is not in the vocabulary") from None

    def tokenize(self, prompt: str) -> np.ndarray:
        """Start + word ids + end, right-padded to ``context_length``."""
        words = prompt.lower().split()
        ids = [self.start_id] + [self.id(w) for w in words] + [self.end_id]
        if len(ids) > self.context_length:
            raise ValueError(f"prompt {prompt!r} exceeds context length {self.context_length}")
        ids += [self.pad_id] * (self.context_length - len(ids))
        return np.array(ids, dtype=np.int64)

    def detokenize(self, ids) -> str:
        words = []
        for i in ids:
            tok = self.tokens[int(i)]
            if tok == END:
                break
            if tok in (START, PAD):
                continue
            words.append(tok)
        return " ".join(words)

    def end_position(self, ids) -> int:
        return int(np.flatnonzero(np.asarray(ids) == self.end_id)[0])

    def extend(self, category: str) -> int:
        """Add the concept token for ``category``, copying its meta token's vector."""
        token = concept_token(category)
        if token in self.index:
            raise ValueError(f"concept token {token} already exists")
        meta = select_meta_token(category)
        src = self.id(meta)
        self.tokens.append(token)
        self.index[token] = len(self.tokens) - 1
        self.embeddings = np.concatenate([self.embeddings, self.embeddings[src : src + 1].copy()])
        self.trainable = np.append(self.trainable, True)
        self.concepts[category] = token
        return self.index[token]

    def concept_id(self, category: str) -> int:
        if category not in self.concepts:
            raise KeyError(f"no concept token for category {category!r}")
        return self.index[self.concepts[category]]

    def prompt_pair(self, category: str, template: str = DEFAULT_TEMPLATE):
        """(meta-token prompt, concept-token prompt) from one template."""
        return (
            fill_template(template, select_meta_token(category)),
            fill_template(template, self.concepts[category]),
        )

    def to_dict(self):
        return {
            "tokens": list(self.tokens),
            "context_length": self.context_length,
            "trainable": [int(b) for b in self.trainable],
            "concepts": dict(self.concepts),
        }

    @classmethod
    def from_dict(cls, d, embeddings):
        return cls(
            tokens=list(d["tokens"]),
            embeddings=np.asarray(embeddings, dtype=np.float32),
            context_length=int(d["context_length"]),
            trainable=np.array(d["trainable"], dtype=bool),
            concepts=dict(d["concepts"]),
        )


def corpus_words(categories, templates=TEMPLATES):
    """Every word a prompt over ``categories`` and ``templates`` can contain."""
    words = set()
    for t in templates:
        words.update(t.replace("{}", " ").split())
    for c in categories:
        for name in category_names(c):
            words.update(name.split())
        words.add(select_meta_token(c))
    return words
