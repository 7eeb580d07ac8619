"""Pretrained word-vector tables and tag resolution.

Tables use a plain text interchange format: a header line ``<count> <dim>``
followed by ``count`` lines of ``<token> <v1> ... <v_dim>`` separated by
single spaces. Tokens may contain underscores for multi-word n-grams.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, OOVError, ParseError


@dataclass
class WordVectorTable:
    """Immutable token -> vector map with a fixed dimension."""

    dim: int
    tokens: list[str]
    vectors: np.ndarray  # (n_tokens, dim) float64
    index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.index:
            self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def vector(self, token: str) -> np.ndarray:
        """Stored vector for an exact token; KeyError when absent."""
        return self.vectors[self.index[token]]


def load_word_vectors(path) -> WordVectorTable:
    """Parse a text vector file into a table.

    The header fixes the entry count and dimension; every line is checked
    against both. Duplicate tokens are rejected rather than silently
    overwritten.
    """
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header:
            raise ParseError(f"{path}:1: empty file, expected '<count> <dim>' header")
        parts = header.split()
        if len(parts) != 2:
            raise ParseError(f"{path}:1: malformed header {header.strip()!r}, expected '<count> <dim>'")
        try:
            count, dim = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(f"{path}:1: non-integer header {header.strip()!r}") from None
        if count < 0 or dim < 1:
            raise ParseError(f"{path}:1: invalid header values count={count} dim={dim}")

        tokens: list[str] = []
        index: dict[str, int] = {}
        rows = np.empty((count, dim), dtype=np.float64)
        lineno = 1
        for line in fh:
            lineno += 1
            if not line.strip():
                raise ParseError(f"{path}:{lineno}: blank line")
            fields = line.split()
            token = fields[0]
            if len(fields) - 1 != dim:
                raise ParseError(
                    f"{path}:{lineno}: expected {dim} values for {token!r}, got {len(fields) - 1}"
                )
            if token in index:
                raise ParseError(f"{path}:{lineno}: duplicate token {token!r}")
            if len(tokens) >= count:
                raise ParseError(f"{path}:{lineno}: more than {count} entries declared in header")
            try:
                rows[len(tokens)] = [float(v) for v in fields[1:]]
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric value for {token!r}") from None
            index[token] = len(tokens)
            tokens.append(token)
    if len(tokens) != count:
        raise ParseError(f"{path}: header declares {count} entries, file has {len(tokens)}")
    return WordVectorTable(dim=dim, tokens=tokens, vectors=rows, index=index)


def save_word_vectors(path, table: WordVectorTable) -> None:
    """Write a table in the interchange format with 9 significant digits."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(table.tokens)} {table.dim}\n")
        for i, token in enumerate(table.tokens):
            values = " ".join(f"{v:.9g}" for v in table.vectors[i])
            fh.write(f"{token} {values}\n")


def normalize_tag(tag: str) -> str:
    """Canonical token form of a tag: lowercase, spaces to underscores."""
    return "_".join(tag.strip().lower().split())


def tag_to_vector(tag: str, table: WordVectorTable) -> np.ndarray:
    """Resolve a tag to a vector.

    The tag is lowercased and its spaces become underscores; the joined
    n-gram token is looked up first. When absent, the result is the
    unweighted mean of the constituent token vectors, skipping tokens the
    table lacks. No token resolvable raises OOVError.
    """
    if not tag or not tag.strip():
        raise DomainError("empty tag")
    joined = normalize_tag(tag)
    if joined in table.index:
        return table.vectors[table.index[joined]].copy()
    parts = [p for p in joined.split("_") if p]
    hits = [table.vectors[table.index[p]] for p in parts if p in table.index]
    if not hits:
        raise OOVError(f"tag {tag!r} has no token in the vector vocabulary")
    return np.mean(hits, axis=0)


def nearest_words(token: str, table: WordVectorTable, k: int) -> list[tuple[str, float]]:
    """Top-k tokens by cosine similarity to ``token``.

    The query resolves through tag_to_vector, so n-gram and token-mean
    fallbacks apply. The query token itself is excluded; ties break
    lexicographically. Similarity is computed on the stored vectors.
    """
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    q = tag_to_vector(token, table)
    qn = np.linalg.norm(q)
    if qn == 0.0:
        raise DomainError(f"query {token!r} resolves to a zero vector")
    norms = np.linalg.norm(table.vectors, axis=1)
    safe = np.where(norms > 0.0, norms, 1.0)
    sims = (table.vectors @ q) / (safe * qn)
    sims[norms == 0.0] = -np.inf
    exclude = normalize_tag(token)
    ranked = sorted(
        ((t, float(sims[i])) for i, t in enumerate(table.tokens) if t != exclude),
        key=lambda ts: (-ts[1], ts[0]),
    )
    return ranked[:k]
