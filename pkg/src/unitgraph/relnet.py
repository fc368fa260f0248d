"""Feedforward relation classifier over dependency-path patterns.

For each non-Person entity the input concatenates, per candidate Person,
a one-hot of the dependency path pattern plus the raw path length, and a
small one-hot for the entity's type.  The first-layer weights for the
per-Person blocks are shared; a dense layer plus softmax then either
picks one of the K candidate slots ("select_k") or one of
left-flank/right-flank/other ("constrained3").  The classifier may
abstain: a prediction that names no actual Person yields no relation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .corpus import EntitySpan, EntityType
from .deptree import PathPattern, span_path
from .errors import MissingParseError
from .relations import (
    Attachment,
    SentenceContext,
    Strategy,
    _char_distance,
    flanking_persons,
    type_map,
)

MAX_PERSONS = 7  # candidate slots per sentence
TYPE_ORDER = (EntityType.ORGANIZATION, EntityType.RANK, EntityType.TITLE_ROLE)
MODEL_MAGIC = "unitgraph-relnet 1"


@dataclass(frozen=True)
class PatternVocab:
    """Dense index over path-pattern keys; rare patterns share ``unknown``."""

    index: dict[str, int]
    min_count: int
    unknown_index: int

    @property
    def size(self) -> int:
        return len(self.index) + 1

    def lookup(self, key: str) -> int:
        return self.index.get(key, self.unknown_index)


def build_vocab(
    patterns: Iterable[PathPattern], min_count: int = 2, directed: bool = True
) -> PatternVocab:
    """Index patterns seen at least ``min_count`` times, sorted by key."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: dict[str, int] = {}
    for p in patterns:
        key = p.key(directed)
        counts[key] = counts.get(key, 0) + 1
    kept = sorted(k for k, c in counts.items() if c >= min_count)
    return PatternVocab(
        index={k: i for i, k in enumerate(kept)},
        min_count=min_count,
        unknown_index=len(kept),
    )


@dataclass
class RelCandidateFeatures:
    """Network input for one (target entity, sentence) pair.

    ``slots[i]`` is the i-th Person's one-hot pattern block with the raw
    path length appended; absent Persons leave all-zero slots.
    """

    slots: np.ndarray  # (K, vocab_size + 1)
    type_onehot: np.ndarray  # (3,)
    truncated: bool = False


def featurize(
    ctx: SentenceContext,
    target: EntitySpan,
    vocab: PatternVocab,
    k: int = MAX_PERSONS,
    directed: bool = True,
) -> RelCandidateFeatures:
    """Per-Person path features for a target entity, in sentence order.

    Persons beyond the first ``k`` are dropped (flagged via ``truncated``);
    Persons or targets without aligned tree tokens leave zero slots.
    """
    if ctx.tree is None:
        raise MissingParseError("sentence has no dependency tree")
    slots = np.zeros((k, vocab.size + 1))
    truncated = len(ctx.persons) > k
    target_toks = ctx.tree_tokens(target)
    for i, person in enumerate(ctx.persons[:k]):
        person_toks = ctx.tree_tokens(person)
        if not target_toks or not person_toks:
            continue
        path = span_path(ctx.tree, target_toks, person_toks)
        slots[i, vocab.lookup(path.key(directed))] = 1.0
        slots[i, -1] = float(path.length)
    type_onehot = np.zeros(3)
    type_onehot[TYPE_ORDER.index(target.etype)] = 1.0
    return RelCandidateFeatures(slots, type_onehot, truncated)


@dataclass
class RelNetModel:
    """Weights for the two-layer network; W1 is shared across slots."""

    mode: str  # "select_k" or "constrained3"
    k: int
    hidden: int
    vocab_size: int
    W1: np.ndarray  # (vocab_size + 1, hidden)
    b1: np.ndarray  # (hidden,)
    W2: np.ndarray  # (3, hidden)
    b2: np.ndarray  # (hidden,)
    W3: np.ndarray  # (k * hidden + hidden, out_dim)
    b3: np.ndarray  # (out_dim,)
    length_scale: float = 0.1
    hyper: dict = field(default_factory=dict)
    loss_curve: list[float] = field(default_factory=list)

    @property
    def out_dim(self) -> int:
        return self.k if self.mode == "select_k" else 3

    def param_count(self) -> int:
        return sum(
            a.size for a in (self.W1, self.b1, self.W2, self.b2, self.W3, self.b3)
        )

    def params(self) -> dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2,
                "W3": self.W3, "b3": self.b3}


def init_model(
    mode: str,
    vocab_size: int,
    k: int = MAX_PERSONS,
    hidden: int = 8,
    seed: int = 13,
    length_scale: float = 0.1,
) -> RelNetModel:
    if mode not in ("select_k", "constrained3"):
        raise ValueError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(seed)
    out_dim = k if mode == "select_k" else 3
    return RelNetModel(
        mode=mode,
        k=k,
        hidden=hidden,
        vocab_size=vocab_size,
        W1=0.1 * rng.standard_normal((vocab_size + 1, hidden)),
        b1=np.zeros(hidden),
        W2=0.1 * rng.standard_normal((3, hidden)),
        b2=np.zeros(hidden),
        W3=0.1 * rng.standard_normal((k * hidden + hidden, out_dim)),
        b3=np.zeros(out_dim),
        length_scale=length_scale,
        hyper={"seed": seed},
    )


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_batch(model: RelNetModel, X: np.ndarray, T: np.ndarray):
    b = X.shape[0]
    Xs = X.copy()
    Xs[..., -1] *= model.length_scale  # keep length comparable to one-hots
    A1 = Xs @ model.W1 + model.b1  # (b, k, hidden)
    H1 = np.maximum(A1, 0.0)
    A2 = T @ model.W2 + model.b2  # (b, hidden)
    H2 = np.maximum(A2, 0.0)
    hidden = np.concatenate([H1.reshape(b, -1), H2], axis=1)
    Z = hidden @ model.W3 + model.b3
    P = _softmax(Z)
    return P, (Xs, A1, A2, hidden)


def forward(model: RelNetModel, feats: RelCandidateFeatures) -> np.ndarray:
    """Probability vector over the K slots (or the 3 constrained classes)."""
    if feats.slots.shape != (model.k, model.vocab_size + 1):
        raise ValueError(
            f"feature shape {feats.slots.shape} does not match model "
            f"({model.k}, {model.vocab_size + 1})"
        )
    P, _ = _forward_batch(model, feats.slots[None, ...], feats.type_onehot[None, ...])
    return P[0]


def loss_and_gradients(
    model: RelNetModel, X: np.ndarray, T: np.ndarray, Y: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy and analytic gradients for every parameter group.

    All-zero target rows (the >K-Persons rule) contribute neither loss nor
    gradient.
    """
    b = X.shape[0]
    P, (Xs, A1, A2, hidden) = _forward_batch(model, X, T)
    mass = Y.sum(axis=1, keepdims=True)  # 1 for real targets, 0 for zero rows
    loss = float(-(Y * np.log(np.clip(P, 1e-12, None))).sum() / b)
    dZ = (P * mass - Y) / b
    grads = {
        "W3": hidden.T @ dZ,
        "b3": dZ.sum(axis=0),
    }
    dhidden = dZ @ model.W3.T
    kh = model.k * model.hidden
    dH1 = dhidden[:, :kh].reshape(b, model.k, model.hidden)
    dH2 = dhidden[:, kh:]
    dA1 = dH1 * (A1 > 0)
    dA2 = dH2 * (A2 > 0)
    grads["W1"] = np.einsum("bkv,bkh->vh", Xs, dA1)
    grads["b1"] = dA1.sum(axis=(0, 1))
    grads["W2"] = T.T @ dA2
    grads["b2"] = dA2.sum(axis=0)
    return loss, grads


def train(
    model: RelNetModel,
    dataset: tuple[np.ndarray, np.ndarray, np.ndarray],
    epochs: int = 300,
    learning_rate: float = 0.05,
    seed: int = 13,
    batch_size: int = 8,
) -> RelNetModel:
    """Seeded mini-batch gradient descent; the loss curve lands on the model."""
    X, T, Y = dataset
    if len(X) == 0:
        raise ValueError("empty training set")
    if not (len(X) == len(T) == len(Y)):
        raise ValueError("dataset arrays disagree on length")
    rng = np.random.default_rng(seed)
    params = model.params()
    model.loss_curve = []
    for _ in range(epochs):
        order = rng.permutation(len(X))
        epoch_loss = 0.0
        batches = 0
        for lo in range(0, len(X), batch_size):
            idx = order[lo:lo + batch_size]
            loss, grads = loss_and_gradients(model, X[idx], T[idx], Y[idx])
            if not np.isfinite(loss):
                raise FloatingPointError(
                    "training loss is not finite; lower the learning rate"
                )
            for name, g in grads.items():
                params[name] -= learning_rate * g
            epoch_loss += loss
            batches += 1
        model.loss_curve.append(epoch_loss / batches)
    model.hyper.update(
        {"epochs": epochs, "learning_rate": learning_rate, "seed": seed,
         "batch_size": batch_size}
    )
    return model


def build_dataset(
    pairs: list[tuple[SentenceContext, EntitySpan, EntitySpan]],
    vocab: PatternVocab,
    mode: str,
    k: int = MAX_PERSONS,
    directed: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Training arrays from (context, target, gold Person) triples.

    Gold Persons outside the first ``k`` slots give all-zero targets; in
    constrained mode the three classes are left flank / right flank /
    some other Person.
    """
    xs, ts, ys = [], [], []
    out_dim = k if mode == "select_k" else 3
    for ctx, target, gold in pairs:
        try:
            feats = featurize(ctx, target, vocab, k=k, directed=directed)
        except MissingParseError:
            continue
        y = np.zeros(out_dim)
        if gold in ctx.persons[:k]:
            if mode == "select_k":
                y[ctx.persons.index(gold)] = 1.0
            else:
                left, right = flanking_persons(ctx, target)
                if gold == left:
                    y[0] = 1.0
                elif gold == right:
                    y[1] = 1.0
                else:
                    y[2] = 1.0
        xs.append(feats.slots)
        ts.append(feats.type_onehot)
        ys.append(y)
    if not xs:
        return (np.zeros((0, k, vocab.size + 1)), np.zeros((0, 3)),
                np.zeros((0, out_dim)))
    return np.stack(xs), np.stack(ts), np.stack(ys)


def collect_patterns(
    contexts_by_doc: Iterable[list[SentenceContext]],
) -> list[PathPattern]:
    """Every target-to-Person path pattern in the corpus (vocab input)."""
    patterns = []
    for contexts in contexts_by_doc:
        for ctx in contexts:
            if ctx.tree is None:
                continue
            for target in ctx.targets:
                t_toks = ctx.tree_tokens(target)
                if not t_toks:
                    continue
                for person in ctx.persons[:MAX_PERSONS]:
                    p_toks = ctx.tree_tokens(person)
                    if not p_toks:
                        continue
                    patterns.append(span_path(ctx.tree, t_toks, p_toks))
    return patterns


def predict_person(
    model: RelNetModel,
    ctx: SentenceContext,
    target: EntitySpan,
    vocab: PatternVocab,
    directed: bool | None = None,
) -> Attachment:
    """Predict the related Person for a target, or abstain.

    select_k: the argmax slot, abstaining when it names no actual Person.
    constrained3: left flank / right flank / best non-flank by shortest
    dependency path, abstaining when the chosen class has no Person.
    Pattern direction defaults to whatever the model was trained with.
    """
    if directed is None:
        directed = bool(model.hyper.get("directed", 1))
    feats = featurize(ctx, target, vocab, k=model.k, directed=directed)
    probs = forward(model, feats)
    choice = int(np.argmax(probs))
    strategy = (
        Strategy.NN_FREE if model.mode == "select_k" else Strategy.NN_CONSTRAINED
    )
    person: EntitySpan | None = None
    if model.mode == "select_k":
        candidates = ctx.persons[: model.k]
        if choice < len(candidates):
            person = candidates[choice]
    else:
        left, right = flanking_persons(ctx, target)
        if choice == 0:
            person = left
        elif choice == 1:
            person = right
        else:
            others = [p for p in ctx.persons if p is not left and p is not right]
            person = _shortest_path_person(ctx, target, others)
    return Attachment(target, person, type_map(target.etype), strategy)


def _shortest_path_person(
    ctx: SentenceContext, target: EntitySpan, candidates: list[EntitySpan]
) -> EntitySpan | None:
    t_toks = ctx.tree_tokens(target)
    if not t_toks or not candidates:
        return None
    scored = []
    for p in candidates:
        p_toks = ctx.tree_tokens(p)
        if not p_toks:
            continue
        path = span_path(ctx.tree, t_toks, p_toks)
        scored.append((path.length, _char_distance(p, target), p.start, p))
    return min(scored)[3] if scored else None


def save_relnet(path, model: RelNetModel, vocab: PatternVocab) -> None:
    """Versioned text format: header, vocab, then arrays in fixed order."""
    lines = [MODEL_MAGIC, f"mode {model.mode}", f"k {model.k}",
             f"hidden {model.hidden}", f"vocab_size {model.vocab_size}",
             f"length_scale {model.length_scale!r}"]
    for key in sorted(model.hyper):
        lines.append(f"hyper {key} {model.hyper[key]!r}")
    for pattern, idx in sorted(vocab.index.items()):
        lines.append(f"pattern\t{pattern}\t{idx}")
    lines.append(f"unknown {vocab.unknown_index}")
    lines.append(f"min_count {vocab.min_count}")
    for name, arr in model.params().items():
        mat = np.atleast_2d(arr)
        lines.append(f"array {name} {mat.shape[0]} {mat.shape[1]}")
        for row in mat:
            lines.append(" ".join(repr(float(v)) for v in row))
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def _parse_scalar(value: str):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    if value.startswith("'") and value.endswith("'"):
        return value[1:-1]
    return value


def load_relnet(path) -> tuple[RelNetModel, PatternVocab]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != MODEL_MAGIC:
        raise ValueError(f"{path}: not a relation-network model file")
    header: dict[str, str] = {}
    hyper: dict = {}
    index: dict[str, int] = {}
    arrays: dict[str, np.ndarray] = {}
    i = 1
    while i < len(lines):
        line = lines[i]
        if line.startswith("array "):
            _, name, rows_s, cols_s = line.split()
            rows, cols = int(rows_s), int(cols_s)
            mat = np.array(
                [[float(v) for v in lines[i + 1 + r].split()] for r in range(rows)]
            ).reshape(rows, cols)
            arrays[name] = mat
            i += rows + 1
            continue
        if line.startswith("pattern\t"):
            _, pattern, idx = line.split("\t")
            index[pattern] = int(idx)
        elif line.startswith("hyper "):
            _, key, value = line.split(" ", 2)
            hyper[key] = _parse_scalar(value)
        else:
            key, _, value = line.partition(" ")
            header[key] = value
        i += 1
    vocab = PatternVocab(index, int(header["min_count"]), int(header["unknown"]))
    model = RelNetModel(
        mode=header["mode"],
        k=int(header["k"]),
        hidden=int(header["hidden"]),
        vocab_size=int(header["vocab_size"]),
        W1=arrays["W1"],
        b1=arrays["b1"].ravel(),
        W2=arrays["W2"],
        b2=arrays["b2"].ravel(),
        W3=arrays["W3"],
        b3=arrays["b3"].ravel(),
        length_scale=float(header["length_scale"]),
        hyper=hyper,
    )
    return model, vocab
