"""Two-layer embedding branches with exact analytic gradients and Adam.

A branch maps an input vector x to the unit-norm embedding
``l2_normalize(W2.T @ relu(W1.T @ x + b1) + b2)``. The production widths
are 512 hidden and 256 output units; the arrays carry the actual shapes so
tiny branches can be built for numerical checks.
"""

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ParseError, ShapeError

HIDDEN_WIDTH = 512
OUTPUT_WIDTH = 256

_PARAM_NAMES = ("W1", "b1", "W2", "b2")


@dataclass
class MlpBranch:
    W1: np.ndarray  # (d_in, hidden)
    b1: np.ndarray  # (hidden,)
    W2: np.ndarray  # (hidden, out)
    b2: np.ndarray  # (out,)

    @property
    def d_in(self) -> int:
        return int(self.W1.shape[0])

    @property
    def d_out(self) -> int:
        return int(self.W2.shape[1])

    def params(self) -> tuple[np.ndarray, ...]:
        return (self.W1, self.b1, self.W2, self.b2)


@dataclass
class GradientSet:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def params(self) -> tuple[np.ndarray, ...]:
        return (self.W1, self.b1, self.W2, self.b2)

    def add_(self, other: "GradientSet") -> "GradientSet":
        for mine, theirs in zip(self.params(), other.params()):
            mine += theirs
        return self


@dataclass
class AdamState:
    m: GradientSet
    v: GradientSet
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def zero_gradients(branch: MlpBranch) -> GradientSet:
    return GradientSet(*(np.zeros_like(p) for p in branch.params()))


def new_adam_state(branch: MlpBranch) -> AdamState:
    return AdamState(m=zero_gradients(branch), v=zero_gradients(branch))


def new_branch(
    d_in: int,
    rng: np.random.Generator,
    hidden: int = HIDDEN_WIDTH,
    d_out: int = OUTPUT_WIDTH,
) -> MlpBranch:
    """Fresh branch with uniform fan-balanced weights and zero biases.

    Weight entries are i.i.d. uniform in +-sqrt(6/(fan_in+fan_out)).
    """
    if d_in < 1 or hidden < 1 or d_out < 1:
        raise DomainError(f"invalid branch shape {d_in}->{hidden}->{d_out}")
    lim1 = np.sqrt(6.0 / (d_in + hidden))
    lim2 = np.sqrt(6.0 / (hidden + d_out))
    return MlpBranch(
        W1=rng.uniform(-lim1, lim1, size=(d_in, hidden)),
        b1=np.zeros(hidden),
        W2=rng.uniform(-lim2, lim2, size=(hidden, d_out)),
        b2=np.zeros(d_out),
    )


def forward_batch(branch: MlpBranch, X: np.ndarray) -> tuple[np.ndarray, tuple]:
    """Embed a batch of rows; returns (Y, cache) with unit-norm Y rows.

    The cache feeds backward_batch and must not be mutated in between.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != branch.d_in:
        raise ShapeError(f"expected (batch, {branch.d_in}) input, got {X.shape}")
    A1 = X @ branch.W1 + branch.b1
    H = np.maximum(A1, 0.0)
    Z = H @ branch.W2 + branch.b2
    norms = np.linalg.norm(Z, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise DomainError("pre-normalization output is the zero vector")
    Y = Z / norms
    return Y, (X, A1, H, Y, norms)


def forward(branch: MlpBranch, x: np.ndarray) -> np.ndarray:
    """Embed a single input vector to a unit-norm output vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"expected 1-d input, got shape {x.shape}")
    Y, _ = forward_batch(branch, x[None, :])
    return Y[0]


def backward_batch(branch: MlpBranch, cache: tuple, upstream: np.ndarray) -> tuple[GradientSet, np.ndarray]:
    """Exact gradients of sum(upstream * Y) w.r.t. parameters and inputs.

    ``upstream`` is dLoss/dY for the batch; any averaging over the batch
    belongs to the caller (scale upstream by 1/B for a mean loss).
    """
    X, A1, H, Y, norms = cache
    G = np.asarray(upstream, dtype=np.float64)
    if G.shape != Y.shape:
        raise ShapeError(f"upstream shape {G.shape} does not match output {Y.shape}")
    # normalization backward: project out the radial component, then rescale
    dZ = (G - np.sum(G * Y, axis=1, keepdims=True) * Y) / norms
    dW2 = H.T @ dZ
    db2 = dZ.sum(axis=0)
    dH = dZ @ branch.W2.T
    dA1 = dH * (A1 > 0.0)
    dW1 = X.T @ dA1
    db1 = dA1.sum(axis=0)
    dX = dA1 @ branch.W1.T
    return GradientSet(W1=dW1, b1=db1, W2=dW2, b2=db2), dX


def backward(branch: MlpBranch, x: np.ndarray, upstream: np.ndarray) -> tuple[GradientSet, np.ndarray]:
    """Single-vector wrapper around forward_batch/backward_batch."""
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.ndim != 1 or upstream.shape[0] != branch.d_out:
        raise ShapeError(f"expected upstream of length {branch.d_out}, got {upstream.shape}")
    _, cache = forward_batch(branch, x[None, :])
    grads, dX = backward_batch(branch, cache, upstream[None, :])
    return grads, dX[0]


def adam_update(
    param: np.ndarray,
    grad: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    t: int,
    lr: float,
    weight_decay: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam step on a single tensor, in place.

    Weight decay is folded into the gradient (g <- g + wd*theta) before the
    moment updates; ``t`` is the already-incremented step counter.
    """
    if param.shape != grad.shape or param.shape != m.shape or param.shape != v.shape:
        raise ShapeError("parameter, gradient, and moment shapes must match")
    g = grad + weight_decay * param
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)


def adam_step(
    branch: MlpBranch,
    grads: GradientSet,
    state: AdamState,
    lr: float,
    weight_decay: float,
) -> None:
    """Apply one Adam step to every branch parameter, in place."""
    if lr <= 0.0:
        raise DomainError(f"lr must be positive, got {lr}")
    state.t += 1
    for param, grad, m, v in zip(branch.params(), grads.params(), state.m.params(), state.v.params()):
        adam_update(param, grad, m, v, state.t, lr, weight_decay, state.beta1, state.beta2, state.eps)


def _write_array(fh, name: str, arr: np.ndarray) -> None:
    if arr.ndim == 1:
        fh.write(f"{name} {arr.shape[0]}\n")
        fh.write(" ".join(f"{v:.9g}" for v in arr) + "\n")
    else:
        fh.write(f"{name} {arr.shape[0]} {arr.shape[1]}\n")
        for row in arr:
            fh.write(" ".join(f"{v:.9g}" for v in row) + "\n")


def save_checkpoint(path, branches: dict[str, MlpBranch], states: dict[str, AdamState] | None = None) -> None:
    """Write named branches (and their optimizer states) as text sections.

    Layout per branch: a `[branch <name> d_in=<d>]` header, the four
    parameter arrays, then an optional `[adam t=<t>]` section holding the
    first/second moments in the same array format.
    """
    states = states or {}
    with open(path, "w", encoding="utf-8") as fh:
        for name, branch in branches.items():
            fh.write(f"[branch {name} d_in={branch.d_in}]\n")
            for pname, arr in zip(_PARAM_NAMES, branch.params()):
                _write_array(fh, pname, arr)
            state = states.get(name)
            if state is not None:
                fh.write(f"[adam t={state.t}]\n")
                for pname, arr in zip(_PARAM_NAMES, state.m.params()):
                    _write_array(fh, "m" + pname, arr)
                for pname, arr in zip(_PARAM_NAMES, state.v.params()):
                    _write_array(fh, "v" + pname, arr)


class _SectionReader:
    def __init__(self, path):
        self.path = path
        self.fh = open(path, encoding="utf-8")
        self.lineno = 0
        self.pushed: str | None = None

    def next_line(self) -> str | None:
        if self.pushed is not None:
            line, self.pushed = self.pushed, None
            return line
        line = self.fh.readline()
        if not line:
            return None
        self.lineno += 1
        return line.rstrip("\n")

    def push(self, line: str) -> None:
        self.pushed = line

    def error(self, msg: str) -> ParseError:
        return ParseError(f"{self.path}:{self.lineno}: {msg}")

    def read_array(self, expect_name: str) -> np.ndarray:
        head = self.next_line()
        if head is None:
            raise self.error(f"unexpected end of file, wanted array {expect_name!r}")
        parts = head.split()
        if not parts or parts[0] != expect_name or len(parts) not in (2, 3):
            raise self.error(f"expected '{expect_name} <shape>' header, got {head!r}")
        try:
            shape = tuple(int(p) for p in parts[1:])
        except ValueError:
            raise self.error(f"non-integer shape in {head!r}") from None
        n_lines = 1 if len(shape) == 1 else shape[0]
        rows = []
        for _ in range(n_lines):
            line = self.next_line()
            if line is None:
                raise self.error(f"truncated array {expect_name!r}")
            try:
                rows.append([float(v) for v in line.split()])
            except ValueError:
                raise self.error(f"non-numeric value in array {expect_name!r}") from None
        arr = np.array(rows[0] if len(shape) == 1 else rows, dtype=np.float64)
        if arr.shape != shape:
            raise self.error(f"array {expect_name!r} has shape {arr.shape}, header says {shape}")
        return arr


_BRANCH_RE = re.compile(r"^\[branch (\S+) d_in=(\d+)\]$")
_ADAM_RE = re.compile(r"^\[adam t=(\d+)\]$")


def load_checkpoint(path) -> tuple[dict[str, MlpBranch], dict[str, AdamState]]:
    """Read back a checkpoint written by save_checkpoint."""
    branches: dict[str, MlpBranch] = {}
    states: dict[str, AdamState] = {}
    reader = _SectionReader(path)
    try:
        line = reader.next_line()
        while line is not None:
            m = _BRANCH_RE.match(line)
            if not m:
                raise reader.error(f"expected '[branch ...]' section, got {line!r}")
            name, d_in = m.group(1), int(m.group(2))
            if name in branches:
                raise reader.error(f"duplicate branch section {name!r}")
            arrays = [reader.read_array(p) for p in _PARAM_NAMES]
            branch = MlpBranch(*arrays)
            if branch.d_in != d_in:
                raise reader.error(f"branch {name!r} W1 rows {branch.d_in} != header d_in {d_in}")
            if branch.W1.shape[1] != branch.b1.shape[0] or branch.W2.shape[0] != branch.b1.shape[0]:
                raise reader.error(f"branch {name!r} has inconsistent layer shapes")
            if branch.W2.shape[1] != branch.b2.shape[0]:
                raise reader.error(f"branch {name!r} has inconsistent output shapes")
            branches[name] = branch
            line = reader.next_line()
            if line is not None:
                am = _ADAM_RE.match(line)
                if am:
                    ms = [reader.read_array("m" + p) for p in _PARAM_NAMES]
                    vs = [reader.read_array("v" + p) for p in _PARAM_NAMES]
                    state = AdamState(m=GradientSet(*ms), v=GradientSet(*vs), t=int(am.group(1)))
                    for m_arr, v_arr, p_arr in zip(state.m.params(), state.v.params(), branch.params()):
                        if m_arr.shape != p_arr.shape or v_arr.shape != p_arr.shape:
                            raise reader.error(f"adam state shape mismatch for branch {name!r}")
                    states[name] = state
                    line = reader.next_line()
    finally:
        reader.fh.close()
    if not branches:
        raise ParseError(f"{path}: no branch sections found")
    return branches, states
