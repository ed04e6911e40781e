"""Feed-forward ReLU networks and the geometry of their linear regions.

A network is a chain of affine layers with elementwise ReLU after every
hidden layer and a single linear output unit.  Each hidden unit carries an
affine argument (its pre-activation); the signs of all arguments partition
the input space into polyhedral regions on which the network is affine.
This module holds the network container plus the pointwise quantities the
pivoting solver is built from: activation patterns, per-unit arguments,
region gradients, and the normals of the hyperplanes where units switch.

Hidden units are addressed by 1-based pairs ``(layer, unit)`` with
``layer`` in ``1..depth`` and ``unit`` in ``1..width(layer)``.
"""

from __future__ import annotations

import json

import numpy as np

# Default absolute scale for "this argument is exactly zero" decisions.
# Used relative to the local scale, see hyperplane_pattern/critical_indices.
ZERO_TOL = 1e-9

NeuronIndex = tuple  # (layer, unit), both 1-based


class ReluNetwork:
    """Weights and biases of a feed-forward ReLU network.

    Parameters
    ----------
    weights : sequence of 2-D arrays
        ``weights[k]`` maps layer ``k`` activations to layer ``k+1``
        arguments; the last entry is the 1-row output map.
    biases : sequence of 1-D arrays
        One bias vector per weight matrix.

    The network has ``depth = len(weights) - 1`` ReLU layers.  The output
    layer is affine (no ReLU) and must have exactly one unit.
    """

    def __init__(self, weights, biases):
        if len(weights) != len(biases):
            raise ValueError("need one bias vector per weight matrix")
        if len(weights) < 2:
            raise ValueError("need at least one ReLU layer plus the output layer")
        self.weights = [np.ascontiguousarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.ascontiguousarray(b, dtype=np.float64) for b in biases]
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ValueError(f"layer {k + 1}: weight/bias shapes {w.shape}/{b.shape} do not chain")
            if k > 0 and w.shape[1] != self.weights[k - 1].shape[0]:
                raise ValueError(f"layer {k + 1}: input width {w.shape[1]} != previous layer width")
        if self.weights[-1].shape[0] != 1:
            raise ValueError("output layer must have exactly one unit")
        self.depth = len(self.weights) - 1
        self.input_dim = self.weights[0].shape[1]
        self.relu_widths = tuple(w.shape[0] for w in self.weights[:-1])
        self.widths = (self.input_dim,) + self.relu_widths + (1,)
        self.num_neurons = int(sum(self.relu_widths))
        off = np.zeros(self.depth + 1, dtype=np.int64)
        np.cumsum(self.relu_widths, out=off[1:])
        self.offsets = off

    def flat_index(self, c) -> int:
        """Flat position of hidden unit ``c = (layer, unit)``."""
        l, j = c
        if not (1 <= l <= self.depth and 1 <= j <= self.relu_widths[l - 1]):
            raise ValueError(f"no hidden unit {c!r} in widths {self.widths}")
        return int(self.offsets[l - 1]) + j - 1

    def neuron_at(self, flat: int):
        """Inverse of flat_index."""
        if not 0 <= flat < self.num_neurons:
            raise ValueError(f"flat index {flat} out of range")
        l = int(np.searchsorted(self.offsets, flat, side="right"))
        return (l, flat - int(self.offsets[l - 1]) + 1)

    def neurons(self):
        """All hidden unit indices in (layer, unit) lexicographic order."""
        for l, width in enumerate(self.relu_widths, start=1):
            for j in range(1, width + 1):
                yield (l, j)

    def __repr__(self):
        return f"ReluNetwork(widths={self.widths})"


class _FlatPattern:
    """Flat per-unit storage with per-layer offsets. Base for the two patterns."""

    __slots__ = ("widths", "offsets", "bits")
    _dtype = np.uint8

    def __init__(self, widths, bits):
        self.widths = tuple(int(w) for w in widths)
        off = np.zeros(len(self.widths) + 1, dtype=np.int64)
        np.cumsum(self.widths, out=off[1:])
        self.offsets = off
        bits = np.ascontiguousarray(bits, dtype=self._dtype)
        if bits.shape != (int(off[-1]),):
            raise ValueError("bit vector length does not match widths")
        self.bits = bits

    @classmethod
    def from_layers(cls, layers):
        widths = tuple(len(a) for a in layers)
        return cls(widths, np.concatenate([np.asarray(a) for a in layers]).astype(cls._dtype))

    def layer(self, l: int) -> np.ndarray:
        """View of layer ``l`` (1-based) entries."""
        return self.bits[self.offsets[l - 1]:self.offsets[l]]

    def to_layers(self):
        return [self.layer(l).tolist() for l in range(1, len(self.widths) + 1)]

    def flat_index(self, c) -> int:
        l, j = c
        return int(self.offsets[l - 1]) + j - 1

    def get(self, c) -> int:
        return int(self.bits[self.flat_index(c)])

    def copy(self):
        return type(self)(self.widths, self.bits.copy())

    def key(self) -> bytes:
        """Hashable fingerprint (used for region counting)."""
        return self.bits.tobytes()

    def __eq__(self, other):
        return (
            type(self) is type(other)
            and self.widths == other.widths
            and np.array_equal(self.bits, other.bits)
        )

    def __hash__(self):
        return hash((self.widths, self.key()))

    def __repr__(self):
        parts = ",".join("".join(str(int(b)) for b in self.layer(l)) for l in range(1, len(self.widths) + 1))
        return f"{type(self).__name__}({parts})"


class ActivationPattern(_FlatPattern):
    """0/1 state of every hidden unit: 1 = passes its argument, 0 = clamped."""

    def flip_inplace(self, c):
        i = self.flat_index(c)
        self.bits[i] ^= 1

    def flipped(self, c):
        out = self.copy()
        out.flip_inplace(c)
        return out


class HyperplanePattern(_FlatPattern):
    """Sign in {-1, 0, +1} of every hidden unit's argument."""

    _dtype = np.int8


class PairGroups:
    """Disjoint pairs of same-layer units whose weight rows are exact negations.

    The two units of a pair sit on one hyperplane with opposite orientation,
    so a valid activation pattern keeps their bits complementary and the
    solver flips them together.  The first member of each pair is the
    representative the line search scans; the second is skipped.
    """

    def __init__(self, pairs=()):
        self.pairs = [((int(a[0]), int(a[1])), (int(b[0]), int(b[1]))) for a, b in pairs]
        self._partner = {}
        for a, b in self.pairs:
            if a[0] != b[0]:
                raise ValueError(f"pair {a}/{b} spans two layers")
            if a in self._partner or b in self._partner or a == b:
                raise ValueError("pairs must be disjoint")
            self._partner[a] = b
            self._partner[b] = a

    def __len__(self):
        return len(self.pairs)

    def partner_of(self, c):
        return self._partner.get((c[0], c[1]))

    def flip_set(self, c):
        """The unit c together with its partner, if paired."""
        p = self.partner_of(c)
        return (c,) if p is None else (c, p)

    def secondary_flat_mask(self, net: ReluNetwork) -> np.ndarray:
        """Boolean mask over flat unit indices marking second pair members."""
        mask = np.zeros(net.num_neurons, dtype=bool)
        for _, b in self.pairs:
            mask[net.flat_index(b)] = True
        return mask

    def validate(self, net: ReluNetwork):
        """Check exact row negation of weights and biases for every pair."""
        for a, b in self.pairs:
            (l, ja), (_, jb) = a, b
            w, bias = net.weights[l - 1], net.biases[l - 1]
            if not (np.array_equal(w[ja - 1], -w[jb - 1]) and bias[ja - 1] == -bias[jb - 1]):
                raise ValueError(f"pair {a}/{b}: rows are not exact negations")

    def check_pattern(self, s: ActivationPattern):
        """Paired bits must be complementary."""
        for a, b in self.pairs:
            if s.get(a) == s.get(b):
                raise ValueError(f"pair {a}/{b} has equal activation bits")


def evaluate(net: ReluNetwork, x) -> float:
    """Network output at x."""
    y = np.asarray(x, dtype=np.float64)
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        y = np.maximum(w @ y + b, 0.0)
    return float((net.weights[-1] @ y + net.biases[-1])[0])


def relu_arguments(net: ReluNetwork, x):
    """Per-layer pre-activation vectors of every hidden unit at x."""
    y = np.asarray(x, dtype=np.float64)
    args = []
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        a = w @ y + b
        args.append(a)
        y = np.maximum(a, 0.0)
    return args


def hyperplane_pattern(net: ReluNetwork, x, zero_tol: float = ZERO_TOL) -> HyperplanePattern:
    """Sign pattern of the arguments at x.

    An argument counts as zero when its magnitude is at most
    ``zero_tol * (1 + max|x|)``.
    """
    x = np.asarray(x, dtype=np.float64)
    scale = zero_tol * (1.0 + (np.max(np.abs(x)) if x.size else 0.0))
    layers = []
    for a in relu_arguments(net, x):
        h = np.sign(a).astype(np.int8)
        h[np.abs(a) <= scale] = 0
        layers.append(h)
    return HyperplanePattern.from_layers(layers)


def activation_pattern(net: ReluNetwork, x) -> ActivationPattern:
    """0/1 pattern at x; an exactly-zero argument maps to 0 (clamped)."""
    layers = [(a > 0.0).astype(np.uint8) for a in relu_arguments(net, x)]
    return ActivationPattern.from_layers(layers)


def is_compatible(h: HyperplanePattern, s: ActivationPattern) -> bool:
    """True when s only commits sign choices that h leaves open.

    Units with nonzero sign must keep the matching bit; units sitting on
    their hyperplane (sign 0) may take either bit.
    """
    if h.widths != s.widths:
        raise ValueError("patterns describe different networks")
    return bool(np.all(h.bits.astype(np.float64) * (s.bits.astype(np.float64) - 0.5) >= 0.0))


def subjective_arguments(net: ReluNetwork, s: ActivationPattern, x):
    """Arguments when every ReLU is replaced by multiplication with its bit in s."""
    y = np.asarray(x, dtype=np.float64)
    args = []
    for l, (w, b) in enumerate(zip(net.weights[:-1], net.biases[:-1]), start=1):
        a = w @ y + b
        args.append(a)
        y = s.layer(l) * a
    return args


def subjective_value(net: ReluNetwork, s: ActivationPattern, x) -> float:
    """Output when every ReLU is replaced by multiplication with its bit in s."""
    y = np.asarray(x, dtype=np.float64)
    for l, (w, b) in enumerate(zip(net.weights[:-1], net.biases[:-1]), start=1):
        y = s.layer(l) * (w @ y + b)
    return float((net.weights[-1] @ y + net.biases[-1])[0])


def gradient(net: ReluNetwork, s: ActivationPattern) -> np.ndarray:
    """Gradient of the network on the region with activation pattern s."""
    g = net.weights[-1][0]
    for l in range(net.depth, 0, -1):
        g = (g * s.layer(l)) @ net.weights[l - 1]
    return g


def normal_matrices(net: ReluNetwork, s: ActivationPattern):
    """Per-layer matrices whose rows are the (unoriented) argument normals.

    Row j of the layer-l matrix is the gradient of unit (l, j)'s argument
    under pattern s; the unit's hyperplane is where that affine argument
    vanishes.
    """
    mats = []
    g = net.weights[0]
    mats.append(g)
    for l in range(1, net.depth):
        g = net.weights[l] @ (s.layer(l)[:, None] * g)
        mats.append(g)
    return mats


def oriented_normal(net: ReluNetwork, s: ActivationPattern, c) -> np.ndarray:
    """Normal of unit c's hyperplane, oriented into the side where s holds.

    Moving from a point on the hyperplane with positive inner product
    against this vector keeps (for bit 1) or makes (for bit 0) the unit's
    activation consistent with s.
    """
    l, j = c
    r = net.weights[l - 1][j - 1]
    for k in range(l - 1, 0, -1):
        r = (r * s.layer(k)) @ net.weights[k - 1]
    return r if s.get(c) == 1 else -r


def inner_products_all(net: ReluNetwork, s: ActivationPattern, w):
    """Inner products of w with every unit's oriented normal, one pass.

    Cost is one bias-free forward sweep; returns one vector per layer.
    """
    w = np.asarray(w, dtype=np.float64)
    u = net.weights[0] @ w
    out = []
    for l in range(1, net.depth + 1):
        sl = s.layer(l).astype(np.float64)
        out.append(np.where(sl == 1.0, u, -u))
        if l < net.depth:
            u = net.weights[l] @ (sl * u)
    return out


def critical_indices(net: ReluNetwork, s: ActivationPattern, x, zero_tol: float = ZERO_TOL):
    """Units whose argument vanishes at x and whose normal is nonzero.

    The zero test is relative: |argument| <= zero_tol * (1 + |normal|).
    Units with (numerically) zero normal have locally constant arguments
    and are excluded; they never separate regions near x.
    """
    args = subjective_arguments(net, s, x)
    crit = []
    for l, mat in enumerate(normal_matrices(net, s), start=1):
        norms = np.linalg.norm(mat, axis=1)
        hit = (np.abs(args[l - 1]) <= zero_tol * (1.0 + norms)) & (norms > zero_tol)
        for j in np.nonzero(hit)[0]:
            crit.append((l, int(j) + 1))
    return crit


def critical_kernel_dim(net: ReluNetwork, s: ActivationPattern, x, zero_tol: float = ZERO_TOL) -> int:
    """Dimension of the common kernel of all critical normals at x.

    Equals input_dim minus the rank of the stacked critical normals; the
    point is a vertex of its region exactly when this is zero.
    """
    crit = critical_indices(net, s, x, zero_tol)
    if not crit:
        return net.input_dim
    mats = normal_matrices(net, s)
    rows = np.stack([mats[l - 1][j - 1] for (l, j) in crit])
    sv = np.linalg.svd(rows, compute_uv=False)
    rank = int(np.sum(sv > zero_tol * max(1.0, sv[0])))
    return net.input_dim - rank


def enumerate_compatible(net: ReluNetwork, x, zero_tol: float = ZERO_TOL, cap: int = 65536):
    """All activation patterns compatible with the sign pattern at x.

    Each unit on its hyperplane doubles the count, so the result has
    2**(#zero arguments) patterns; raises ValueError beyond cap.
    """
    h = hyperplane_pattern(net, x, zero_tol)
    zeros = np.nonzero(h.bits == 0)[0]
    if len(zeros) > np.log2(cap):
        raise ValueError(f"2**{len(zeros)} compatible patterns exceed cap {cap}")
    base = (h.bits > 0).astype(np.uint8)
    out = []
    for mask in range(1 << len(zeros)):
        bits = base.copy()
        for k, flat in enumerate(zeros):
            bits[flat] = (mask >> k) & 1
        out.append(ActivationPattern(h.widths, bits))
    return out


def flip(s: ActivationPattern, c, pairs: PairGroups | None = None) -> ActivationPattern:
    """Copy of s with unit c's bit toggled (and its partner's, if paired)."""
    out = s.copy()
    for m in (pairs.flip_set(c) if pairs is not None else (c,)):
        out.flip_inplace(m)
    return out


def activation_bits_batch(net: ReluNetwork, xs: np.ndarray) -> np.ndarray:
    """Activation bits for a batch of points, one row per point."""
    y = np.asarray(xs, dtype=np.float64)
    cols = []
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        a = y @ w.T + b
        cols.append(a > 0.0)
        y = np.maximum(a, 0.0)
    return np.concatenate(cols, axis=1).astype(np.uint8)


def save_model(path, net: ReluNetwork, pairs: PairGroups | None = None):
    """Write a network (and optional pair metadata) as JSON."""
    doc = {
        "widths": list(net.widths),
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }
    if pairs is not None and len(pairs):
        doc["pairs"] = [[list(a), list(b)] for a, b in pairs.pairs]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_model(path):
    """Read a model JSON file; returns (network, pairs or None)."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        net = ReluNetwork(doc["weights"], doc["biases"])
    except KeyError as exc:
        raise ValueError(f"model file {path}: missing field {exc}") from exc
    if "widths" in doc and tuple(doc["widths"]) != net.widths:
        raise ValueError(f"model file {path}: declared widths {doc['widths']} != actual {list(net.widths)}")
    pairs = None
    if doc.get("pairs"):
        pairs = PairGroups(doc["pairs"])
        pairs.validate(net)
    return net, pairs
