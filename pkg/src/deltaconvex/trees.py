"""Dyadic sign trees in l_inf^D, tree families on disjoint coordinate
blocks, the distance counterexample function, and the adversarial branch
walk that certifies approximation-error lower bounds for convex pairs.

Sign trees are stored implicitly (node coordinates are a function of the
sign index), so walks on very deep trees never materialize the node set.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .functions import LipschitzFunction

__all__ = [
    "DyadicTree",
    "TreeFamily",
    "TreeValidation",
    "WalkLevel",
    "WalkReport",
    "build_sign_tree",
    "build_tree_family",
    "validate_tree",
    "counterexample_function",
    "adversarial_branch_walk",
    "error_lower_bound",
    "save_tree",
    "load_tree",
]

_ENUM_CAP = 1 << 21  # max node count for exhaustive materialization


@dataclass(frozen=True)
class _SignStructure:
    """Implicit node map: coordinates block_start..block_start+width-1 hold
    an optional leading 1 followed by the sign prefix, scaled; all other
    coordinates are 0."""
    depth: int
    ambient_dim: int
    block_start: int
    lead: bool
    scale: float

    @property
    def width(self):
        return self.depth + (1 if self.lead else 0)

    def node(self, alpha):
        x = np.zeros(self.ambient_dim)
        off = self.block_start
        if self.lead:
            x[off] = self.scale
            off += 1
        for j, s in enumerate(alpha):
            x[off + j] = s * self.scale
        return x

    def level_signs(self, k):
        """(2^k, k) array of sign tuples; row order: bit 0 -> +1, MSB first,
        so children of row i are rows 2i (+1 child) and 2i+1 (-1 child)."""
        if k == 0:
            return np.zeros((1, 0))
        bits = (np.arange(1 << k)[:, None] >> np.arange(k - 1, -1, -1)) & 1
        return 1.0 - 2.0 * bits

    def level_array(self, k):
        signs = self.level_signs(k)
        x = np.zeros((1 << k, self.ambient_dim))
        off = self.block_start
        if self.lead:
            x[:, off] = self.scale
            off += 1
        x[:, off:off + k] = signs * self.scale
        return x


@dataclass(frozen=True)
class DyadicTree:
    """A dyadic (depth, theta)-tree: indices are sign tuples of length
    0..depth, each parent the exact midpoint of its children."""
    depth: int
    theta: float
    ambient_dim: int
    structure: _SignStructure = None
    explicit_nodes: dict = None

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.structure is None and self.explicit_nodes is None:
            raise ValueError("tree needs either a structure or explicit nodes")

    @property
    def node_count(self):
        return (1 << (self.depth + 1)) - 1

    def node(self, alpha):
        alpha = tuple(int(s) for s in alpha)
        if any(s not in (-1, 1) for s in alpha) or len(alpha) > self.depth:
            raise KeyError(f"bad sign index {alpha}")
        if self.explicit_nodes is not None:
            return self.explicit_nodes[alpha]
        return self.structure.node(alpha)

    def level_array(self, k):
        if k > self.depth:
            raise ValueError(f"level {k} exceeds depth {self.depth}")
        if self.explicit_nodes is not None:
            sig = _SignStructure(self.depth, self.ambient_dim, 0, False, 1.0)
            signs = sig.level_signs(k).astype(int)
            return np.array([self.explicit_nodes[tuple(row)] for row in signs])
        return self.structure.level_array(k)

    def indices(self):
        for k in range(self.depth + 1):
            if k == 0:
                yield ()
                continue
            for i in range(1 << k):
                yield tuple(
                    1 - 2 * ((i >> (k - 1 - j)) & 1) for j in range(k))

    def to_explicit(self):
        if self.node_count > _ENUM_CAP:
            raise ValueError("tree too deep to materialize")
        nodes = {alpha: self.node(alpha) for alpha in self.indices()}
        return DyadicTree(depth=self.depth, theta=self.theta,
                          ambient_dim=self.ambient_dim,
                          explicit_nodes=nodes)

    def with_node(self, alpha, vec):
        """Copy with one node replaced (fault injection in tests)."""
        t = self.to_explicit()
        nodes = dict(t.explicit_nodes)
        nodes[tuple(alpha)] = np.asarray(vec, dtype=float)
        return DyadicTree(depth=self.depth, theta=self.theta,
                          ambient_dim=self.ambient_dim, explicit_nodes=nodes)


def build_sign_tree(depth, block_start=0, ambient_dim=None, scale=1.0,
                    lead=False):
    """Explicit l_inf realization: the leaf for signs e has coordinate
    block_start+i equal to e_i; interior nodes truncate (equivalently,
    average their children).  A (depth, 1)-tree in the unit ball under
    l_inf for scale = 1."""
    width = depth + (1 if lead else 0)
    if ambient_dim is None:
        ambient_dim = block_start + width
    if block_start + width > ambient_dim:
        raise ValueError(
            f"block [{block_start}, {block_start + width}) overflows "
            f"ambient dimension {ambient_dim}")
    if not 0 < scale <= 1.0:
        raise ValueError("scale must lie in (0, 1]")
    struct = _SignStructure(depth=depth, ambient_dim=ambient_dim,
                            block_start=block_start, lead=lead, scale=scale)
    return DyadicTree(depth=depth, theta=scale, ambient_dim=ambient_dim,
                      structure=struct)


@dataclass(frozen=True)
class TreeFamily:
    trees: tuple
    rho: tuple
    mutual_distance: float

    @property
    def ambient_dim(self):
        return self.trees[0].ambient_dim


def build_tree_family(depths, ambient_dim=None, scale=1.0):
    """One sign tree per requested depth, each in its own disjoint
    coordinate block, realized as the subtree rooted at the first child of a
    depth+1 tree (every node carries the value ``scale`` in its block's
    first coordinate).  Mutual l_inf distance is exactly ``scale``."""
    depths = list(depths)
    if not depths:
        raise ValueError("family needs at least one member")
    need = sum(n + 1 for n in depths)
    if ambient_dim is None:
        ambient_dim = need
    if ambient_dim < need:
        raise ValueError(
            f"ambient dimension {ambient_dim} < required {need}")
    trees = []
    off = 0
    for n in depths:
        trees.append(build_sign_tree(n, block_start=off,
                                     ambient_dim=ambient_dim, scale=scale,
                                     lead=True))
        off += n + 1
    fam = TreeFamily(trees=tuple(trees), rho=tuple(scale for _ in depths),
                     mutual_distance=scale)
    _check_family_distance(fam)
    return fam


def _check_family_distance(fam, cap=512):
    """Pairwise cross check of the mutual-distance invariant; exhaustive for
    small members, level-truncated above the cap."""
    from .spaces import NormedSpace
    space = NormedSpace(dim=fam.ambient_dim, p_exponent=math.inf)
    arrays = []
    for t in fam.trees:
        lvls = [t.level_array(k) for k in range(t.depth + 1)
                if (1 << k) <= cap]
        arrays.append(np.vstack(lvls))
    for i in range(len(arrays)):
        for j in range(i + 1, len(arrays)):
            d = space.norm(arrays[i][:, None, :] - arrays[j][None, :, :])
            if d.min() < fam.mutual_distance - 1e-12:
                raise AssertionError(
                    f"family members {i} and {j} are {d.min()} apart, "
                    f"below {fam.mutual_distance}")


@dataclass(frozen=True)
class TreeValidation:
    midpoint_exact: bool
    worst_midpoint_gap: float
    midpoint_violation: tuple
    min_separation: float
    separation_pair: tuple
    separation_ok: bool
    pairs_checked: int
    exhaustive_pairs: bool
    max_norm: float


def validate_tree(tree, space, sample_pairs=2_000_000, seed=0):
    """Midpoint law checked bit-exactly on every internal node; separation
    >= theta by full pairwise enumeration up to ~2M pairs, deterministic
    subsampling beyond."""
    worst_gap = 0.0
    violation = None
    for k in range(tree.depth):
        parents = tree.level_array(k)
        children = tree.level_array(k + 1)
        mid = 0.5 * children[0::2] + 0.5 * children[1::2]
        eq = parents == mid
        if not eq.all():
            gaps = np.abs(parents - mid).max(axis=1)
            bad = int(np.argmax(gaps))
            if gaps[bad] > worst_gap:
                worst_gap = float(gaps[bad])
                signs = _SignStructure(tree.depth, tree.ambient_dim, 0,
                                       False, 1.0).level_signs(k)[bad]
                violation = tuple(int(s) for s in signs)
    midpoint_exact = violation is None

    n = tree.node_count
    total_pairs = n * (n - 1) // 2
    rng = np.random.default_rng(seed)
    min_sep = math.inf
    sep_pair = None
    max_norm = 0.0

    if total_pairs <= sample_pairs:
        all_nodes = np.vstack([tree.level_array(k)
                               for k in range(tree.depth + 1)])
        max_norm = float(space.norm(all_nodes).max())
        pairs_checked = 0
        chunk = max(16, (1 << 22) // max(n * tree.ambient_dim, 1))
        for lo in range(0, n, chunk):
            hi = min(n, lo + chunk)
            d = space.norm(all_nodes[lo:hi, None, :] - all_nodes[None, :, :])
            iu = np.arange(lo, hi)[:, None] < np.arange(n)[None, :]
            if iu.any():
                dm = np.where(iu, d, math.inf)
                i = np.unravel_index(np.argmin(dm), dm.shape)
                if dm[i] < min_sep:
                    min_sep = float(dm[i])
                    sep_pair = (lo + int(i[0]), int(i[1]))
                pairs_checked += int(iu.sum())
        exhaustive = True
    else:
        # structured pairs (parent/child and siblings at every level) plus a
        # deterministic random sample of node pairs
        pairs_checked = 0
        for k in range(tree.depth):
            budget = min(1 << k, 4096)
            parents = tree.level_array(k)[:budget]
            children = tree.level_array(k + 1)[:2 * budget]
            max_norm = max(max_norm, float(space.norm(children).max()))
            dpc = space.norm(np.repeat(parents, 2, axis=0) - children)
            dss = space.norm(children[0::2] - children[1::2])
            for dist in (dpc, dss):
                i = int(np.argmin(dist))
                if dist[i] < min_sep:
                    min_sep = float(dist[i])
                    sep_pair = (k, i)
                pairs_checked += dist.size
        remaining = sample_pairs - pairs_checked
        if tree.structure is None:
            remaining = min(remaining, 50_000)
        for lo in range(0, max(remaining, 0), 65536):
            m = min(remaining - lo, 65536)
            pa = _random_nodes(tree, rng, m)
            pb = _random_nodes(tree, rng, m)
            same = (pa == pb).all(axis=1)
            dist = space.norm(pa - pb)[~same]
            if dist.size:
                i = int(np.argmin(dist))
                if dist[i] < min_sep:
                    min_sep = float(dist[i])
                    sep_pair = ("sampled", lo + i)
                pairs_checked += dist.size
        exhaustive = False

    return TreeValidation(
        midpoint_exact=midpoint_exact,
        worst_midpoint_gap=worst_gap,
        midpoint_violation=violation,
        min_separation=min_sep,
        separation_pair=sep_pair,
        separation_ok=min_sep >= tree.theta - 1e-12,
        pairs_checked=pairs_checked,
        exhaustive_pairs=exhaustive,
        max_norm=max_norm,
    )


def _random_nodes(tree, rng, m):
    """m uniformly random (level, sign-prefix) nodes, vectorized for sign
    trees and looped for explicit ones."""
    ks = rng.integers(0, tree.depth + 1, size=m)
    signs = rng.choice((-1.0, 1.0), size=(m, tree.depth))
    mask = np.arange(tree.depth)[None, :] < ks[:, None]
    if tree.structure is not None:
        st = tree.structure
        X = np.zeros((m, tree.ambient_dim))
        off = st.block_start + (1 if st.lead else 0)
        X[:, off:off + tree.depth] = signs * mask * st.scale
        if st.lead:
            X[:, st.block_start] = st.scale
        return X
    return np.array([tree.node(tuple(int(s) for s in row[:k]))
                     for row, k in zip(signs, ks)])


def counterexample_function(family, space):
    """1-Lipschitz distance to the union of even-level nodes of the family
    (level counted within each member subtree, root = even).

    For l_inf sign trees the distance is evaluated in closed form, so the
    function stays exact at depths where the node set cannot be enumerated.
    """
    if space.dim != family.ambient_dim:
        raise ValueError("space dimension does not match the family")
    if space.p_exponent == math.inf and all(
            t.structure is not None for t in family.trees):
        return _analytic_counterexample(family, space)

    from .functions import PointSet, distance_function
    pts = []
    for t in family.trees:
        if t.node_count > _ENUM_CAP:
            raise ValueError("member too deep to enumerate; use l_inf sign "
                             "trees for the closed-form distance")
        for k in range(0, t.depth + 1, 2):
            pts.append(t.level_array(k))
    f = distance_function(space, PointSet(np.vstack(pts)))
    return LipschitzFunction(f.evaluator, 1.0, "tree-counterexample")


def _analytic_counterexample(family, space):
    members = [t.structure for t in family.trees]
    D = family.ambient_dim
    masks = []
    for st in members:
        m = np.ones(D, dtype=bool)
        m[st.block_start:st.block_start + st.width] = False
        masks.append(m)

    def ev(x):
        x = np.asarray(x, dtype=float)
        absx = np.abs(x)
        best = None
        for st, outmask in zip(members, masks):
            out = absx[..., outmask].max(axis=-1) if outmask.any() else 0.0
            off = st.block_start
            lead_pen = np.abs(x[..., off] - st.scale) if st.lead else 0.0
            blk = absx[..., off + (1 if st.lead else 0):
                       st.block_start + st.width]
            n = st.depth
            # P[k] = max_{j<=k} ||x_j| - s|, S[k] = max_{j>k} |x_j|
            pref = np.abs(blk - st.scale)
            P = np.concatenate(
                [np.zeros_like(blk[..., :1]),
                 np.maximum.accumulate(pref, axis=-1)], axis=-1)
            S = np.concatenate(
                [np.flip(np.maximum.accumulate(np.flip(blk, -1), -1), -1),
                 np.zeros_like(blk[..., :1])], axis=-1)
            dk = np.maximum(P, S)
            dk = np.maximum(dk, np.asarray(out)[..., None])
            dk = np.maximum(dk, np.asarray(lead_pen)[..., None])
            dist = dk[..., 0::2].min(axis=-1)  # even levels only
            best = dist if best is None else np.minimum(best, dist)
        return best

    return LipschitzFunction(ev, 1.0, "tree-counterexample")


@dataclass(frozen=True)
class WalkLevel:
    alpha: tuple
    node: np.ndarray
    c_value: float
    d_value: float
    f_value: float
    hypothesis_gap: float


@dataclass(frozen=True)
class WalkReport:
    branch: tuple
    levels: tuple
    c_increments: tuple
    total_c_growth: float
    guaranteed_growth: float
    hypothesis_held: bool
    max_gap: float


def adversarial_branch_walk(c, d, tree, f, delta):
    """Two-step greedy branch walk: from each even node pick the child
    maximizing d, then its child maximizing c (ties toward the +1 child).
    Under the hypothesis |f - (c - d)| <= delta at every visited node, c
    must grow by at least theta/2 - 2*delta per double step."""
    if tree.depth % 2 != 0:
        raise ValueError("walk needs an even tree depth")

    def visit(alpha):
        node = tree.node(alpha)
        cv = float(c(node))
        dv = float(d(node))
        fv = float(f(node))
        for name, v in (("c", cv), ("d", dv), ("f", fv)):
            if not math.isfinite(v):
                raise SolverEvalError(name, alpha)
        return WalkLevel(alpha=alpha, node=node, c_value=cv, d_value=dv,
                         f_value=fv, hypothesis_gap=abs(fv - (cv - dv)))

    alpha = ()
    levels = [visit(alpha)]
    branch = []
    increments = []
    c_prev_even = levels[0].c_value
    for _ in range(tree.depth // 2):
        plus = visit(alpha + (1,))
        minus = visit(alpha + (-1,))
        odd = plus if plus.d_value >= minus.d_value else minus
        alpha = odd.alpha
        branch.append(alpha[-1])
        plus = visit(alpha + (1,))
        minus = visit(alpha + (-1,))
        even = plus if plus.c_value >= minus.c_value else minus
        alpha = even.alpha
        branch.append(alpha[-1])
        levels.extend([odd, even])
        increments.append(even.c_value - c_prev_even)
        c_prev_even = even.c_value
    total = levels[-1].c_value - levels[0].c_value
    max_gap = max(lv.hypothesis_gap for lv in levels)
    return WalkReport(
        branch=tuple(branch),
        levels=tuple(levels),
        c_increments=tuple(increments),
        total_c_growth=total,
        guaranteed_growth=(tree.theta / 2.0 - 2.0 * delta)
        * (tree.depth / 2.0),
        hypothesis_held=max_gap <= delta,
        max_gap=max_gap,
    )


class SolverEvalError(RuntimeError):
    def __init__(self, which, alpha):
        super().__init__(f"evaluator {which!r} failed at node {alpha}")
        self.alpha = alpha


def error_lower_bound(M, theta, depth):
    """Any convex pair with |c| <= M on the ball and |f - (c-d)| <= delta on
    the tree forces delta >= theta/4 - 2M/depth."""
    if M < 0:
        raise ValueError("M must be nonnegative")
    if depth < 2 or depth % 2 != 0:
        raise ValueError("depth must be an even integer >= 2")
    return max(0.0, theta / 4.0 - 2.0 * M / depth)


# ---------------------------------------------------------------------------
# serialization: header "depth D theta", then one node per line as a +/-
# sign string (empty for the root, whose line starts with its coordinates)
# followed by D coordinates
# ---------------------------------------------------------------------------

_SIGN = {1: "+", -1: "-"}


def save_tree(tree, path):
    if tree.node_count > _ENUM_CAP:
        raise ValueError("tree too deep to serialize")
    with open(path, "w") as fh:
        fh.write(f"{tree.depth} {tree.ambient_dim} {tree.theta:.17g}\n")
        for alpha in tree.indices():
            coords = " ".join(f"{v:.17g}" for v in tree.node(alpha))
            prefix = "".join(_SIGN[s] for s in alpha)
            fh.write((prefix + " " + coords).lstrip() + "\n")


def load_tree(path):
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ValueError(f"{path}: bad header")
        depth, D, theta = int(header[0]), int(header[1]), float(header[2])
        nodes = {}
        for lineno, line in enumerate(fh, 2):
            toks = line.split()
            if not toks:
                continue
            if set(toks[0]) <= {"+", "-"} and not any(
                    ch.isdigit() for ch in toks[0]):
                alpha = tuple(1 if ch == "+" else -1 for ch in toks[0])
                coords = toks[1:]
            else:
                alpha = ()
                coords = toks
            if len(coords) != D:
                raise ValueError(f"{path}:{lineno}: expected {D} coordinates")
            nodes[alpha] = np.array([float(t) for t in coords])
    expect = (1 << (depth + 1)) - 1
    if len(nodes) != expect:
        raise ValueError(
            f"{path}: tree has {len(nodes)} nodes, expected {expect}")
    return DyadicTree(depth=depth, theta=theta, ambient_dim=D,
                      explicit_nodes=nodes)
