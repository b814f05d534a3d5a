"""Scale-labeled expansion trees: enumeration, power counting, bound products.

Trees are stored reduced: only branch vertices (>= 2 children) and endpoints
carry explicit scales; chains of trivial vertices between them are implicit
and enter bound products through telescoped scale jumps (every trivial vertex
carries the external-field set of the vertex above it, so the per-vertex
factors along a chain collapse into one factor with the total jump).

Power counting (per external-leg count l, even, >= 2):

  regime 1:  D(l) = 7/2 - 5l/4,   z(2) = 3/2
  regime 2:  D(l) = 4  - 3l/2,    z(2) = 2

Bound products use the per-vertex gain weight g(l) = -D(l) + z(l), which is
>= 1/2 for every l in both regimes; tree_bound reports the root dimensional
factor h*D(l) and the telescoped gain exponent separately, both as exact
Fractions.  Regime-2 velocity bookkeeping is evaluated summand-by-summand on
the tree; the compensation identity makes it l/2 - 1 for every admissible
assignment, and the audit asserts exactly that.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product

MAX_ENDPOINTS = 6
MIN_ROOT_SCALE = -8
INTERACTION, NU = "interaction", "nu_counterterm"
_FIELDS = {INTERACTION: 4, NU: 2}


class SizeLimitError(ValueError):
    """Enumeration request beyond the desk-scale caps."""


class AssignmentError(ValueError):
    """Field assignment violates the containment/parity constraints."""


def scaling_dimension(regime: int, l: int) -> Fraction:
    """Exact D(l); l must be even and >= 2."""
    if l % 2 or l < 2:
        raise ValueError("l must be even and >= 2")
    if regime == 1:
        return Fraction(7, 2) - Fraction(5, 4) * l
    if regime == 2:
        return Fraction(4) - Fraction(3, 2) * l
    raise ValueError("regime must be 1 or 2")


def z_gain(regime: int, l: int) -> Fraction:
    """Renormalization gain z(l): applied on two-leg kernels only."""
    if l == 2:
        return Fraction(3, 2) if regime == 1 else Fraction(2)
    return Fraction(0)


def gain_weight(regime: int, l: int) -> Fraction:
    """Per-unit-scale decay exponent -D(l) + z(l) of renormalized vertices."""
    return -scaling_dimension(regime, l) + z_gain(regime, l)


# --- structure ---------------------------------------------------------------

@dataclass(frozen=True)
class Node:
    """Reduced tree node: an endpoint (no children) or a branch (>= 2)."""

    scale: int
    children: tuple = ()
    kind: str | None = None  # endpoints only

    @property
    def is_endpoint(self) -> bool:
        return not self.children

    def endpoints(self):
        if self.is_endpoint:
            yield self
        else:
            for c in self.children:
                yield from c.endpoints()

    def branches(self):
        if not self.is_endpoint:
            yield self
            for c in self.children:
                yield from c.branches()


@dataclass(frozen=True)
class GNTree:
    """Labeled expansion tree with root scale h; root's child chain starts at h+1."""

    root_scale: int
    top: Node

    @property
    def n(self) -> int:
        return sum(1 for _ in self.top.endpoints())

    def endpoints(self):
        return list(self.top.endpoints())

    def branches(self):
        return list(self.top.branches())


def _shapes(n: int):
    """Plane shapes with n ordered leaves, no unary nodes (Schroeder trees).

    A shape is () for a leaf or a tuple of >= 2 child shapes.
    """
    if n == 1:
        return [()]
    out = []
    for s in range(2, n + 1):
        for comp in _compositions(n, s):
            for kids in product(*[_shapes(m) for m in comp]):
                out.append(tuple(kids))
    return out


def _compositions(n, s):
    if s == 1:
        yield (n,)
        return
    for first in range(1, n - s + 2):
        for rest in _compositions(n - first, s - 1):
            yield (first,) + rest


def count_shapes(n: int) -> int:
    return len(_shapes(n))


def _label(shape, min_scale: int, kind_choices):
    """Yield labeled Nodes for `shape` with scale > min_scale for the top vertex."""
    if shape == ():  # endpoint: scale in [min_scale+1, 1]
        for s in range(min_scale + 1, 2):
            for kind in kind_choices:
                yield Node(scale=s, children=(), kind=kind)
        return
    # branch: scale in [min_scale+1, 0]; endpoints above force <= 0
    for s in range(min_scale + 1, 1):
        for kids in product(*[_label(c, s, kind_choices) for c in shape]):
            yield Node(scale=s, children=tuple(kids))


def enumerate_trees(n: int, h: int, kinds=(INTERACTION,),
                    require_interaction: bool = False):
    """All labeled trees with n endpoints, root at h, scales in (h, 1].

    kinds lists the endpoint kinds to enumerate; with require_interaction the
    subset with at least one interaction endpoint is returned (the beta-kernel
    family; pure-nu chains vanish identically and are excluded there).
    """
    if not 1 <= n <= MAX_ENDPOINTS:
        raise SizeLimitError(f"n = {n} outside 1..{MAX_ENDPOINTS}")
    if not MIN_ROOT_SCALE <= h <= -1:
        raise SizeLimitError(f"h = {h} outside {MIN_ROOT_SCALE}..-1")
    out = []
    for shape in _shapes(n):
        # the unique vertex above the root sits at h+1; the shape's top vertex
        # is at >= h+1, i.e. strictly above scale h
        for node in _label(shape, h, tuple(kinds)):
            if node.is_endpoint and node.scale == h + 1:
                continue  # v0 cannot be an endpoint
            t = GNTree(root_scale=h, top=node)
            if require_interaction and all(e.kind == NU for e in t.endpoints()):
                continue
            out.append(t)
    return out


# --- assignments --------------------------------------------------------------

def enumerate_assignments(tree: GNTree):
    """External-field sizes |P_v| for every vertex, sizes-only with containment.

    Endpoints carry |P| = |I_v| fixed by kind; a branch with children sizes
    (p_1..p_s) takes any even |P| with 2 <= |P| <= sum(p_i) - 2(s-1), the
    subtracted fields being contracted in pairs by the spanning lines.
    Returns a list of dicts mapping id(node) -> |P_v|.
    """

    def rec(node):
        if node.is_endpoint:
            return [{id(node): _FIELDS[node.kind]}]
        child_maps = [rec(c) for c in node.children]
        out = []
        for combo in product(*child_maps):
            merged = {}
            for m in combo:
                merged.update(m)
            total = sum(merged[id(c)] for c in node.children)
            s = len(node.children)
            top = total - 2 * (s - 1)
            for pv in range(2, top + 1, 2):
                m2 = dict(merged)
                m2[id(node)] = pv
                out.append(m2)
        return out

    return rec(tree.top)


def root_legs(tree: GNTree, assignment) -> int:
    return assignment[id(tree.top)]


@dataclass(frozen=True)
class TreeBound:
    """log2 decomposition of the dimensional product of one labeled tree."""

    dimension: Fraction      # h * D(l), the root power-counting factor
    gain: Fraction           # telescoped per-vertex renormalization decay (<= -1/2 per chain scale)
    velocity_exponent: Fraction  # regime 2: net power of v_{3,0}

    @property
    def total(self) -> Fraction:
        return self.dimension + self.gain


def tree_bound(tree: GNTree, assignment, regime: int) -> TreeBound:
    """Exact exponents of the Gallavotti-Nicolo bound product for one tree.

    gain telescopes -(h_v - h_v') (5|P_v|/4 - 7/2 + z(P_v)) (regime-1 weights;
    regime 2 analogously with 3|P|/2 - 4 + z) over all non-endpoint vertices,
    chains included: every reduced edge from a parent at s_p to a child at s_c
    contributes -(s_c - s_p) g(|P_c|), endpoints counting their chain up to
    scale h_e - 1.  The velocity exponent evaluates the regime-2 bookkeeping
    sum_ep (|I_v|/2 - 1) - sum_v [sum_i |P_vi|/2 - |P_v|/2 - (s_v - 1)], which
    collapses to l/2 - 1 for every assignment.
    """
    l = root_legs(tree, assignment)
    dim = tree.root_scale * scaling_dimension(regime, l)
    gain = Fraction(0)

    def walk(parent_scale: int, node: Node):
        nonlocal gain
        if node.is_endpoint:
            jump = (node.scale - 1) - parent_scale
            gain -= jump * gain_weight(regime, assignment[id(node)])
            return
        jump = node.scale - parent_scale
        gain -= jump * gain_weight(regime, assignment[id(node)])
        for c in node.children:
            walk(node.scale, c)

    walk(tree.root_scale, tree.top)

    vel = Fraction(0)
    if regime == 2:
        for e in tree.endpoints():
            vel += Fraction(assignment[id(e)], 2) - 1
        for b in tree.branches():
            kids = sum(assignment[id(c)] for c in b.children)
            s_v = len(b.children)
            vel -= Fraction(kids, 2) - Fraction(assignment[id(b)], 2) - (s_v - 1)
    return TreeBound(dimension=dim, gain=gain, velocity_exponent=vel)


# --- structural identities ----------------------------------------------------

def _materialize(tree: GNTree, assignment):
    """Expand trivial chains: list of (h_v, h_v', P_v, sum_child_P, s_v, n_v, I_v)
    for every non-endpoint vertex, plus endpoint rows (h_e, h_v', I_e)."""
    vertices = []
    endpoint_rows = []

    def subtree_fields(node):
        return sum(_FIELDS[e.kind] for e in node.endpoints()) if not node.is_endpoint \
            else _FIELDS[node.kind]

    def subtree_eps(node):
        return sum(1 for _ in node.endpoints()) if not node.is_endpoint else 1

    def walk(parent_scale, node):
        p_here = assignment[id(node)]
        if node.is_endpoint:
            for s in range(parent_scale + 1, node.scale):
                vertices.append(dict(h=s, hp=s - 1, P=p_here, child_sum=p_here,
                                     s_v=1, n_v=1, I_v=p_here))
            endpoint_rows.append(dict(h=node.scale, hp=node.scale - 1, I_v=p_here))
            return
        for s in range(parent_scale + 1, node.scale):
            vertices.append(dict(h=s, hp=s - 1, P=p_here, child_sum=p_here,
                                 s_v=1, n_v=subtree_eps(node), I_v=subtree_fields(node)))
        vertices.append(dict(h=node.scale, hp=node.scale - 1, P=p_here,
                             child_sum=sum(assignment[id(c)] for c in node.children),
                             s_v=len(node.children), n_v=subtree_eps(node),
                             I_v=subtree_fields(node)))
        for c in node.children:
            walk(node.scale, c)

    walk(tree.root_scale, tree.top)
    # fix h_v' of each vertex: immediate predecessor scale on its path (always
    # one below in the materialized chain; the first vertex precedes the root)
    return vertices, endpoint_rows


def structural_identities_check(tree: GNTree, assignment) -> dict:
    """Verify the exact summation identities behind the bound rearrangements.

    Checks, in integer arithmetic: (a) total contracted fields telescope to
    |I_v0| - |P_v0|; (b) sum (s_v - 1) = n - 1; (c)/(d) the two weighted
    telescopings; (e)/(f) the endpoint-factor product identities.  Returns a
    report dict; 'ok' is False at the first violated identity.
    """
    v, eps = _materialize(tree, assignment)
    h = tree.root_scale
    n = tree.n
    l = root_legs(tree, assignment)
    i_v0 = sum(_FIELDS[e.kind] for e in tree.endpoints())
    report = {"ok": True, "failed": None}

    def fail(name):
        report["ok"] = False
        report["failed"] = name
        return report

    if sum(r["child_sum"] - r["P"] for r in v) != i_v0 - l:
        return fail("contracted-fields telescoping")
    if sum(r["s_v"] - 1 for r in v) != n - 1:
        return fail("branching count")
    lhs = sum((r["h"] - h) * (r["child_sum"] - r["P"]) for r in v)
    rhs = sum((r["h"] - r["hp"]) * (r["I_v"] - r["P"]) for r in v)
    if lhs != rhs:
        return fail("weighted field telescoping")
    lhs = sum((r["h"] - h) * (r["s_v"] - 1) for r in v)
    rhs = sum((r["h"] - r["hp"]) * (r["n_v"] - 1) for r in v)
    if lhs != rhs:
        return fail("weighted branching telescoping")
    if h * n + sum((r["h"] - r["hp"]) * r["n_v"] for r in v) != \
            sum(e["hp"] for e in eps):
        return fail("endpoint scale product")
    if h * i_v0 + sum((r["h"] - r["hp"]) * r["I_v"] for r in v) != \
            sum(e["hp"] * e["I_v"] for e in eps):
        return fail("endpoint field product")
    return report


# --- scale sums ----------------------------------------------------------------

def _proto(shape, kind_iter) -> Node:
    """Node structure with placeholder scales (0); kinds drawn off kind_iter."""
    if shape == ():
        return Node(scale=0, children=(), kind=next(kind_iter))
    return Node(scale=0, children=tuple(_proto(c, kind_iter) for c in shape))


def _protos(shape, n, kinds):
    """All kind-assignments of `shape`, as placeholder-scaled Nodes."""
    for combo in product(kinds, repeat=n):
        yield _proto(shape, iter(combo))


def _sum_over_scales(enc, regime, parent_scale, memo, top=False):
    """DP sum of 2^gain over all admissible scale labelings above parent_scale.

    enc = (|P_v|, (child encodings...)); endpoints have no children.  The
    top-level vertex of an n = 1 chain cannot be the scale-(h+1) vertex, so
    its scale starts one higher.
    """
    key = (enc, parent_scale, top)
    if key in memo:
        return memo[key]
    size, kids = enc
    g = float(gain_weight(regime, size))
    if not kids:  # endpoint at h_e, chain decay over (h_e - 1) - parent
        start = parent_scale + 2 if top else parent_scale + 1
        total = sum(2.0 ** (-g * ((he - 1) - parent_scale))
                    for he in range(start, 2))
    else:
        total = 0.0
        for s in range(parent_scale + 1, 1):
            term = 2.0 ** (-g * (s - parent_scale))
            for kid in kids:
                term *= _sum_over_scales(kid, regime, s, memo)
            total += term
    memo[key] = total
    return total


def _encode(assignment, node):
    if node.is_endpoint:
        return (assignment[id(node)], ())
    return (assignment[id(node)],
            tuple(_encode(assignment, c) for c in node.children))


@dataclass
class ScaleSumAudit:
    n: int
    l: int
    regime: int
    h: int
    value: float
    fitted_C: float
    term_count: int


def scale_sum_audit(n: int, l: int, regime: int, h: int = MIN_ROOT_SCALE,
                    kinds=(INTERACTION,), require_interaction: bool = True) -> ScaleSumAudit:
    """Explicit sum of 2^gain over trees and assignments with |P_v0| = l.

    Runs over every labeled tree with root h (scale labelings summed by exact
    dynamic programming over the same admissible set) and every sizes-only
    assignment; per-tree gains telescope geometrically so the value saturates
    as h drops.  fitted_C = value^(1/n).

    The audited family defaults to interaction endpoints only: every gain
    weight is then >= 3/2 per scale and the tails are sharply geometric.
    nu-counterterm endpoints carry scale-neutral weight factors of their own
    (the running 2^h nu_h values) and are audited through the flow instead.
    """
    if n > 4:
        raise SizeLimitError("scale sums capped at n <= 4")
    total = 0.0
    count = 0
    memo = {}
    for shape in _shapes(n):
        for proto in _protos(shape, n, kinds):
            if require_interaction and all(e.kind == NU for e in proto.endpoints()):
                continue
            for assignment in enumerate_assignments(GNTree(h, proto)):
                if assignment[id(proto)] != l:
                    continue
                enc = _encode(assignment, proto)
                total += _sum_over_scales(enc, regime, h, memo,
                                          top=proto.is_endpoint)
                count += 1
    return ScaleSumAudit(n=n, l=l, regime=regime, h=h, value=total,
                         fitted_C=total ** (1.0 / n) if total > 0 else 0.0,
                         term_count=count)


def serialize_tree(tree: GNTree) -> dict:
    """JSON-ready nested form: scales, branching and endpoint kinds."""

    def node(nd: Node):
        if nd.is_endpoint:
            return {"scale": nd.scale, "kind": nd.kind}
        return {"scale": nd.scale, "children": [node(c) for c in nd.children]}

    return {"root_scale": tree.root_scale, "top": node(tree.top)}


def combinatorial_inequality_value(n: int) -> float:
    """Explicit evaluation of the assignment sum of prod_v 2^{-|P_v|/8}."""
    total = 0.0
    for shape in _shapes(n):
        for proto in _protos(shape, n, (INTERACTION,)):
            tree = GNTree(-4, proto)
            for assignment in enumerate_assignments(tree):
                term = 1.0
                for b in tree.branches():
                    term *= 2.0 ** (-assignment[id(b)] / 8.0)
                total += term
    return total
