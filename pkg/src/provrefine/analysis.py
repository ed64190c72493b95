"""Parametric analyses over provenance hypergraphs.

An analysis bundles a global provenance, a set of query facts, boolean
parameters with their fact encodings, and a partial projection that maps
precise-mode facts back to their cheap-mode counterparts.  This module
also houses the well-formedness, monotonicity, and predictability
checkers used to validate fixtures.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

from . import hypergraph as hg
from .errors import OracleLimitExceeded, ParseError, UnknownParameter
from .hypergraph import Fact, Hypergraph


@dataclass(frozen=True)
class Abstraction:
    """A boolean parameter setting; ordered pointwise (0 = cheap)."""

    bits: tuple  # tuple of (param, 0|1), in parameter order

    @staticmethod
    def from_dict(params: Iterable[str], values: dict) -> "Abstraction":
        return Abstraction(tuple((p, int(values.get(p, 0))) for p in params))

    @staticmethod
    def bottom(params: Iterable[str]) -> "Abstraction":
        return Abstraction(tuple((p, 0) for p in params))

    @staticmethod
    def top(params: Iterable[str]) -> "Abstraction":
        return Abstraction(tuple((p, 1) for p in params))

    def as_dict(self) -> dict:
        return dict(self.bits)

    def value(self, param: str) -> int:
        for p, v in self.bits:
            if p == param:
                return v
        raise UnknownParameter(param)

    def flips(self) -> frozenset:
        """Parameters set to precise."""
        return frozenset(p for p, v in self.bits if v == 1)

    def with_flips(self, extra: Iterable[str]) -> "Abstraction":
        extra = set(extra)
        return Abstraction(tuple((p, 1 if p in extra else v) for p, v in self.bits))

    def __le__(self, other: "Abstraction") -> bool:
        return all(v <= w for (_, v), (_, w) in zip(self.bits, other.bits))

    def __lt__(self, other: "Abstraction") -> bool:
        return self <= other and self.bits != other.bits


class Projection:
    """Partial fact-to-fact map, configured per relation.

    Directives: 'identity', 'drop', or a positional rewrite (target
    relation plus the indices of the source arguments to keep).
    Unlisted relations follow the default directive.
    """

    def __init__(self, rules: dict = None, default: str = "identity"):
        self.rules = dict(rules or {})
        self.default = default

    def apply(self, f: Fact) -> Optional[Fact]:
        rule = self.rules.get(f.relation, self.default)
        if rule == "identity":
            return f
        if rule == "drop":
            return None
        target, indices = rule
        return Fact(target, tuple(f.args[i] for i in indices))

    def directive_lines(self) -> list:
        out = []
        for rel in sorted(self.rules):
            rule = self.rules[rel]
            if rule in ("identity", "drop"):
                out.append(f"{rel} {rule}")
            else:
                target, indices = rule
                vars_ = [f"A{i}" for i in range(max(indices, default=-1) + 1)]
                lhs = f"{rel}({','.join(vars_)})"
                rhs = f"{target}({','.join(vars_[i] for i in indices)})"
                out.append(f"{lhs} -> {rhs}")
        out.append(f"default {self.default}")
        return out


_TEMPLATE_RE = re.compile(
    r"^([A-Za-z_][A-Za-z0-9_']*)\(([^()]*)\)\s*->\s*([A-Za-z_][A-Za-z0-9_']*)\(([^()]*)\)$"
)


def parse_projection_directive(line: str):
    """Parse one projection line into (relation, rule)."""
    line = line.strip()
    m = _TEMPLATE_RE.match(line)
    if m:
        src_rel, src_args, dst_rel, dst_args = m.groups()
        src = [a.strip() for a in src_args.split(",") if a.strip()]
        dst = [a.strip() for a in dst_args.split(",") if a.strip()]
        try:
            indices = tuple(src.index(a) for a in dst)
        except ValueError as exc:
            raise ValueError(f"unbound template variable in {line!r}") from exc
        return src_rel, (dst_rel, indices)
    parts = line.split()
    if len(parts) == 2 and parts[1] in ("identity", "drop"):
        return parts[0], parts[1]
    raise ValueError(f"malformed projection directive: {line!r}")


@dataclass
class Analysis:
    """The (provenance, queries, parameters, encoders, projection) tuple."""

    global_graph: Hypergraph
    queries: frozenset
    params: tuple
    encode0: dict  # param -> Fact (cheap-mode encoding)
    encode1: dict  # param -> Fact (precise-mode encoding)
    projection: Projection = field(default_factory=Projection)

    def bottom(self) -> Abstraction:
        return Abstraction.bottom(self.params)

    def top(self) -> Abstraction:
        return Abstraction.top(self.params)

    def all_abstractions(self):
        n = len(self.params)
        for mask in range(1 << n):
            yield Abstraction(tuple(
                (p, mask >> i & 1) for i, p in enumerate(self.params)))


def encode_params(an: Analysis, a: Abstraction, k: int) -> frozenset:
    """The facts encoding the parameters that a sets to k."""
    enc = an.encode0 if k == 0 else an.encode1
    out = set()
    for p, v in a.bits:
        if p not in enc:
            raise UnknownParameter(p)
        if v == k:
            out.add(enc[p])
    return frozenset(out)


def derive(an: Analysis, a: Abstraction) -> frozenset:
    """All facts the analysis derives under abstraction a."""
    seeds = encode_params(an, a, 0) | encode_params(an, a, 1)
    return hg.reach(an.global_graph, seeds)


def local_provenance(an: Analysis, a: Abstraction) -> Hypergraph:
    """Restriction of the global provenance to the facts derived under a."""
    return hg.induced(an.global_graph, derive(an, a))


def project_set(an: Analysis, t: Iterable[Fact]) -> frozenset:
    """Lift the projection to a set; facts it is undefined on are dropped."""
    out = set()
    for f in t:
        g = an.projection.apply(f)
        if g is not None:
            out.add(g)
    return frozenset(out)


def check_well_formed(an: Analysis) -> list:
    """Return a list of violation descriptions (empty iff well formed)."""
    violations = []
    pi = an.projection.apply
    p0 = an.encode0
    p1 = an.encode1

    # (iv) encoders injective with disjoint images
    img0 = list(p0.values())
    img1 = list(p1.values())
    if len(set(img0)) != len(img0) or len(set(img1)) != len(img1):
        violations.append("(iv) encoder not injective")
    if set(img0) & set(img1):
        violations.append("(iv) encoder images overlap")

    # (v) projection compatible with parameter encoding
    for p in an.params:
        if pi(p1[p]) != p0[p]:
            violations.append(f"(v) projection of {p1[p]} is not {p0[p]}")

    derived_bot = derive(an, an.bottom())
    # (i) cheap-mode facts are fixed points of the projection
    for f in sorted(derived_bot):
        if pi(f) != f:
            violations.append(f"(i) {f} derived at bottom but not a fixed point")

    # (ii) image of the projection inside the bottom derivation
    domain = set(an.global_graph.vertices) | set(img0) | set(img1) | set(an.queries)
    for f in sorted(domain):
        g = pi(f)
        if g is not None and g not in derived_bot:
            violations.append(f"(ii) projection image {g} (of {f}) outside bottom facts")

    # (iii) only fixed points project onto queries
    for f in sorted(domain):
        g = pi(f)
        if g in an.queries and f != g:
            violations.append(f"(iii) non-query {f} projects onto query {g}")

    return violations


def check_monotone(an: Analysis, limit: int = 12) -> bool:
    """Derived queries shrink along the lattice (checked on covering pairs)."""
    if len(an.params) > limit:
        raise OracleLimitExceeded(
            f"monotonicity oracle over {len(an.params)} parameters (limit {limit})")
    derived_q = {}
    for a in an.all_abstractions():
        derived_q[a] = an.queries & derive(an, a)
    for a in derived_q:
        for p in an.params:
            if a.value(p) == 0:
                a2 = a.with_flips([p])
                if not derived_q[a] >= derived_q[a2]:
                    return False
    return True


def check_predictable(an: Analysis, param_limit: int = 12,
                      arc_limit: int = 4096) -> Optional[Hypergraph]:
    """Search for a witness sub-hypergraph of the cheap provenance.

    The witness H must satisfy, for every abstraction a,
    projection(reach under the precise provenance from P1(a)) equals
    reach under H from the projected P1(a).  Greedy: start from the
    whole cheap provenance, remove arcs any observation forces out,
    then verify; return None on verification failure.
    """
    if len(an.params) > param_limit:
        raise OracleLimitExceeded(
            f"predictability oracle over {len(an.params)} parameters")
    g_bot = local_provenance(an, an.bottom())
    if len(g_bot) > arc_limit:
        raise OracleLimitExceeded(
            f"predictability oracle over {len(g_bot)} arcs")
    g_top = local_provenance(an, an.top())

    observations = []
    for a in an.all_abstractions():
        p1 = encode_params(an, a, 1)
        r = project_set(an, hg.reach(g_top, p1))
        observations.append((project_set(an, p1), r))

    keep = set(g_bot.arcs)
    for _, r in observations:
        for arc in list(keep):
            if arc.body <= r and arc.head not in r:
                keep.discard(arc)
    h = Hypergraph(keep)
    for t, r in observations:
        if hg.reach(h, t) != r:
            return None
    return h


# ---------------------------------------------------------------------------
# manifest format


def parse_manifest(text: str, base_dir: str = ".") -> Analysis:
    """Parse an analysis manifest (see README for the section layout)."""
    import os

    section = None
    params = []
    encode0 = {}
    encode1 = {}
    queries = set()
    proj_rules = {}
    proj_default = "identity"
    graph = None
    rules_path = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            if line in ("params:", "queries:", "projection:"):
                section = line[:-1]
                continue
            if line.startswith("provenance:"):
                path = os.path.join(base_dir, line.split(":", 1)[1].strip())
                with open(path) as fh:
                    graph = hg.parse_provenance(fh.read())
                section = None
                continue
            if line.startswith("rules:"):
                rules_path = os.path.join(base_dir, line.split(":", 1)[1].strip())
                section = None
                continue
            if section == "params":
                name, rest = line.split(None, 1)
                kv = dict(tok.split("=", 1) for tok in rest.split())
                params.append(name)
                encode0[name] = hg.parse_fact(kv["encode0"])
                encode1[name] = hg.parse_fact(kv["encode1"])
            elif section == "queries":
                queries.add(hg.parse_fact(line))
            elif section == "projection":
                if line.startswith("default "):
                    proj_default = line.split()[1]
                else:
                    rel, rule = parse_projection_directive(line)
                    proj_rules[rel] = rule
            else:
                raise ValueError(f"line outside any section: {line!r}")
        except (ValueError, KeyError) as exc:
            raise ParseError(lineno, str(exc)) from exc

    if rules_path is not None:
        from . import datalog

        with open(rules_path) as fh:
            rules, base = datalog.parse_program(fh.read())
        graph = datalog.ground(rules, base)
    if graph is None:
        raise ParseError(0, "manifest missing provenance: or rules: entry")
    return Analysis(
        global_graph=graph,
        queries=frozenset(queries),
        params=tuple(params),
        encode0=encode0,
        encode1=encode1,
        projection=Projection(proj_rules, proj_default),
    )


def load_manifest(path: str) -> Analysis:
    import os

    with open(path) as fh:
        return parse_manifest(fh.read(), base_dir=os.path.dirname(path) or ".")


def serialize_manifest(an: Analysis, provenance_file: str) -> str:
    """Manifest text referring to an already-serialized provenance file."""
    lines = ["params:"]
    for x in an.params:
        lines.append(f"{x} encode0={an.encode0[x]} encode1={an.encode1[x]}")
    lines.append("queries:")
    lines.extend(str(q) for q in sorted(an.queries))
    lines.append("projection:")
    lines.extend(an.projection.directive_lines())
    lines.append(f"provenance: {provenance_file}")
    return "\n".join(lines) + "\n"


def save_manifest(an: Analysis, manifest_path: str, provenance_path: str) -> None:
    import os

    with open(provenance_path, "w") as fh:
        fh.write(hg.serialize_provenance(an.global_graph))
    rel = os.path.relpath(provenance_path,
                          os.path.dirname(manifest_path) or ".")
    with open(manifest_path, "w") as fh:
        fh.write(serialize_manifest(an, rel))
