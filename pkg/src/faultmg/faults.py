"""Random diagonal fault matrices: sampling, exact moments, enumeration.

A fault acting on a vector multiplies it entrywise by a random diagonal X.
Hard faults zero entries with probability q (componentwise or jointly per
contiguous block); silent faults perturb entries to 1 + eps_i*chi_i with
eps_i uniform on [-amplitude, amplitude] and chi_i the same 0/1 variable
as the hard case.  All sites and all repeated applications draw fresh,
mutually independent realizations.
"""

import itertools
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

KINDS = ("none", "componentwise", "block", "silent")
SITES = ("S", "rho", "R", "P")


def make_generator(seed, *subkeys):
    """Counter-based (Philox) generator; subkeys derive independent streams."""
    entropy = [int(seed)] + [int(k) for k in subkeys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def _q_key(q):
    # stable integer key for deriving per-cell streams from a float rate
    return int(round(float(q) * 10 ** 9))


@dataclass(frozen=True)
class FaultSpec:
    """Distribution of one random diagonal fault matrix."""

    kind: str = "none"
    q: float = 0.0
    block_size: int = 1
    amplitude: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown fault kind {self.kind!r}")
        if not 0.0 <= self.q <= 1.0:
            raise ValueError("fault rate q must lie in [0, 1]")
        if self.block_size < 1:
            raise ValueError("block_size must be at least 1")
        if self.amplitude < 0.0:
            raise ValueError("silent amplitude must be nonnegative")

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def componentwise(cls, q):
        return cls("componentwise", q=q)

    @classmethod
    def block(cls, q, block_size):
        return cls("block", q=q, block_size=block_size)

    @classmethod
    def silent(cls, q, amplitude):
        return cls("silent", q=q, amplitude=amplitude)

    @property
    def is_none(self):
        return self.kind == "none"

    def with_rate(self, q):
        if self.kind == "none":
            return self
        return replace(self, q=q)


@dataclass(frozen=True)
class FaultSiteConfig:
    """Per-site fault specs for smoother (S), residual (rho), restriction (R)
    and prolongation (P), plus protection flags; a protected site behaves as
    fault-free regardless of its spec."""

    S: FaultSpec = field(default_factory=FaultSpec.none)
    rho: FaultSpec = field(default_factory=FaultSpec.none)
    R: FaultSpec = field(default_factory=FaultSpec.none)
    P: FaultSpec = field(default_factory=FaultSpec.none)
    protected: frozenset = frozenset()

    def __post_init__(self):
        bad = set(self.protected) - set(SITES)
        if bad:
            raise ValueError(f"unknown protected sites {sorted(bad)}")

    @classmethod
    def uniform(cls, spec, protect=()):
        return cls(S=spec, rho=spec, R=spec, P=spec,
                   protected=frozenset(protect))

    @classmethod
    def none(cls):
        return cls()

    def effective(self, site):
        if site in self.protected:
            return FaultSpec.none()
        return getattr(self, site)

    def with_rate(self, q):
        return replace(self, S=self.S.with_rate(q), rho=self.rho.with_rate(q),
                       R=self.R.with_rate(q), P=self.P.with_rate(q))

    @property
    def all_none(self):
        return all(self.effective(site).is_none for site in SITES)

    def to_config_dict(self):
        """Flat key/value form used by the harness config file."""
        out = {}
        for site in SITES:
            spec = getattr(self, site)
            out[f"fault_{site}"] = spec.kind
            if spec.kind != "none":
                out[f"q_{site}"] = repr(spec.q)
            if spec.kind == "block":
                out[f"block_size_{site}"] = str(spec.block_size)
            if spec.kind == "silent":
                out[f"epsilon_{site}"] = repr(spec.amplitude)
        if self.protected:
            out["protect"] = ",".join(sorted(self.protected))
        return out

    @classmethod
    def from_config_dict(cls, d):
        specs = {}
        for site in SITES:
            kind = d.get(f"fault_{site}", d.get("fault_kind", "none"))
            q = float(d.get(f"q_{site}", d.get("q", 0.0)))
            bs = int(d.get(f"block_size_{site}", d.get("block_size", 1)))
            eps = float(d.get(f"epsilon_{site}", d.get("epsilon", 0.0)))
            specs[site] = FaultSpec(kind, q=q, block_size=bs, amplitude=eps)
        protect = d.get("protect", "")
        protected = frozenset(s for s in protect.split(",") if s)
        return cls(S=specs["S"], rho=specs["rho"], R=specs["R"], P=specs["P"],
                   protected=protected)


@dataclass(frozen=True)
class FaultMoments:
    """Scalar mean factor e and the variance structure of one fault matrix.

    var_kind is "zero", "iid_diagonal" (variance v per entry, independent)
    or "block_diagonal" (covariance v between same-block entries).  epsilon
    is the smallest bound for which the mean/covariance conditions of the
    fault-set membership hold.
    """

    e: float
    var_kind: str
    v: float = 0.0
    block_size: int = 1
    epsilon: float = 0.0


def sample(spec, n, rng):
    """Draw one realization of the diagonal of X."""
    if spec.kind == "none":
        return np.ones(n)
    if spec.kind == "componentwise":
        return (rng.random(n) >= spec.q).astype(np.float64)
    if spec.kind == "block":
        nblocks = -(-n // spec.block_size)
        keep = (rng.random(nblocks) >= spec.q).astype(np.float64)
        return np.repeat(keep, spec.block_size)[:n]
    if spec.kind == "silent":
        chi = (rng.random(n) >= spec.q).astype(np.float64)
        eps = rng.uniform(-spec.amplitude, spec.amplitude, size=n)
        return 1.0 + eps * chi
    raise ValueError(spec.kind)


def moments(spec, n=None):
    """Exact first and second moments of a fault spec.

    componentwise: e = 1-q, Var = q(1-q) per entry (independent);
    block: e = 1-q, covariance q(1-q) within blocks;
    silent: e = 1, Var = (1-q) * amplitude^2 / 3 per entry.
    """
    q = spec.q
    if spec.kind == "none" or (q == 0.0 and spec.kind != "silent"):
        return FaultMoments(e=1.0, var_kind="zero")
    if spec.kind == "componentwise":
        v = q * (1.0 - q)
        return FaultMoments(e=1.0 - q, var_kind="iid_diagonal", v=v,
                            epsilon=max(q, v))
    if spec.kind == "block":
        v = q * (1.0 - q)
        return FaultMoments(e=1.0 - q, var_kind="block_diagonal", v=v,
                            block_size=spec.block_size, epsilon=max(q, v))
    if spec.kind == "silent":
        v = (1.0 - q) * spec.amplitude ** 2 / 3.0
        return FaultMoments(e=1.0, var_kind="iid_diagonal" if v else "zero",
                            v=v, epsilon=v)
    raise ValueError(spec.kind)


def variance_diagonal(spec, n):
    """Diagonal (length n²) of Var[X] as an operator on the tensor space.

    Entry i*n+p is Cov(X_ii, X_pp); for every supported kind the operator
    is diagonal and nonnegative.
    """
    mom = moments(spec, n)
    d = np.zeros(n * n)
    if mom.var_kind == "zero":
        return d
    ar = np.arange(n)
    if mom.var_kind == "iid_diagonal":
        d[ar * n + ar] = mom.v
        return d
    if mom.var_kind == "block_diagonal":
        blocks = ar // mom.block_size
        same = blocks[:, None] == blocks[None, :]
        ii, pp = np.nonzero(same)
        d[ii * n + pp] = mom.v
        return d
    raise ValueError(mom.var_kind)


def second_moment_operator(spec, n, cap=10_000_000):
    """Var[X] as a sparse n² x n² operator on the tensor space."""
    if n * n > cap:
        raise ValueError(f"tensor dimension {n*n} above cap {cap}")
    return sp.diags(variance_diagonal(spec, n), format="csr")


def enumerate_realizations(spec, n):
    """All (probability, diagonal) realizations of a hard fault spec.

    Silent faults have continuous support and are rejected here; use
    :func:`enumerate_chi_patterns` for their Bernoulli part.
    """
    if spec.kind == "none" or spec.q == 0.0:
        return [(1.0, np.ones(n))]
    if spec.kind == "silent":
        raise ValueError("silent faults have continuous support")
    if spec.kind == "componentwise":
        sites = n
    else:
        sites = -(-n // spec.block_size)
    out = []
    q = spec.q
    for bits in itertools.product((0.0, 1.0), repeat=sites):
        p = 1.0
        for b in bits:
            p *= q if b == 0.0 else (1.0 - q)
        if spec.kind == "componentwise":
            diag = np.array(bits)
        else:
            diag = np.repeat(np.array(bits), spec.block_size)[:n]
        out.append((p, diag))
    return out


def enumerate_chi_patterns(spec, n):
    """(probability, chi) pairs for the Bernoulli indicators of a spec."""
    if spec.kind == "none" or spec.q == 0.0:
        return [(1.0, np.ones(n))]
    if spec.kind in ("componentwise", "silent"):
        base = FaultSpec.componentwise(spec.q)
    else:
        base = FaultSpec.block(spec.q, spec.block_size)
    return enumerate_realizations(base, n)
