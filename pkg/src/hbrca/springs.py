"""Synthetic ground-truth factory: interacting springs with injectable
mechanism switches, plus a geometric hydrogen-bond event labeler.

The generator realizes first-order Markov dynamics: each node's next
position is a function of its parents' and its own current position
plus isotropic Gaussian noise. Two interaction mechanisms exist, a
binding spring (type 1, constant k_attract) and a post-switch mechanism
(type 2, constant k_switch; zero means detachment, negative repels).
Nodes in the change set have their incoming type-1 edges replaced by
the type-2 mechanism from the boundary step onward.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import RegimeLabels, TrajectoryCorpus
from .errors import ConfigError, InstabilityError, ParameterError
from .rng import substream

EDGE_NONE = 0
EDGE_ATTRACT = 1
EDGE_SWITCHED = 2

_BLOWUP_LIMIT = 1e6


@dataclass
class ScmSpec:
    """Structural description of one synthetic system.

    adjacency[i, j] holds the edge type for the ordered pair i -> j
    (i influences j). Static nodes never move and receive no noise;
    they act as fixed anchors so the rest of the system is stationary.
    """

    n_nodes: int
    n_dims: int = 3
    adjacency: np.ndarray | None = None
    k_attract: float = 1.0
    k_switch: float = 0.0
    noise_std: float = 0.0
    step_size: float = 0.1
    change_set: set = field(default_factory=set)
    boundary_step: int | None = None
    static_nodes: set = field(default_factory=set)
    init_positions: np.ndarray | None = None

    def __post_init__(self):
        if self.adjacency is None:
            self.adjacency = np.zeros((self.n_nodes, self.n_nodes), dtype=int)
        self.adjacency = np.asarray(self.adjacency, dtype=int)
        if self.adjacency.shape != (self.n_nodes, self.n_nodes):
            raise ParameterError("adjacency must be [n_nodes, n_nodes]")
        if np.any(np.diag(self.adjacency) != 0):
            raise ParameterError("self-edges are not allowed")
        if not set(np.unique(self.adjacency)) <= {EDGE_NONE, EDGE_ATTRACT, EDGE_SWITCHED}:
            raise ParameterError("edge types must be 0, 1 or 2")
        if self.k_attract == self.k_switch:
            raise ParameterError("the two mechanism constants must differ")
        if self.noise_std < 0:
            raise ParameterError("noise_std must be nonnegative")
        if self.step_size <= 0:
            raise ParameterError("step_size must be positive")
        self.change_set = set(int(i) for i in self.change_set)
        self.static_nodes = set(int(i) for i in self.static_nodes)
        for name, nodes in (("change_set", self.change_set),
                            ("static_nodes", self.static_nodes)):
            bad = [i for i in nodes if not 0 <= i < self.n_nodes]
            if bad:
                raise ParameterError(f"{name} indices out of range: {bad}")
        if self.init_positions is not None:
            self.init_positions = np.asarray(self.init_positions, dtype=np.float64)
            if self.init_positions.shape != (self.n_nodes, self.n_dims):
                raise ParameterError("init_positions must be [n_nodes, n_dims]")

    def edge_list(self) -> list:
        return [
            [int(i), int(j), int(self.adjacency[i, j])]
            for i in range(self.n_nodes)
            for j in range(self.n_nodes)
            if self.adjacency[i, j] != EDGE_NONE
        ]

    def to_dict(self) -> dict:
        return {
            "n_nodes": self.n_nodes,
            "n_dims": self.n_dims,
            "edges": self.edge_list(),
            "k_attract": self.k_attract,
            "k_switch": self.k_switch,
            "noise_std": self.noise_std,
            "step_size": self.step_size,
            "change_set": sorted(self.change_set),
            "boundary_step": self.boundary_step,
            "static_nodes": sorted(self.static_nodes),
            "init_positions": None
            if self.init_positions is None
            else self.init_positions.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScmSpec":
        known = {"n_nodes", "n_dims", "edges", "k_attract", "k_switch", "noise_std",
                 "step_size", "change_set", "boundary_step", "static_nodes",
                 "init_positions"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown generator keys {sorted(unknown)}")
        n = int(d["n_nodes"])
        adjacency = np.zeros((n, n), dtype=int)
        for src, dst, etype in d.get("edges", []):
            adjacency[int(src), int(dst)] = int(etype)
        init = d.get("init_positions")
        return cls(
            n_nodes=n,
            n_dims=int(d.get("n_dims", 3)),
            adjacency=adjacency,
            k_attract=float(d.get("k_attract", 1.0)),
            k_switch=float(d.get("k_switch", 0.0)),
            noise_std=float(d.get("noise_std", 0.0)),
            step_size=float(d.get("step_size", 0.1)),
            change_set=set(d.get("change_set", [])),
            boundary_step=d.get("boundary_step"),
            static_nodes=set(d.get("static_nodes", [])),
            init_positions=None if init is None else np.asarray(init, dtype=float),
        )


def _spring_matrix(spec: ScmSpec, switched: bool) -> np.ndarray:
    """W[i, j] = spring constant with which node i pulls node j."""
    w = np.zeros((spec.n_nodes, spec.n_nodes))
    w[spec.adjacency == EDGE_ATTRACT] = spec.k_attract
    w[spec.adjacency == EDGE_SWITCHED] = spec.k_switch
    if switched and spec.change_set:
        for j in spec.change_set:
            incoming = spec.adjacency[:, j] == EDGE_ATTRACT
            w[incoming, j] = spec.k_switch
    return w


def simulate(spec: ScmSpec, t_total: int, seed: int):
    """Generate one long trajectory of `t_total` steps.

    Returns (corpus, labels); the corpus holds a single sample of shape
    [N, t_total, D] and the labels record the change set as ground-truth
    root causes together with the boundary step. Window-level regimes
    are assigned later by corpus.window_corpus.
    """
    if t_total < 2:
        raise ParameterError("t_total must be >= 2")
    boundary = spec.boundary_step
    if spec.change_set and boundary is None:
        boundary = t_total // 2
    rng = substream(seed, "simulate", 0)
    n, d = spec.n_nodes, spec.n_dims
    if spec.init_positions is not None:
        pos0 = spec.init_positions.copy()
    else:
        pos0 = rng.normal(0.0, 1.0, size=(n, d))
    mobile = np.array([i not in spec.static_nodes for i in range(n)], dtype=float)
    w_pre = _spring_matrix(spec, switched=False)
    w_post = _spring_matrix(spec, switched=True)
    out = np.empty((n, t_total, d))
    out[:, 0, :] = pos0
    cur = pos0
    h = spec.step_size
    for t in range(t_total - 1):
        w = w_post if (boundary is not None and t + 1 >= boundary) else w_pre
        # force[j] = sum_i W[i,j] * (r[i] - r[j])
        force = w.T @ cur - w.sum(axis=0)[:, None] * cur
        noise = rng.normal(0.0, spec.noise_std, size=(n, d)) if spec.noise_std > 0 else 0.0
        step = (h * force + noise) * mobile[:, None]
        cur = cur + step
        if np.max(np.abs(cur)) > _BLOWUP_LIMIT:
            raise InstabilityError(
                f"positions exceeded {_BLOWUP_LIMIT:g} at step {t + 1}; "
                "try a smaller step_size"
            )
        out[:, t + 1, :] = cur
    labels = RegimeLabels(
        regimes={},
        root_cause_nodes=set(spec.change_set),
        boundary_step=boundary,
    )
    corpus = TrajectoryCorpus(
        positions=out[None, ...],
        atom_names=[f"A{i:02d}" for i in range(n)],
        dt=spec.step_size,
        labels=labels,
    )
    return corpus, labels


# -- hydrogen-bond event labeling -------------------------------------------


@dataclass
class HbCriterion:
    """Geometric bond test: donor-acceptor distance plus angle at H."""

    cutoff: float = 3.5
    min_angle_deg: float = 120.0

    def __post_init__(self):
        if self.cutoff <= 0:
            raise ParameterError("cutoff must be positive")
        if not 0.0 < self.min_angle_deg <= 180.0:
            raise ParameterError("min angle must lie in (0, 180] degrees")


def hb_indicator(
    donor: np.ndarray, hydrogen: np.ndarray, acceptor: np.ndarray,
    criterion: HbCriterion,
) -> np.ndarray:
    """Per-step bond indicator for stacked positions [T, D]."""
    dist = np.linalg.norm(donor - acceptor, axis=-1)
    u = donor - hydrogen
    v = acceptor - hydrogen
    nu = np.linalg.norm(u, axis=-1)
    nv = np.linalg.norm(v, axis=-1)
    denom = np.where(nu * nv > 0, nu * nv, 1.0)
    cosang = np.clip((u * v).sum(axis=-1) / denom, -1.0, 1.0)
    angle = np.degrees(np.arccos(cosang))
    angle = np.where(nu * nv > 0, angle, 0.0)
    return (dist <= criterion.cutoff) & (angle >= criterion.min_angle_deg)


def label_hb_events(
    corpus: TrajectoryCorpus,
    criterion: HbCriterion,
    persist_min: float = 0.9,
    separated_max: float = 0.1,
) -> RegimeLabels:
    """Label each sample persist/separated from its bond indicator.

    Requires donor/hydrogen/acceptor roles in the corpus metadata; with
    several role triples the indicator is their conjunction. Samples
    where the bond holds at least `persist_min` of the time are persist,
    at most `separated_max` separated, anything between is dropped.
    """
    if not corpus.roles:
        raise ConfigError("corpus metadata does not designate donor/H/acceptor roles")
    for triple in corpus.roles:
        for key in ("donor", "hydrogen", "acceptor"):
            if key not in triple:
                raise ConfigError(f"role triple missing '{key}': {triple}")
            if not 0 <= int(triple[key]) < corpus.n_atoms:
                raise ConfigError(f"role index out of range in {triple}")
    labels = RegimeLabels()
    for s in range(corpus.n_samples):
        held = np.ones(corpus.n_steps, dtype=bool)
        for triple in corpus.roles:
            held &= hb_indicator(
                corpus.positions[s, int(triple["donor"])],
                corpus.positions[s, int(triple["hydrogen"])],
                corpus.positions[s, int(triple["acceptor"])],
                criterion,
            )
        frac = held.mean()
        if frac >= persist_min:
            labels.regimes[s] = "persist"
        elif frac <= separated_max:
            labels.regimes[s] = "separated"
    return labels
