"""Scenario generation, sensor-network plumbing, Monte-Carlo driver, OSPA.

Everything is driven by integer seed sequences through
numpy.random.default_rng so that a config plus its seeds reproduces every
artifact byte for byte.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ConfigError
from .gci import FusionWeights, naive_gci_mb_fuse
from .mb import (
    BernoulliComponent,
    mb_merge_components,
    BirthConfig,
    GaussianMixture,
    MbReduceConfig,
    MotionModel,
    MultiBernoulliDensity,
    Rectangle,
    SensorModel,
    adaptive_birth,
    extract_estimates,
    mb_predict,
    mb_reduce,
    mb_update,
)
from .pgci import multi_sensor_fuse


@dataclass(frozen=True)
class ObjectBirth:
    birth_step: int          # first step the object exists (0-based)
    death_step: int          # first step the object no longer exists
    state: np.ndarray        # initial [px, py, vx, vy]


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    region: Rectangle
    duration: int
    births: tuple[ObjectBirth, ...]
    motion: MotionModel
    sensors: tuple[SensorModel, ...]
    adjacency: tuple[frozenset[int], ...]   # adjacency[i] = neighbors of sensor i
    fusion_node: int
    gamma: float = 4.0
    truth_seed: int = 12345
    base_seed: int = 1
    birth_config: BirthConfig | None = None         # None -> known births at step 0
    known_birth_r: float = 0.9
    known_birth_cov: np.ndarray | None = None
    reduce_config: MbReduceConfig = field(default_factory=MbReduceConfig)
    # Exchanged densities are condensed before fusion (local posteriors are
    # untouched): co-located Bernoulli components merge into one track-like
    # component (first moment preserved), then components below fusion_trunc
    # are dropped and the count is capped. Without this a filter posterior
    # carries per-object legacy chains that multiply the fusion hypothesis
    # count while adding almost no information.
    # Existence probabilities in exchanged densities are capped so that
    # ln(odds) stays below the association gate gamma: a pair whose
    # divergence exceeds the gate must then carry negligible hypothesis
    # weight, which is the assumption the clustering truncation rests on.
    # With r clamped near 1 (odds ~1e9) an out-of-gate pair could still
    # dominate the empty hypothesis.
    fusion_merge_gate: float = 4.0
    fusion_trunc: float = 0.1
    fusion_r_cap: float = 0.98
    fusion_max_components: int = 100
    fusion_cluster_cap: int = 10**6
    r_threshold: float = 0.5
    ospa_c: float = 100.0
    ospa_p: float = 2.0
    truth_process_noise: bool = False

    def validate(self) -> None:
        if self.duration < 1:
            raise ConfigError("duration must be >= 1")
        n = len(self.sensors)
        if len(self.adjacency) != n:
            raise ConfigError("adjacency size must match sensor count")
        if not (0 <= self.fusion_node < n):
            raise ConfigError("fusion node out of range")
        for i, nbrs in enumerate(self.adjacency):
            for j in nbrs:
                if j == i or not (0 <= j < n):
                    raise ConfigError(f"bad neighbor {j} for sensor {i}")
                if i not in self.adjacency[j]:
                    raise ConfigError("adjacency must be symmetric")
        if n > 1 and not _connected(self.adjacency):
            raise ConfigError("sensor network must be connected")
        for b in self.births:
            if not (0 <= b.birth_step < b.death_step <= self.duration):
                raise ConfigError("birth step must precede death step within duration")
            if not self.region.contains(b.state[:2]):
                raise ConfigError("initial object state outside region")
        if self.gamma <= 0:
            raise ConfigError("gamma must be positive")


def _connected(adjacency) -> bool:
    n = len(adjacency)
    seen = {0}
    stack = [0]
    while stack:
        i = stack.pop()
        for j in adjacency[i]:
            if j not in seen:
                seen.add(j)
                stack.append(j)
    return len(seen) == n


def _psd_sqrt(Q: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(Q)
    return vecs @ np.diag(np.sqrt(np.clip(vals, 0.0, None)))


def generate_truth(cfg: ScenarioConfig, seed: int) -> list[np.ndarray]:
    """Per-step arrays of true states; linear propagation, optional process noise."""
    rng = np.random.default_rng(seed)
    root = _psd_sqrt(cfg.motion.Q) if cfg.truth_process_noise else None
    tracks = []
    for b in cfg.births:
        x = np.asarray(b.state, dtype=float).copy()
        states = {b.birth_step: x.copy()}
        for k in range(b.birth_step + 1, b.death_step):
            x = cfg.motion.F @ x
            if root is not None:
                x = x + root @ rng.standard_normal(x.shape[0])
            states[k] = x.copy()
        tracks.append(states)
    truth = []
    for k in range(cfg.duration):
        present = [t[k] for t in tracks if k in t]
        truth.append(np.array(present) if present else np.zeros((0, 4)))
    return truth


def generate_measurements(
    truth: list[np.ndarray], sensor: SensorModel, seed: int
) -> list[np.ndarray]:
    """Per-step scans: detections with probability P_D plus uniform Poisson clutter."""
    rng = np.random.default_rng(seed)
    r_root = _psd_sqrt(sensor.R)
    scans = []
    for states in truth:
        rows = []
        for x in states:
            if rng.random() < sensor.p_detect:
                z = sensor.H @ x + r_root @ rng.standard_normal(sensor.H.shape[0])
                rows.append(z)
        n_clutter = rng.poisson(sensor.clutter_rate)
        if n_clutter > 0:
            rows.extend(sensor.region.sample(rng, n_clutter))
        scans.append(np.array(rows) if rows else np.zeros((0, sensor.H.shape[0])))
    return scans


def metropolis_weights(adjacency, node: int) -> tuple[float, dict[int, float]]:
    """Metropolis rule: w_ij = 1 / (1 + max(deg_i, deg_j)); self takes the rest."""
    if not (0 <= node < len(adjacency)):
        raise ConfigError(f"node {node} not in topology")
    deg = [len(nbrs) for nbrs in adjacency]
    neighbor_w = {
        j: 1.0 / (1.0 + max(deg[node], deg[j])) for j in sorted(adjacency[node])
    }
    self_w = 1.0 - sum(neighbor_w.values())
    return self_w, neighbor_w


def ospa(x: np.ndarray, y: np.ndarray, c: float = 100.0, p: float = 2.0) -> float:
    """Optimal sub-pattern assignment distance between two position sets."""
    if c <= 0 or p < 1:
        raise ValueError("require c > 0 and p >= 1")
    x = np.asarray(x, dtype=float).reshape(-1, 2) if np.size(x) else np.zeros((0, 2))
    y = np.asarray(y, dtype=float).reshape(-1, 2) if np.size(y) else np.zeros((0, 2))
    m, n = x.shape[0], y.shape[0]
    if m == 0 and n == 0:
        return 0.0
    if m == 0 or n == 0:
        return float(c)
    if m > n:
        x, y, m, n = y, x, n, m
    dists = np.linalg.norm(x[:, None, :] - y[None, :, :], axis=-1)
    cost = np.minimum(dists, c) ** p
    rows, cols = linear_sum_assignment(cost)
    total = cost[rows, cols].sum() + c**p * (n - m)
    return float((total / n) ** (1.0 / p))


def known_birth_components(cfg: ScenarioConfig) -> tuple[BernoulliComponent, ...]:
    cov = cfg.known_birth_cov
    if cov is None:
        cov = np.diag([100.0, 100.0, 25.0, 25.0])
    births = []
    for i, b in enumerate(cfg.births):
        if b.birth_step == 0:
            births.append(
                BernoulliComponent(
                    r=cfg.known_birth_r,
                    pdf=GaussianMixture.single(np.asarray(b.state, dtype=float), cov),
                    id=i,
                )
            )
    return tuple(births)


def run_local_filter(
    scans: list[np.ndarray],
    cfg: ScenarioConfig,
    sensor: SensorModel,
) -> list[MultiBernoulliDensity]:
    """GM cardinality-balanced MB filter over one sensor's scan sequence."""
    posterior = MultiBernoulliDensity(())
    prev_scan = None
    out = []
    for k, scan in enumerate(scans):
        if cfg.birth_config is None:
            births = known_birth_components(cfg) if k == 0 else ()
        else:
            births = (
                adaptive_birth(prev_scan, cfg.birth_config, start_id=posterior.next_id())
                if prev_scan is not None
                else ()
            )
        predicted = mb_predict(posterior, cfg.motion, births)
        updated = mb_update(predicted, scan, sensor)
        posterior = mb_reduce(updated, cfg.reduce_config)
        out.append(posterior)
        prev_scan = scan
    return out


@dataclass
class MonteCarloResult:
    steps: np.ndarray
    truth_card: np.ndarray
    ospa_local: np.ndarray
    ospa_fused: np.ndarray
    ospa_naive: np.ndarray | None
    card_mean: np.ndarray
    card_std: np.ndarray
    t_fuse_ms: np.ndarray
    t_fuse_max_ms: np.ndarray
    n_h: np.ndarray
    n_h_clustered: np.ndarray
    n_runs: int

    CSV_COLUMNS = (
        "step",
        "ospa_local_mean",
        "ospa_fused_mean",
        "card_mean",
        "card_std",
        "N_H",
        "N_H2",
    )

    def to_csv(self, path) -> None:
        """Deterministic per-step statistics (timings go to a separate file)."""
        with open(path, "w", newline="\n") as fh:
            fh.write(",".join(self.CSV_COLUMNS) + "\n")
            for i, k in enumerate(self.steps):
                fh.write(
                    f"{int(k)},{self.ospa_local[i]:.9f},{self.ospa_fused[i]:.9f},"
                    f"{self.card_mean[i]:.9f},{self.card_std[i]:.9f},"
                    f"{self.n_h[i]:.6e},{self.n_h_clustered[i]:.6e}\n"
                )

    def timings_to_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("step,t_fuse_ms\n")
            for i, k in enumerate(self.steps):
                fh.write(f"{int(k)},{self.t_fuse_ms[i]:.6f}\n")


def _condense_for_fusion(mb: MultiBernoulliDensity, cfg) -> MultiBernoulliDensity:
    merged = mb_merge_components(mb, cfg.fusion_merge_gate, cfg.reduce_config.gm)
    kept = [
        BernoulliComponent(r=min(c.r, cfg.fusion_r_cap), pdf=c.pdf, id=c.id)
        for c in merged.components
        if c.r >= cfg.fusion_trunc
    ]
    if len(kept) > cfg.fusion_max_components:
        kept.sort(key=lambda c: (-c.r, c.id))
        kept = sorted(kept[: cfg.fusion_max_components], key=lambda c: c.id)
    return MultiBernoulliDensity(tuple(kept))


def _fusion_inputs(cfg, posteriors_by_sensor, k):
    node = cfg.fusion_node
    self_w, neighbor_w = metropolis_weights(cfg.adjacency, node)
    densities = [_condense_for_fusion(posteriors_by_sensor[node][k], cfg)]
    weights = [self_w]
    for j, wj in neighbor_w.items():
        densities.append(_condense_for_fusion(posteriors_by_sensor[j][k], cfg))
        weights.append(wj)
    return densities, weights


def run_montecarlo(
    cfg: ScenarioConfig,
    n_runs: int,
    compare_oracle: bool = False,
    naive_cap: int = 10**7,
) -> MonteCarloResult:
    """Independent seeded runs: local filtering, fusion at one node, OSPA."""
    if n_runs < 1:
        raise ConfigError("n_runs must be >= 1")
    cfg.validate()
    T = cfg.duration
    truth = generate_truth(cfg, cfg.truth_seed)
    truth_card = np.array([len(t) for t in truth])

    ospa_local = np.zeros((n_runs, T))
    ospa_fused = np.zeros((n_runs, T))
    ospa_naive = np.zeros((n_runs, T)) if compare_oracle else None
    card = np.zeros((n_runs, T))
    t_fuse = np.zeros((n_runs, T))
    n_h = np.zeros((n_runs, T))
    n_h2 = np.zeros((n_runs, T))

    for run in range(n_runs):
        posteriors = []
        for s, sensor in enumerate(cfg.sensors):
            scans = generate_measurements(
                truth, sensor, np.random.SeedSequence([cfg.base_seed, run, s]).entropy
            )
            posteriors.append(run_local_filter(scans, cfg, sensor))

        naive_acc = None
        for k in range(T):
            densities, weights = _fusion_inputs(cfg, posteriors, k)
            t0 = time.perf_counter()
            fused, diags = multi_sensor_fuse(
                densities,
                weights,
                cfg.gamma,
                reduce_config=cfg.reduce_config,
                cap=cfg.fusion_cluster_cap,
                return_diagnostics=True,
            )
            t_fuse[run, k] = (time.perf_counter() - t0) * 1e3
            if diags:
                n_h[run, k] = float(min(diags[0].n_h, 1e300))
                n_h2[run, k] = float(diags[0].n_h_clustered)

            truth_pos = truth[k][:, :2] if len(truth[k]) else np.zeros((0, 2))
            local_est = extract_estimates(posteriors[cfg.fusion_node][k], cfg.r_threshold)
            fused_est = extract_estimates(fused, cfg.r_threshold)
            ospa_local[run, k] = ospa(local_est[:, :2], truth_pos, cfg.ospa_c, cfg.ospa_p)
            ospa_fused[run, k] = ospa(fused_est[:, :2], truth_pos, cfg.ospa_c, cfg.ospa_p)
            card[run, k] = fused_est.shape[0]

            if compare_oracle:
                acc = densities[0]
                w_acc = weights[0]
                for nxt, w_next in zip(densities[1:], weights[1:]):
                    pair_w = FusionWeights(
                        w_acc / (w_acc + w_next), w_next / (w_acc + w_next)
                    )
                    acc, _ = naive_gci_mb_fuse(
                        acc, nxt, pair_w, cap=naive_cap, gm_config=cfg.reduce_config.gm
                    )
                    acc = mb_reduce(acc, cfg.reduce_config)
                    w_acc += w_next
                naive_est = extract_estimates(acc, cfg.r_threshold)
                ospa_naive[run, k] = ospa(
                    naive_est[:, :2], truth_pos, cfg.ospa_c, cfg.ospa_p
                )

    return MonteCarloResult(
        steps=np.arange(T),
        truth_card=truth_card,
        ospa_local=ospa_local.mean(axis=0),
        ospa_fused=ospa_fused.mean(axis=0),
        ospa_naive=ospa_naive.mean(axis=0) if compare_oracle else None,
        card_mean=card.mean(axis=0),
        card_std=card.std(axis=0),
        t_fuse_ms=t_fuse.mean(axis=0),
        t_fuse_max_ms=t_fuse.max(axis=0),
        n_h=n_h.mean(axis=0),
        n_h_clustered=n_h2.mean(axis=0),
        n_runs=n_runs,
    )


# ---------------------------------------------------------------------------
# Built-in scenarios
# ---------------------------------------------------------------------------


def scenario1(seed: int = 1) -> ScenarioConfig:
    """Two sensors, three objects known to be born at step 0, T = 65."""
    region = Rectangle(-500.0, 500.0, -500.0, 500.0)
    motion = MotionModel.ncv(dt=1.0, sigma_v=5.0, p_survival=0.98)
    sensor = SensorModel.position_sensor(
        sigma_eps=10.0, p_detect=0.95, clutter_rate=10.0, region=region
    )
    births = (
        ObjectBirth(0, 65, np.array([-250.0, -250.0, 5.0, 3.0])),
        ObjectBirth(0, 65, np.array([250.0, -250.0, -4.0, 4.0])),
        ObjectBirth(0, 65, np.array([0.0, 250.0, 2.0, -5.0])),
    )
    return ScenarioConfig(
        name="scenario1",
        region=region,
        duration=65,
        births=births,
        motion=motion,
        sensors=(sensor, sensor),
        adjacency=(frozenset({1}), frozenset({0})),
        fusion_node=0,
        gamma=4.0,
        base_seed=seed,
        birth_config=None,
        reduce_config=MbReduceConfig(trunc_threshold=1e-4, max_components=100),
        fusion_max_components=6,
    )


def _staggered_births(n_objects: int, duration: int, region: Rectangle, seed: int):
    rng = np.random.default_rng(seed)
    births = []
    for i in range(n_objects):
        birth = int(rng.integers(0, max(1, duration // 3))) if i >= n_objects // 2 else 0
        death = int(min(duration, birth + rng.integers(duration // 2, duration)))
        margin = 0.3
        px = rng.uniform(region.xmin * (1 - margin), region.xmax * (1 - margin))
        py = rng.uniform(region.ymin * (1 - margin), region.ymax * (1 - margin))
        speed = rng.uniform(3.0, 10.0)
        angle = rng.uniform(0, 2 * np.pi)
        births.append(
            ObjectBirth(birth, death, np.array([px, py, speed * np.cos(angle),
                                               speed * np.sin(angle)]))
        )
    return tuple(births)


def scenario2(scale: str = "desk", seed: int = 1) -> ScenarioConfig:
    """Adaptive-birth multi-object scenario; desk scale by default.

    Desk scale: 10 objects, 3 chain-linked sensors, T = 100.
    Full scale: 40 objects, 6 sensors, T = 200 (long-running).
    """
    region = Rectangle(-2000.0, 2000.0, -2000.0, 2000.0)
    motion = MotionModel.ncv(dt=1.0, sigma_v=5.0, p_survival=0.98)
    sensor = SensorModel.position_sensor(
        sigma_eps=10.0, p_detect=0.95, clutter_rate=10.0, region=region
    )
    if scale == "desk":
        duration, n_objects = 100, 10
        sensors = (sensor,) * 3
        adjacency = (frozenset({1}), frozenset({0, 2}), frozenset({1}))
        fusion_node = 1
    elif scale == "full":
        duration, n_objects = 200, 40
        sensors = (sensor,) * 6
        adjacency = (
            frozenset({1, 4}),
            frozenset({0, 2}),
            frozenset({1, 4}),
            frozenset({4}),
            frozenset({0, 2, 3, 5}),
            frozenset({4}),
        )
        fusion_node = 4
    else:
        raise ConfigError(f"unknown scale {scale!r}")
    births = _staggered_births(n_objects, duration, region, seed=777)
    return ScenarioConfig(
        name=f"scenario2-{scale}",
        region=region,
        duration=duration,
        births=births,
        motion=motion,
        sensors=sensors,
        adjacency=adjacency,
        fusion_node=fusion_node,
        gamma=4.0,
        base_seed=seed,
        birth_config=BirthConfig(),
        reduce_config=MbReduceConfig(trunc_threshold=1e-4, max_components=100),
    )


SCENARIOS = {"scenario1": scenario1, "scenario2": scenario2}


def build_scenario(name: str, scale: str = "desk", seed: int = 1) -> ScenarioConfig:
    if name == "scenario1":
        return scenario1(seed=seed)
    if name == "scenario2":
        return scenario2(scale=scale, seed=seed)
    raise ConfigError(f"unknown scenario {name!r}")
