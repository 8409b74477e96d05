"""The federated training loop.

One round = select clients, train each locally from the broadcast global
model, apply update poisoning to malicious clients, score/cluster/weight
(cluster-guided runs only), aggregate, evaluate, record metrics. Every random
decision is drawn from a stream derived from the master seed, so a run is
fully reproducible and independent of thread count.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import aggregation, attacks, model
from .attacks import AttackConfig, attack_label, flip_labels, poison_update, select_malicious
from .aggregation import AggregatorKind, ClientUpdate, parse_aggregator
from .clustering import FeaturePoint, kmeans, standardize
from .confidence import ConfidenceWeights, confidence_scores, softmax_weights
from .data import Dataset, PartitionPlan, generate_synthetic, load_idx, partition, \
    split_train_test, take
from .diagnostics import DiagnosticsReport, ZeroGradientError, check_round_bound, \
    compute_U, estimate_lipschitz, gradient_dissimilarity, lemma2_bound
from .dissimilarity import PER_SAMPLE, POOLED, dissimilarity_score
from .model import Batch, ModelSpec, forward, init_params, loss, save_params
from .seeding import derive_rng, derive_seed

LIPSCHITZ_PROBES = 8
LIPSCHITZ_RADIUS = 0.5


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""


class RoundError(RuntimeError):
    """A training round failed; the message names the round."""


@dataclass(frozen=True)
class DataSourceConfig:
    kind: str  # synthetic | idx
    # synthetic
    num_classes: int = 5
    input_dim: int = 16
    samples_per_class: int = 200
    spread: float = 0.3
    test_fraction: float = 0.2
    seed: int | None = None
    # idx
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    train_cap: int = 0
    test_cap: int = 0

    def __post_init__(self):
        if self.kind not in ("synthetic", "idx"):
            raise ConfigError(f"dataset.kind must be 'synthetic' or 'idx', got {self.kind!r}")
        if self.kind == "synthetic":
            if self.num_classes < 2:
                raise ConfigError(f"dataset.num_classes must be >= 2, got {self.num_classes}")
            if not 0.0 < self.test_fraction < 1.0:
                raise ConfigError(
                    f"dataset.test_fraction must be in (0,1), got {self.test_fraction}"
                )
        else:
            for name in ("train_images", "train_labels", "test_images", "test_labels"):
                if not getattr(self, name):
                    raise ConfigError(f"dataset.{name} is required for idx datasets")

    def load(self, master_seed) -> tuple[Dataset, Dataset]:
        if self.kind == "synthetic":
            seed = self.seed if self.seed is not None else derive_seed(master_seed, "data")
            full = generate_synthetic(self.num_classes, self.input_dim,
                                      self.samples_per_class, self.spread, seed)
            return split_train_test(full, self.test_fraction, derive_seed(seed, "split"))
        train = load_idx(self.train_images, self.train_labels)
        test = load_idx(self.test_images, self.test_labels)
        classes = max(train.num_classes, test.num_classes)
        train = Dataset(train.features, train.labels, classes)
        test = Dataset(test.features, test.labels, classes)
        if self.train_cap:
            train = take(train, self.train_cap, derive_seed(master_seed, "data", "train-cap"))
        if self.test_cap:
            test = take(test, self.test_cap, derive_seed(master_seed, "data", "test-cap"))
        return train, test


@dataclass(frozen=True)
class ExperimentConfig:
    model: dict
    dataset: DataSourceConfig
    partition: PartitionPlan
    attack: AttackConfig
    aggregator: AggregatorKind
    num_clients: int
    selection_prob: float = 1.0
    rounds: int = 30
    local_passes: int = 2
    batch_sample_prob: float = 1.0
    batch_size: int = 32
    lr: float | tuple = 0.0  # 0.0 -> per-architecture default
    cluster_count: int = 2
    softmax_temperature: float = 1.0
    eval_cap: int = 512
    dissimilarity_mode: str = PER_SAMPLE
    diagnostics: bool = False
    noise_sigma: float = 0.0
    gamma: float = 1.0
    checkpoint_interval: int = 0
    master_seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.num_clients < 2:
            raise ConfigError(f"num_clients must be >= 2, got {self.num_clients}")
        if not 0.0 < self.selection_prob <= 1.0:
            raise ConfigError(f"selection_prob must be in (0,1], got {self.selection_prob}")
        if not 0.0 < self.batch_sample_prob <= 1.0:
            raise ConfigError(
                f"batch_sample_prob must be in (0,1], got {self.batch_sample_prob}"
            )
        if self.rounds < 1:
            raise ConfigError(f"rounds must be >= 1, got {self.rounds}")
        if self.local_passes < 0:
            raise ConfigError(f"local_passes must be >= 0, got {self.local_passes}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 1 <= self.cluster_count <= self.num_clients:
            raise ConfigError(
                f"cluster_count must be in [1, num_clients], got {self.cluster_count}"
            )
        if self.softmax_temperature <= 0:
            raise ConfigError(
                f"softmax_temperature must be positive, got {self.softmax_temperature}"
            )
        if self.eval_cap < 1:
            raise ConfigError(f"eval_cap must be >= 1, got {self.eval_cap}")
        if self.dissimilarity_mode not in (PER_SAMPLE, POOLED):
            raise ConfigError(
                f"dissimilarity_mode must be '{PER_SAMPLE}' or '{POOLED}', "
                f"got {self.dissimilarity_mode!r}"
            )
        if self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.gamma <= 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if self.checkpoint_interval < 0:
            raise ConfigError(
                f"checkpoint_interval must be >= 0, got {self.checkpoint_interval}"
            )
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        lr = self.lr
        if isinstance(lr, (list, tuple)):
            lr = tuple(float(v) for v in lr)
            if len(lr) < self.rounds:
                raise ConfigError(
                    f"lr schedule has {len(lr)} entries for {self.rounds} rounds"
                )
            if any(v <= 0 for v in lr):
                raise ConfigError("lr schedule entries must all be positive")
            object.__setattr__(self, "lr", lr)
        else:
            lr = float(lr)
            if lr == 0.0:
                lr = 0.05 if self.model.get("kind") == model.SOFTMAX_REGRESSION else 0.01
            if lr <= 0:
                raise ConfigError(f"lr must be positive, got {lr}")
            object.__setattr__(self, "lr", lr)

    def eta(self, round_index: int) -> float:
        """Learning rate for a 1-based round index."""
        if isinstance(self.lr, tuple):
            return self.lr[round_index - 1]
        return self.lr

    def to_dict(self) -> dict:
        src = {k: v for k, v in vars(self.dataset).items() if v not in ("", None)}
        part = {"kind": self.partition.kind,
                "shards_per_client": self.partition.shards_per_client,
                "alpha": self.partition.alpha}
        if self.partition.seed is not None:
            part["seed"] = self.partition.seed
        atk = {k: v for k, v in vars(self.attack).items() if v is not None}
        return {
            "model": dict(self.model),
            "dataset": src,
            "partition": part,
            "attack": atk,
            "aggregator": str(self.aggregator),
            "num_clients": self.num_clients,
            "selection_prob": self.selection_prob,
            "rounds": self.rounds,
            "local_passes": self.local_passes,
            "batch_sample_prob": self.batch_sample_prob,
            "batch_size": self.batch_size,
            "lr": list(self.lr) if isinstance(self.lr, tuple) else self.lr,
            "cluster_count": self.cluster_count,
            "softmax_temperature": self.softmax_temperature,
            "eval_cap": self.eval_cap,
            "dissimilarity_mode": self.dissimilarity_mode,
            "diagnostics": self.diagnostics,
            "noise_sigma": self.noise_sigma,
            "gamma": self.gamma,
            "checkpoint_interval": self.checkpoint_interval,
            "master_seed": self.master_seed,
            "threads": self.threads,
        }


_CONFIG_FIELDS = {
    "model", "dataset", "partition", "attack", "aggregator", "num_clients",
    "selection_prob", "rounds", "local_passes", "batch_sample_prob", "batch_size",
    "lr", "cluster_count", "softmax_temperature", "eval_cap", "dissimilarity_mode",
    "diagnostics", "noise_sigma", "gamma", "checkpoint_interval", "master_seed",
    "threads",
}

_MODEL_FIELDS = {"kind", "input_dim", "num_classes", "hidden_dim", "activation"}


def config_from_dict(raw: dict, seed_override: int | None = None) -> ExperimentConfig:
    """Build and validate an ExperimentConfig; errors name the offending field."""
    for key in raw:
        if key not in _CONFIG_FIELDS:
            raise ConfigError(f"unknown config field {key!r}")
    for required in ("model", "dataset", "aggregator", "num_clients"):
        if required not in raw:
            raise ConfigError(f"config field {required!r} is required")

    model_dict = raw["model"]
    if not isinstance(model_dict, dict) or "kind" not in model_dict:
        raise ConfigError("model must be an object with a 'kind' field")
    for key in model_dict:
        if key not in _MODEL_FIELDS:
            raise ConfigError(f"unknown model field {key!r}")
    if model_dict["kind"] not in (model.SOFTMAX_REGRESSION, model.MLP):
        raise ConfigError(f"model.kind must be 'softmax-regression' or 'mlp', "
                          f"got {model_dict['kind']!r}")

    try:
        dataset = DataSourceConfig(**raw["dataset"])
    except TypeError as exc:
        raise ConfigError(f"dataset: {exc}") from exc

    num_clients = raw["num_clients"]
    part_raw = dict(raw.get("partition", {"kind": "iid"}))
    part_raw.setdefault("kind", "iid")
    try:
        plan = PartitionPlan(num_clients=num_clients, **part_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"partition: {exc}") from exc

    attack_raw = raw.get("attack", "none")
    try:
        if isinstance(attack_raw, str):
            attack = attacks.parse_attack(attack_raw)
        else:
            attack = AttackConfig(**attack_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"attack: {exc}") from exc

    try:
        agg = parse_aggregator(raw["aggregator"])
    except ValueError as exc:
        raise ConfigError(f"aggregator: {exc}") from exc

    kwargs = {k: v for k, v in raw.items()
              if k not in ("model", "dataset", "partition", "attack", "aggregator")}
    if seed_override is not None:
        kwargs["master_seed"] = seed_override
    return ExperimentConfig(model=model_dict, dataset=dataset, partition=plan,
                            attack=attack, aggregator=agg, **kwargs)


def load_config(path, seed_override: int | None = None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return config_from_dict(raw, seed_override=seed_override)


@dataclass
class ClientState:
    client_id: int
    dataset: Dataset
    malicious: bool


@dataclass
class ExperimentState:
    spec: ModelSpec
    params: np.ndarray
    clients: list[ClientState]
    test_set: Dataset
    malicious: frozenset[int]
    attack_seed: int


@dataclass(frozen=True)
class RoundMetrics:
    round: int
    selected: tuple[int, ...]
    dissimilarity: dict[int, float] = field(default_factory=dict)
    cluster: dict[int, int] = field(default_factory=dict)
    raw_score: dict[int, float] = field(default_factory=dict)
    weight: dict[int, float] = field(default_factory=dict)
    test_acc: float = 0.0
    test_loss: float = 0.0
    wall_ms: float = 0.0


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    metrics: list[RoundMetrics]
    final_params: np.ndarray
    diagnostics: list[DiagnosticsReport]
    wall_ms_total: float

    @property
    def final_accuracy(self) -> float:
        return self.metrics[-1].test_acc


def _resolve_spec(model_dict: dict, train: Dataset) -> ModelSpec:
    """Fill omitted model dims from the data; reject explicit mismatches."""
    input_dim = model_dict.get("input_dim") or train.features.shape[1]
    num_classes = model_dict.get("num_classes") or train.num_classes
    if input_dim != train.features.shape[1]:
        raise ConfigError(
            f"model.input_dim is {input_dim} but the data has "
            f"{train.features.shape[1]} features"
        )
    if num_classes != train.num_classes:
        raise ConfigError(
            f"model.num_classes is {num_classes} but the data has "
            f"{train.num_classes} classes"
        )
    try:
        return ModelSpec(kind=model_dict["kind"], input_dim=input_dim,
                         num_classes=num_classes,
                         hidden_dim=model_dict.get("hidden_dim", 0),
                         activation=model_dict.get("activation", "relu"))
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from exc


def setup_experiment(config: ExperimentConfig) -> ExperimentState:
    train, test = config.dataset.load(config.master_seed)
    spec = _resolve_spec(config.model, train)

    plan = config.partition
    if plan.seed is None:
        plan = PartitionPlan(kind=plan.kind, num_clients=plan.num_clients,
                             shards_per_client=plan.shards_per_client,
                             alpha=plan.alpha,
                             seed=derive_seed(config.master_seed, "partition"))
    parts = partition(train, plan)

    attack = config.attack
    attack_seed = attack.seed if attack.seed is not None \
        else derive_seed(config.master_seed, "attack")
    if attack.seed is None:
        attack = AttackConfig(**{**vars(attack), "seed": attack_seed})
    malicious = select_malicious(config.num_clients, attack)

    clients = []
    for k in range(config.num_clients):
        ds = parts[k]
        is_mal = k in malicious
        if is_mal and attack.kind == attacks.LABEL_FLIP:
            # static poisoning: labels are flipped once at setup
            ds = flip_labels(ds, attack.flip_mode, ds.num_classes,
                             src=attack.flip_src, dst=attack.flip_dst)
        clients.append(ClientState(k, ds, is_mal))

    params = init_params(spec, derive_rng(config.master_seed, "init"))
    return ExperimentState(spec=spec, params=params, clients=clients, test_set=test,
                           malicious=malicious, attack_seed=attack_seed)


def select_clients(num_clients: int, q_c: float, rng: np.random.Generator) -> list[int]:
    """Independent Bernoulli(q_c) inclusion; an empty draw forces one random client."""
    if not 0.0 < q_c <= 1.0:
        raise ValueError(f"q_c must be in (0,1], got {q_c}")
    mask = rng.random(num_clients) < q_c
    selected = np.flatnonzero(mask)
    if selected.size == 0:
        selected = np.array([rng.integers(num_clients)])
    return [int(i) for i in selected]


def client_training(w_t: np.ndarray, client: ClientState, config: ExperimentConfig,
                    rng: np.random.Generator, eta: float | None = None,
                    spec: ModelSpec | None = None) -> np.ndarray:
    """Local SGD: per pass, Bernoulli(q)-draw a sample set, shuffle it, and take
    one step per chunk of at most batch_size samples. N=0 returns w_t unchanged."""
    ds = client.dataset
    if len(ds) == 0:
        raise ConfigError(f"client {client.client_id} has an empty dataset")
    if spec is None:
        spec = _resolve_spec(config.model, ds)
    if eta is None:
        eta = config.eta(1)
    params = np.asarray(w_t, dtype=np.float64)
    for _ in range(config.local_passes):
        mask = rng.random(len(ds)) < config.batch_sample_prob
        drawn = np.flatnonzero(mask)
        if drawn.size == 0:
            continue
        drawn = rng.permutation(drawn)
        for start in range(0, drawn.size, config.batch_size):
            chunk = drawn[start:start + config.batch_size]
            batch = Batch(ds.features[chunk], ds.labels[chunk])
            params = model.sgd_step(params, model.gradient(spec, params, batch), eta)
    return params


def evaluate(spec: ModelSpec, params: np.ndarray, test: Dataset) -> tuple[float, float]:
    probs = forward(spec, params, test.features)
    acc = float((probs.argmax(axis=1) == test.labels).mean())
    test_loss = loss(spec, params, Batch(test.features, test.labels))
    return acc, test_loss


def _train_selected(state: ExperimentState, config: ExperimentConfig,
                    selected: list[int], t: int, eta: float) -> list[ClientUpdate]:
    def train_one(k: int) -> ClientUpdate:
        client = state.clients[k]
        rng = derive_rng(config.master_seed, "client", k, t)
        params = client_training(state.params, client, config, rng, eta, spec=state.spec)
        if client.malicious and config.attack.kind == attacks.GAUSSIAN_UPDATE:
            prng = derive_rng(state.attack_seed, "poison", k, t)
            params = poison_update(params, config.attack, prng)
        return ClientUpdate(k, params, len(client.dataset))

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            return list(pool.map(train_one, selected))
    return [train_one(k) for k in selected]


def run_round(state: ExperimentState, config: ExperimentConfig,
              t: int) -> tuple[np.ndarray, RoundMetrics]:
    """Execute round t (1-based) from state.params; does not mutate state."""
    t_start = time.perf_counter()
    sel_rng = derive_rng(config.master_seed, "select", t)
    selected = select_clients(config.num_clients, config.selection_prob, sel_rng)
    eta = config.eta(t)
    updates = _train_selected(state, config, selected, t, eta)

    diss: dict[int, float] = {}
    cluster_idx: dict[int, int] = {}
    raw: dict[int, float] = {}
    weights: dict[int, float] = {}

    if config.aggregator.name == aggregation.CLUSTERGUARD:
        for upd in updates:
            ds = state.clients[upd.client_id].dataset
            erng = derive_rng(config.master_seed, "score", upd.client_id, t)
            feats = ds.features
            if len(ds) > config.eval_cap:
                idx = np.sort(erng.choice(len(ds), size=config.eval_cap, replace=False))
                feats = ds.features[idx]
            diss[upd.client_id] = dissimilarity_score(
                state.spec, state.params, upd.params, feats,
                mode=config.dissimilarity_mode)
        if len(updates) == 1:
            # a lone client is its own cluster: distance 0, size 1, weight 1
            only = updates[0].client_id
            raw = {only: 1.0}
            weights = {only: 1.0}
            cluster_idx = {only: 0}
            new_params = updates[0].params.copy()
        else:
            points = [FeaturePoint(u.client_id,
                                   np.array([diss[u.client_id], float(u.local_size)]))
                      for u in updates]
            std_points = standardize(points)
            k_eff = min(config.cluster_count, len(std_points))
            cmodel = kmeans(std_points, k_eff,
                            seed=derive_seed(config.master_seed, "cluster", t))
            cluster_idx = dict(cmodel.assignments)
            raw = confidence_scores(cmodel, std_points)
            weights = softmax_weights(raw, config.softmax_temperature)
            cw = ConfidenceWeights(raw_scores=raw, weights=weights,
                                   temperature=config.softmax_temperature)
            new_params = aggregation.clusterguard_aggregate(state.params, updates, cw)
    else:
        new_params = aggregation.apply_baseline(
            config.aggregator, updates,
            seed=derive_seed(config.master_seed, "cluster", t))

    if config.noise_sigma > 0:
        noise_rng = derive_rng(config.master_seed, "noise", t)
        new_params = new_params + noise_rng.normal(0.0, config.noise_sigma,
                                                   size=new_params.shape[0])

    acc, test_loss = evaluate(state.spec, new_params, state.test_set)
    wall_ms = (time.perf_counter() - t_start) * 1000.0
    metrics = RoundMetrics(round=t, selected=tuple(selected), dissimilarity=diss,
                           cluster=cluster_idx, raw_score=raw, weight=weights,
                           test_acc=acc, test_loss=test_loss, wall_ms=wall_ms)
    return new_params, metrics


def _global_train_loss(state: ExperimentState, params: np.ndarray) -> float:
    """Size-weighted mean client loss == pooled mean cross-entropy."""
    total = sum(len(c.dataset) for c in state.clients)
    acc = 0.0
    for c in state.clients:
        acc += len(c.dataset) * loss(state.spec, params,
                                     Batch(c.dataset.features, c.dataset.labels))
    return acc / total


def _round_diagnostics(state: ExperimentState, config: ExperimentConfig, t: int,
                       old_params: np.ndarray, new_params: np.ndarray) -> DiagnosticsReport:
    batches = [Batch(c.dataset.features, c.dataset.labels) for c in state.clients]
    sizes = np.array([len(c.dataset) for c in state.clients], dtype=np.float64)
    p = sizes / sizes.sum()
    b_sq, g_sq = gradient_dissimilarity(state.spec, old_params, batches, p)

    pooled = Batch(np.concatenate([b.features for b in batches]),
                   np.concatenate([b.labels for b in batches]))
    m_est = estimate_lipschitz(state.spec, old_params, pooled,
                               LIPSCHITZ_PROBES, LIPSCHITZ_RADIUS,
                               derive_rng(config.master_seed, "diag", t))
    lhs = _global_train_loss(state, new_params) - _global_train_loss(state, old_params)
    try:
        u = compute_U(b_sq, g_sq)
        a1, a2, a3, rhs = lemma2_bound(u, m_est, config.gamma, config.eta(t),
                                       config.selection_prob, g_sq,
                                       sigma=config.noise_sigma)
    except ZeroGradientError:
        u = None
        a1 = a2 = a3 = rhs = float("nan")
    return DiagnosticsReport(round=t, B_squared=b_sq, grad_norm_sq=g_sq, U=u,
                             M_estimate=m_est, gamma=config.gamma, A1=a1, A2=a2,
                             A3=a3, lhs_loss_delta=lhs, rhs_bound=rhs)


def run_experiment(config: ExperimentConfig, out_dir=None) -> ExperimentResult:
    """Run all rounds; optionally write metrics.csv / summary.json / diagnostics.csv
    and parameter checkpoints under out_dir."""
    t_start = time.perf_counter()
    state = setup_experiment(config)
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    metrics: list[RoundMetrics] = []
    reports: list[DiagnosticsReport] = []
    for t in range(1, config.rounds + 1):
        try:
            new_params, round_metrics = run_round(state, config, t)
            if config.diagnostics:
                reports.append(_round_diagnostics(state, config, t,
                                                  state.params, new_params))
        except Exception as exc:
            raise RoundError(f"round {t} failed: {exc}") from exc
        state.params = new_params
        metrics.append(round_metrics)
        if out_path is not None and config.checkpoint_interval > 0 \
                and t % config.checkpoint_interval == 0:
            save_params(state.params, out_path / f"checkpoint_{t:04d}.bin")

    wall_ms_total = (time.perf_counter() - t_start) * 1000.0
    result = ExperimentResult(config=config, metrics=metrics,
                              final_params=state.params, diagnostics=reports,
                              wall_ms_total=wall_ms_total)
    if out_path is not None:
        write_metrics_csv(out_path / "metrics.csv", config, metrics)
        write_summary_json(out_path / "summary.json", result)
        if config.diagnostics:
            write_diagnostics_csv(out_path / "diagnostics.csv", reports)
        save_params(state.params, out_path / "model_final.bin")
    return result


def _fmt(value) -> str:
    # plain-float repr is shortest-roundtrip and stable; np.float64 repr is not
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


METRICS_HEADER = "round,client_id,selected,dissimilarity,cluster,raw_score,weight," \
                 "test_acc,test_loss,ms"


def write_metrics_csv(path, config: ExperimentConfig, metrics: list[RoundMetrics]):
    """One row per client per round plus a summary row (client_id = -1).

    The ms column is left empty: reruns must be byte-identical, which measured
    wall time cannot be. Timings live in summary.json instead.
    """
    lines = [METRICS_HEADER]
    for rm in metrics:
        selected = set(rm.selected)
        for k in range(config.num_clients):
            cells = [str(rm.round), str(k), "1" if k in selected else "0"]
            for source in (rm.dissimilarity, rm.cluster, rm.raw_score, rm.weight):
                cells.append(_fmt(source[k]) if k in source else "")
            cells += ["", "", ""]
            lines.append(",".join(cells))
        lines.append(",".join([str(rm.round), "-1", "", "", "", "", "",
                               _fmt(rm.test_acc), _fmt(rm.test_loss), ""]))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def write_summary_json(path, result: ExperimentResult):
    summary = {
        "config": result.config.to_dict(),
        "aggregator": str(result.config.aggregator),
        "attack": attack_label(result.config.attack),
        "master_seed": result.config.master_seed,
        "rounds": result.config.rounds,
        "final_test_acc": result.metrics[-1].test_acc,
        "final_test_loss": result.metrics[-1].test_loss,
        "wall_ms_total": result.wall_ms_total,
        "wall_ms_per_round": [rm.wall_ms for rm in result.metrics],
    }
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


DIAGNOSTICS_HEADER = "round,B_squared,grad_norm_sq,U,M_estimate,A1,A2,A3," \
                     "lhs_loss_delta,rhs_bound,bound_holds"


def write_diagnostics_csv(path, reports: list[DiagnosticsReport]):
    lines = [DIAGNOSTICS_HEADER]
    for r in reports:
        if r.U is None:
            u, a1, a2, a3, rhs, holds = "", "", "", "", "", ""
        else:
            u, a1, a2, a3, rhs = map(_fmt, (r.U, r.A1, r.A2, r.A3, r.rhs_bound))
            holds = "1" if check_round_bound(r) else "0"
        lines.append(",".join([str(r.round), _fmt(r.B_squared), _fmt(r.grad_norm_sq),
                               u, _fmt(r.M_estimate), a1, a2, a3,
                               _fmt(r.lhs_loss_delta), rhs, holds]))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
