"""Byzantine client behaviors: label-flipping data poisoning and Gaussian update poisoning.

Attacks are strictly local to malicious clients; honest clients' data and
updates are untouched by any attack configuration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset

NONE = "none"
LABEL_FLIP = "label-flip"
GAUSSIAN_UPDATE = "gaussian-update"


@dataclass(frozen=True)
class AttackConfig:
    kind: str = NONE
    malicious_fraction: float = 0.2
    flip_mode: str = "next-class"  # next-class | fixed-pair
    flip_src: int | None = None
    flip_dst: int | None = None
    gaussian_sigma: float = 1.0
    gaussian_mode: str = "replace"  # replace | add
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in (NONE, LABEL_FLIP, GAUSSIAN_UPDATE):
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if not 0.0 <= self.malicious_fraction <= 1.0:
            raise ValueError(
                f"malicious_fraction must be in [0,1], got {self.malicious_fraction}"
            )
        if self.flip_mode not in ("next-class", "fixed-pair"):
            raise ValueError(f"unknown flip_mode {self.flip_mode!r}")
        if self.gaussian_mode not in ("replace", "add"):
            raise ValueError(f"unknown gaussian_mode {self.gaussian_mode!r}")
        if self.kind == GAUSSIAN_UPDATE and self.gaussian_sigma <= 0:
            raise ValueError(f"gaussian_sigma must be positive, got {self.gaussian_sigma}")


def select_malicious(num_clients: int, config: AttackConfig) -> frozenset[int]:
    """floor(malicious_fraction * K) client ids, uniform without replacement, seed-determined."""
    count = int(np.floor(config.malicious_fraction * num_clients))
    if count == 0 or config.kind == NONE:
        return frozenset()
    rng = np.random.default_rng(0 if config.seed is None else config.seed)
    return frozenset(int(i) for i in rng.choice(num_clients, size=count, replace=False))


def flip_labels(dataset: Dataset, flip_mode: str, num_classes: int,
                src: int | None = None, dst: int | None = None) -> Dataset:
    """Poison labels; features are untouched.

    next-class shifts every label to (y+1) mod C; fixed-pair rewrites only
    src -> dst.
    """
    labels = dataset.labels.copy()
    if flip_mode == "next-class":
        labels = (labels + 1) % num_classes
    elif flip_mode == "fixed-pair":
        if src is None or dst is None:
            raise ValueError("fixed-pair flip requires src and dst labels")
        if src == dst:
            raise ValueError(f"fixed-pair flip with src == dst == {src}")
        labels[labels == src] = dst
    else:
        raise ValueError(f"unknown flip_mode {flip_mode!r}")
    return Dataset(dataset.features, labels, dataset.num_classes)


def poison_update(update: np.ndarray, config: AttackConfig,
                  rng: np.random.Generator) -> np.ndarray:
    """Gaussian model poisoning: replace the update with noise, or add noise to it."""
    if config.kind != GAUSSIAN_UPDATE:
        raise ValueError(f"poison_update called with attack kind {config.kind!r}")
    update = np.asarray(update, dtype=np.float64)
    noise = rng.normal(0.0, config.gaussian_sigma, size=update.shape)
    if config.gaussian_mode == "replace":
        return noise
    return update + noise


def parse_attack(text: str) -> AttackConfig:
    """Parse the attack grammar kind[:fraction[:param[:param]]].

    Forms:
      none
      label-flip[:fraction[:flip_mode[:src:dst]]]
      gaussian-update[:fraction[:sigma[:mode]]]
    """
    parts = text.strip().split(":")
    kind = parts[0]
    args = parts[1:]
    try:
        if kind == NONE:
            if args:
                raise ValueError("'none' takes no parameters")
            return AttackConfig(kind=NONE, malicious_fraction=0.0)
        if kind == LABEL_FLIP:
            fraction = float(args[0]) if len(args) > 0 else 0.2
            flip_mode = args[1] if len(args) > 1 else "next-class"
            src = int(args[2]) if len(args) > 2 else None
            dst = int(args[3]) if len(args) > 3 else None
            return AttackConfig(kind=LABEL_FLIP, malicious_fraction=fraction,
                                flip_mode=flip_mode, flip_src=src, flip_dst=dst)
        if kind == GAUSSIAN_UPDATE:
            fraction = float(args[0]) if len(args) > 0 else 0.2
            sigma = float(args[1]) if len(args) > 1 else 1.0
            mode = args[2] if len(args) > 2 else "replace"
            return AttackConfig(kind=GAUSSIAN_UPDATE, malicious_fraction=fraction,
                                gaussian_sigma=sigma, gaussian_mode=mode)
    except (ValueError, IndexError) as exc:
        raise ValueError(f"bad attack spec {text!r}: {exc}") from exc
    raise ValueError(f"unknown attack kind {kind!r} in {text!r}")


def attack_label(config: AttackConfig) -> str:
    """Short, stable label for reports."""
    if config.kind == NONE or config.malicious_fraction == 0:
        return "none"
    if config.kind == LABEL_FLIP:
        return f"label-flip:{config.malicious_fraction:g}"
    return f"gaussian-update:{config.malicious_fraction:g}:{config.gaussian_sigma:g}"
