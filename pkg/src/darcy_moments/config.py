"""Study configuration: one JSON-serializable dataclass tree with embedded
defaults, dumped verbatim into meta.json for provenance."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class MeshConfig:
    d: int = 1
    n: int = 64
    degree: int = 1


@dataclass
class SparseConfig:
    # h0 = 1/4 pairs h_L with the mesh width along the default study sweeps
    # ((n, L) = (16,2)..(128,5) and the (512,7) reference all give h = h_L)
    h0: float = 0.25
    L: int = 3


@dataclass
class KernelConfig:
    kind: str = "exponential"
    sigma: float = 0.3
    corr_length: float = 1.0
    gamma: float | None = None


@dataclass
class RecursionConfig:
    K: int = 2


@dataclass
class ForcingConfig:
    # "one": f(x) = 1; "sin": f(x) = pi^2 sin(pi x), whose exact Laplace
    # solution is sin(pi x)
    kind: str = "one"


@dataclass
class McConfig:
    samples: int = 2000
    seed: int = 20240
    antithetic: bool = True


@dataclass
class SweepConfig:
    n: list = field(default_factory=lambda: [16, 32, 64, 128])
    L: list = field(default_factory=lambda: [2, 3, 4, 5])
    sigma: list = field(default_factory=lambda: [0.1, 0.2, 0.4])
    K: list = field(default_factory=lambda: [0, 2])


@dataclass
class ReferenceConfig:
    # overkill discretization treated as ground truth in convergence studies
    n: int = 512
    L: int = 7


@dataclass
class CapsConfig:
    max_solves: int = 200_000
    max_moment_order: int = 8


@dataclass
class StudyConfig:
    mesh: MeshConfig = field(default_factory=MeshConfig)
    sparse: SparseConfig = field(default_factory=SparseConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    recursion: RecursionConfig = field(default_factory=RecursionConfig)
    forcing: ForcingConfig = field(default_factory=ForcingConfig)
    mc: McConfig = field(default_factory=McConfig)
    sweeps: SweepConfig = field(default_factory=SweepConfig)
    reference: ReferenceConfig = field(default_factory=ReferenceConfig)
    caps: CapsConfig = field(default_factory=CapsConfig)
    norm_p: float = 2.0

    def replace(self, **kwargs) -> "StudyConfig":
        return dataclasses.replace(self, **kwargs)


def default_config() -> StudyConfig:
    return StudyConfig()


_SECTIONS = {
    "mesh": MeshConfig,
    "sparse": SparseConfig,
    "kernel": KernelConfig,
    "recursion": RecursionConfig,
    "forcing": ForcingConfig,
    "mc": McConfig,
    "sweeps": SweepConfig,
    "reference": ReferenceConfig,
    "caps": CapsConfig,
}


def config_from_dict(data: dict) -> StudyConfig:
    """Build a StudyConfig from a (possibly partial) plain dict; unknown
    keys are rejected."""
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS:
            cls = _SECTIONS[key]
            names = {f.name for f in dataclasses.fields(cls)}
            unknown = set(value) - names
            if unknown:
                raise ValueError(f"unknown keys in '{key}': {sorted(unknown)}")
            kwargs[key] = cls(**value)
        elif key == "norm_p":
            kwargs[key] = float(value)
        else:
            raise ValueError(f"unknown config section {key!r}")
    return StudyConfig(**kwargs)


def config_to_dict(config: StudyConfig) -> dict:
    return dataclasses.asdict(config)


def load_config(path) -> StudyConfig:
    with open(Path(path), "r", encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


def dump_config(config: StudyConfig, path) -> None:
    with open(Path(path), "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(config), fh, indent=2, sort_keys=True)
        fh.write("\n")
