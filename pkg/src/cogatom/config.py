"""Pipeline configuration: one declarative TOML file plus env overrides.

Sections map one-to-one onto stage configs; every knob has a default so an
empty config runs the mock pipeline. Client endpoint descriptors may be
overridden with COGATOM_* environment variables so credentials stay out of
config files.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import ValidationError
from .refine import RefineConfig
from .walker import WalkConfig

ENV_PREFIX = "COGATOM_"


@dataclass
class IngestConfig:
    min_avg: float = 3.0
    cos_threshold: float = 0.92
    cluster_budget: int = 50_000
    judge_unscored_seeds: bool = True
    rubric_rounds: int = 3


@dataclass
class DepgraphConfig:
    mode: str = "all_pairs"  # or "adjacent"
    threshold: int = 3
    max_retries: int = 2


@dataclass
class SynthSection:
    generator_tag: str = "short_cot"
    problem_bar: int = 3
    solution_bar: int = 3
    max_retries: int = 2
    max_inflight: int = 1


@dataclass
class MetricsSection:
    solver_tags: tuple[str, str] = ("short_cot", "long_cot")
    cos_threshold: float = 0.92
    cluster_budget: int = 50_000


@dataclass
class ClientsConfig:
    kind: str = "mock"  # mock | replay
    embedder_dim: int = 32
    generator_endpoint: str = ""
    judge_endpoint: str = ""
    teacher_endpoint: str = ""
    embedder_endpoint: str = ""


@dataclass
class AblationConfig:
    """One flag per ablation row: walk bias, refinement operators, quality filter."""

    degree_penalty: bool = True
    cognitive_operators: bool = True
    reject_sampling: bool = True


@dataclass
class PipelineConfig:
    workdir: Path = Path(".")
    seeds_path: Path | None = None  # defaults to workdir/seeds.jsonl
    atoms_path: Path | None = None  # defaults to workdir/atoms.jsonl
    rng_seed: int = 0
    template_dir: Path | None = None
    artifact_paths: dict[str, str] = field(default_factory=dict)  # per-artifact overrides
    ingest: IngestConfig = field(default_factory=IngestConfig)
    walk: WalkConfig = field(default_factory=WalkConfig)
    depgraph: DepgraphConfig = field(default_factory=DepgraphConfig)
    refine: RefineConfig = field(default_factory=RefineConfig)
    synth: SynthSection = field(default_factory=SynthSection)
    metrics: MetricsSection = field(default_factory=MetricsSection)
    clients: ClientsConfig = field(default_factory=ClientsConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)

    @property
    def seeds_file(self) -> Path:
        return self.seeds_path if self.seeds_path is not None else self.workdir / "seeds.jsonl"

    @property
    def atoms_file(self) -> Path:
        return self.atoms_path if self.atoms_path is not None else self.workdir / "atoms.jsonl"

    def resolve(self, artifact_name: str) -> Path:
        override = self.artifact_paths.get(artifact_name)
        return Path(override) if override else self.workdir / artifact_name

    def effective_walk(self) -> WalkConfig:
        # The global seed drives the walk unless [walk] pins its own nonzero seed.
        cfg = self.walk
        return dataclasses.replace(
            cfg,
            rng_seed=self.rng_seed if cfg.rng_seed == 0 else cfg.rng_seed,
            degree_penalty_enabled=cfg.degree_penalty_enabled and self.ablation.degree_penalty,
        )

    def effective_refine(self) -> RefineConfig:
        cfg = self.refine
        if not self.ablation.cognitive_operators:
            cfg = dataclasses.replace(
                cfg, enable_bridge=False, enable_counterfactual=False, enable_extension=False
            )
        return cfg

    def to_dict(self) -> dict:
        def convert(obj):
            if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
                return {k: convert(v) for k, v in dataclasses.asdict(obj).items()}
            if isinstance(obj, Path):
                return str(obj)
            if isinstance(obj, tuple):
                return list(obj)
            if isinstance(obj, dict):
                return {k: convert(v) for k, v in obj.items()}
            return obj

        return {f.name: convert(getattr(self, f.name)) for f in dataclasses.fields(self)}

    # Location and client-transport fields stay out of the hash: artifacts
    # must be byte-identical wherever (and via whichever client kind) the run
    # happens. Input contents and recorded transcripts are hashed separately
    # in every artifact header.
    _UNHASHED_FIELDS = (
        "workdir",
        "seeds_path",
        "atoms_path",
        "template_dir",
        "artifact_paths",
        "clients",
    )

    def hash_dict(self) -> dict:
        full = self.to_dict()
        return {k: v for k, v in full.items() if k not in self._UNHASHED_FIELDS}


_SECTION_TYPES = {
    "ingest": IngestConfig,
    "walk": WalkConfig,
    "depgraph": DepgraphConfig,
    "refine": RefineConfig,
    "synth": SynthSection,
    "metrics": MetricsSection,
    "clients": ClientsConfig,
    "ablation": AblationConfig,
}


def _build_section(name: str, cls, data: dict):
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ValidationError(f"config section [{name}]: unknown key '{key}'")
        if known[key].type in ("tuple[str, str]",) or isinstance(getattr(cls(), key), tuple):
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


def load_config(path: str | Path | None = None, **overrides) -> PipelineConfig:
    """Load TOML config (all keys optional), then apply keyword and env overrides.

    Recognized top-level keys: workdir, seeds_path, atoms_path, rng_seed,
    template_dir, and one table per stage section. `overrides` accepts the
    same top-level keys (used by the CLI for --workdir/--seed).
    """
    data: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ValidationError(f"config file not found: {p}")
        with open(p, "rb") as fh:
            data = tomllib.load(fh)

    cfg = PipelineConfig()
    for key in ("workdir", "seeds_path", "atoms_path", "template_dir"):
        if key in data and data[key] is not None:
            setattr(cfg, key, Path(data[key]))
    if "rng_seed" in data:
        cfg.rng_seed = int(data["rng_seed"])
    for name, cls in _SECTION_TYPES.items():
        if name in data:
            if not isinstance(data[name], dict):
                raise ValidationError(f"config section [{name}] must be a table")
            setattr(cfg, name, _build_section(name, cls, data[name]))

    for key, value in overrides.items():
        if value is None:
            continue
        if key in ("workdir", "seeds_path", "atoms_path", "template_dir"):
            setattr(cfg, key, Path(value))
        elif key == "rng_seed":
            cfg.rng_seed = int(value)
        elif key in _SECTION_TYPES:
            setattr(cfg, key, value)
        else:
            raise ValidationError(f"unknown config override '{key}'")

    for env_key, attr in (
        ("GENERATOR_ENDPOINT", "generator_endpoint"),
        ("JUDGE_ENDPOINT", "judge_endpoint"),
        ("TEACHER_ENDPOINT", "teacher_endpoint"),
        ("EMBEDDER_ENDPOINT", "embedder_endpoint"),
    ):
        value = os.environ.get(ENV_PREFIX + env_key)
        if value:
            setattr(cfg.clients, attr, value)
    return cfg
