"""Flat key=value run configuration shared by every CLI subcommand.

A run config is a plain text file of ``key=value`` lines (``#`` comments and
blank lines ignored).  Every key has a documented default below; unknown keys
are rejected so a typo cannot silently fall back to a default.  Command-line
flags override file values, and the merged ("effective") config is echoed
into the run directory so any run can be reproduced from its artifacts alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .attack import ABLATIONS, AttackConfig
from .distortion import DeadPixels, DistortionKind, GaussianBlur, GaussianNoise
from .grid import GridSpec
from .ppo import PPOConfig
from .synth import SynthSpec


class ConfigFileError(ValueError):
    """Raised when a run-config file or value cannot be parsed."""


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ConfigFileError("expected a boolean, got %r" % text)


def _parse_triple(text: str) -> tuple[float, float, float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise ConfigFileError("expected three comma-separated numbers, got %r" % text)
    return (float(parts[0]), float(parts[1]), float(parts[2]))


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(repr(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class Field:
    name: str
    parse: Callable[[str], object]
    default: object
    help: str


# The closed set of recognised keys.  ``victim`` is either a builtin
# architecture name (toy-avg, toy-3d) or ``remote:URL``; for the builtin
# names the checkpoint itself is located through ``victim_path``.
FIELDS: tuple[Field, ...] = (
    # run identity and budgets
    Field("seed", int, 0, "master RNG seed for policies and episode noise"),
    Field("query_cap", int, 10000, "hard victim-query budget per episode"),
    Field("max_iterations", int, 10000, "attack-loop iteration limit per episode"),
    Field("victim", str, "toy-3d", "victim kind: toy-avg, toy-3d, or remote:URL"),
    Field("victim_path", str, "", "checkpoint path for builtin victim kinds"),
    Field("ablation", str, "combined", "agent mode: temporal, spatial, or combined"),
    Field("out", str, "run", "output directory for run artifacts"),
    # distortion
    Field("distortion", str, "gn", "distortion family: gb, dp, or gn"),
    Field("gn_variance", float, 0.005, "gaussian-noise variance"),
    Field("gb_kernel_size", int, 5, "gaussian-blur kernel size (odd)"),
    Field("gb_sigma", float, 1.0, "gaussian-blur standard deviation"),
    Field("dp_fill", float, 0.0, "dead-pixel fill intensity in [0, 1]"),
    Field("dp_fraction", float, 0.05, "fraction of patch pixels killed"),
    # agents
    Field("grid", str, "4x4:2x2", "two-level patch grid, R1xC1:R2xC2"),
    Field("budget_l", int, 4, "target focus-frame count for the temporal reward"),
    Field("lr", float, 3e-3, "policy/value learning rate"),
    Field("train", _parse_bool, True, "update the agents between iterations"),
    Field("revert", _parse_bool, True, "run distortion reversion after success"),
    Field(
        "reversion_accounting",
        str,
        "within-cap",
        "charge reversion queries within-cap or extra",
    ),
    Field("temporal_weights", _parse_triple, (1.0, 1.0, 1.0), "temporal reward mix"),
    Field("spatial_weights", _parse_triple, (1.0, 1.0, 1.0), "spatial reward mix"),
    # PPO
    Field("ppo_clip", float, 0.2, "PPO clipping ratio"),
    Field("ppo_value_coef", float, 0.5, "value-loss weight"),
    Field("ppo_entropy_coef", float, 0.01, "entropy-bonus weight"),
    Field("ppo_epochs", int, 4, "optimisation epochs per update"),
    Field("ppo_gamma", float, 0.99, "discount factor"),
    Field("ppo_lam", float, 0.95, "GAE lambda"),
    # synthetic dataset
    Field("num_classes", int, 6, "synthetic class count"),
    Field("frames", int, 16, "frames per synthetic video"),
    Field("height", int, 64, "synthetic frame height"),
    Field("width", int, 64, "synthetic frame width"),
    Field("channels", int, 1, "synthetic channel count (1 or 3)"),
    Field("noise_amplitude", float, 0.08, "synthetic background noise amplitude"),
    Field("contrast", float, 0.2, "synthetic object/background contrast"),
    Field("synth_seed", int, 0, "synthetic dataset stream seed"),
    # victim training
    Field("n_train", int, 800, "training samples for train-victim / gen-data"),
    Field("n_val", int, 150, "validation samples for train-victim / gen-data"),
    Field("max_epochs", int, 100, "victim training epoch limit"),
    Field("victim_lr", float, 5e-3, "victim training learning rate"),
    Field("batch_size", int, 16, "victim training batch size"),
    Field("target_accuracy", float, 0.925, "stop victim training at this accuracy"),
    Field("min_accuracy", float, 0.80, "fail victim training below this accuracy"),
    Field("label_smoothing", float, 0.1, "victim training label smoothing"),
    # benchmarking
    Field("n_samples", int, 50, "episodes per benchmark run"),
    Field("sample_start", int, 0, "first synthetic index scanned for samples"),
    Field("ablations", str, "combined", "comma list of bench ablations"),
)

_FIELD_BY_NAME = {field.name: field for field in FIELDS}

# CLI ablation names are short; the engine uses explicit *-only names.
_ABLATION_ALIASES = {
    "temporal": "temporal-only",
    "spatial": "spatial-only",
    "combined": "combined",
}


class RunConfig:
    """Effective configuration: defaults, then file values, then overrides."""

    def __init__(self, values: dict[str, object] | None = None):
        merged = {field.name: field.default for field in FIELDS}
        if values:
            for key in values:
                if key not in _FIELD_BY_NAME:
                    raise ConfigFileError("unknown config key %r" % key)
            merged.update(values)
        self._values = merged

    def __getattr__(self, name: str):
        try:
            return self._values[name]
        except KeyError:
            raise AttributeError(name) from None

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        return cls(parse_config_text(Path(path).read_text()))

    def override(self, **updates: object) -> "RunConfig":
        """Return a copy with non-None ``updates`` applied (CLI flags win)."""
        values = dict(self._values)
        for key, value in updates.items():
            if value is None:
                continue
            if key not in _FIELD_BY_NAME:
                raise ConfigFileError("unknown config key %r" % key)
            values[key] = value
        return RunConfig(values)

    def dumps(self) -> str:
        """Render the effective config as a re-parsable key=value file."""
        lines = ["# effective run configuration"]
        for field in FIELDS:
            lines.append("%s=%s" % (field.name, _format_value(self._values[field.name])))
        return "\n".join(lines) + "\n"

    def echo(self, out_dir: str | Path) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "config.txt"
        path.write_text(self.dumps())
        return path

    def validate(self) -> "RunConfig":
        """Build every derived object once so bad values fail up front."""
        self.attack_config()
        self.synth_spec()
        self.ablation_list()
        return self

    # -- builders -------------------------------------------------------

    def distortion_kind(self) -> DistortionKind:
        tag = self.distortion
        if tag == "gb":
            return GaussianBlur(kernel_size=self.gb_kernel_size, sigma=self.gb_sigma)
        if tag == "dp":
            return DeadPixels(fill=self.dp_fill, fraction=self.dp_fraction)
        if tag == "gn":
            return GaussianNoise(variance=self.gn_variance)
        raise ConfigFileError("unknown distortion %r (expected gb, dp, or gn)" % tag)

    def engine_ablation(self) -> str:
        name = _ABLATION_ALIASES.get(self.ablation, self.ablation)
        if name not in ABLATIONS:
            raise ConfigFileError(
                "unknown ablation %r (expected temporal, spatial, or combined)"
                % self.ablation
            )
        return name

    def ablation_list(self) -> tuple[str, ...]:
        names = []
        for raw in self.ablations.split(","):
            raw = raw.strip()
            if not raw:
                continue
            name = _ABLATION_ALIASES.get(raw, raw)
            if name not in ABLATIONS:
                raise ConfigFileError("unknown ablation %r in ablations list" % raw)
            names.append(name)
        if not names:
            raise ConfigFileError("ablations list is empty")
        return tuple(names)

    def attack_config(self) -> AttackConfig:
        try:
            grid = GridSpec.parse(self.grid)
        except ValueError as exc:
            raise ConfigFileError(str(exc)) from None
        return AttackConfig(
            max_iterations=self.max_iterations,
            query_cap=self.query_cap,
            grid=grid,
            distortion=self.distortion_kind(),
            budget_l=self.budget_l,
            temporal_weights=self.temporal_weights,
            spatial_weights=self.spatial_weights,
            ppo=PPOConfig(
                clip_ratio=self.ppo_clip,
                value_coef=self.ppo_value_coef,
                entropy_coef=self.ppo_entropy_coef,
                epochs=self.ppo_epochs,
                gamma=self.ppo_gamma,
                lam=self.ppo_lam,
            ),
            lr=self.lr,
            seed=self.seed,
            ablation=self.engine_ablation(),
            train=self.train,
            revert=self.revert,
            reversion_accounting=self.reversion_accounting,
        )

    def synth_spec(self) -> SynthSpec:
        return SynthSpec(
            num_classes=self.num_classes,
            frames=self.frames,
            height=self.height,
            width=self.width,
            channels=self.channels,
            noise_amplitude=self.noise_amplitude,
            contrast=self.contrast,
            seed=self.synth_seed,
        )


def parse_config_text(text: str) -> dict[str, object]:
    """Parse ``key=value`` lines into typed values, rejecting unknown keys."""
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigFileError("line %d: expected key=value, got %r" % (lineno, raw))
        key, _, value = line.partition("=")
        key = key.strip()
        field = _FIELD_BY_NAME.get(key)
        if field is None:
            raise ConfigFileError("line %d: unknown config key %r" % (lineno, key))
        try:
            values[key] = field.parse(value.strip())
        except ConfigFileError:
            raise
        except ValueError as exc:
            raise ConfigFileError(
                "line %d: bad value for %s: %s" % (lineno, key, exc)
            ) from None
    return values
