"""
Run configuration: pydantic schema, JSON/YAML loading and dotted-path overrides.
"""

import copy
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .constants import DEFAULT_STEPS, DeviationKind, InitialKind, ModelKind
from .exceptions import ConfigError

logger = logging.getLogger(__name__)

Matrix = List[List[float]]
Vector = List[float]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class LqModelSection(_Section):
    """LQ model matrices as nested row-major lists."""

    kind: Literal["lq"] = ModelKind.LQ.value
    A: Matrix
    B: Matrix
    G: Matrix
    D: Matrix
    D0: Matrix
    Q: Matrix
    R: Matrix
    Gamma: Matrix
    eta: Vector
    Qf: Matrix
    Gammaf: Matrix
    etaf: Vector
    T: float = Field(gt=0)

    def build(self):
        from ..lq.model import LqModel

        return LqModel.from_dict(self.model_dump(exclude={"kind"}))


class SystemicRiskSection(_Section):
    """Systemic-risk scalars."""

    kind: Literal["systemic_risk"] = ModelKind.SYSTEMIC_RISK.value
    sigma: float = Field(ge=0)
    rho: float = Field(ge=0, le=1)
    q: float = Field(ge=0)
    eps0: float
    c: float = Field(ge=0)
    T: float = Field(gt=0)

    @model_validator(mode="after")
    def _convexity(self) -> "SystemicRiskSection":
        if self.q**2 > self.eps0 * (1.0 + 1e-12):
            raise ValueError(f"convexity requires q^2 <= eps0 (q={self.q}, eps0={self.eps0})")
        return self

    def build(self):
        from ..systemic_risk import SrParams

        return SrParams.from_dict(self.model_dump(exclude={"kind"}))


class GridSection(_Section):
    steps: int = Field(DEFAULT_STEPS, ge=1)


class InitialSection(_Section):
    kind: InitialKind = InitialKind.GAUSSIAN
    mean: Optional[Vector] = None
    covariance: Optional[Matrix] = None
    half_widths: Optional[Vector] = None


class SimulationSection(_Section):
    N: int = Field(16, ge=2)
    paths: int = Field(256, ge=1)
    dt_sim: float = Field(0.01, gt=0)
    seed: int = Field(0, ge=0, lt=2**64)
    threads: Optional[int] = Field(None, ge=1)
    dump_paths: bool = False
    initial: InitialSection = Field(default_factory=InitialSection)


class DeviationSection(_Section):
    kind: DeviationKind
    scale: float = 1.0
    value: Optional[Vector] = None

    @field_validator("kind")
    @classmethod
    def _no_custom(cls, kind: DeviationKind) -> DeviationKind:
        if kind == DeviationKind.CUSTOM:
            raise ValueError("custom-feedback deviations are available from Python only")
        return kind


class ExperimentSection(_Section):
    menu: Optional[List[DeviationSection]] = None
    N_list: List[int] = Field(default_factory=lambda: [8, 16, 32, 64])
    convergence_N_list: List[int] = Field(default_factory=lambda: [4, 8, 16, 32, 64, 128, 256])
    K0: Optional[float] = Field(None, gt=0)
    check_points: int = Field(20, ge=1)
    check_controls: int = Field(100, ge=1)
    benchmark: bool = False


class RunConfig(_Section):
    """A complete run: one model, grid, simulation and experiment settings."""

    model: Union[LqModelSection, SystemicRiskSection] = Field(discriminator="kind")
    grid: GridSection = Field(default_factory=GridSection)
    simulation: SimulationSection = Field(default_factory=SimulationSection)
    experiment: ExperimentSection = Field(default_factory=ExperimentSection)
    output_dir: str = "meanfield-output"

    @model_validator(mode="before")
    @classmethod
    def _default_kind(cls, data: Any) -> Any:
        if isinstance(data, dict) and isinstance(data.get("model"), dict) and "kind" not in data["model"]:
            data = dict(data)
            model = dict(data["model"])
            model["kind"] = ModelKind.SYSTEMIC_RISK.value if "sigma" in model else ModelKind.LQ.value
            data["model"] = model
        return data

    @property
    def model_kind(self) -> ModelKind:
        return ModelKind(self.model.kind)

    def build_model(self):
        """LqModel or SrParams, depending on the model kind."""
        return self.model.build()

    def time_grid(self):
        from ..ode import TimeGrid

        return TimeGrid(T=self.model.T, steps=self.grid.steps)

    def initial_distribution(self, n: int):
        from ..lq.model import InitialDistribution

        init = self.simulation.initial
        mean = init.mean if init.mean is not None else [0.0] * n
        if len(mean) != n:
            raise ConfigError(f"initial mean has {len(mean)} entries, model has n={n}")
        if init.kind == InitialKind.GAUSSIAN:
            cov = init.covariance if init.covariance is not None else np.eye(n)
            return InitialDistribution.gaussian(mean, cov)
        if init.kind == InitialKind.UNIFORM_BOX:
            widths = init.half_widths if init.half_widths is not None else [1.0] * n
            return InitialDistribution.uniform_box(mean, widths)
        return InitialDistribution.point_mass(mean)

    def sim_config(self, n: int, dump_path: Optional[str] = None):
        from ..simulation import SimConfig

        sim = self.simulation
        return SimConfig(
            N=sim.N,
            paths=sim.paths,
            dt_sim=sim.dt_sim,
            seed=sim.seed,
            initial=self.initial_distribution(n),
            threads=sim.threads,
            dump_path=dump_path,
        )

    def deviation_menu(self, n1: int) -> list:
        from ..experiments import default_menu
        from ..simulation import Deviation

        if self.experiment.menu is None:
            return default_menu(n1)
        menu = []
        for entry in self.experiment.menu:
            if entry.kind == DeviationKind.NONE:
                menu.append(Deviation.none())
            elif entry.kind == DeviationKind.ZERO_CONTROL:
                menu.append(Deviation.zero_control())
            elif entry.kind == DeviationKind.SCALED:
                menu.append(Deviation.scaled(entry.scale))
            else:
                if entry.value is None or len(entry.value) != n1:
                    raise ConfigError(f"constant deviation needs a value with {n1} entries")
                menu.append(Deviation.constant_control(entry.value))
        return menu

    def resolved_hash(self) -> str:
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


def config_hash(raw: bytes) -> str:
    return hashlib.sha256(raw).hexdigest()


def parse_document(raw: bytes, suffix: str = ".json") -> Dict[str, Any]:
    """Parse JSON (by suffix) or YAML bytes into a mapping."""
    try:
        if suffix.lower() == ".json":
            data = json.loads(raw.decode("utf-8"))
        else:
            data = yaml.safe_load(raw.decode("utf-8"))
    except (json.JSONDecodeError, yaml.YAMLError, UnicodeDecodeError) as e:
        raise ConfigError(f"config could not be parsed: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError("config document must be a mapping at the top level")
    return data


def parse_overrides(args: List[str]) -> List[Tuple[str, Any]]:
    """Turn `--a.b=value` / `--a.b value` arguments into (path, value) pairs.

    Values are parsed as YAML scalars or flow sequences, so `--simulation.N=64`
    yields an int and `--experiment.N_list=[8,16]` a list.
    """
    pairs: List[Tuple[str, Any]] = []
    i = 0
    while i < len(args):
        arg = args[i]
        if not arg.startswith("--") or len(arg) <= 2:
            raise ConfigError(f"unexpected argument '{arg}'")
        body = arg[2:]
        if "=" in body:
            path, text = body.split("=", 1)
        else:
            if i + 1 >= len(args):
                raise ConfigError(f"override '{arg}' has no value")
            path, text = body, args[i + 1]
            i += 1
        if "." not in path:
            raise ConfigError(f"unknown option '--{path}'")
        try:
            value = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise ConfigError(f"override '{arg}' has an unparsable value: {e}") from e
        pairs.append((path, value))
        i += 1
    return pairs


def apply_overrides(data: Dict[str, Any], overrides: List[Tuple[str, Any]]) -> Dict[str, Any]:
    """Return a copy of `data` with every dotted path set; list indices allowed."""
    out = copy.deepcopy(data)
    for path, value in overrides:
        keys = path.split(".")
        node: Any = out
        for depth, key in enumerate(keys):
            last = depth == len(keys) - 1
            if isinstance(node, list):
                if not key.isdigit() or int(key) >= len(node):
                    raise ConfigError(f"override path '{path}' does not exist")
                if last:
                    node[int(key)] = value
                else:
                    node = node[int(key)]
            elif isinstance(node, dict):
                if last:
                    node[key] = value
                else:
                    node = node.setdefault(key, {})
            else:
                raise ConfigError(f"override path '{path}' does not exist")
    return out


def build_config(data: Dict[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        errors = [
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()
        ]
        raise ConfigError(f"invalid config: {'; '.join(errors)}", {"errors": errors}) from e


def load_config(path: Union[str, Path], overrides: Optional[List[str]] = None) -> Tuple[RunConfig, bytes]:
    """Read, override and validate a config file.

    Returns:
        The validated RunConfig and the raw file bytes (for hashing)
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    data = parse_document(raw, path.suffix)
    pairs = parse_overrides(overrides or [])
    if pairs:
        logger.debug(f"Applying overrides: {[p for p, _ in pairs]}")
    return build_config(apply_overrides(data, pairs)), raw
