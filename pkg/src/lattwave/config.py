"""Run configuration: strict JSON schema and its translation to library objects."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field as PField, model_validator

from .lattice import Field, LatticeBox, make_box
from .solvers import (
    BlowupConfig,
    DiagonalMetric,
    EquationSpec,
    Nonlinearity,
    PicardConfig,
    SolverConfig,
)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class BoxModel(_Strict):
    d: int = PField(1, ge=1, le=3)
    L: int = PField(32, ge=4)

    @model_validator(mode="after")
    def _even(self):
        if self.L % 2:
            raise ValueError("L must be even")
        return self


class NonlinearityModel(_Strict):
    kind: Literal["none", "power", "dt_squared", "dj_squared"] = "none"
    mu: float = 0.0
    p: float = 3.0
    axis: int = PField(1, ge=1, le=3)


class MetricModel(_Strict):
    a_u: float = 0.0
    a_ut: float = 0.0


class ForcingModel(_Strict):
    """amplitude * cos(omega t) * exp(2 pi i n.m / L)."""

    n: list[int]
    amplitude: float = 1.0
    omega: float = 0.0


class EquationModel(_Strict):
    kind: Literal["linear", "semilinear", "quasilinear"] = "linear"
    nonlinearity: NonlinearityModel = NonlinearityModel()
    metric: Optional[MetricModel] = None
    b: float = 0.0
    bj: list[float] = []
    c: float = 0.0
    forcing: Optional[ForcingModel] = None


class PicardModel(_Strict):
    max_iters: int = PField(12, ge=1)
    tol: float = PField(1e-10, gt=0)
    window: Optional[float] = PField(None, gt=0)


class BlowupModel(_Strict):
    sup_threshold: float = PField(1e6, gt=0)
    action: Literal["halt", "record"] = "halt"
    adaptive: bool = True


class SolverModel(_Strict):
    dt: float = PField(gt=0)
    t_max: float = PField(gt=0)
    method: Literal["exact_linear", "exponential_duhamel", "rk4", "picard"] = "rk4"
    k: Literal[0, 1] = 0
    sample_every: int = PField(1, ge=1)
    picard: PicardModel = PicardModel()
    blowup: BlowupModel = BlowupModel()


class ProfileModel(_Strict):
    """Initial datum.  ``norm`` rescales to the given l^2 norm after ``amplitude``."""

    profile: Literal["zero", "delta", "constant", "gaussian", "mode", "random"] = "zero"
    amplitude: float = 1.0
    width: float = PField(2.0, gt=0)
    n: list[int] = []
    norm: Optional[float] = PField(None, ge=0)


class InitialModel(_Strict):
    f: ProfileModel = ProfileModel()
    g: ProfileModel = ProfileModel()


class ScanModel(_Strict):
    eps_grid: list[float] = []
    R: float = PField(0.1, gt=0)
    L_grid: list[int] = []
    trials: int = PField(100, ge=1)


class RunConfig(_Strict):
    experiment: Literal["simulate", "lifespan", "counterexample", "isomorphism"] = "simulate"
    box: BoxModel = BoxModel()
    equation: EquationModel = EquationModel()
    solver: Optional[SolverModel] = None
    initial: InitialModel = InitialModel()
    scan: ScanModel = ScanModel()
    seed: int = 0
    snapshot_every: Optional[int] = PField(None, ge=1)

    @model_validator(mode="after")
    def _consistent(self):
        if self.experiment in ("simulate", "lifespan") and self.solver is None:
            raise ValueError(f"experiment {self.experiment!r} needs a solver section")
        if self.experiment == "lifespan" and not self.scan.eps_grid:
            raise ValueError("lifespan scan needs a non-empty scan.eps_grid")
        if self.experiment == "counterexample" and not self.scan.L_grid:
            raise ValueError("counterexample scan needs a non-empty scan.L_grid")
        eq = self.equation
        if eq.forcing is not None and len(eq.forcing.n) != self.box.d:
            raise ValueError("forcing.n must have d entries")
        if len(eq.bj) not in (0, self.box.d):
            raise ValueError("bj must be empty or have d entries")
        if eq.nonlinearity.axis > self.box.d:
            raise ValueError("nonlinearity axis exceeds d")
        for prof in (self.initial.f, self.initial.g):
            if prof.profile == "mode" and len(prof.n) != self.box.d:
                raise ValueError("mode profile needs n with d entries")
        # surface EquationSpec invariants at validation time
        self.equation_spec(self.make_box())
        if self.solver is not None:
            self.solver_config()
        return self

    def make_box(self) -> LatticeBox:
        return make_box(self.box.d, self.box.L)

    def equation_spec(self, box: LatticeBox) -> EquationSpec:
        eq = self.equation
        nl = eq.nonlinearity
        forcing = None
        if eq.forcing is not None:
            forcing = ModeForcing(box, tuple(eq.forcing.n), eq.forcing.amplitude, eq.forcing.omega)
        metric = None if eq.metric is None else DiagonalMetric(eq.metric.a_u, eq.metric.a_ut)
        return EquationSpec(
            kind=eq.kind,
            metric=metric,
            nonlinearity=Nonlinearity(nl.kind, mu=nl.mu, p=nl.p, axis=nl.axis),
            b=eq.b,
            bj=tuple(eq.bj),
            c=eq.c,
            forcing=forcing,
        )

    def solver_config(self) -> SolverConfig:
        s = self.solver
        return SolverConfig(
            dt=s.dt,
            t_max=s.t_max,
            method=s.method,
            k=s.k,
            sample_every=s.sample_every,
            picard=PicardConfig(max_iters=s.picard.max_iters, tol=s.picard.tol, window=s.picard.window),
            blowup=BlowupConfig(sup_threshold=s.blowup.sup_threshold, action=s.blowup.action,
                                adaptive=s.blowup.adaptive),
        )

    def initial_data(self, box: LatticeBox) -> tuple[Field, Field]:
        rng = np.random.default_rng(self.seed)
        return make_profile(box, self.initial.f, rng), make_profile(box, self.initial.g, rng)

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]


@dataclass(frozen=True)
class ModeForcing:
    box: LatticeBox
    n: tuple[int, ...]
    amplitude: float
    omega: float

    def __call__(self, t: float) -> np.ndarray:
        phase = sum(2 * np.pi * nj * xj / self.box.L for nj, xj in zip(self.n, self.box.coord_grids))
        return self.amplitude * np.cos(self.omega * t) * np.exp(1j * phase)

    def describe(self) -> str:
        return f"mode(n={self.n},a={self.amplitude},w={self.omega})"


def make_profile(box: LatticeBox, prof: ProfileModel, rng: np.random.Generator) -> Field:
    a = prof.amplitude
    if prof.profile == "zero":
        v = np.zeros(box.shape)
    elif prof.profile == "delta":
        v = np.zeros(box.shape)
        v.flat[0] = a
    elif prof.profile == "constant":
        v = np.full(box.shape, a)
    elif prof.profile == "gaussian":
        v = a * np.exp(-box.norm_sq / (2 * prof.width**2))
    elif prof.profile == "mode":
        phase = sum(2 * np.pi * nj * xj / box.L for nj, xj in zip(prof.n, box.coord_grids))
        v = a * np.exp(1j * phase)
    else:
        v = a * (rng.standard_normal(box.shape) + 1j * rng.standard_normal(box.shape))
    v = np.asarray(v, dtype=complex)
    if prof.norm is not None:
        nrm = np.linalg.norm(v)
        if nrm == 0 and prof.norm > 0:
            raise ValueError("cannot rescale a zero profile")
        v = v * (prof.norm / nrm) if nrm else v
    return Field(box, v)


def load_config(path: str | Path, **overrides) -> RunConfig:
    """Read and validate a JSON config; ``overrides`` replace top-level keys."""
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, dict):
        raise ValueError("config must be a JSON object")
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.model_validate(raw)
