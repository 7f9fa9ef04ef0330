"""Pydantic models for solver configuration and reported records."""

import math
from enum import Enum
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, computed_field, model_validator

from .exceptions import ConfigError


class Algorithm(str, Enum):
    PADMM = 'padmm'
    ACC_PADMM = 'acc_padmm'


class SolveStatus(str, Enum):
    SOLVED = 'Solved'
    MAX_ITER = 'MaxIter'
    ERROR = 'Error'


class SigmaPolicy(BaseModel):
    """Residual-balancing rule for the penalty parameter."""

    model_config = ConfigDict(frozen=True)

    enabled: bool = True
    upper_ratio: float = Field(default=5.0, gt=1.0)
    lower_ratio: float = Field(default=0.2, gt=0.0, lt=1.0)
    factor: float = Field(default=1.5, gt=1.0)
    cooldown: int = Field(default=2, ge=0)
    sigma_min: float = Field(default=1e-8, gt=0.0)
    sigma_max: float = Field(default=1e8, gt=0.0)

    @model_validator(mode='after')
    def check_clamp(self):
        if self.sigma_min > self.sigma_max:
            raise ValueError(f"sigma_min {self.sigma_min} exceeds sigma_max {self.sigma_max}")
        return self


class SolverConfig(BaseModel):
    """Parameters of one solve."""

    model_config = ConfigDict(frozen=True)

    algorithm: Algorithm = Algorithm.ACC_PADMM
    sigma: float = Field(default=1.0, gt=0.0)
    rho: float = Field(default=2.0, gt=0.0, le=2.0)
    alpha: float = Field(default=2.0, ge=2.0)
    tol: float = Field(default=1e-5, ge=0.0)
    max_iter: int = Field(default=10000, ge=1)
    check_every: int = Field(default=50, ge=1)
    restart_every: int = Field(default=200, ge=0)
    sigma_policy: SigmaPolicy = SigmaPolicy()
    restart_anchor: Literal['w_bar', 'w'] = 'w_bar'
    ordering: Literal['amd', 'rcm', 'natural'] = 'amd'
    seed: int = Field(default=0, ge=0)

    @model_validator(mode='after')
    def check_relaxation(self):
        if self.algorithm is Algorithm.PADMM and self.rho >= 2.0:
            raise ValueError(f"pADMM needs rho < 2, got {self.rho}")
        return self

    @classmethod
    def build(cls, **values) -> 'SolverConfig':
        """Validate ``values``; range violations surface as ConfigError."""
        try:
            return cls(**values)
        except ValidationError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def accelerated(self) -> bool:
        return self.algorithm is Algorithm.ACC_PADMM


class IterationRecord(BaseModel):
    """Diagnostics taken at one KKT check."""

    model_config = ConfigDict(frozen=True)

    k: int = Field(ge=0)
    kkt_res: float
    r_p: float
    r_d: float
    r_qxy: float
    r_comp: float
    sigma: float
    obj: float
    seminorm_res: float
    time_s: float
    gap: Optional[float] = None
    rel_gap: Optional[float] = None

    @model_validator(mode='after')
    def check_aggregate(self):
        if self.kkt_res != max(self.r_p, self.r_d, self.r_qxy, self.r_comp):
            raise ValueError("kkt_res must equal the largest relative residual")
        return self


class ConversionReport(BaseModel):
    """What the standard-form conversion did to a QPS problem."""

    model_config = ConfigDict(frozen=True)

    name: str
    m_eq: int = Field(ge=0)
    m_ineq: int = Field(ge=0)
    n_original: int = Field(ge=0)
    slacks: int = Field(ge=0)
    ranged_rows: int = Field(default=0, ge=0)
    bound_translations: tuple[str, ...] = ()
    objective_constant: float = 0.0

    @computed_field
    @property
    def m(self) -> int:
        return self.m_eq + self.m_ineq

    @computed_field
    @property
    def n(self) -> int:
        return self.n_original + self.slacks


class RunSummary(BaseModel):
    """Outcome of one configuration on one problem."""

    model_config = ConfigDict(frozen=True)

    status: SolveStatus
    iterations: int = Field(ge=0)
    time_s: float = Field(ge=0.0)
    kkt_res: float
    message: str = ''


BENCH_KEYS = ('a', 'b2', 'b15', 'b30', 'b45')


class BenchRow(BaseModel):
    """One problem of the benchmark table."""

    model_config = ConfigDict(frozen=True)

    problem: str
    m: int = Field(ge=0)
    n: int = Field(ge=0)
    check_every: int = Field(default=50, ge=1)
    max_iter: int = Field(default=10000, ge=1)
    runs: dict[str, RunSummary]

    @model_validator(mode='after')
    def check_iterations(self):
        for key, run in self.runs.items():
            if run.status is SolveStatus.ERROR:
                continue
            if run.iterations % self.check_every and run.iterations != self.max_iter:
                raise ValueError(
                    f"{key}: {run.iterations} iterations is neither a multiple of "
                    f"{self.check_every} nor max_iter"
                )
        return self

    @staticmethod
    def csv_header() -> list[str]:
        header = ['problem', 'm', 'n']
        for key in BENCH_KEYS:
            header += [f'{key}_iter', f'{key}_time_s', f'{key}_kkt_res', f'{key}_status']
        return header

    def csv_row(self) -> list[str]:
        row = [self.problem, str(self.m), str(self.n)]
        for key in BENCH_KEYS:
            run = self.runs.get(key)
            if run is None:
                row += ['', '', '', '']
            else:
                kkt = '' if math.isnan(run.kkt_res) else f'{run.kkt_res:.3e}'
                row += [str(run.iterations), f'{run.time_s:.3f}', kkt, run.status.value]
        return row
