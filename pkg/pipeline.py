"""Estimation pipeline: initial covariance -> PD repair -> graphical lasso."""
from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from errors import InvalidInput
from glasso_solver import DEFAULT_GRID, GlassoConfig, PrecisionEstimate, glasso
from pairwise_cov import as_data_matrix, classical_cov
from psd_repair import PsdMethod, PsdTag, repair
from robust_scale import ScaleKind, ScaleTag


class LambdaMode(str, enum.Enum):
    FIXED = "fixed"
    ORACLE = "oracle"


@dataclass(frozen=True)
class LambdaPolicy:
    mode: LambdaMode = LambdaMode.ORACLE
    value: float = 0.1
    grid: tuple[float, ...] = DEFAULT_GRID

    def __post_init__(self):
        object.__setattr__(self, "mode", LambdaMode(self.mode))
        object.__setattr__(self, "grid", tuple(float(g) for g in self.grid))
        if self.mode is LambdaMode.FIXED and self.value < 0:
            raise InvalidInput(f"fixed lambda must be >= 0, got {self.value}")
        if self.mode is LambdaMode.ORACLE and not self.grid:
            raise InvalidInput("oracle lambda policy needs a non-empty grid")

    @property
    def label(self) -> str:
        if self.mode is LambdaMode.FIXED:
            return f"lambda={self.value:g}"
        if self.grid == DEFAULT_GRID:
            return "oracle"
        return f"oracle[{self.grid[0]:g}..{self.grid[-1]:g}/{len(self.grid)}]"


@dataclass(frozen=True)
class PipelineSpec:
    scale_kind: ScaleKind = field(default_factory=lambda: ScaleKind(ScaleTag.QN))
    psd_method: PsdMethod = field(default_factory=PsdMethod)
    lambda_policy: LambdaPolicy = field(default_factory=LambdaPolicy)
    baseline: bool = False
    penalize_diagonal: bool = True
    regularizer: str = "glasso"

    def __post_init__(self):
        if self.regularizer != "glasso":
            raise InvalidInput(f"unsupported regularizer {self.regularizer!r}")

    @property
    def name(self) -> str:
        """Estimator identity without lambda; non-default settings show up in brackets."""
        reg = self.regularizer if self.penalize_diagonal else f"{self.regularizer}(offdiag)"
        if self.baseline:
            return f"classical+{reg}"
        m = self.psd_method
        opts = []
        if m.tag is PsdTag.NPD and m.delta != 1e-6:
            opts.append(f"delta={m.delta:g}")
        if m.tag is not PsdTag.NPD and m.ogk_iterations != 2:
            opts.append(f"iter={m.ogk_iterations}")
        if m.tag is PsdTag.OGK_REWEIGHTED and m.reweight_quantile != 0.9:
            opts.append(f"q={m.reweight_quantile:g}")
        psd = f"{m.tag.value}({','.join(opts)})" if opts else m.tag.value
        return f"{self.scale_kind.label}+{psd}+{reg}"

    @property
    def label(self) -> str:
        return f"{self.name}@{self.lambda_policy.label}"

    def initial_covariance(self, X) -> np.ndarray:
        if self.baseline:
            return classical_cov(X)
        return repair(X, self.scale_kind, self.psd_method).matrix

    def estimate(self, X, lam: float) -> PrecisionEstimate:
        X = as_data_matrix(X)
        n, p = X.shape
        if lam <= 0 and p >= n:
            raise InvalidInput(f"lambda must be > 0 when p >= n (p={p}, n={n})")
        S = self.initial_covariance(X)
        return glasso(S, GlassoConfig(lam, penalize_diagonal=self.penalize_diagonal))


CLASSICAL = PipelineSpec(baseline=True)


def covariance_from_precision(theta) -> np.ndarray:
    inv = linalg.cho_solve(linalg.cho_factor(theta), np.eye(np.shape(theta)[0]))
    return (inv + inv.T) / 2.0


def pipeline_labels(pipelines) -> list[str]:
    """Unique row labels: the estimator name, with the lambda policy added where names collide."""
    names = Counter(p.name for p in pipelines)
    labels = [p.label if names[p.name] > 1 else p.name for p in pipelines]
    left = Counter(labels)
    seen: Counter = Counter()
    out = []
    for label in labels:
        if left[label] > 1:
            seen[label] += 1
            label = f"{label}#{seen[label]}"
        out.append(label)
    return out
