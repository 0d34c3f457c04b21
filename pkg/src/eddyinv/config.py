"""JSON run configuration.

One document with the blocks ``mesh``, ``material``, ``source``,
``anomaly``, ``inversion``, ``noise`` and ``output``; every block is
optional and unknown keys are rejected.  Defaults reproduce the layered box
of the reference experiments at desk resolution.
"""
from __future__ import annotations

import json
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .data import AnomalyBox, AnomalySpec, DipoleSource, dipole_grid
from .fem import Material
from .inverse import NlcgConfig

Interval = tuple[float, float]


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class MeshBlock(_Block):
    bounds: tuple[Interval, Interval, Interval] = ((-2.0, 2.0), (-2.0, 2.0), (-2.0, 0.2))
    divisions: tuple[int, int, int] = (20, 20, 11)
    z_interface: float = 0.0
    z_top: float = 0.2


class MaterialBlock(_Block):
    mu: float = Field(1.0, gt=0)
    eps: float = Field(1.0, gt=0)
    sigma0: float = Field(1.0, ge=0)
    omega: float = Field(0.79, gt=0)


class GridBlock(_Block):
    count: tuple[int, int] = (9, 9)
    spacing: float = 0.4
    origin: tuple[float, float] = (-2.0, -2.0)
    z: float = 0.1
    offset: tuple[float, float, float] = (0.011, 0.007, 0.0)


class SourceBlock(_Block):
    grid: GridBlock | None = Field(default_factory=GridBlock)
    points: list[tuple[float, float, float]] | None = None
    direction: tuple[float, float, float] = (1.0, 0.0, 0.0)

    @field_validator("direction")
    @classmethod
    def _unit(cls, v):
        n = sum(c * c for c in v) ** 0.5
        if n == 0:
            raise ValueError("direction must be nonzero")
        return tuple(c / n for c in v)


class BoxBlock(_Block):
    bounds: tuple[Interval, Interval, Interval]
    sigma: float


class AnomalyBlock(_Block):
    boxes: list[BoxBlock] = []
    refine_data: bool = False


class InversionBlock(_Block):
    alpha: float = Field(1e-6, ge=0)
    gradient_kind: Literal["l2", "sobolev"] = "sobolev"
    max_iter: int = Field(100, ge=1)
    grad_tol: float = Field(1e-6, gt=0)
    restart_on_ascent: bool = True
    # |delta objective| below this for 3 iterations stops the run; 0 disables
    stagnation_tol: float = Field(1e-12, ge=0)


class NoiseBlock(_Block):
    delta: float = Field(0.0, ge=0)
    seed: int = 0


class OutputBlock(_Block):
    directory: str = "out"
    formats: list[Literal["vtk", "csv", "mtx"]] = ["vtk", "csv"]


class RunConfig(_Block):
    mesh: MeshBlock = Field(default_factory=MeshBlock)
    material: MaterialBlock = Field(default_factory=MaterialBlock)
    source: SourceBlock = Field(default_factory=SourceBlock)
    anomaly: AnomalyBlock = Field(default_factory=AnomalyBlock)
    inversion: InversionBlock = Field(default_factory=InversionBlock)
    noise: NoiseBlock = Field(default_factory=NoiseBlock)
    output: OutputBlock = Field(default_factory=OutputBlock)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            text = fh.read()
        return cls.model_validate(json.loads(text))

    def dump(self) -> str:
        return self.model_dump_json(indent=2)

    def material_obj(self) -> Material:
        m = self.material
        return Material(mu=m.mu, eps=m.eps, sigma0=m.sigma0, omega=m.omega)

    def anomaly_spec(self) -> AnomalySpec:
        boxes = tuple(AnomalyBox(tuple(tuple(iv) for iv in b.bounds), b.sigma)
                      for b in self.anomaly.boxes)
        return AnomalySpec(boxes, self.material.sigma0)

    def source_obj(self) -> DipoleSource:
        s = self.source
        if s.points:
            pts = np.array(s.points, float)
            return DipoleSource(pts, s.direction, f"points n={len(pts)} direction={s.direction}")
        g = s.grid or GridBlock()
        return dipole_grid(g.count, g.spacing, g.origin, g.z, g.offset, s.direction)

    def nlcg(self) -> NlcgConfig:
        i = self.inversion
        return NlcgConfig(alpha=i.alpha, gradient_kind=i.gradient_kind, max_iter=i.max_iter,
                          grad_tol=i.grad_tol, restart_on_ascent=i.restart_on_ascent,
                          stagnation_tol=i.stagnation_tol)
