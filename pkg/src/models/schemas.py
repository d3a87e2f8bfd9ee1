"""
Run configuration schemas
Pydantic models validating the parsed `key = value` config
"""
from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class CostKind(str, Enum):
    """Cost families"""
    POWER = "power"
    ANISOTROPIC = "anisotropic"
    CUSTOM = "custom"


class CostBlock(BaseModel):
    """Cost specification (`cost.kind`, `cost.p`, `cost.dim`, `cost.matrix`)"""
    model_config = ConfigDict(extra="forbid")

    kind: CostKind = CostKind.POWER
    p: float = Field(default=2.0, ge=2.0, description="Degree of homogeneity")
    dim: Optional[int] = Field(default=None, ge=1, description="Inferred from inputs when omitted")
    matrix: Optional[List[float]] = Field(default=None, description="Row-major, anisotropic only")

    @field_validator("kind")
    @classmethod
    def validate_kind(cls, v):
        if v == CostKind.CUSTOM:
            raise ValueError("custom costs are only available through the Python API")
        return v

    @model_validator(mode="after")
    def validate_matrix(self):
        if self.kind == CostKind.ANISOTROPIC:
            if self.matrix is None:
                raise ValueError("cost.matrix is required for anisotropic costs")
            size = len(self.matrix)
            side = int(round(size ** 0.5))
            if side * side != size:
                raise ValueError(f"cost.matrix has {size} entries, not a square")
            if self.dim is not None and side != self.dim:
                raise ValueError(f"cost.matrix is {side}x{side} but cost.dim = {self.dim}")
        elif self.matrix is not None:
            raise ValueError("cost.matrix only applies to anisotropic costs")
        return self


class CheckBlock(BaseModel):
    """Options of the `check` command"""
    model_config = ConfigDict(extra="forbid")

    max_cycle: int = Field(default=3, ge=2, le=8)
    inverse: bool = False


class AnglesBlock(BaseModel):
    """Options of the `angles` command"""
    model_config = ConfigDict(extra="forbid")

    axis: Optional[List[float]] = None


class RectifyBlock(BaseModel):
    """Options of the `rectify` command"""
    model_config = ConfigDict(extra="forbid")

    base_index: int = Field(default=0, ge=0)
    radius: float = Field(default=0.5, gt=0)
    auto_shrink: bool = False
    diagonal_tol: Optional[float] = Field(default=None, ge=0)


class MeasureBlock(BaseModel):
    """Options of the `measure` command"""
    model_config = ConfigDict(extra="forbid")

    target_lower: Optional[List[float]] = None
    target_upper: Optional[List[float]] = None
    target_resolution: Optional[int] = Field(default=None, ge=1)
    parts: int = Field(default=2, ge=1)
    point: Optional[List[float]] = None
    radii: List[float] = Field(default_factory=lambda: [0.1, 0.2, 0.4])

    @field_validator("radii")
    @classmethod
    def validate_radii(cls, v):
        if any(r <= 0 for r in v):
            raise ValueError("radii must be positive")
        return v


class GenerateBlock(BaseModel):
    """Options of the `generate` command"""
    model_config = ConfigDict(extra="forbid")

    m: int = Field(default=16, ge=1, le=512)
    dim: int = Field(default=2, ge=1)
    p: Optional[float] = Field(default=None, ge=2.0)
    grid: int = Field(default=0, ge=0, description="Points per axis of the potential grid; 0 = none")


class RunConfig(BaseModel):
    """Complete validated run configuration"""
    model_config = ConfigDict(extra="forbid")

    cost: CostBlock = Field(default_factory=CostBlock)
    quad_order: int = Field(default=16, ge=2)
    tol: Optional[float] = Field(default=None, ge=0)
    seed: int = 0
    check: CheckBlock = Field(default_factory=CheckBlock)
    angles: AnglesBlock = Field(default_factory=AnglesBlock)
    rectify: RectifyBlock = Field(default_factory=RectifyBlock)
    measure: MeasureBlock = Field(default_factory=MeasureBlock)
    generate: GenerateBlock = Field(default_factory=GenerateBlock)
