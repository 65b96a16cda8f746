"""
Candidate grid and Goldenshluger-Lepski selection state.
"""

from typing import Dict, Tuple

from pydantic import Field, model_validator

from invdens.schemas.base import FrozenModel

Bandwidth = Tuple[float, ...]


class BandwidthGrid(FrozenModel):
    """Sorted candidate bandwidth vectors between the grid floor and 1."""
    candidates: Tuple[Bandwidth, ...]
    n_p: int = Field(ge=1)
    T_n: float = Field(gt=0)
    floor: float = Field(gt=0)
    dimension: int = Field(ge=1)

    @model_validator(mode="after")
    def check_candidates(self):
        if not self.candidates:
            raise ValueError("grid must contain at least one candidate")
        for h in self.candidates:
            if len(h) != self.dimension:
                raise ValueError(f"candidate {h} has the wrong dimension")
            if any(a > b for a, b in zip(h, h[1:])):
                raise ValueError(f"candidate {h} is not sorted ascending")
            if any(not self.floor <= v <= 1.0 for v in h):
                raise ValueError(f"candidate {h} leaves [{self.floor}, 1]")
        return self

    def __len__(self) -> int:
        return len(self.candidates)


class GLState(FrozenModel):
    """
    Per-candidate statistics of one selection.

    ``pair_estimates[(i, j)]`` holds the convolved-kernel estimate for
    candidates i <= j; ``single_estimates[j]`` the plain estimate at candidate j.
    """
    grid: BandwidthGrid
    penalty: Tuple[float, ...]
    bias_proxy: Tuple[float, ...]
    criterion: Tuple[float, ...]
    single_estimates: Tuple[float, ...]
    pair_estimates: Dict[Tuple[int, int], float]
    omega_bar: float = Field(gt=0)
    selected_index: int = Field(ge=0)
    use_nu: bool = False

    @model_validator(mode="after")
    def check_lengths(self):
        size = len(self.grid)
        for name in ("penalty", "bias_proxy", "criterion", "single_estimates"):
            if len(getattr(self, name)) != size:
                raise ValueError(f"{name} must have one entry per candidate")
        if any(a < 0 for a in self.bias_proxy):
            raise ValueError("bias proxy A must be non-negative")
        if self.selected_index >= size:
            raise ValueError("selected index outside the grid")
        return self

    @property
    def selected(self) -> Bandwidth:
        return self.grid.candidates[self.selected_index]

    def pair(self, i: int, j: int) -> float:
        """Convolved-kernel estimate for candidates (i, j); the convolution commutes."""
        return self.pair_estimates[(min(i, j), max(i, j))]
