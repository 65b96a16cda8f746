"""Pre-averaged sample carrier."""

from dataclasses import dataclass

import numpy as np

from invdens.models.diffusion import ObservationScheme


@dataclass(frozen=True)
class PreaveragedSample:
    """
    Block means Y_bar_k = p^-1 sum_{l<p} Y_{kp+l}, k < n_p = floor(n/p).

    ``tau_tilde`` is the Gaussian blur scale the block means carry: the
    attenuated measurement noise plus the Brownian averaging error.
    """
    p: int
    blocks: np.ndarray
    tau_tilde: float
    scheme: ObservationScheme

    def __post_init__(self):
        blocks = np.array(self.blocks, dtype=float, copy=True)
        if blocks.ndim == 1:
            blocks = blocks.reshape(-1, 1)
        blocks.setflags(write=False)
        object.__setattr__(self, "blocks", blocks)

    @property
    def n_p(self) -> int:
        return self.blocks.shape[0]

    @property
    def dimension(self) -> int:
        return self.blocks.shape[1]

    @property
    def block_step(self) -> float:
        """Effective sampling interval p * delta_n of the block means."""
        return self.p * self.scheme.delta_n
