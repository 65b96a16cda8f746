"""
Base Pydantic models shared by the schemas.
"""

from pydantic import BaseModel, ConfigDict


class FrozenModel(BaseModel):
    """
    Immutable model that rejects unknown fields.
    Used for every value that crosses a module or file boundary.
    """

    model_config = ConfigDict(
        frozen=True,
        extra="forbid",
        arbitrary_types_allowed=True,
    )
