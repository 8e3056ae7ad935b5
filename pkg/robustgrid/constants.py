from __future__ import annotations

import logging
from enum import Enum
from typing import Dict

log = logging.getLogger("robustgrid")

# Outward slack applied to every affine block during interval propagation.
BOUND_SLACK = 1e-9
# Output margin requested from the exact solver when extracting a witness.
WITNESS_MARGIN = 1e-7
# Largest per-coordinate move toward the box center when repairing a rounded witness.
WITNESS_NUDGE = 1e-7
# Corners are enumerated over at most this many input dimensions (2**12 corners).
CORNER_BITS = 12
ORACLE_RELU_CAP = 20
MAX_IMAGE_PIXELS = 4096 * 4096
PGM_MAXVAL = 255
# Reference deduced-query fractions reported next to the measured ones.
REFERENCE_GRID_DEDUCED = 0.59
REFERENCE_CONTRAST_DEDUCED = 0.62


class Status(Enum):
    sat = "SAT"
    unsat = "UNSAT"
    unknown = "UNKNOWN"

    def __str__(self):
        return self.value

    @classmethod
    def get_from_name(cls, name: str) -> Status:
        for i in cls:
            if name.strip().upper() == i.value:
                return i
        raise KeyError(f"{name} is not a valid status, select one of {', '.join(i.value for i in cls)}")


class Provenance(Enum):
    verified = "Verified"
    deduced = "Deduced"
    falsified = "Falsified"
    exhausted = "Exhausted"

    def __str__(self):
        return self.value

    @property
    def called(self) -> bool:
        """Whether a cell with this provenance was decided on its own rather than inferred."""
        return self in (Provenance.verified, Provenance.falsified)

    @classmethod
    def get_from_name(cls, name: str) -> Provenance:
        for i in cls:
            if name.strip().lower() == i.value.lower():
                return i
        raise KeyError(f"{name} is not a valid provenance, select one of {', '.join(i.value for i in cls)}")


class Activation(Enum):
    relu = "relu"
    identity = "identity"

    def __str__(self):
        return self.value

    @classmethod
    def get_from_name(cls, name: str) -> Activation:
        for i in cls:
            if name.lower() == i.value:
                return i
        raise KeyError(f"{name} is not a supported activation, select one of {', '.join(i.value for i in cls)}")


class Phase(Enum):
    active = "active"
    inactive = "inactive"
    unstable = "unstable"

    def __str__(self):
        return self.names()[self]

    @staticmethod
    def names() -> Dict[Phase, str]:
        return {
            Phase.active: "ActiveFixed",
            Phase.inactive: "InactiveFixed",
            Phase.unstable: "Unstable",
        }


class ImageFormat(Enum):
    pgm = "pgm"
    csv = "csv"

    def __str__(self):
        return self.value

    @staticmethod
    def names() -> Dict[ImageFormat, str]:
        return {ImageFormat.pgm: "PGM", ImageFormat.csv: "CSV"}

    @classmethod
    def get_from_name(cls, name: str) -> ImageFormat:
        for i in cls:
            if name.lower().lstrip(".") == i.value:
                return i
        raise KeyError(f"{name} is not a valid image format, select one of pgm, csv")


class UnknownReason(Enum):
    time = "time"
    branches = "branches"
    numeric = "numeric"
    witness = "witness"

    def __str__(self):
        return self.value
