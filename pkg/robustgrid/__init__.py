__version__ = "0.1.0"

from .constants import Provenance, Status  # noqa: E402
from .encoder import encode, make_perturbation  # noqa: E402
from .errors import RobustGridError  # noqa: E402
from .network import Network, classify, evaluate, read_network  # noqa: E402
from .scheduler import ParamGrid, contrast_search, incremental_grid  # noqa: E402
from .verifier import Budget, verify  # noqa: E402

__all__ = [
    "Budget",
    "Network",
    "ParamGrid",
    "Provenance",
    "RobustGridError",
    "Status",
    "classify",
    "contrast_search",
    "encode",
    "evaluate",
    "incremental_grid",
    "make_perturbation",
    "read_network",
    "verify",
]
