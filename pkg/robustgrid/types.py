from typing import List, Optional, TypedDict, Union

Number = Union[str, float, int]


class LayerDocument(TypedDict):
    weights: List[List[Number]]
    biases: List[Number]
    activation: str


class _NetworkDocumentBase(TypedDict):
    input_dim: int
    layers: List[LayerDocument]


class NetworkDocument(_NetworkDocumentBase, total=False):
    class_labels: List[str]


class ManifestEntry(TypedDict):
    path: str
    label: int


class ManifestDocument(TypedDict):
    images: List[ManifestEntry]


class SyntheticDocument(TypedDict):
    seed: int
    count: int
    side: int
    num_classes: int


class DatasetDocument(TypedDict, total=False):
    manifest: str
    synthetic: SyntheticDocument


class BudgetDocument(TypedDict):
    seconds: float
    branches: int


class SweepDocument(TypedDict, total=False):
    network: str
    dataset: DatasetDocument
    downscale: int
    epsilons: List[float]
    betas: List[float]
    gammas: List[float]
    mu: float
    query_budget: BudgetDocument
    anchor_seconds: float
    contrast_seconds: float
    falsifier_samples: int
    seed: int
    output: str
    run_contrast: bool


class CellDocument(TypedDict):
    status: str
    provenance: Optional[str]
    source: Optional[List[int]]
    witness: Optional[List[float]]


class CallDocument(TypedDict):
    index: List[int]
    status: str
    wall_time: float
    source: str


class GridDocument(TypedDict):
    betas: List[float]
    epsilons: List[float]
    cells: List[List[CellDocument]]
    call_log: List[CallDocument]


class ContrastDocument(TypedDict):
    gammas: List[float]
    mu: float
    cells: List[CellDocument]
    boundary: Optional[int]
    call_log: List[CallDocument]


class AnchorDocument(TypedDict):
    index: int
    label: int
    predicted: int
    skipped: bool
    fingerprint: str
    grid: Optional[GridDocument]
    contrast: Optional[ContrastDocument]
