"""
Continuous-filter convolution network predicting one SPA angle per matched pair.

The backbone embeds every hydrogen with the same learned vector and refines it with
residual interaction blocks whose filters depend only on interatomic distances. Two
heads turn atom features into angles:
- linear: MLP on (x_u, x_v, rbf(d_uv)) for each matched edge, one hidden ReLU layer;
- mixed: atoms reordered pair-blocked, MLP on the pair embedding (x_a, x_b, rbf(d_ab)),
  averaged over both endpoint orders.
"""

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.geometry import Geometry
from core.matching import PairMatching
from core.spa_simulator import wrap_angles
from learning import autodiff as ad
from learning.autodiff import Tensor
from learning.features import RBF_COUNT, RBF_CUTOFF, GraphBatch, make_batch, rbf_expand
from utils.errors import DataError

logger = logging.getLogger("PRISM.Model")

CHECKPOINT_MAGIC = "PRISMCKPT"
CHECKPOINT_VERSION = 1
HEADS = ("linear", "mixed")


@dataclass
class ModelConfig:
    """Network shape"""
    feature_dim: int = 64
    n_interactions: int = 3
    rbf_count: int = RBF_COUNT
    rbf_cutoff: float = RBF_CUTOFF
    head: str = "mixed"
    head_hidden: int = 256
    activation: str = "shifted_softplus"
    head_activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        if self.head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}, got '{self.head}'")
        if self.rbf_count != RBF_COUNT:
            raise ValueError(f"rbf_count is fixed at {RBF_COUNT}")
        if self.n_interactions != 3:
            raise ValueError("the backbone uses exactly 3 interaction blocks")
        if self.feature_dim < 1 or self.head_hidden < 1 or self.rbf_cutoff <= 0:
            raise ValueError("feature_dim, head_hidden and rbf_cutoff must be positive")


def parameter_shapes(cfg: ModelConfig) -> List[Tuple[str, Tuple[int, ...]]]:
    """Ordered (name, shape) list; the order fixes initialization and checkpoint layout"""
    F, R, H = cfg.feature_dim, cfg.rbf_count, cfg.head_hidden
    shapes = [("embedding", (F,))]
    for i in range(cfg.n_interactions):
        block = f"interaction{i}"
        shapes += [
            (f"{block}.filter1.W", (R, F)), (f"{block}.filter1.b", (F,)),
            (f"{block}.filter2.W", (F, F)), (f"{block}.filter2.b", (F,)),
            (f"{block}.message.W", (F, F)),
            (f"{block}.update1.W", (F, F)), (f"{block}.update1.b", (F,)),
            (f"{block}.update2.W", (F, F)), (f"{block}.update2.b", (F,)),
        ]
    if cfg.head == "linear":
        shapes += [
            ("head.hidden.W", (2 * F + R, H)), ("head.hidden.b", (H,)),
            ("head.out.W", (H, 1)), ("head.out.b", (1,)),
        ]
    else:
        shapes += [
            ("head.hidden1.W", (2 * F + R, H)), ("head.hidden1.b", (H,)),
            ("head.hidden2.W", (H, H)), ("head.hidden2.b", (H,)),
            ("head.out.W", (H, 1)), ("head.out.b", (1,)),
        ]
    return shapes


def init_params(cfg: ModelConfig, seed: Optional[int] = None) -> Dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases, from one seeded generator"""
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    params = {}
    for name, shape in parameter_shapes(cfg):
        if name.endswith(".b"):
            params[name] = np.zeros(shape)
            continue
        fan_in, fan_out = (1, shape[0]) if len(shape) == 1 else shape
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params[name] = rng.uniform(-limit, limit, size=shape)
    return params


def operators(cfg: ModelConfig) -> Tuple[str, ...]:
    """Every autodiff operator the forward pass builds for this configuration"""
    ops = ("affine", "add", "mul", "sum", "reshape", "gather", "concat", cfg.activation, cfg.head_activation)
    return ops + ("scale",) if cfg.head == "mixed" else ops


def _dense(x, params: Dict[str, Tensor], name: str):
    bias = params.get(f"{name}.b")
    return ad.apply("affine", x, params[f"{name}.W"], bias)


def backbone(batch: GraphBatch, params: Dict[str, Tensor], cfg: ModelConfig) -> Tensor:
    """Per-atom features (B, N, F); depends on the geometry through distances only"""
    F, act = cfg.feature_dim, cfg.activation
    rbf = Tensor(rbf_expand(batch.distances(), cfg.rbf_count, cfg.rbf_cutoff))
    neighbours = Tensor(batch.neighbour_mask()[..., None])
    atoms = Tensor(batch.atom_mask[..., None])
    B, N = batch.atom_mask.shape

    x = ad.apply("mul", atoms, ad.apply("reshape", params["embedding"], (1, 1, F)))
    for i in range(cfg.n_interactions):
        block = f"interaction{i}"
        filters = _dense(ad.apply(act, _dense(rbf, params, f"{block}.filter1")), params, f"{block}.filter2")
        messages = ad.apply("reshape", _dense(x, params, f"{block}.message"), (B, 1, N, F))
        weighted = ad.apply("mul", ad.apply("mul", messages, filters), neighbours)
        pooled = ad.apply("sum", weighted, axis=2)
        update = _dense(ad.apply(act, _dense(pooled, params, f"{block}.update1")), params, f"{block}.update2")
        x = ad.apply("add", x, ad.apply("mul", update, atoms))
    return x


def _pair_inputs(x: Tensor, batch: GraphBatch, cfg: ModelConfig):
    index = batch.batch_index()
    xu = ad.apply("gather", x, index, batch.pair_u)
    xv = ad.apply("gather", x, index, batch.pair_v)
    edge = Tensor(rbf_expand(batch.pair_distances(), cfg.rbf_count, cfg.rbf_cutoff))
    return xu, xv, edge


def head_linear(x: Tensor, batch: GraphBatch, params: Dict[str, Tensor], cfg: ModelConfig) -> Tensor:
    """theta_uv = MLP(x_u + x_v + rbf(d_uv)) per matched edge, shape (B, P)"""
    xu, xv, edge = _pair_inputs(x, batch, cfg)
    inputs = ad.apply("concat", [xu, xv, edge])
    hidden = ad.apply(cfg.head_activation, _dense(inputs, params, "head.hidden"))
    out = _dense(hidden, params, "head.out")
    return ad.apply("reshape", out, batch.pair_u.shape)


def _mixed_mlp(inputs: Tensor, params: Dict[str, Tensor], act: str) -> Tensor:
    hidden = ad.apply(act, _dense(inputs, params, "head.hidden1"))
    hidden = ad.apply(act, _dense(hidden, params, "head.hidden2"))
    return _dense(hidden, params, "head.out")


def head_mixed(x: Tensor, batch: GraphBatch, params: Dict[str, Tensor], cfg: ModelConfig) -> Tensor:
    """One angle per pair from the pair embedding, symmetric in the two pair atoms"""
    xa, xb, edge = _pair_inputs(x, batch, cfg)
    forward = _mixed_mlp(ad.apply("concat", [xa, xb, edge]), params, cfg.head_activation)
    backward = _mixed_mlp(ad.apply("concat", [xb, xa, edge]), params, cfg.head_activation)
    both = ad.apply("add", forward, backward)
    return ad.apply("reshape", ad.apply("scale", both, 0.5), batch.pair_u.shape)


class AnglePredictor:
    """Backbone plus head with its parameters"""

    def __init__(self, config: ModelConfig, params: Optional[Dict[str, np.ndarray]] = None):
        self.config = config
        ad.require(operators(config))
        if not {config.activation, config.head_activation} <= set(ad.ACTIVATIONS):
            raise ValueError(f"activations must be among {ad.ACTIVATIONS}")
        values = init_params(config) if params is None else params
        expected = dict(parameter_shapes(config))
        if set(values) != set(expected):
            raise ValueError("parameter names do not match the model configuration")
        self.params: Dict[str, Tensor] = {}
        for name, shape in expected.items():
            array = np.asarray(values[name], dtype=np.float64)
            if array.shape != shape:
                raise ValueError(f"parameter {name} has shape {array.shape}, expected {shape}")
            self.params[name] = Tensor(array.copy(), requires_grad=True)

    @property
    def n_parameters(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def batch(self, geometries: Sequence[Geometry], matchings: Sequence[PairMatching],
              targets: Optional[Sequence[np.ndarray]] = None) -> GraphBatch:
        return make_batch(geometries, matchings, targets, reorder=self.config.head == "mixed")

    def forward(self, batch: GraphBatch) -> Tensor:
        x = backbone(batch, self.params, self.config)
        if self.config.head == "linear":
            return head_linear(x, batch, self.params, self.config)
        return head_mixed(x, batch, self.params, self.config)

    def predict_many(self, geometries: Sequence[Geometry], matchings: Sequence[PairMatching]) -> List[np.ndarray]:
        out = self.forward(self.batch(geometries, matchings)).data
        return [wrap_angles(out[i, :m.n_pairs]) for i, m in enumerate(matchings)]

    def predict(self, geom: Geometry, matching: PairMatching) -> np.ndarray:
        """Angles in (-pi, pi], ordered like matching.pairs"""
        return self.predict_many([geom], [matching])[0]


# ---------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------
def save_checkpoint(model: AnglePredictor, path: Path, extra: Optional[Dict[str, Any]] = None) -> Path:
    """Header line, JSON manifest line, then little-endian float64 blobs"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest, blobs, offset = [], [], 0
    for name, tensor in model.params.items():
        blob = np.ascontiguousarray(tensor.data, dtype="<f8").tobytes()
        manifest.append({"name": name, "shape": list(tensor.data.shape), "offset": offset})
        blobs.append(blob)
        offset += len(blob)

    header = {"config": asdict(model.config), "tensors": manifest, "extra": extra or {}}
    with open(path, "wb") as f:
        f.write(f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n".encode("ascii"))
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for blob in blobs:
            f.write(blob)
    logger.info(f"Saved checkpoint ({model.n_parameters} parameters) to {path}")
    return path


def read_checkpoint_header(path: Path) -> Dict[str, Any]:
    with open(path, "rb") as f:
        return _read_header(f, path)[0]


def _read_header(f, path: Path):
    magic = f.readline().decode("ascii", errors="replace").split()
    if len(magic) != 2 or magic[0] != CHECKPOINT_MAGIC:
        raise DataError(f"{path} is not a PRISM checkpoint")
    if int(magic[1]) != CHECKPOINT_VERSION:
        raise DataError(f"checkpoint version {magic[1]} is not supported")
    try:
        header = json.loads(f.readline().decode("utf-8"))
    except json.JSONDecodeError as e:
        raise DataError(f"corrupt checkpoint header in {path}: {e}") from e
    return header, f.read()


def load_checkpoint(path: Path) -> AnglePredictor:
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    with open(path, "rb") as f:
        header, payload = _read_header(f, path)

    params = {}
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        if entry["offset"] + 8 * count > len(payload):
            raise DataError(f"checkpoint {path} is truncated at tensor {entry['name']}")
        params[entry["name"]] = np.frombuffer(
            payload, dtype="<f8", count=count, offset=entry["offset"]
        ).reshape(entry["shape"]).astype(np.float64)
    return AnglePredictor(ModelConfig(**header["config"]), params)
