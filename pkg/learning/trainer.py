"""
Supervised training of the angle predictors on stored SPA angles.
"""

import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from sklearn.model_selection import train_test_split

from core.spa_simulator import wrap_angles
from core.vqe_pipeline import DatasetRecord
from learning import autodiff as ad
from learning.autodiff import Tensor
from learning.features import batches
from learning.schnet import AnglePredictor, ModelConfig
from utils.errors import DataError, NumericalError

LOG_COLUMNS = ["epoch", "train_loss", "val_loss", "wall_time"]


@dataclass
class TrainingConfig:
    """Optimizer and loop settings"""
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 100
    seed: int = 0
    validation_fraction: float = 0.1
    log_every: int = 1
    include_unconverged: bool = False
    restore_best: bool = True


class Adam:
    """Adaptive moment estimation over a dict of parameter tensors"""

    def __init__(self, params: Dict[str, Tensor], lr: float = 1e-3, b1: float = 0.9,
                 b2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1 = b1
        self.b2 = b2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self):
        self.t += 1
        for name, p in self.params.items():
            if p.grad is None:
                continue
            self.m[name] = self.b1 * self.m[name] + (1 - self.b1) * p.grad
            self.v[name] = self.b2 * self.v[name] + (1 - self.b2) * p.grad ** 2
            m_hat = self.m[name] / (1 - self.b1 ** self.t)
            v_hat = self.v[name] / (1 - self.b2 ** self.t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()


@dataclass
class TrainingResult:
    model: AnglePredictor
    log: pd.DataFrame
    best_epoch: Optional[int] = None

    def save_log(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.log.to_csv(path, index=False)
        return path


class Trainer:
    """Minimizes the masked angle MSE with Adam"""

    def __init__(self, model_config: ModelConfig, config: Optional[TrainingConfig] = None):
        self.logger = logging.getLogger("PRISM.Trainer")
        self.model_config = model_config
        self.config = config or TrainingConfig()

    def _select(self, records: Sequence[DatasetRecord]) -> List[DatasetRecord]:
        usable = [r for r in records if r.converged or self.config.include_unconverged]
        dropped = len(records) - len(usable)
        if dropped:
            self.logger.info(f"Excluding {dropped} unconverged records from training")
        if not usable:
            raise DataError("training set is empty")
        return usable

    def split(self, n_records: int):
        indices = np.arange(n_records)
        fraction = self.config.validation_fraction
        if fraction <= 0 or n_records < 2:
            return indices, np.array([], dtype=np.int64)
        n_val = max(1, int(round(fraction * n_records)))
        if n_val >= n_records:
            return indices, np.array([], dtype=np.int64)
        train_idx, val_idx = train_test_split(indices, test_size=n_val, random_state=self.config.seed)
        return np.sort(train_idx), np.sort(val_idx)

    def loss(self, model: AnglePredictor, records: Sequence[DatasetRecord]) -> Tensor:
        batch = model.batch([r.geometry for r in records], [r.matching for r in records],
                            [wrap_angles(r.theta) for r in records])
        return ad.apply("masked_mse", model.forward(batch), batch.targets, batch.pair_mask)

    def evaluate(self, model: AnglePredictor, records: Sequence[DatasetRecord]) -> float:
        """Pair-weighted angle MSE over records"""
        if not records:
            return math.nan
        total, pairs = 0.0, 0
        for chunk in batches(np.arange(len(records)), self.config.batch_size):
            subset = [records[i] for i in chunk]
            n_pairs = sum(r.matching.n_pairs for r in subset)
            total += float(self.loss(model, subset).data) * n_pairs
            pairs += n_pairs
        return total / pairs

    def train(self, records: Sequence[DatasetRecord], model: Optional[AnglePredictor] = None) -> TrainingResult:
        records = self._select(records)
        model = model or AnglePredictor(self.model_config)
        cfg = self.config
        train_idx, val_idx = self.split(len(records))
        train_set = [records[i] for i in train_idx]
        val_set = [records[i] for i in val_idx]
        self.logger.info(
            f"Training {self.model_config.head} head ({model.n_parameters} parameters) on "
            f"{len(train_set)} records, validating on {len(val_set)}"
        )

        optimizer = Adam(model.params, lr=cfg.learning_rate)
        rng = np.random.default_rng(cfg.seed)
        rows = []
        best_loss, best_epoch, best_state = math.inf, None, None
        start = time.perf_counter()

        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(len(train_set))
            total, pairs = 0.0, 0
            for chunk in batches(order, cfg.batch_size):
                subset = [train_set[i] for i in chunk]
                optimizer.zero_grad()
                loss = self.loss(model, subset)
                value = float(loss.data)
                if not math.isfinite(value):
                    raise NumericalError(
                        f"loss became {value} at epoch {epoch} (lr={cfg.learning_rate}, batch={len(subset)})"
                    )
                loss.backward()
                optimizer.step()
                n_pairs = sum(r.matching.n_pairs for r in subset)
                total += value * n_pairs
                pairs += n_pairs

            train_loss = total / pairs
            val_loss = self.evaluate(model, val_set) if val_set else math.nan
            rows.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss,
                         "wall_time": time.perf_counter() - start})
            if val_loss < best_loss:
                best_loss, best_epoch, best_state = val_loss, epoch, model.state_dict()
            if epoch % max(cfg.log_every, 1) == 0 or epoch == cfg.epochs:
                self.logger.info(f"epoch {epoch}/{cfg.epochs} train={train_loss:.6f} val={val_loss:.6f}")

        if cfg.restore_best and best_state is not None:
            for name, value in best_state.items():
                model.params[name].data = value
            self.logger.info(f"Restored parameters from epoch {best_epoch} (val={best_loss:.6f})")
        return TrainingResult(model=model, log=pd.DataFrame(rows, columns=LOG_COLUMNS), best_epoch=best_epoch)
