"""
PPG-to-ECG translation in the DCT domain.

Each PPG cycle is reduced to its first ``k_ppg`` orthonormal DCT-II
coefficients, mapped to ``k_ecg`` ECG coefficients by either a closed-form
ridge regression or a two-hidden-layer network, and returned to the time
domain with the inverse DCT.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .cycles import CardiacCyclePair, pairs_to_arrays
from .errors import (
    ConstantInput,
    EmptyPairs,
    InvalidConfig,
    LengthMismatch,
    ModelFormatError,
    SingularSystem,
)
from .metrics import dirichlet_distance, mean_absolute_error, pearson
from .nnkit import (
    Batch,
    LayerSpec,
    Network,
    TrainConfig,
    TrainedModel,
    fit,
    init_network,
    network_from_header,
    network_header,
    read_container,
    write_container,
)
from .spectral import dct2_rows, idct_rows
from .traces import write_frame
from .utils import worker_count

logger = logging.getLogger(__name__)

STD_FLOOR = 1e-8
RESIDUAL_TOL = 1e-8
LAMBDA_GRID = tuple(10.0 ** np.arange(-3, 4))
MODES = ("ridge", "ffnn")

PathLike = Union[str, Path]


@dataclass(frozen=True)
class P2eConfig:
    k_ppg: int = 150
    k_ecg: int = 150
    cycle_len: int = 300
    mode: str = "ridge"
    ridge_lambda: float = 1.0
    ffnn_hidden: Tuple[int, int] = (256, 256)
    ffnn_activation: str = "tanh"
    ffnn_l1: float = 1e-6

    def __post_init__(self) -> None:
        if not (
            1 <= self.k_ppg <= self.cycle_len and 1 <= self.k_ecg <= self.cycle_len
        ):
            raise InvalidConfig(
                f"k_ppg={self.k_ppg}, k_ecg={self.k_ecg} "
                f"must lie in [1, {self.cycle_len}]",
                module="p2e",
            )
        if self.mode not in MODES:
            raise InvalidConfig(f"Unknown mode '{self.mode}'", module="p2e")
        if self.ridge_lambda < 0:
            raise InvalidConfig(
                f"ridge_lambda must be >= 0: {self.ridge_lambda}", module="p2e"
            )
        if self.ffnn_activation not in ("tanh", "selu"):
            raise InvalidConfig(
                f"ffnn_activation must be tanh or selu: {self.ffnn_activation}",
                module="p2e",
            )


@dataclass(frozen=True, eq=False)
class Standardizer:
    """Per-column affine standardization fitted on training rows."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, matrix: np.ndarray) -> "Standardizer":
        return cls(matrix.mean(axis=0), np.maximum(matrix.std(axis=0), STD_FLOOR))

    def transform(self, matrix: np.ndarray) -> np.ndarray:
        return (matrix - self.mean) / self.std

    def inverse(self, matrix: np.ndarray) -> np.ndarray:
        return matrix * self.std + self.mean

    def to_header(self) -> Dict[str, List[float]]:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_header(cls, entry: Dict[str, Any]) -> "Standardizer":
        return cls(
            np.asarray(entry["mean"], dtype=np.float64),
            np.asarray(entry["std"], dtype=np.float64),
        )


@dataclass(frozen=True, eq=False)
class FeatureSet:
    X: np.ndarray
    Y: np.ndarray
    x_scaler: Standardizer
    y_scaler: Standardizer


@dataclass(frozen=True, eq=False)
class RidgeModel:
    """Bias-augmented linear map: ``[X, 1] @ W``."""

    W: np.ndarray
    ridge_lambda: float = 0.0

    def predict(self, X: np.ndarray) -> np.ndarray:
        return X @ self.W[:-1] + self.W[-1]


@dataclass(eq=False)
class P2eModel:
    """A trained translator with its DCT-space standardization."""

    config: P2eConfig
    x_scaler: Standardizer
    y_scaler: Standardizer
    ridge: Optional[RidgeModel] = None
    network: Optional[Network] = None
    history: List[Tuple[float, float]] = field(default_factory=list)

    def predict_coeffs(self, X: np.ndarray) -> np.ndarray:
        """Standardized PPG coefficients -> standardized ECG coefficients."""
        if self.ridge is not None:
            return self.ridge.predict(X)
        if self.network is not None:
            return self.network.forward(X, "eval")
        raise ModelFormatError("Model holds neither ridge weights nor a network")

    def save(self, path: PathLike) -> None:
        """Write the model as a ``P2EM`` container."""
        header: Dict[str, Any] = {
            "mode": self.config.mode,
            "k_ppg": self.config.k_ppg,
            "k_ecg": self.config.k_ecg,
            "cycle_len": self.config.cycle_len,
            "norm_stats": {
                "x": self.x_scaler.to_header(),
                "y": self.y_scaler.to_header(),
            },
        }
        if self.ridge is not None:
            header["ridge_lambda"] = self.ridge.ridge_lambda
            header["shape"] = list(self.ridge.W.shape)
            write_container(path, header, [self.ridge.W])
        elif self.network is not None:
            header.update(network_header(self.network))
            header["activation"] = self.config.ffnn_activation
            write_container(path, header, self.network.parameter_blocks())
        else:
            raise ModelFormatError("Nothing to save")
        logger.info(f"Saved {self.config.mode} model to {path}")

    @classmethod
    def load(cls, path: PathLike) -> "P2eModel":
        """
        Read a model written by ``save``.

        Raises:
            ModelFormatError: If the container is invalid
        """
        header, params = read_container(path)
        try:
            mode = header["mode"]
            x_scaler = Standardizer.from_header(header["norm_stats"]["x"])
            y_scaler = Standardizer.from_header(header["norm_stats"]["y"])
            config = P2eConfig(
                k_ppg=int(header["k_ppg"]),
                k_ecg=int(header["k_ecg"]),
                cycle_len=int(header["cycle_len"]),
                mode=mode,
                ridge_lambda=float(header.get("ridge_lambda", 0.0)),
                ffnn_activation=str(header.get("activation", "tanh")),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ModelFormatError(f"{path}: incomplete header ({e})") from e
        if mode == "ridge":
            shape = tuple(header.get("shape", ()))
            expected = (config.k_ppg + 1, config.k_ecg)
            if shape != expected or params.size != expected[0] * expected[1]:
                raise ModelFormatError(f"{path}: ridge weights do not match header")
            ridge = RidgeModel(params.reshape(shape), config.ridge_lambda)
            return cls(config, x_scaler, y_scaler, ridge=ridge)
        network = network_from_header(header, params)
        hidden = tuple(spec.out_dim for spec in network.specs[:-1])
        if len(hidden) == 2:
            config = replace(config, ffnn_hidden=hidden)
        return cls(config, x_scaler, y_scaler, network=network)


def featurize(
    pairs: Sequence[CardiacCyclePair],
    cfg: P2eConfig,
    scalers: Optional[Tuple[Standardizer, Standardizer]] = None,
) -> FeatureSet:
    """
    Truncated DCT features of PPG cycles and ECG targets, standardized per column.

    Args:
        pairs: Cycle pairs of length ``cfg.cycle_len``
        cfg: Translator configuration
        scalers: ``(x, y)`` standardizers to reuse; fitted on ``pairs`` if omitted

    Raises:
        EmptyPairs: If ``pairs`` is empty
        LengthMismatch: If a cycle does not have ``cfg.cycle_len`` samples
    """
    ppg, ecg, _ = pairs_to_arrays(pairs)
    if ppg.shape[1] != cfg.cycle_len:
        raise LengthMismatch(
            f"Cycles have {ppg.shape[1]} samples, expected {cfg.cycle_len}"
        )
    X = dct2_rows(ppg, cfg.k_ppg)
    Y = dct2_rows(ecg, cfg.k_ecg)
    if scalers is None:
        scalers = (Standardizer.fit(X), Standardizer.fit(Y))
    x_scaler, y_scaler = scalers
    return FeatureSet(x_scaler.transform(X), y_scaler.transform(Y), x_scaler, y_scaler)


def train_ridge(X: np.ndarray, Y: np.ndarray, ridge_lambda: float) -> RidgeModel:
    """
    Closed-form ridge regression with an unregularized bias, solved by Cholesky.

    Raises:
        EmptyPairs: If there are no rows
        SingularSystem: If the normal equations cannot be solved accurately
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape[0] == 0:
        raise EmptyPairs("No training rows for ridge regression")
    if X.shape[0] != Y.shape[0]:
        raise LengthMismatch(f"{X.shape[0]} feature rows vs {Y.shape[0]} target rows")
    n, k = X.shape
    if ridge_lambda == 0 and n < k + 1:
        raise SingularSystem(
            f"{n} rows cannot determine {k + 1} unknowns without ridge"
        )

    A = np.hstack([X, np.ones((n, 1))])
    penalty = np.full(k + 1, float(ridge_lambda))
    penalty[-1] = 0.0
    gram = A.T @ A + np.diag(penalty)
    rhs = A.T @ Y
    try:
        W = cho_solve(cho_factor(gram), rhs)
    except LinAlgError as e:
        raise SingularSystem(f"Normal equations are not positive definite: {e}") from e
    residual = np.max(np.abs(gram @ W - rhs))
    scale = np.max(np.abs(rhs))
    tolerance = RESIDUAL_TOL * max(scale, np.finfo(float).tiny)
    if not np.all(np.isfinite(W)) or residual > tolerance:
        raise SingularSystem(
            f"Normal-equation residual {residual:.3g} exceeds tolerance"
        )
    logger.debug(
        f"Ridge solve: n={n}, k={k}, lambda={ridge_lambda}, residual={residual:.3g}"
    )
    return RidgeModel(W, float(ridge_lambda))


def ffnn_specs(cfg: P2eConfig) -> List[LayerSpec]:
    h1, h2 = cfg.ffnn_hidden
    act = cfg.ffnn_activation
    return [
        LayerSpec(cfg.k_ppg, h1, act, batchnorm=True, l1=cfg.ffnn_l1),
        LayerSpec(h1, h2, act, batchnorm=True, l1=cfg.ffnn_l1),
        LayerSpec(h2, cfg.k_ecg, "linear"),
    ]


def train_ffnn(
    X: np.ndarray,
    Y: np.ndarray,
    cfg: P2eConfig,
    train_config: TrainConfig = TrainConfig(),
    X_val: Optional[np.ndarray] = None,
    Y_val: Optional[np.ndarray] = None,
) -> TrainedModel:
    """
    Train the ``k_ppg -> h1 -> h2 -> k_ecg`` network on standardized features.

    Without an explicit validation set, a seeded 80/20 row split is used.
    """
    train = Batch(X, Y)
    if X_val is not None and Y_val is not None:
        val: Optional[Batch] = Batch(X_val, Y_val)
    elif len(train) >= 5:
        order = np.random.default_rng(train_config.seed).permutation(len(train))
        cut = int(round(0.8 * len(train)))
        train, val = train.take(np.sort(order[:cut])), train.take(np.sort(order[cut:]))
    else:
        val = None
    net = init_network(ffnn_specs(cfg), train_config.seed)
    model, history = fit(net, train, val, train_config)
    logger.info(
        f"Trained FFNN on {len(train)} pairs: best val MAE {model.best_val_loss:.4f} "
        f"at epoch {model.best_epoch}"
    )
    return model


def train_p2e(
    train_pairs: Sequence[CardiacCyclePair],
    cfg: P2eConfig,
    val_pairs: Optional[Sequence[CardiacCyclePair]] = None,
    train_config: TrainConfig = TrainConfig(),
    lambda_grid: Optional[Sequence[float]] = None,
) -> P2eModel:
    """Featurize, fit the configured model and bundle it with its scalers."""
    features = featurize(train_pairs, cfg)
    scalers = (features.x_scaler, features.y_scaler)
    val = featurize(val_pairs, cfg, scalers) if val_pairs else None

    if cfg.mode == "ridge":
        if lambda_grid and val is not None:
            best, _ = select_lambda(features.X, features.Y, val.X, val.Y, lambda_grid)
            cfg = replace(cfg, ridge_lambda=best)
        ridge = train_ridge(features.X, features.Y, cfg.ridge_lambda)
        logger.info(
            f"Trained ridge model on {len(train_pairs)} pairs "
            f"(lambda={cfg.ridge_lambda:g})"
        )
        return P2eModel(cfg, *scalers, ridge=ridge)

    trained = train_ffnn(
        features.X,
        features.Y,
        cfg,
        train_config,
        val.X if val is not None else None,
        val.Y if val is not None else None,
    )
    return P2eModel(cfg, *scalers, network=trained.network, history=trained.history)


def select_lambda(
    X_tr: np.ndarray,
    Y_tr: np.ndarray,
    X_val: np.ndarray,
    Y_val: np.ndarray,
    grid: Sequence[float] = LAMBDA_GRID,
) -> Tuple[float, List[Tuple[float, float]]]:
    """Pick the ridge penalty with the lowest validation MAE in coefficient space."""
    scores: List[Tuple[float, float]] = []
    for lam in grid:
        try:
            model = train_ridge(X_tr, Y_tr, lam)
        except SingularSystem:
            continue
        scores.append(
            (float(lam), float(np.mean(np.abs(model.predict(X_val) - Y_val))))
        )
    if not scores:
        raise SingularSystem("No lambda in the grid produced a solvable system")
    best = min(scores, key=lambda item: item[1])[0]
    logger.info(f"Selected ridge lambda {best:g} from {len(scores)} candidates")
    return best, scores


def translate_many(model: P2eModel, ppg_cycles: np.ndarray) -> np.ndarray:
    """Translate a stack of PPG cycles (one per row) into ECG cycles."""
    cycles = np.atleast_2d(np.asarray(ppg_cycles, dtype=np.float64))
    cfg = model.config
    if cycles.shape[1] != cfg.cycle_len:
        raise LengthMismatch(
            f"Cycle of {cycles.shape[1]} samples, model expects {cfg.cycle_len}"
        )
    X = model.x_scaler.transform(dct2_rows(cycles, cfg.k_ppg))
    coeffs = model.y_scaler.inverse(model.predict_coeffs(X))
    return idct_rows(coeffs, cfg.cycle_len)


def translate(model: P2eModel, ppg_cycle: np.ndarray) -> np.ndarray:
    """
    Reconstruct one ECG cycle from one PPG cycle.

    Raises:
        LengthMismatch: If the cycle length differs from the model's
    """
    cycle = np.asarray(ppg_cycle, dtype=np.float64)
    if cycle.ndim != 1:
        raise LengthMismatch(f"Expected a 1-D cycle, got shape {cycle.shape}")
    return translate_many(model, cycle)[0]


@dataclass(frozen=True)
class SweepRow:
    k: int
    mae: float
    pearson: float
    dirichlet: float


def evaluate_pairs(
    model: P2eModel, pairs: Sequence[CardiacCyclePair]
) -> Tuple[float, float, float]:
    """Mean per-cycle MAE, Pearson and Dirichlet distance on held-out pairs."""
    ppg, ecg, _ = pairs_to_arrays(pairs)
    reconstructed = translate_many(model, ppg)
    maes, correlations, distances = [], [], []
    for ref, rec in zip(ecg, reconstructed):
        maes.append(mean_absolute_error(ref, rec))
        distances.append(dirichlet_distance(ref, rec))
        try:
            correlations.append(pearson(ref, rec))
        except ConstantInput:
            continue
    corr = float(np.mean(correlations)) if correlations else float("nan")
    return float(np.mean(maes)), corr, float(np.mean(distances))


def split_records(
    records: Sequence[str], n_holdout: int, seed: int = 0
) -> Tuple[List[str], List[str]]:
    """Choose ``n_holdout`` whole records for held-out evaluation."""
    records = sorted(set(records))
    if not 0 <= n_holdout < len(records):
        raise InvalidConfig(
            f"Cannot hold out {n_holdout} of {len(records)} records", module="p2e"
        )
    rng = np.random.default_rng(seed)
    held = set(rng.choice(records, size=n_holdout, replace=False).tolist())
    return [r for r in records if r not in held], [r for r in records if r in held]


def split_pairs(
    pairs: Sequence[CardiacCyclePair], train_fraction: float = 0.8
) -> Tuple[List[CardiacCyclePair], List[CardiacCyclePair]]:
    """Chronological split within each record: the first fraction trains."""
    by_record: Dict[str, List[CardiacCyclePair]] = {}
    for pair in pairs:
        by_record.setdefault(pair.record, []).append(pair)
    train: List[CardiacCyclePair] = []
    val: List[CardiacCyclePair] = []
    for record_pairs in by_record.values():
        cut = int(round(train_fraction * len(record_pairs)))
        train.extend(record_pairs[:cut])
        val.extend(record_pairs[cut:])
    return train, val


def sweep_k(
    pairs: Sequence[CardiacCyclePair],
    k_values: Sequence[int],
    cfg: P2eConfig,
    held_out: Optional[Sequence[CardiacCyclePair]] = None,
    train_config: TrainConfig = TrainConfig(),
) -> List[SweepRow]:
    """
    Train one translator per ``k`` (``k_ppg = k_ecg = k``) and score it.

    Without ``held_out`` pairs, the last 20 % of each record is held out.
    Models are trained in parallel on up to ``worker_count()`` threads.
    """
    if held_out is None:
        pairs, held_out = split_pairs(pairs)
    if not pairs or not held_out:
        raise EmptyPairs("sweep_k needs both training and held-out pairs")
    for k in k_values:
        if not 1 <= k <= cfg.cycle_len:
            raise InvalidConfig(f"k={k} outside [1, {cfg.cycle_len}]", module="p2e")

    def run(k: int) -> SweepRow:
        k_cfg = replace(cfg, k_ppg=k, k_ecg=k)
        model = train_p2e(pairs, k_cfg, train_config=train_config)
        mae, corr, dist = evaluate_pairs(model, held_out)
        logger.info(f"k={k}: MAE {mae:.4f}, Pearson {corr:.4f}, Dirichlet {dist:.4f}")
        return SweepRow(int(k), mae, corr, dist)

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        return list(pool.map(run, k_values))


def write_sweep_csv(rows: Sequence[SweepRow], path: PathLike) -> None:
    frame = pd.DataFrame(
        [(r.k, r.mae, r.pearson, r.dirichlet) for r in rows],
        columns=["k", "mae", "pearson", "dirichlet"],
    )
    write_frame(frame, path)
