"""
Dataset labelling: geometry -> matching -> Hamiltonian -> orbital optimization -> SPA-VQE.

label_instance turns one geometry into a DatasetRecord; generate_dataset maps seeds or
sweep indices to records over a worker pool and streams them into a resumable JSONL file.
"""

import logging
import multiprocessing as mp
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from core.geometry import (Geometry, GeometryKind, SweepSchedule, generate_random,
                           generate_structured)
from core.hamiltonian import (OrbitalRotation, OrbitalTensors, PauliPolynomial, exact_ground_energy,
                              lowdin_orbitals, pair_adapted_rotation, rotate_orbitals, to_qubit)
from core.integrals import build_basis, compute_integrals
from core.matching import PairMatching, best_matching
from core.spa_simulator import (FactorizedExpectation, PairEnergyFunctional, SpaAnsatz, prepare,
                                wrap_angles)
from utils.constants import SCHEMA_VERSION
from utils.errors import DataError, PrismError
from utils.file_utils import FileUtils

logger = logging.getLogger("PRISM.Pipeline")

SELF_CONSISTENCY_TOL = 1e-8
VARIATIONAL_SLACK = 1e-8


# ---------------------------------------------------------
# Configuration
# ---------------------------------------------------------
@dataclass
class VQEConfig:
    """Angle optimizer settings"""
    optimizer: str = "bfgs"            # bfgs | gradient_descent
    gtol: float = 1e-7
    max_iterations: int = 500
    restarts: int = 4
    converged_tolerance: float = 1e-6
    learning_rate: float = 0.1


@dataclass
class OrbitalOptimizationConfig:
    """Alternating orbital / angle optimization"""
    enabled: bool = True
    outer_cycles: int = 2
    fd_step: float = 1e-4
    max_iterations: int = 60
    gtol: float = 1e-6
    pair_adapted_start: bool = True


@dataclass
class GenerationConfig:
    d_max: float = 2.5
    fci_max_qubits: int = 16
    greedy_matching_fallback: bool = False


@dataclass
class SweepConfig:
    T: int = 36
    d_min: float = 0.5
    d_max: float = 4.0


def _section(cls, values: Optional[Dict[str, Any]], name: str):
    """Build a config dataclass, ignoring (and reporting) unknown keys"""
    config = cls()
    for key, value in (values or {}).items():
        if hasattr(config, key):
            setattr(config, key, value)
        else:
            logger.warning(f"Ignoring unknown key '{key}' in '{name}' config")
    return config


@dataclass
class PipelineConfig:
    vqe: VQEConfig = field(default_factory=VQEConfig)
    orbital_optimization: OrbitalOptimizationConfig = field(default_factory=OrbitalOptimizationConfig)
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    @classmethod
    def from_dict(cls, config: Optional[Dict[str, Any]]) -> "PipelineConfig":
        config = config or {}
        return cls(
            vqe=_section(VQEConfig, config.get("vqe"), "vqe"),
            orbital_optimization=_section(
                OrbitalOptimizationConfig, config.get("orbital_optimization"), "orbital_optimization"
            ),
            generation=_section(GenerationConfig, config.get("generation"), "generation"),
            sweep=_section(SweepConfig, config.get("sweep"), "sweep"),
        )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


# ---------------------------------------------------------
# Records
# ---------------------------------------------------------
@dataclass
class DatasetRecord:
    """One labelled instance: geometry, pairing, optimized Hamiltonian and SPA solution"""
    geometry: Geometry
    matching: PairMatching
    hamiltonian: PauliPolynomial
    kappa: np.ndarray
    e_spa: float
    theta: np.ndarray
    e_reference: float
    e_fci: Optional[float] = None
    converged: bool = True
    gradient_norm: float = 0.0
    timestamp: str = ""
    version: int = SCHEMA_VERSION

    @property
    def seed(self) -> Optional[int]:
        return self.geometry.seed

    @property
    def instance_id(self) -> Optional[int]:
        return self.geometry.instance_id

    @property
    def n_atoms(self) -> int:
        return self.geometry.n_atoms

    def ansatz(self) -> SpaAnsatz:
        return SpaAnsatz(self.matching, self.theta)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "version": self.version,
            "kind": self.geometry.kind.value,
            "seed": self.geometry.seed,
            "step_angstrom": self.geometry.step,
            "index": self.geometry.index,
            "coords_angstrom": self.geometry.coords.tolist(),
            "matching": self.matching.to_list(),
            "kappa": np.asarray(self.kappa).tolist(),
            "pauli_terms": self.hamiltonian.to_list(),
            "n_qubits": self.hamiltonian.n_qubits,
            "e_spa_hartree": self.e_spa,
            "e_reference_hartree": self.e_reference,
            "theta": np.asarray(self.theta).tolist(),
            "e_fci_hartree": self.e_fci,
            "converged": self.converged,
            "gradient_norm": self.gradient_norm,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], line_number: Optional[int] = None) -> "DatasetRecord":
        version = data.get("version")
        if version != SCHEMA_VERSION:
            raise DataError(f"schema version {version!r} is not supported (expected {SCHEMA_VERSION})", line_number)
        try:
            geometry = Geometry(
                coords=np.array(data["coords_angstrom"], dtype=np.float64),
                kind=GeometryKind(data["kind"]),
                seed=data.get("seed"),
                step=data.get("step_angstrom"),
                index=data.get("index"),
            )
            matching = PairMatching.from_list(data["matching"], geometry)
            hamiltonian = PauliPolynomial.from_list(data["pauli_terms"], data.get("n_qubits"))
            return cls(
                geometry=geometry,
                matching=matching,
                hamiltonian=hamiltonian,
                kappa=np.array(data["kappa"], dtype=np.float64),
                e_spa=float(data["e_spa_hartree"]),
                theta=np.array(data["theta"], dtype=np.float64),
                e_reference=float(data["e_reference_hartree"]),
                e_fci=None if data.get("e_fci_hartree") is None else float(data["e_fci_hartree"]),
                converged=bool(data.get("converged", True)),
                gradient_norm=float(data.get("gradient_norm", 0.0)),
                timestamp=data.get("timestamp", ""),
                version=version,
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"malformed dataset record: {e}", line_number) from e


def record_digest(record: DatasetRecord) -> str:
    """SHA-256 of the canonical record payload, timestamps excluded"""
    payload = record.to_dict()
    payload.pop("timestamp", None)
    return FileUtils.get_text_hash(FileUtils.canonical_json(payload))


def check_record(record: DatasetRecord, tolerance: float = SELF_CONSISTENCY_TOL) -> List[str]:
    """Violated record invariants (empty when the record is consistent)"""
    problems = []
    theta = np.asarray(record.theta)
    if len(theta) != record.matching.n_pairs:
        problems.append(f"theta has {len(theta)} entries for {record.matching.n_pairs} pairs")
        return problems
    if np.any(theta <= -np.pi) or np.any(theta > np.pi):
        problems.append("theta outside (-pi, pi]")
    kappa = np.asarray(record.kappa)
    if kappa.shape != (record.n_atoms, record.n_atoms) or not np.allclose(kappa, -kappa.T, atol=1e-12):
        problems.append("kappa is not an antisymmetric n x n generator")

    recomputed = FactorizedExpectation(record.hamiltonian)(prepare(record.ansatz()))
    if abs(recomputed - record.e_spa) > tolerance:
        problems.append(f"E_SPA {record.e_spa:.12f} does not match recomputed {recomputed:.12f}")
    if record.e_spa > record.e_reference + VARIATIONAL_SLACK:
        problems.append("E_SPA above the closed-shell reference energy")
    if record.e_fci is not None and record.e_fci > record.e_spa + VARIATIONAL_SLACK:
        problems.append("E_FCI above E_SPA")
    return problems


def load_records(path: Path, keep_going: bool = False) -> List[DatasetRecord]:
    """Read a JSONL dataset; bad lines raise DataError with their line number unless keep_going"""
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset not found: {path}")
    records = []
    for line_number, data in FileUtils.iter_jsonl(path, keep_going=keep_going):
        try:
            records.append(DatasetRecord.from_dict(data, line_number))
        except DataError as e:
            if not keep_going:
                raise
            logger.warning(f"Skipping record in {path}: {e}")
    logger.info(f"Loaded {len(records)} records from {path}")
    return records


# ---------------------------------------------------------
# Optimization
# ---------------------------------------------------------
@dataclass
class AngleSolution:
    theta: np.ndarray
    energy: float
    gradient_norm: float


def _central_difference(fn, x: np.ndarray, step: float) -> np.ndarray:
    grad = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = step
        grad[i] = (fn(x + e) - fn(x - e)) / (2.0 * step)
    return grad


def optimize_angles(functional: PairEnergyFunctional, start: Sequence[float],
                    config: VQEConfig) -> AngleSolution:
    """Minimize the SPA energy over the pair angles from one starting point"""
    theta = np.asarray(start, dtype=np.float64).copy()
    if config.optimizer == "bfgs":
        result = minimize(functional.energy, theta, jac=functional.gradient, method="BFGS",
                          options={"gtol": config.gtol, "maxiter": config.max_iterations})
        theta = result.x
    elif config.optimizer == "gradient_descent":
        for _ in range(config.max_iterations):
            grad = functional.gradient(theta)
            if np.abs(grad).max(initial=0.0) < config.gtol:
                break
            theta = theta - config.learning_rate * grad
    else:
        raise ValueError(f"unknown angle optimizer '{config.optimizer}'")

    grad = functional.gradient(theta)
    return AngleSolution(theta=theta, energy=functional.energy(theta),
                         gradient_norm=float(np.abs(grad).max(initial=0.0)))


def optimize_orbitals(lowdin: OrbitalTensors, matching: PairMatching, theta: np.ndarray,
                      kappa: np.ndarray, config: OrbitalOptimizationConfig) -> np.ndarray:
    """Quasi-Newton step on the rotation generator at fixed angles; kept only if it lowers E"""
    n = lowdin.n_orbitals

    def energy(vector: np.ndarray) -> float:
        tensors = rotate_orbitals(lowdin, OrbitalRotation.from_vector(vector, n))
        return PairEnergyFunctional(tensors, matching).energy(theta)

    x0 = OrbitalRotation(kappa).to_vector()
    if len(x0) == 0:
        return kappa
    start_energy = energy(x0)
    result = minimize(energy, x0, jac=lambda x: _central_difference(energy, x, config.fd_step),
                      method="BFGS", options={"gtol": config.gtol, "maxiter": config.max_iterations})
    if result.fun < start_energy:
        logger.debug(f"Orbital step lowered E by {start_energy - result.fun:.3e} Eh")
        return OrbitalRotation.from_vector(result.x, n).kappa
    return kappa


def initial_angle_sets(n_pairs: int, seed: Optional[int], restarts: int) -> List[np.ndarray]:
    """All-zero, all-pi/2, then seeded uniform draws on (-pi, pi]"""
    starts = [np.zeros(n_pairs), np.full(n_pairs, np.pi / 2)]
    rng = np.random.default_rng(np.random.SeedSequence([0 if seed is None else seed, n_pairs]))
    while len(starts) < restarts:
        starts.append(wrap_angles(rng.uniform(-np.pi, np.pi, n_pairs)))
    return starts[:max(restarts, 1)]


def label_instance(geom: Geometry, config: Optional[PipelineConfig] = None) -> DatasetRecord:
    """Run matching, integrals, orbital optimization and multi-start VQE for one geometry"""
    config = config or PipelineConfig()
    n = geom.n_atoms
    if n % 2:
        raise ValueError(f"labelling needs an even atom count, got {n}")

    matching = best_matching(geom, greedy_fallback=config.generation.greedy_matching_fallback)
    tables = compute_integrals(build_basis(geom))
    _, lowdin = lowdin_orbitals(tables)

    orb = config.orbital_optimization
    if orb.pair_adapted_start:
        kappa = pair_adapted_rotation(matching, n).kappa
    else:
        kappa = np.zeros((n, n))
    reference = PairEnergyFunctional(rotate_orbitals(lowdin, OrbitalRotation(kappa)), matching)
    e_reference = reference.energy(np.zeros(matching.n_pairs))

    warm_start = np.zeros(matching.n_pairs)
    if orb.enabled:
        for cycle in range(orb.outer_cycles):
            functional = PairEnergyFunctional(rotate_orbitals(lowdin, OrbitalRotation(kappa)), matching)
            warm_start = optimize_angles(functional, warm_start, config.vqe).theta
            kappa = optimize_orbitals(lowdin, matching, warm_start, kappa, orb)
            logger.debug(f"Orbital cycle {cycle + 1}/{orb.outer_cycles} done")

    tensors = rotate_orbitals(lowdin, OrbitalRotation(kappa))
    functional = PairEnergyFunctional(tensors, matching)
    starts = initial_angle_sets(matching.n_pairs, geom.instance_id, config.vqe.restarts)
    if orb.enabled:
        starts.append(warm_start)
    best = min((optimize_angles(functional, s, config.vqe) for s in starts), key=lambda sol: sol.energy)

    theta = wrap_angles(best.theta)
    hamiltonian = to_qubit(tensors, matching)
    e_spa = FactorizedExpectation(hamiltonian)(prepare(SpaAnsatz(matching, theta)))
    if abs(e_spa - best.energy) > SELF_CONSISTENCY_TOL:
        logger.warning(f"E_SPA drift {abs(e_spa - best.energy):.2e} Eh between functional and Pauli sum")

    e_fci = None
    if hamiltonian.n_qubits <= config.generation.fci_max_qubits:
        e_fci = exact_ground_energy(hamiltonian, n_electrons=n, spin_free=True)

    converged = best.gradient_norm <= config.vqe.converged_tolerance
    if not converged:
        logger.warning(f"VQE not converged for {geom.kind.value} instance {geom.instance_id}: |grad| = {best.gradient_norm:.2e}")

    return DatasetRecord(
        geometry=geom,
        matching=matching,
        hamiltonian=hamiltonian,
        kappa=kappa,
        e_spa=float(e_spa),
        theta=theta,
        e_reference=float(e_reference),
        e_fci=e_fci,
        converged=converged,
        gradient_norm=best.gradient_norm,
        timestamp=datetime.now().isoformat(),
    )


# ---------------------------------------------------------
# Dataset generation
# ---------------------------------------------------------
@dataclass
class GenerationRequest:
    """What to generate: random clusters by seed, or a structured sweep by step index"""
    kind: GeometryKind
    n_atoms: int
    count: int = 1
    seed: int = 0
    d_max: float = 2.5
    schedule: Optional[SweepSchedule] = None

    def __post_init__(self):
        if self.kind is not GeometryKind.RANDOM and self.schedule is None:
            raise ValueError(f"{self.kind.value} geometries need a sweep schedule")
        if self.n_atoms < 2 or self.n_atoms % 2:
            raise ValueError(f"n_atoms must be even and >= 2, got {self.n_atoms}")
        if self.kind is GeometryKind.RANDOM and self.count < 1:
            raise ValueError(f"count must be positive, got {self.count}")

    def instance_ids(self) -> List[int]:
        if self.kind is GeometryKind.RANDOM:
            return list(range(self.seed, self.seed + self.count))
        return list(range(self.schedule.T))

    def geometry(self, instance_id: int) -> Geometry:
        if self.kind is GeometryKind.RANDOM:
            return generate_random(self.n_atoms, self.d_max, instance_id)
        return generate_structured(self.kind, self.schedule, instance_id)

    def to_dict(self) -> Dict[str, Any]:
        data = {"kind": self.kind.value, "n_atoms": self.n_atoms, "count": self.count,
                "seed": self.seed, "d_max": self.d_max, "schedule": None}
        if self.schedule is not None:
            data["schedule"] = asdict(self.schedule)
        return data

    def geometry_key(self) -> Dict[str, Any]:
        return request_geometry_key(self.to_dict())


def request_geometry_key(data: Dict[str, Any]) -> Dict[str, Any]:
    """Fields of a serialized request that decide which geometry an instance id maps to"""
    if data["kind"] == GeometryKind.RANDOM.value:
        fields = ("kind", "n_atoms", "d_max")
    else:
        fields = ("kind", "n_atoms", "schedule")
    return {k: data[k] for k in fields}


def manifest_path(out_path: Path) -> Path:
    out_path = Path(out_path)
    return out_path.with_name(out_path.name + ".manifest.json")


def check_resume(out_path: Path, request: GenerationRequest):
    """Refuse to mix records from a different request into an existing dataset"""
    path = manifest_path(out_path)
    if not out_path.exists() or not path.exists():
        return
    previous = FileUtils.load_json(path).get("request") or {}
    try:
        previous_key = request_geometry_key(previous)
    except KeyError as e:
        raise DataError(f"unreadable request in {path}: {e}") from e
    if previous_key != request.geometry_key():
        raise ValueError(
            f"{out_path} was generated for {previous_key}, refusing to resume with {request.geometry_key()}"
        )


def record_instance_id(data: Dict[str, Any]) -> Optional[int]:
    """Seed of a serialized random record, sweep index of a structured one"""
    return data.get("seed") if data.get("seed") is not None else data.get("index")


def _existing_ids(out_path: Path) -> set:
    if not out_path.exists():
        return set()
    return {record_instance_id(data) for _, data in FileUtils.iter_jsonl(out_path, keep_going=True)}


def _label_task(task):
    request, config, instance_id, keep_going = task
    try:
        return instance_id, label_instance(request.geometry(instance_id), config).to_dict(), None
    except (PrismError, ValueError) as e:
        if not keep_going:
            raise
        return instance_id, None, f"{type(e).__name__}: {e}"


def _write_manifest(out_path: Path, request: GenerationRequest, status: str,
                    written: int, failed: List[Dict[str, Any]]):
    FileUtils.save_json({
        "version": SCHEMA_VERSION,
        "dataset": Path(out_path).name,
        "status": status,
        "request": request.to_dict(),
        "records": written,
        "failed": failed,
        "updated": datetime.now().isoformat(),
    }, manifest_path(out_path))


def finalize_dataset(out_path: Path) -> int:
    """Sort records by seed or sweep index so file content does not depend on worker scheduling"""
    rows = [data for _, data in FileUtils.iter_jsonl(out_path)]
    rows.sort(key=record_instance_id)
    return FileUtils.write_jsonl(rows, out_path)


def generate_dataset(request: GenerationRequest, out_path: Path,
                     config: Optional[PipelineConfig] = None, workers: int = 1,
                     keep_going: bool = False) -> int:
    """
    Label every instance of the request into out_path (JSONL), skipping instances already present.

    Returns the number of records written by this call.
    """
    config = config or PipelineConfig()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)

    check_resume(out_path, request)
    done = _existing_ids(out_path)
    pending = [s for s in request.instance_ids() if s not in done]
    if done:
        logger.info(f"Resuming {out_path.name}: skipping {len(request.instance_ids()) - len(pending)} labelled instances")
    _write_manifest(out_path, request, "partial", len(done), [])

    written, failed = 0, []
    tasks = [(request, config, instance_id, keep_going) for instance_id in pending]
    if workers > 1 and len(tasks) > 1:
        with mp.Pool(min(workers, len(tasks))) as pool:
            results = pool.imap(_label_task, tasks)
            written = _consume(results, out_path, failed)
    else:
        written = _consume(map(_label_task, tasks), out_path, failed)

    total = finalize_dataset(out_path) if out_path.exists() else 0
    _write_manifest(out_path, request, "complete" if not failed else "partial", total, failed)
    logger.info(f"Wrote {written} records to {out_path} ({len(failed)} failed)")
    return written


def _consume(results, out_path: Path, failed: List[Dict[str, Any]]) -> int:
    written = 0
    for instance_id, data, error in results:
        if data is None:
            logger.error(f"Instance {instance_id} failed: {error}")
            failed.append({"instance": instance_id, "error": error})
            continue
        FileUtils.append_jsonl([data], out_path)
        written += 1
    return written
