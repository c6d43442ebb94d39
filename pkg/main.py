#!/usr/bin/env python3
"""
PRISM - Main Entry Point
Pair-Resolved Inference of SPA Models: dataset generation, training and evaluation
"""

import argparse
import logging
import sys
from contextlib import contextmanager
from dataclasses import asdict
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

# Add project root to Python path
sys.path.insert(0, str(Path(__file__).parent))

from core import __version__
from core.geometry import Geometry, GeometryKind, SweepSchedule
from core.vqe_pipeline import (GenerationRequest, PipelineConfig, check_record, check_resume,
                               generate_dataset, label_instance, load_records)
from learning.evaluation import (ReferencePredictor, comparison_table, sweep_structured,
                                 write_report, write_sweep, zero_shot_eval)
from learning.schnet import ModelConfig, load_checkpoint, save_checkpoint
from learning.trainer import Trainer, TrainingConfig
from utils.constants import (CONFIG_DIR, DATA_DIR, EXIT_DATA, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE,
                             LOGS_DIR, TOOL_NAME, Colors, ensure_directories)
from utils.errors import PrismError
from utils.file_utils import FileUtils
from utils.os_utils import OSUtils


class UsageError(ValueError):
    """Invalid flag value or combination"""


@contextmanager
def flag_values():
    """ValueErrors raised while turning flags into requests are usage errors"""
    try:
        yield
    except UsageError:
        raise
    except ValueError as e:
        raise UsageError(str(e)) from e


class PrismArgumentParser(argparse.ArgumentParser):
    """argparse with the PRISM usage exit code"""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


class PRISM:
    """Main PRISM application: configuration, logging and subcommands"""

    def __init__(self, config_dir: Path = CONFIG_DIR, verbose: bool = False):
        self.configs: Dict[str, Dict[str, Any]] = {}
        self.config_dir = Path(config_dir)
        ensure_directories()
        self.load_configurations()
        self.setup_logging(verbose)

        self.pipeline_config = PipelineConfig.from_dict(self.configs["pipeline"])
        paths = self.configs["system"].get("paths", {})
        self.datasets_dir = DATA_DIR / paths.get("datasets_directory", "datasets")
        self.models_dir = DATA_DIR / paths.get("models_directory", "models")
        self.reports_dir = DATA_DIR / paths.get("reports_directory", "reports")

    def setup_logging(self, verbose: bool = False):
        """Configure logging system"""
        LOGS_DIR.mkdir(parents=True, exist_ok=True)
        log_file = LOGS_DIR / f"prism_{datetime.now().strftime('%Y%m%d')}.log"
        level_name = self.configs["system"].get("logging", {}).get("level", "INFO")
        level = logging.DEBUG if verbose else getattr(logging, str(level_name).upper(), logging.INFO)

        logging.basicConfig(
            level=level,
            format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
            handlers=[
                logging.FileHandler(log_file, encoding='utf-8'),
                logging.StreamHandler()
            ],
            force=True,
        )
        self.logger = logging.getLogger("PRISM.CLI")

    def load_configurations(self):
        """Load all configuration files"""
        config_files = {
            "system": self.config_dir / "system_config.json",
            "pipeline": self.config_dir / "pipeline_config.json",
            "model": self.config_dir / "model_config.json",
        }
        for name, path in config_files.items():
            self.configs[name] = FileUtils.load_json(path)

    # ---------------------------------------------------------
    # helpers
    # ---------------------------------------------------------
    def resolve_workers(self, requested: Optional[int]) -> int:
        if requested is None:
            requested = self.configs["system"].get("performance", {}).get("workers")
        return OSUtils.resolve_workers(requested)

    def write_run_config(self, args: argparse.Namespace, path: Path, extra: Optional[Dict[str, Any]] = None) -> Path:
        """Resolved flags, configs and version next to the run's outputs"""
        flags = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "handler"}
        payload = {
            "tool": TOOL_NAME,
            "version": __version__,
            "subcommand": args.command,
            "created": datetime.now().isoformat(),
            "flags": flags,
            "pipeline": self.pipeline_config.to_dict(),
            "system": OSUtils.get_os_info(),
        }
        payload.update(extra or {})
        return FileUtils.save_json(payload, path)

    def _pipeline_config(self, args) -> PipelineConfig:
        config = PipelineConfig.from_dict(self.pipeline_config.to_dict())
        if getattr(args, "no_orbital_opt", False):
            config.orbital_optimization.enabled = False
        return config

    def _schedule(self, args, config: PipelineConfig) -> SweepSchedule:
        return SweepSchedule(
            n_atoms=args.n_atoms,
            T=args.T if args.T is not None else config.sweep.T,
            d_min=args.d_min if args.d_min is not None else config.sweep.d_min,
            d_max=args.d_max if args.d_max is not None else config.sweep.d_max,
        )

    def _load_all(self, paths: List[Path], keep_going: bool = False):
        records = []
        for path in paths:
            records.extend(load_records(path, keep_going=keep_going))
        return records

    def _success(self, message: str):
        self.logger.info(message)
        print(f"{Colors.GREEN}✓ {message}{Colors.ENDC}")

    # ---------------------------------------------------------
    # subcommands
    # ---------------------------------------------------------
    def cmd_generate(self, args) -> int:
        kind = GeometryKind(args.kind)
        if args.n_atoms < 2 or args.n_atoms % 2:
            raise UsageError(f"--n-atoms must be even and >= 2, got {args.n_atoms}")
        config = self._pipeline_config(args)

        with flag_values():
            if kind is GeometryKind.RANDOM:
                if args.T is not None or args.d_min is not None:
                    raise UsageError("--T and --d-min only apply to linear and ring sweeps")
                request = GenerationRequest(
                    kind=kind, n_atoms=args.n_atoms, count=args.count or 1, seed=args.seed,
                    d_max=args.d_max if args.d_max is not None else config.generation.d_max,
                )
            else:
                if args.count is not None:
                    raise UsageError("--count only applies to random geometries; sweeps use --T")
                if kind is GeometryKind.RING and args.n_atoms < 4:
                    raise UsageError("ring geometries need --n-atoms >= 4")
                request = GenerationRequest(kind=kind, n_atoms=args.n_atoms,
                                            schedule=self._schedule(args, config))
            out = Path(args.out) if args.out else self.datasets_dir / f"{kind.value}_h{args.n_atoms}.jsonl"
            check_resume(out, request)
            workers = self.resolve_workers(args.workers)

        self.logger.info(f"Generating {len(request.instance_ids())} {kind.value} H{args.n_atoms} records with {workers} workers")
        written = generate_dataset(request, out, config, workers=workers, keep_going=args.keep_going)
        self.write_run_config(args, out.with_name(out.stem + ".run_config.json"),
                              {"request": request.to_dict(), "workers": workers})
        self._success(f"Wrote {written} records to {out}")
        return EXIT_OK

    def cmd_label(self, args) -> int:
        with flag_values():
            coords = np.array([[float(v) for v in atom.split(",")] for atom in args.coords.split(";") if atom.strip()])
            if coords.ndim != 2 or coords.shape[1] != 3:
                raise UsageError("--coords needs three values per atom ('x,y,z;x,y,z')")
            if len(coords) % 2:
                raise UsageError(f"--coords needs an even number of atoms, got {len(coords)}")
            geom = Geometry(coords=coords, kind=GeometryKind.RANDOM, seed=args.seed)
        record = label_instance(geom, self._pipeline_config(args))

        print(f"{Colors.BOLD}Matching:{Colors.ENDC} {record.matching.to_list()}")
        print(f"  E_ref  = {record.e_reference:.10f} Eh")
        print(f"  E_SPA  = {record.e_spa:.10f} Eh")
        if record.e_fci is not None:
            print(f"  E_FCI  = {record.e_fci:.10f} Eh")
        print(f"  theta  = {np.round(record.theta, 8).tolist()}")
        print(f"  converged = {record.converged} (|grad| = {record.gradient_norm:.2e})")

        if args.out:
            out = Path(args.out)
            FileUtils.append_jsonl([record.to_dict()], out)
            self._success(f"Appended record to {out}")
        return EXIT_OK

    def cmd_train(self, args) -> int:
        model_section = dict(self.configs["model"].get("model", {}))
        training_section = dict(self.configs["model"].get("training", {}))
        if args.head:
            model_section["head"] = args.head
        overrides = {"epochs": args.epochs, "learning_rate": args.lr, "batch_size": args.batch, "seed": args.seed}
        training_section.update({k: v for k, v in overrides.items() if v is not None})
        if args.seed is not None:
            model_section["seed"] = args.seed

        with flag_values():
            model_config = ModelConfig(**{k: v for k, v in model_section.items() if hasattr(ModelConfig, k)})
            training_config = TrainingConfig(**{k: v for k, v in training_section.items() if hasattr(TrainingConfig, k)})

        records = self._load_all([Path(p) for p in args.data])
        self.logger.info(f"Training uses 1 worker; {len(records)} records from {len(args.data)} file(s)")
        result = Trainer(model_config, training_config).train(records)

        out = Path(args.out)
        save_checkpoint(result.model, out, extra={"training": asdict(training_config), "data": args.data})
        log_path = result.save_log(out.with_name(out.stem + "_training_log.csv"))
        self.write_run_config(args, out.with_name(out.stem + ".run_config.json"),
                              {"model": asdict(model_config), "training": asdict(training_config)})
        self._success(f"Saved {model_config.head} model to {out} (log: {log_path.name})")
        return EXIT_OK

    def cmd_eval(self, args) -> int:
        with flag_values():
            workers = self.resolve_workers(args.workers)
        model = load_checkpoint(args.model)
        records = self._load_all([Path(p) for p in args.data], keep_going=args.keep_going)
        out_dir = Path(args.out_dir) if args.out_dir else self.reports_dir / f"eval_{datetime.now().strftime('%Y%m%d_%H%M%S')}"

        report = zero_shot_eval(model, records, workers=workers)
        paths = write_report(report, out_dir)
        reports = {
            f"{model.config.head} SchNet": report,
            "reference (theta=0)": zero_shot_eval(ReferencePredictor(), records, workers=workers),
        }
        comparison_table(reports).to_csv(out_dir / "comparison.csv", index=False)
        self.write_run_config(args, out_dir / "run_config.json", {"workers": workers})

        print(report.aggregates.to_string(index=False))
        self._success(f"Evaluated {report.count} records; reports in {paths['rows'].parent}")
        return EXIT_OK

    def cmd_sweep(self, args) -> int:
        kind = GeometryKind(args.kind)
        if args.n_atoms % 2 or args.n_atoms < (4 if kind is GeometryKind.RING else 2):
            raise UsageError(f"{kind.value} sweeps need an even --n-atoms (ring >= 4)")
        config = self._pipeline_config(args)
        with flag_values():
            schedule = self._schedule(args, config)
            workers = self.resolve_workers(args.workers)
        model = load_checkpoint(args.model)
        table = sweep_structured(model, kind, args.n_atoms, schedule, config, workers=workers)
        out_dir = Path(args.out_dir) if args.out_dir else self.reports_dir
        path = write_sweep(table, out_dir)
        self.write_run_config(args, out_dir / f"{path.stem}.run_config.json",
                              {"schedule": asdict(schedule), "workers": workers})
        self._success(f"Wrote {len(table)}-point sweep to {path}")
        return EXIT_OK

    def cmd_inspect(self, args) -> int:
        records = load_records(Path(args.data), keep_going=args.keep_going)
        if args.seed is not None:
            records = [r for r in records if r.instance_id == args.seed]
        failures = 0
        for record in records:
            problems = check_record(record)
            label = f"seed={record.seed}" if record.seed is not None else f"index={record.geometry.index}"
            status = f"{Colors.GREEN}✓{Colors.ENDC}" if not problems else f"{Colors.FAIL}✗{Colors.ENDC}"
            e_fci = "n/a" if record.e_fci is None else f"{record.e_fci:.10f}"
            print(f"{status} {record.geometry.kind.value} H{record.n_atoms} {label} "
                  f"E_SPA={record.e_spa:.10f} E_ref={record.e_reference:.10f} E_FCI={e_fci}")
            print(f"    theta={np.round(record.theta, 6).tolist()} pairs={record.matching.to_list()} "
                  f"terms={len(record.hamiltonian)} converged={record.converged}")
            for problem in problems:
                print(f"    {Colors.FAIL}{problem}{Colors.ENDC}")
                self.logger.warning(f"Record {label}: {problem}")
            failures += bool(problems)
        if failures:
            print(f"{Colors.FAIL}✗ {failures} of {len(records)} records violate invariants{Colors.ENDC}")
            return EXIT_DATA
        self._success(f"{len(records)} records consistent")
        return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = PrismArgumentParser(prog="prism", description="SPA angle datasets, predictors and evaluation")
    parser.add_argument("-v", "--verbose", action="store_true", help="Enable debug logging")
    parser.add_argument("--config-dir", type=Path, default=CONFIG_DIR, help="Directory with the JSON configs")
    parser.add_argument("--version", action="version", version=f"{TOOL_NAME} {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=PrismArgumentParser)

    gen = subparsers.add_parser("generate", help="Label geometries into a JSONL dataset")
    gen.add_argument("--kind", choices=[k.value for k in GeometryKind], required=True)
    gen.add_argument("--n-atoms", type=int, required=True)
    gen.add_argument("--count", type=int, default=None, help="Random geometries to generate")
    gen.add_argument("--seed", type=int, default=0, help="First seed of a random dataset")
    gen.add_argument("--d-max", type=float, default=None, help="Random step length or sweep end (Angstrom)")
    gen.add_argument("--d-min", type=float, default=None, help="Sweep start (Angstrom)")
    gen.add_argument("--T", type=int, default=None, help="Number of sweep points")
    gen.add_argument("--out", type=str, default=None)
    gen.add_argument("--workers", type=int, default=None)
    gen.add_argument("--no-orbital-opt", action="store_true")
    gen.add_argument("--keep-going", action="store_true", help="Skip failed instances instead of aborting")

    label = subparsers.add_parser("label", help="Label a single geometry")
    label.add_argument("--coords", required=True, help="'x,y,z;x,y,z;...' in Angstrom")
    label.add_argument("--seed", type=int, default=None)
    label.add_argument("--out", type=str, default=None, help="Append the record to this JSONL file")
    label.add_argument("--no-orbital-opt", action="store_true")

    train = subparsers.add_parser("train", help="Train an angle predictor")
    train.add_argument("--data", action="append", required=True, help="JSONL dataset (repeatable)")
    train.add_argument("--head", choices=["linear", "mixed"], default=None)
    train.add_argument("--epochs", type=int, default=None)
    train.add_argument("--lr", type=float, default=None)
    train.add_argument("--batch", type=int, default=None)
    train.add_argument("--seed", type=int, default=None)
    train.add_argument("--out", required=True, help="Checkpoint path")

    ev = subparsers.add_parser("eval", help="Zero-shot evaluation against stored baselines")
    ev.add_argument("--model", required=True)
    ev.add_argument("--data", action="append", required=True)
    ev.add_argument("--out-dir", default=None)
    ev.add_argument("--workers", type=int, default=None)
    ev.add_argument("--keep-going", action="store_true")

    sweep = subparsers.add_parser("sweep", help="Structured linear/ring distance sweep")
    sweep.add_argument("--model", required=True)
    sweep.add_argument("--kind", choices=["linear", "ring"], required=True)
    sweep.add_argument("--n-atoms", type=int, required=True)
    sweep.add_argument("--T", type=int, default=None)
    sweep.add_argument("--d-min", type=float, default=None)
    sweep.add_argument("--d-max", type=float, default=None)
    sweep.add_argument("--out-dir", default=None)
    sweep.add_argument("--workers", type=int, default=None)
    sweep.add_argument("--no-orbital-opt", action="store_true")

    inspect = subparsers.add_parser("inspect", help="Validate and print dataset records")
    inspect.add_argument("--data", required=True)
    inspect.add_argument("--seed", type=int, default=None, help="Seed or sweep index of the record to show")
    inspect.add_argument("--keep-going", action="store_true")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    logger = logging.getLogger("PRISM.CLI")
    try:
        with flag_values():
            prism = PRISM(config_dir=args.config_dir, verbose=args.verbose)
        return getattr(prism, f"cmd_{args.command}")(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"{Colors.FAIL}✗ {e}{Colors.ENDC}", file=sys.stderr)
        return EXIT_USAGE
    except PrismError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"{Colors.FAIL}✗ {e}{Colors.ENDC}", file=sys.stderr)
        return e.exit_code
    except (ValueError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}", exc_info=True)
        print(f"{Colors.FAIL}✗ {e}{Colors.ENDC}", file=sys.stderr)
        return EXIT_NUMERICAL if isinstance(e, ValueError) else EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
