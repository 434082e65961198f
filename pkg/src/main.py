"""
Aplicación principal de estimación conjunta de pose y atributos de prenda.
Expone los subcomandos de validación, generación sintética, entrenamiento,
inferencia, evaluación y experimentos.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from tqdm import tqdm

import config
from errors import JointStructError, ModelValidationError, ParseError
from eval_metrics import (EvalReport, error_reduction, evaluate, load_results, save_report,
                          save_results)
from feature_bank import assemble_joint, dump_features, score_joint
from inference_engine import InferenceEngine, infer_many
from instance_io import Instance, JointLabel, load_dataset
from model_spec import BLOCK_KINDS, ModelSpec, build_default_model, load_model, save_model, validate_model
from skeleton_renderer import SkeletonRenderer
from ssvm_trainer import TrainConfig, cross_validation_folds, load_train_config, train
from synth_gen import SynthConfig, generate, generate_instance, load_synth_config, plant_model, write_dataset
from weights_io import WeightVector, load_weights, save_weights

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

ORACLE_CARDINALITIES = (2, 3, 2, 3, 2)


def configure_logging(verbose: bool = False) -> None:
    level = logging.DEBUG if verbose else getattr(logging, config.LOG_LEVEL)
    logging.basicConfig(level=level, format=config.LOG_FORMAT, force=True)


def parse_floats(text: str) -> List[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"Lista de números inválida: {text}") from e
    if not values:
        raise argparse.ArgumentTypeError("La lista no puede estar vacía")
    return values


def flatten(groups: Sequence[Sequence[float]]) -> List[float]:
    return [v for group in groups for v in group]


def parse_ints(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"Lista de enteros inválida: {text}") from e


def resolve_seed(seed: Optional[int]) -> int:
    """La variable de entorno tiene prioridad sobre --seed."""
    env = os.environ.get(config.SEED_ENV_VAR)
    if env is not None:
        return int(env)
    return config.SEED if seed is None else seed


def _close(a: float, b: float, rel: float = 1e-9) -> bool:
    return abs(a - b) <= rel * max(1.0, abs(a), abs(b))


class JointStructApp:
    """
    Aplicación de línea de comandos.
    Cada subcomando es un método que devuelve el código de salida.
    """

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.seed = resolve_seed(getattr(args, "seed", None))
        self.workers = max(1, getattr(args, "workers", 1) or 1)

    # ------------------------------------------------------------------
    # Utilidades
    # ------------------------------------------------------------------
    @staticmethod
    def banner(title: str) -> None:
        print("=" * 60)
        print(title)
        print("=" * 60)

    def load_spec(self) -> ModelSpec:
        path = getattr(self.args, "model", None)
        if path is None:
            return build_default_model()
        return load_model(path)

    def train_config(self) -> TrainConfig:
        path = getattr(self.args, "config", None)
        cfg = load_train_config(path) if path else TrainConfig()
        disabled = getattr(self.args, "disable", None)
        return cfg.with_overrides(seed=self.seed,
                                  disabled=frozenset(disabled) if disabled else None)

    def engine(self, spec: ModelSpec, weights: WeightVector, alpha: float, beta: float,
               disabled=frozenset()) -> InferenceEngine:
        return InferenceEngine(spec, weights.values, alpha, beta, disabled,
                               max_iter=getattr(self.args, "max_iter", config.MAX_ITER))

    def predict(self, engine: InferenceEngine, instances: Sequence[Instance],
                separate: bool = False,
                attribute_engine: Optional[InferenceEngine] = None) -> Dict[str, JointLabel]:
        results = infer_many(engine, instances, self.workers, separate, attribute_engine)
        return {inst.id: r.label for inst, r in zip(instances, results)}

    @staticmethod
    def write_json(data, path) -> None:
        Path(path).write_text(json.dumps(data, indent=2, ensure_ascii=False),
                              encoding="utf-8")

    # ------------------------------------------------------------------
    # Subcomandos
    # ------------------------------------------------------------------
    def model_init(self) -> int:
        spec = build_default_model()
        save_model(spec, self.args.out)
        print(f"Modelo por defecto escrito en {self.args.out} (D={spec.dimension})")
        return EXIT_OK

    def model_validate(self) -> int:
        try:
            spec = load_model(self.args.model, validate=False)
        except ParseError as e:
            print(f"Error: {e}")
            return EXIT_FAILURE
        issues = validate_model(spec)
        self.banner("VALIDACIÓN DEL MODELO")
        if issues:
            for issue in issues:
                print(f"  {issue}")
            return EXIT_FAILURE
        print(f"  Modelo válido: m={spec.part_count}, n={spec.attribute_count}, D={spec.dimension}")
        print(f"  Hash: {spec.model_hash}")
        return EXIT_OK

    def data_validate(self) -> int:
        spec = self.load_spec()
        instances = load_dataset(self.args.data, spec)
        with_truth = sum(1 for inst in instances if inst.ground_truth is not None)
        self.banner("VALIDACIÓN DEL CONJUNTO")
        print(f"  Instancias: {len(instances)} ({with_truth} con verdad de terreno)")
        return EXIT_OK

    def synth(self) -> int:
        spec = self.load_spec()
        cfg = load_synth_config(self.args.config) if self.args.config else SynthConfig()
        values = {name: getattr(cfg, name) for name in cfg.__dataclass_fields__}
        values["seed"] = self.seed
        dataset = generate(SynthConfig(**values), spec)
        paths = write_dataset(dataset, spec, self.args.out_dir)
        self.banner("CONJUNTO SINTÉTICO")
        for name, path in paths.items():
            print(f"  {name}: {path}")
        return EXIT_OK

    def train_weights(self) -> int:
        spec = self.load_spec()
        instances = load_dataset(self.args.data, spec)
        weights, report = train(instances, spec, self.train_config(), self.args.alpha, self.args.beta)
        save_weights(weights, self.args.out)
        if self.args.report:
            self.write_json(report.to_dict(), self.args.report)
        self.banner("ENTRENAMIENTO")
        print(f"  Instancias ligadas: {report.instances} (excluidas: {len(report.unbindable)})")
        print(f"  Restricciones: {report.positives} positivas, {report.negatives} negativas")
        print(f"  Objetivo final: {report.best_objective:.6f}")
        return EXIT_OK

    def infer(self) -> int:
        spec = self.load_spec()
        instances = load_dataset(self.args.data, spec)
        weights = load_weights(self.args.weights, spec)
        engine = self.engine(spec, weights, self.args.alpha, self.args.beta,
                             frozenset(self.args.disable or ()))
        results = infer_many(engine, instances, self.workers, self.args.separate)
        save_results([r.to_record(inst.id) for inst, r in zip(instances, results)], self.args.out)
        converged = sum(r.converged for r in results)
        self.banner("INFERENCIA")
        print(f"  Instancias: {len(results)} (convergieron: {converged})")
        return EXIT_OK

    def evaluate_predictions(self) -> int:
        spec = self.load_spec()
        instances = load_dataset(self.args.data, spec)
        report = evaluate(instances, load_results(self.args.pred), spec, self.args.pcp_threshold)
        save_report(report, self.args.out)
        self.print_report("EVALUACIÓN", report)
        return EXIT_OK

    def print_report(self, title: str, report: EvalReport) -> None:
        self.banner(title)
        print("  PCP  " + "  ".join(f"{k}={v:.3f}" for k, v in report.pcp_columns().items()))
        print("  GAP  " + "  ".join(f"{k}={'-' if v is None else f'{v:.3f}'}"
                                    for k, v in report.gap_columns().items()))

    def gridsearch(self) -> int:
        spec = self.load_spec()
        instances = load_dataset(self.args.data, spec)
        cfg = self.train_config()
        folds = list(cross_validation_folds(instances, self.args.folds))
        cells = [(a, b) for a in flatten(self.args.alpha) for b in flatten(self.args.beta)]

        rows = []
        progress = tqdm(total=len(cells) * len(folds), desc="Búsqueda", disable=not config.SHOW_PROGRESS)
        for alpha, beta in cells:
            combined: Optional[EvalReport] = None
            for train_set, valid_set in folds:
                weights, _ = train(train_set, spec, cfg, alpha, beta)
                labels = self.predict(self.engine(spec, weights, alpha, beta, cfg.disabled), valid_set)
                report = evaluate(valid_set, labels, spec)
                combined = report if combined is None else combined.merge(report)
                progress.update(1)
            rows.append({"alpha": alpha, "beta": beta,
                         "pcp": combined.total_pcp, "gap": combined.total_gap})
        progress.close()

        # PCP total primero, GAP total como desempate; a igualdad gana la primera celda
        best = max(rows, key=lambda r: (r["pcp"], r["gap"], -rows.index(r)))
        result = {"folds": len(folds), "training_runs": len(cells) * len(folds),
                  "cells": rows, "best": best}
        if self.args.out:
            self.write_json(result, self.args.out)
        self.banner("BÚSQUEDA EN REJILLA")
        for row in rows:
            print(f"  alpha={row['alpha']:<8g} beta={row['beta']:<8g} PCP={row['pcp']:.3f} GAP={row['gap']:.3f}")
        print(f"  Mejor: alpha={best['alpha']:g}, beta={best['beta']:g}")
        return EXIT_OK

    def ablate(self) -> int:
        spec = self.load_spec()
        train_set = load_dataset(self.args.train, spec)
        test_set = load_dataset(self.args.test, spec)
        cfg = self.train_config()
        alpha, beta = self.args.alpha, self.args.beta
        pose_only = cfg.with_overrides(disabled=cfg.disabled | {"cross"})

        # (configuración, alpha, separada); "pipeline" reutiliza los pesos de
        # "joint" para decidir los atributos sobre la pose de "separate"
        variants = {
            "joint": (cfg, alpha, False),
            "separate": (pose_only, alpha, True),
            "no_energy": (cfg, 0.0, False),
        }
        engines: Dict[str, InferenceEngine] = {}
        reports: Dict[str, EvalReport] = {}
        for name, (variant_cfg, variant_alpha, separate) in tqdm(
                variants.items(), desc="Ablación", disable=not config.SHOW_PROGRESS):
            weights, _ = train(train_set, spec, variant_cfg, variant_alpha, beta)
            engines[name] = self.engine(spec, weights, variant_alpha, beta, variant_cfg.disabled)
            reports[name] = evaluate(test_set, self.predict(engines[name], test_set, separate), spec)
        reports["pipeline"] = evaluate(
            test_set, self.predict(engines["separate"], test_set, True, engines["joint"]), spec)

        result = {
            "reports": {name: report.to_dict() for name, report in reports.items()},
            "error_reduction": {
                "joint_vs_separate": error_reduction(reports["joint"], reports["separate"]),
                "joint_vs_pipeline": error_reduction(reports["joint"], reports["pipeline"]),
                "joint_vs_no_energy": error_reduction(reports["joint"], reports["no_energy"]),
            },
        }
        self.write_json(result, self.args.out)
        for name, report in reports.items():
            self.print_report(f"ABLACIÓN: {name}", report)
        return EXIT_OK

    def oracle_check(self) -> int:
        """Compara la inferencia exacta con enumeración exhaustiva en instancias pequeñas."""
        if getattr(self.args, "model", None):
            spec = load_model(self.args.model)
        else:
            spec = build_default_model(cardinalities=ORACLE_CARDINALITIES)
        rng = np.random.default_rng(self.seed)
        planted = plant_model(spec, SynthConfig(seed=self.seed))
        counts = {"pose": [0, 0], "attributes": [0, 0], "joint": [0, 0], "assembly": [0, 0]}

        for index in tqdm(range(self.args.count), desc="Oráculos", disable=not config.SHOW_PROGRESS):
            cfg = SynthConfig(candidates=int(rng.integers(2, 5)), noise=0.5, seed=self.seed)
            inst = generate_instance(spec, cfg, planted, f"oracle-{index:05d}",
                                     np.random.default_rng([self.seed, 9, index]))
            w = rng.standard_normal(spec.dimension)
            engine = InferenceEngine(spec, w, float(rng.uniform(0, 1)), float(rng.uniform(-1, 1)))
            p = tuple(int(rng.integers(k)) for k in inst.candidate_counts)
            c = tuple(int(rng.integers(t)) for t in spec.attributes.cardinalities)

            _, dp = engine.infer_pose_given_attrs(inst, c)
            _, oracle = engine.conditional_brute_force_pose(inst, c)
            self._tally(counts["pose"], _close(dp, oracle))

            _, dp = engine.infer_attrs_given_pose(inst, p)
            _, oracle = engine.conditional_brute_force_attrs(inst, p)
            self._tally(counts["attributes"], _close(dp, oracle))

            result = engine.infer_joint(inst)
            _, best = engine.brute_force_joint(inst)
            scores = [s for _, s in result.trace]
            ok = (all(b >= a - 1e-12 for a, b in zip(scores, scores[1:]))
                  and result.iterations <= engine.max_iter
                  and _close(result.score, engine.score_full(inst, result.label))
                  and result.score <= best + 1e-9 * max(1.0, abs(best)))
            self._tally(counts["joint"], ok)

            label = JointLabel(p, c)
            dense = float(w @ assemble_joint(inst, spec, label))
            self._tally(counts["assembly"], _close(score_joint(w, inst, spec, label), dense))

        self.banner("VERIFICACIÓN CONTRA ORÁCULOS")
        passed = total = 0
        for name, (ok, n) in counts.items():
            print(f"  {name:<12} {ok}/{n}")
            passed, total = passed + ok, total + n
        print(f"  Total        {passed}/{total}")
        return EXIT_OK if passed == total else EXIT_FAILURE

    @staticmethod
    def _tally(counter: List[int], ok: bool) -> None:
        counter[0] += int(ok)
        counter[1] += 1

    def features_dump(self) -> int:
        spec = self.load_spec()
        inst = self._find_instance(load_dataset(self.args.data, spec))
        label = JointLabel(tuple(self.args.pose), tuple(self.args.attrs))
        self.write_json({"id": inst.id, "pose": list(label.p), "attributes": list(label.c),
                         "blocks": dump_features(inst, spec, label)}, self.args.out)
        print(f"Características de {inst.id} escritas en {self.args.out}")
        return EXIT_OK

    def render(self) -> int:
        spec = self.load_spec()
        inst = self._find_instance(load_dataset(self.args.data, spec))
        label = load_results(self.args.results).get(inst.id) if self.args.results else None
        renderer = SkeletonRenderer(spec)
        renderer.save(renderer.render(inst, label), self.args.out)
        return EXIT_OK

    def _find_instance(self, instances: Sequence[Instance]) -> Instance:
        for inst in instances:
            if inst.id == self.args.id:
                return inst
        raise ParseError(f"No existe la instancia {self.args.id}")

    def run(self) -> int:
        handlers = {
            ("model", "init"): self.model_init,
            ("model", "validate"): self.model_validate,
            ("data", "validate"): self.data_validate,
            ("synth", None): self.synth,
            ("train", None): self.train_weights,
            ("infer", None): self.infer,
            ("eval", None): self.evaluate_predictions,
            ("gridsearch", None): self.gridsearch,
            ("ablate", None): self.ablate,
            ("oracle-check", None): self.oracle_check,
            ("features", "dump"): self.features_dump,
            ("render", None): self.render,
        }
        key = (self.args.command, getattr(self.args, "action", None))
        return handlers[key]()


# ============================================================================
# GRAMÁTICA
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--verbose", "-v", action="store_true", help="Logging en nivel DEBUG")
    common.add_argument("--seed", type=int, default=None,
                        help=f"Semilla (la variable {config.SEED_ENV_VAR} tiene prioridad)")
    common.add_argument("--no-progress", action="store_true", help="Oculta las barras de progreso")

    model_arg = argparse.ArgumentParser(add_help=False)
    model_arg.add_argument("--model", help="Archivo YAML del modelo (por defecto, el modelo incorporado)")

    scoring = argparse.ArgumentParser(add_help=False)
    scoring.add_argument("--alpha", type=float, default=config.ALPHA)
    scoring.add_argument("--beta", type=float, default=config.BETA)

    disabling = argparse.ArgumentParser(add_help=False)
    disabling.add_argument("--disable", action="append", choices=BLOCK_KINDS,
                           help="Apaga un tipo de bloque (repetible)")

    parser = argparse.ArgumentParser(prog="joint-struct",
                                     description="Estimación conjunta de pose y atributos de prenda")
    sub = parser.add_subparsers(dest="command", required=True)

    model = sub.add_parser("model", help="Modelo")
    model_sub = model.add_subparsers(dest="action", required=True)
    p = model_sub.add_parser("init", parents=[common], help="Escribe el modelo por defecto")
    p.add_argument("--out", required=True)
    p = model_sub.add_parser("validate", parents=[common], help="Valida un modelo")
    p.add_argument("--model", required=True)

    data = sub.add_parser("data", help="Conjuntos")
    data_sub = data.add_subparsers(dest="action", required=True)
    p = data_sub.add_parser("validate", parents=[common, model_arg])
    p.add_argument("--data", required=True)

    p = sub.add_parser("synth", parents=[common, model_arg], help="Genera datos sintéticos")
    p.add_argument("--config", help="Configuración YAML del generador")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("train", parents=[common, model_arg, scoring, disabling], help="Entrena w")
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="Configuración YAML del entrenamiento")
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="Reporte JSON del entrenamiento")

    p = sub.add_parser("infer", parents=[common, model_arg, scoring, disabling], help="Inferencia conjunta")
    p.add_argument("--weights", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--max-iter", type=int, default=config.MAX_ITER)
    p.add_argument("--separate", action="store_true", help="Línea base: pose y luego atributos")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", parents=[common, model_arg], help="PCP y GAP")
    p.add_argument("--pred", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--pcp-threshold", type=float, default=config.PCP_THRESHOLD)
    p.add_argument("--out", required=True)

    p = sub.add_parser("gridsearch", parents=[common, model_arg, disabling],
                       help="Validación cruzada sobre alpha x beta")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--alpha", type=parse_floats, nargs="+", default=[list(config.ALPHA_GRID)],
                   help="Valores de alpha, separados por comas o espacios")
    p.add_argument("--beta", type=parse_floats, nargs="+", default=[list(config.BETA_GRID)],
                   help="Valores de beta; con negativos al inicio use espacios (--beta -1 0 1) o --beta=-1,0,1")
    p.add_argument("--folds", type=int, default=config.CV_FOLDS)
    p.add_argument("--max-iter", type=int, default=config.MAX_ITER)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")

    p = sub.add_parser("ablate", parents=[common, model_arg, scoring, disabling],
                       help="Conjunto contra separado y sin energía de bordes")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--config")
    p.add_argument("--max-iter", type=int, default=config.MAX_ITER)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)

    p = sub.add_parser("oracle-check", parents=[common, model_arg],
                       help="Exactitud de la inferencia contra enumeración exhaustiva")
    p.add_argument("--count", type=int, default=20)

    features = sub.add_parser("features", help="Características")
    features_sub = features.add_subparsers(dest="action", required=True)
    p = features_sub.add_parser("dump", parents=[common, model_arg])
    p.add_argument("--data", required=True)
    p.add_argument("--id", required=True)
    p.add_argument("--pose", type=parse_ints, required=True)
    p.add_argument("--attrs", type=parse_ints, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("render", parents=[common, model_arg], help="Dibuja una instancia")
    p.add_argument("--data", required=True)
    p.add_argument("--id", required=True)
    p.add_argument("--results")
    p.add_argument("--out", required=True)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Función principal de entrada.

    Returns:
        0 si todo fue bien, 1 ante errores de validación o de datos, 2 ante errores de uso
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    configure_logging(args.verbose)
    if args.no_progress:
        config.SHOW_PROGRESS = False

    try:
        return JointStructApp(args).run()
    except ModelValidationError as e:
        for issue in e.issues:
            logger.error("%s", issue)
        return EXIT_FAILURE
    except JointStructError as e:
        logger.error("%s", e)
        return EXIT_FAILURE
    except (OSError, ValueError) as e:
        logger.error("Error: %s", e)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
